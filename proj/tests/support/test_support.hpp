#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "memrecall/model.hpp"

namespace testing {

std::filesystem::path fixture(const std::string& name);
std::filesystem::path data_dir();
nlohmann::json load_json(const std::filesystem::path& path);

/// Loaded once per process.
const memrecall::Model& tiny_model();
const memrecall::Model& mini_model();
const memrecall::Tokenizer& gpt2_tokenizer();

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

/// Runs `program` with `args` through the shell, quoting every argument.
CommandResult run_command(const std::string& program, const std::vector<std::string>& args);

std::vector<float> to_floats(const nlohmann::json& arr);
float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace testing
