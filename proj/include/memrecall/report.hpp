#pragma once

// CSV, SVG and run-manifest output shared by every command.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace memrecall::report {

/// Shortest round-trip decimal form; identical values always print identically.
std::string fmt(double v);
std::string fmt(float v);

std::string csv_escape(std::string_view field);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& fields);
    void close();

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_ = 0;
};

/// Rows of a CSV file with a header; fields unquoted.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;  // throws DataError if absent
};
CsvTable read_csv(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// --- SVG -------------------------------------------------------------------

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct LinePlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
};

/// Self-contained SVG line chart. `note` is written as an XML comment.
std::string svg_line_plot(const LinePlotSpec& spec, const std::vector<Series>& series, const std::string& note = {});

/// Lays several line charts out side by side in one SVG.
std::string svg_panels(const std::vector<std::pair<LinePlotSpec, std::vector<Series>>>& panels,
                       const std::string& note = {});

struct HeatmapCell {
    std::size_t row;  // start layer
    std::size_t col;  // end layer
    double value;
};

std::string svg_heatmap(const std::string& title, std::size_t n_layers, const std::vector<HeatmapCell>& cells,
                        const std::string& value_label, const std::string& note = {});

void write_text(const std::filesystem::path& path, std::string_view text);

// --- manifest ----------------------------------------------------------------

/// What produced a set of outputs. `id()` hashes everything except the
/// timestamp, so equal manifests identify equal outputs.
struct RunManifest {
    std::string command;
    nlohmann::ordered_json config;
    std::string model;
    std::map<std::string, std::string> dataset_hashes;  // path -> sha256
    std::uint64_t seed = 0;
    std::string timestamp;
    std::string tool_version;
    std::map<std::string, std::string> outputs;  // file name -> sha256

    std::string id() const;
    nlohmann::ordered_json to_json() const;
};

std::string utc_timestamp();

/// Tracks files written into an output directory and deletes them if the run
/// fails before commit().
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir);
    ~OutputSet();
    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;

    std::filesystem::path add(const std::string& name);
    const std::vector<std::filesystem::path>& files() const { return files_; }
    const std::filesystem::path& dir() const { return dir_; }
    void commit() { committed_ = true; }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> files_;
    bool committed_ = false;
    bool created_dir_ = false;
};

/// Fills manifest.outputs with hashes of `outputs`, writes manifest.json and commits.
void finalize_outputs(OutputSet& outputs, RunManifest& manifest);

inline constexpr std::string_view kToolVersion = "0.1.0";

}  // namespace memrecall::report
