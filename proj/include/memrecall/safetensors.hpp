#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace memrecall {

enum class DType { F32, F16, BF16 };

struct TensorInfo {
    DType dtype = DType::F32;
    std::vector<std::size_t> shape;
    std::uint64_t begin = 0;  // offsets relative to the data section
    std::uint64_t end = 0;

    std::size_t numel() const;
};

/// Read-only view of a safetensors container: an 8-byte little-endian header
/// length, a JSON header, then the raw tensor bytes. Tensors are read lazily.
class SafetensorsReader {
public:
    explicit SafetensorsReader(const std::filesystem::path& path);

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    const TensorInfo& info(const std::string& name) const;
    const std::map<std::string, TensorInfo>& tensors() const { return tensors_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

    // Values widened to float; throws DataError naming the tensor on bad input.
    std::vector<float> read_f32(const std::string& name);

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::uint64_t data_start_ = 0;
    std::uint64_t data_size_ = 0;
    std::map<std::string, TensorInfo> tensors_;
    std::map<std::string, std::string> metadata_;
};

struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> values;
};

/// Writes F32 tensors in name order with the header padded to 8 bytes.
void write_safetensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                       const std::map<std::string, std::string>& metadata = {});

float half_to_float(std::uint16_t h);
float bfloat16_to_float(std::uint16_t b);

}  // namespace memrecall
