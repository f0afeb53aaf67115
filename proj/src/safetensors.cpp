#include "memrecall/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "memrecall/errors.hpp"

namespace memrecall {

static_assert(std::endian::native == std::endian::little, "tensor bytes are read as little-endian");

std::size_t TensorInfo::numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::size_t dtype_size(DType t) { return t == DType::F32 ? 4 : 2; }

DType parse_dtype(const std::string& s, const std::string& tensor) {
    if (s == "F32") return DType::F32;
    if (s == "F16") return DType::F16;
    if (s == "BF16") return DType::BF16;
    throw DataError("tensor '" + tensor + "': unsupported dtype " + s);
}

}  // namespace

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1Fu;
    std::uint32_t mant = h & 0x3FFu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            // subnormal: renormalize
            exp = 127 - 15 + 1;
            while ((mant & 0x400u) == 0) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3FFu;
            bits = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 0x1F) {
        bits = sign | 0x7F800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

float bfloat16_to_float(std::uint16_t b) { return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16); }

SafetensorsReader::SafetensorsReader(const std::filesystem::path& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) throw DataError("cannot open weight container " + path.string());
    std::uint64_t header_len = 0;
    in_.read(reinterpret_cast<char*>(&header_len), 8);
    if (!in_) throw DataError(path.string() + ": truncated safetensors header");
    const auto file_size = std::filesystem::file_size(path);
    if (header_len > file_size - 8) throw DataError(path.string() + ": header length exceeds file size");
    std::string header(header_len, '\0');
    in_.read(header.data(), static_cast<std::streamsize>(header_len));
    data_start_ = 8 + header_len;
    data_size_ = file_size - data_start_;

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed safetensors header: " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "__metadata__") {
            for (auto m = it->begin(); m != it->end(); ++m)
                metadata_[m.key()] = m->is_string() ? m->get<std::string>() : m->dump();
            continue;
        }
        const auto& v = *it;
        TensorInfo info;
        try {
            info.dtype = parse_dtype(v.at("dtype").get<std::string>(), it.key());
            info.shape = v.at("shape").get<std::vector<std::size_t>>();
            const auto offs = v.at("data_offsets").get<std::vector<std::uint64_t>>();
            if (offs.size() != 2) throw DataError("bad data_offsets");
            info.begin = offs[0];
            info.end = offs[1];
        } catch (const nlohmann::json::exception& e) {
            throw DataError("tensor '" + it.key() + "': malformed header entry: " + e.what());
        }
        if (info.end < info.begin || info.end > data_size_ ||
            info.end - info.begin != info.numel() * dtype_size(info.dtype))
            throw DataError("tensor '" + it.key() + "': byte range inconsistent with shape/dtype");
        tensors_.emplace(it.key(), std::move(info));
    }
}

const TensorInfo& SafetensorsReader::info(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw DataError("missing tensor '" + name + "' in " + path_.string());
    return it->second;
}

std::vector<float> SafetensorsReader::read_f32(const std::string& name) {
    const auto& ti = info(name);
    const std::size_t n = ti.numel();
    std::vector<float> out(n);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(data_start_ + ti.begin));
    if (ti.dtype == DType::F32) {
        in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * 4));
    } else {
        std::vector<std::uint16_t> raw(n);
        in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
        const bool half = ti.dtype == DType::F16;
        std::transform(raw.begin(), raw.end(), out.begin(),
                       [half](std::uint16_t r) { return half ? half_to_float(r) : bfloat16_to_float(r); });
    }
    if (!in_) throw DataError("tensor '" + name + "': short read");
    return out;
}

void write_safetensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                       const std::map<std::string, std::string>& metadata) {
    std::vector<const NamedTensor*> order;
    for (const auto& t : tensors) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });

    nlohmann::ordered_json header;
    if (!metadata.empty()) {
        nlohmann::ordered_json meta;
        for (const auto& [k, v] : metadata) meta[k] = v;
        header["__metadata__"] = meta;
    }
    std::uint64_t offset = 0;
    for (const auto* t : order) {
        const std::size_t expect =
            std::accumulate(t->shape.begin(), t->shape.end(), std::size_t{1}, std::multiplies<>());
        if (expect != t->values.size())
            throw std::invalid_argument("tensor '" + t->name + "': shape does not match value count");
        const std::uint64_t bytes = t->values.size() * 4;
        header[t->name] = {{"dtype", "F32"}, {"shape", t->shape}, {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    std::string h = header.dump();
    while ((h.size() + 8) % 8 != 0) h.push_back(' ');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    const std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto* t : order)
        out.write(reinterpret_cast<const char*>(t->values.data()), static_cast<std::streamsize>(t->values.size() * 4));
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace memrecall
