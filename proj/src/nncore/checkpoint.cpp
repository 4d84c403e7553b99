#include "uniscale/nncore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace uniscale::nncore {

namespace {

constexpr int kFormatVersion = 1;

void put_le64(std::ofstream& out, double v) {
    const auto bits = std::bit_cast<uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_le64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path_prefix, const std::vector<NamedTensor>& tensors) {
    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["tensors"] = nlohmann::json::array();

    std::ofstream bin(path_prefix + ".bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("checkpoint: cannot open " + path_prefix + ".bin for writing");
    size_t offset = 0;
    for (const NamedTensor& nt : tensors) {
        manifest["tensors"].push_back(
            {{"name", nt.name}, {"shape", nt.value.shape}, {"offset", offset}, {"numel", nt.value.numel()}});
        for (double v : nt.value.data) put_le64(bin, v);
        offset += nt.value.numel();
    }
    bin.close();
    if (!bin) throw std::runtime_error("checkpoint: write failed for " + path_prefix + ".bin");

    std::ofstream meta(path_prefix + ".json", std::ios::trunc);
    if (!meta) throw std::runtime_error("checkpoint: cannot open " + path_prefix + ".json for writing");
    meta << manifest.dump(2) << "\n";
    meta.close();
    if (!meta) throw std::runtime_error("checkpoint: write failed for " + path_prefix + ".json");
}

std::vector<NamedTensor> load_checkpoint(const std::string& path_prefix) {
    std::ifstream meta(path_prefix + ".json");
    if (!meta) throw std::runtime_error("checkpoint: missing manifest " + path_prefix + ".json");
    nlohmann::json manifest;
    try {
        meta >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint: bad manifest " + path_prefix + ".json: " + e.what());
    }
    if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != kFormatVersion)
        throw std::runtime_error("checkpoint: unsupported format version in " + path_prefix + ".json");

    std::ifstream bin(path_prefix + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: missing payload " + path_prefix + ".bin");

    std::vector<NamedTensor> out;
    size_t expect_offset = 0;
    for (const auto& entry : manifest["tensors"]) {
        NamedTensor nt;
        nt.name = entry["name"].get<std::string>();
        auto shape = entry["shape"].get<std::vector<size_t>>();
        const size_t offset = entry["offset"].get<size_t>();
        const size_t numel = entry["numel"].get<size_t>();
        if (offset != expect_offset)
            throw std::runtime_error("checkpoint: non-contiguous offsets in " + path_prefix + ".json");
        if (Tensor::numel_of(shape) != numel)
            throw std::runtime_error("checkpoint: shape/numel mismatch for tensor " + nt.name);
        Tensor t(std::move(shape));
        for (size_t i = 0; i < numel; ++i) t.data[i] = get_le64(bin);
        if (!bin) throw std::runtime_error("checkpoint: payload truncated before tensor " + nt.name);
        nt.value = std::move(t);
        out.push_back(std::move(nt));
        expect_offset += numel;
    }
    // Payload must end exactly where the manifest says it does.
    bin.peek();
    if (!bin.eof()) throw std::runtime_error("checkpoint: trailing bytes in " + path_prefix + ".bin");
    return out;
}

}  // namespace uniscale::nncore
