#include "pointcal/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "pointcal/errors.hpp"

namespace pointcal {

namespace {

constexpr const char* kFormatTag = "pointcal-checkpoint-v1";

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config_echo,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
    nlohmann::json manifest;
    manifest["format"] = kFormatTag;
    manifest["config"] = config_echo;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
        table.push_back({{"name", name}, {"rows", tensor.rows()}, {"cols", tensor.cols()}});
    }
    manifest["tensors"] = table;
    const std::string header = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    put_u64(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, tensor] : tensors) {
        for (double v : tensor.values()) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::uint64_t header_len = get_u64(in);
    if (!in || header_len == 0 || header_len > (1ULL << 30)) {
        throw IoError("checkpoint " + path.string() + " has a corrupt header");
    }
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw IoError("checkpoint " + path.string() + " is truncated");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint " + path.string() + ": bad manifest: " + e.what());
    }
    if (manifest.value("format", "") != kFormatTag) {
        throw IoError("checkpoint " + path.string() + " has an unknown format tag");
    }

    CheckpointData data;
    data.config_echo = manifest.at("config");
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        if (rows < 1 || cols < 1) {
            throw IoError("checkpoint tensor '" + name + "' has invalid shape");
        }
        std::vector<double> values(static_cast<size_t>(rows) * cols);
        for (double& v : values) {
            v = std::bit_cast<double>(get_u64(in));
        }
        if (!in) throw IoError("checkpoint " + path.string() + " is truncated");
        data.tensors.emplace_back(name, Tensor::parameter(rows, cols, std::move(values), name));
    }
    return data;
}

}  // namespace pointcal
