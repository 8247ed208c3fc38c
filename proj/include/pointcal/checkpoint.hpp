#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pointcal/tensor.hpp"

namespace pointcal {

// Single-file model snapshot: an 8-byte little-endian manifest length, a
// JSON manifest holding the resolved run config plus the named tensor table
// with shapes, then the raw tensor payloads as 64-bit little-endian floats
// in table order.
struct CheckpointData {
    nlohmann::json config_echo;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config_echo,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace pointcal
