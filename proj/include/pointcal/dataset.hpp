#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pointcal/geometry.hpp"
#include "pointcal/objectives.hpp"

namespace pointcal {

// A dataset on disk is a directory of cloud text files plus one manifest
// JSON naming every item with its label (classification) or observed
// time/event flag (survival), the generator seed and an echo of the
// generator parameters.
struct Dataset {
    std::string task;  // "classify" or "survival"
    std::vector<PointCloud> clouds;
    std::vector<int> labels;               // classify
    std::vector<SurvivalRecord> records;   // survival
    std::uint64_t seed = 0;
    nlohmann::json spec_echo;

    int size() const { return static_cast<int>(clouds.size()); }
    // Stratification keys: class labels or event flags.
    std::vector<int> strata() const;
};

// Writes clouds/item_#####.xyz files plus manifest.json under dir; returns
// the manifest path.
std::filesystem::path write_classification_dataset(
    const std::filesystem::path& dir, const std::vector<PointCloud>& clouds,
    const std::vector<int>& labels, std::uint64_t seed, const nlohmann::json& spec_echo);

std::filesystem::path write_survival_dataset(const std::filesystem::path& dir,
                                             const std::vector<PointCloud>& clouds,
                                             const std::vector<SurvivalRecord>& records,
                                             std::uint64_t seed,
                                             const nlohmann::json& spec_echo);

// Loads the manifest and every referenced cloud (paths resolve relative to
// the manifest's directory).
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace pointcal
