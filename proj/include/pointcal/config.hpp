#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "pointcal/encoder.hpp"
#include "pointcal/synthdata.hpp"

namespace pointcal {

struct TrainingConfig {
    int epochs = 60;
    double learning_rate = 0.001;
    double decay_factor = 0.7;
    int decay_interval = 20;
    int batch_size = 24;
    std::uint64_t seed = 1;
};

// Either a classification or a survival generator; which one is set follows
// the task.
struct GeneratorConfig {
    // classification
    int per_class = 30;
    int points = 256;
    double jitter = 0.02;
    // survival
    SurvivalSpec survival;
    std::uint64_t seed = 7;
};

struct DataConfig {
    std::string manifest;  // empty when the config only generates data
    std::array<double, 3> split_fractions{0.7, 0.15, 0.15};
    std::uint64_t split_seed = 1;
    std::optional<GeneratorConfig> generator;
};

// One JSON document drives every command. Unknown keys are rejected;
// omitted keys take the defaults above and are materialized back into the
// echo each command writes before doing work.
struct RunConfig {
    std::string task = "classify";  // or "survival"
    ModelConfig model = ModelConfig::desk_default();
    TrainingConfig training;
    DataConfig data;
    std::string output = "out";

    bool is_survival() const { return task == "survival"; }
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace pointcal
