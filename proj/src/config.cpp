#include "pointcal/config.hpp"

#include <fstream>
#include <set>

#include "pointcal/errors.hpp"

namespace pointcal {

namespace {

using nlohmann::json;

void check_keys(const json& doc, const std::set<std::string>& allowed,
                const std::string& where) {
    if (!doc.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (!allowed.count(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

SetAbstractionConfig parse_layer(const json& doc, const std::string& where) {
    check_keys(doc, {"centroids", "radius", "max_neighbors", "mlp"}, where);
    SetAbstractionConfig sa;
    sa.n_centroids = get_or<int>(doc, "centroids", 0);
    sa.radius = get_or<double>(doc, "radius", 0.0);
    sa.max_neighbors = get_or<int>(doc, "max_neighbors", 0);
    sa.mlp_widths = get_or<std::vector<int>>(doc, "mlp", {});
    return sa;
}

json layer_to_json(const SetAbstractionConfig& sa) {
    return {{"centroids", sa.n_centroids},
            {"radius", sa.radius},
            {"max_neighbors", sa.max_neighbors},
            {"mlp", sa.mlp_widths}};
}

GeneratorConfig parse_generator(const json& doc, const std::string& task) {
    GeneratorConfig gen;
    if (task == "classify") {
        check_keys(doc, {"per_class", "points", "jitter", "seed"}, "data.generator");
        gen.per_class = get_or<int>(doc, "per_class", gen.per_class);
        gen.points = get_or<int>(doc, "points", gen.points);
        gen.jitter = get_or<double>(doc, "jitter", gen.jitter);
        gen.seed = get_or<std::uint64_t>(doc, "seed", gen.seed);
    } else {
        check_keys(doc,
                   {"subjects", "censoring", "link", "link_gain", "stretch_min",
                    "stretch_max", "points", "seed"},
                   "data.generator");
        gen.survival.n_subjects = get_or<int>(doc, "subjects", 440);
        gen.survival.censoring_fraction = get_or<double>(doc, "censoring", 0.76);
        gen.survival.link =
            risk_link_from_string(get_or<std::string>(doc, "link", "exp"));
        gen.survival.link_gain = get_or<double>(doc, "link_gain", 8.0);
        gen.survival.stretch_min = get_or<double>(doc, "stretch_min", 0.7);
        gen.survival.stretch_max = get_or<double>(doc, "stretch_max", 1.5);
        gen.survival.n_points = get_or<int>(doc, "points", 256);
        gen.seed = get_or<std::uint64_t>(doc, "seed", gen.seed);
        gen.survival.seed = gen.seed;
    }
    return gen;
}

json generator_to_json(const GeneratorConfig& gen, const std::string& task) {
    if (task == "classify") {
        return {{"per_class", gen.per_class},
                {"points", gen.points},
                {"jitter", gen.jitter},
                {"seed", gen.seed}};
    }
    return {{"subjects", gen.survival.n_subjects},
            {"censoring", gen.survival.censoring_fraction},
            {"link", to_string(gen.survival.link)},
            {"link_gain", gen.survival.link_gain},
            {"stretch_min", gen.survival.stretch_min},
            {"stretch_max", gen.survival.stretch_max},
            {"points", gen.survival.n_points},
            {"seed", gen.seed}};
}

}  // namespace

ModelConfig model_config_from_json(const json& doc) {
    check_keys(doc,
               {"layers", "recalibration", "srb_final_only", "reduction", "fc", "classes",
                "fps_seed_index"},
               "model");
    ModelConfig cfg = ModelConfig::desk_default();
    if (doc.contains("layers")) {
        cfg.layers.clear();
        int index = 0;
        for (const auto& layer : doc.at("layers")) {
            cfg.layers.push_back(
                parse_layer(layer, "model.layers[" + std::to_string(index++) + "]"));
        }
    }
    cfg.recalib_mode =
        recalib_mode_from_string(get_or<std::string>(doc, "recalibration", "none"));
    cfg.srb_final_only = get_or<bool>(doc, "srb_final_only", cfg.srb_final_only);
    cfg.reduction = get_or<int>(doc, "reduction", cfg.reduction);
    if (doc.contains("fc")) cfg.fc_widths = doc.at("fc").get<std::vector<int>>();
    cfg.n_classes = get_or<int>(doc, "classes", cfg.n_classes);
    cfg.fps_seed_index = get_or<int>(doc, "fps_seed_index", cfg.fps_seed_index);
    return cfg;
}

json model_config_to_json(const ModelConfig& cfg) {
    json layers = json::array();
    for (const auto& sa : cfg.layers) layers.push_back(layer_to_json(sa));
    return {{"layers", std::move(layers)},
            {"recalibration", to_string(cfg.recalib_mode)},
            {"srb_final_only", cfg.srb_final_only},
            {"reduction", cfg.reduction},
            {"fc", cfg.fc_widths},
            {"classes", cfg.n_classes},
            {"fps_seed_index", cfg.fps_seed_index}};
}

RunConfig parse_run_config(const json& doc) {
    check_keys(doc, {"task", "model", "training", "data", "output"}, "config");
    RunConfig cfg;
    cfg.task = get_or<std::string>(doc, "task", cfg.task);
    if (cfg.task != "classify" && cfg.task != "survival") {
        throw ConfigError("task must be 'classify' or 'survival', got '" + cfg.task + "'");
    }
    if (doc.contains("model")) cfg.model = model_config_from_json(doc.at("model"));
    cfg.model.head = cfg.is_survival() ? HeadKind::Risk : HeadKind::Classification;

    if (doc.contains("training")) {
        const auto& t = doc.at("training");
        check_keys(t,
                   {"epochs", "learning_rate", "decay_factor", "decay_interval",
                    "batch_size", "seed"},
                   "training");
        cfg.training.epochs = get_or<int>(t, "epochs", cfg.training.epochs);
        cfg.training.learning_rate =
            get_or<double>(t, "learning_rate", cfg.training.learning_rate);
        cfg.training.decay_factor =
            get_or<double>(t, "decay_factor", cfg.training.decay_factor);
        cfg.training.decay_interval =
            get_or<int>(t, "decay_interval", cfg.training.decay_interval);
        cfg.training.batch_size = get_or<int>(t, "batch_size", cfg.training.batch_size);
        cfg.training.seed = get_or<std::uint64_t>(t, "seed", cfg.training.seed);
    }
    if (cfg.training.epochs < 0) throw ConfigError("training.epochs must be non-negative");
    if (cfg.training.batch_size < 1) throw ConfigError("training.batch_size must be positive");
    if (cfg.training.decay_interval < 1) {
        throw ConfigError("training.decay_interval must be positive");
    }
    if (!(cfg.training.learning_rate > 0.0)) {
        throw ConfigError("training.learning_rate must be positive");
    }

    if (doc.contains("data")) {
        const auto& d = doc.at("data");
        check_keys(d, {"manifest", "split_fractions", "split_seed", "generator"}, "data");
        cfg.data.manifest = get_or<std::string>(d, "manifest", "");
        if (d.contains("split_fractions")) {
            auto fr = d.at("split_fractions").get<std::vector<double>>();
            if (fr.size() != 3) throw ConfigError("data.split_fractions needs 3 entries");
            cfg.data.split_fractions = {fr[0], fr[1], fr[2]};
        }
        cfg.data.split_seed = get_or<std::uint64_t>(d, "split_seed", cfg.data.split_seed);
        if (d.contains("generator")) {
            cfg.data.generator = parse_generator(d.at("generator"), cfg.task);
        }
    }
    cfg.output = get_or<std::string>(doc, "output", cfg.output);
    cfg.model.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(doc);
}

json run_config_to_json(const RunConfig& cfg) {
    json data = {{"manifest", cfg.data.manifest},
                 {"split_fractions", cfg.data.split_fractions},
                 {"split_seed", cfg.data.split_seed}};
    if (cfg.data.generator) {
        data["generator"] = generator_to_json(*cfg.data.generator, cfg.task);
    }
    return {{"task", cfg.task},
            {"model", model_config_to_json(cfg.model)},
            {"training",
             {{"epochs", cfg.training.epochs},
              {"learning_rate", cfg.training.learning_rate},
              {"decay_factor", cfg.training.decay_factor},
              {"decay_interval", cfg.training.decay_interval},
              {"batch_size", cfg.training.batch_size},
              {"seed", cfg.training.seed}}},
            {"data", std::move(data)},
            {"output", cfg.output}};
}

}  // namespace pointcal
