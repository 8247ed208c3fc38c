#include "pointcal/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "pointcal/errors.hpp"

namespace pointcal {

namespace {

std::string item_file(int index) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "clouds/item_%05d.xyz", index);
    return buf;
}

std::filesystem::path write_manifest(const std::filesystem::path& dir, nlohmann::json manifest) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "clouds", ec);
    if (ec) throw IoError("cannot create dataset directory " + (dir / "clouds").string());
    const auto path = dir / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("write failed for manifest " + path.string());
    return path;
}

}  // namespace

std::vector<int> Dataset::strata() const {
    if (task == "classify") return labels;
    std::vector<int> flags;
    flags.reserve(records.size());
    for (const auto& r : records) flags.push_back(r.event ? 1 : 0);
    return flags;
}

std::filesystem::path write_classification_dataset(
    const std::filesystem::path& dir, const std::vector<PointCloud>& clouds,
    const std::vector<int>& labels, std::uint64_t seed, const nlohmann::json& spec_echo) {
    if (clouds.size() != labels.size()) {
        throw ValidationError("dataset write: clouds and labels must align");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir / "clouds", ec);
    if (ec) throw IoError("cannot create dataset directory " + (dir / "clouds").string());
    nlohmann::json items = nlohmann::json::array();
    for (size_t i = 0; i < clouds.size(); ++i) {
        const std::string rel = item_file(static_cast<int>(i));
        write_cloud(dir / rel, clouds[i]);
        items.push_back({{"cloud", rel}, {"label", labels[i]}});
    }
    nlohmann::json manifest;
    manifest["task"] = "classify";
    manifest["seed"] = seed;
    manifest["spec"] = spec_echo;
    manifest["items"] = std::move(items);
    return write_manifest(dir, std::move(manifest));
}

std::filesystem::path write_survival_dataset(const std::filesystem::path& dir,
                                             const std::vector<PointCloud>& clouds,
                                             const std::vector<SurvivalRecord>& records,
                                             std::uint64_t seed,
                                             const nlohmann::json& spec_echo) {
    if (clouds.size() != records.size()) {
        throw ValidationError("dataset write: clouds and records must align");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir / "clouds", ec);
    if (ec) throw IoError("cannot create dataset directory " + (dir / "clouds").string());
    nlohmann::json items = nlohmann::json::array();
    for (size_t i = 0; i < clouds.size(); ++i) {
        const std::string rel = item_file(static_cast<int>(i));
        write_cloud(dir / rel, clouds[i]);
        items.push_back({{"cloud", rel},
                         {"time", records[i].observed_time},
                         {"event", records[i].event}});
    }
    nlohmann::json manifest;
    manifest["task"] = "survival";
    manifest["seed"] = seed;
    manifest["spec"] = spec_echo;
    manifest["items"] = std::move(items);
    return write_manifest(dir, std::move(manifest));
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest " + manifest_path.string() + ": " + e.what());
    }
    Dataset dataset;
    try {
        dataset.task = manifest.at("task").get<std::string>();
        dataset.seed = manifest.at("seed").get<std::uint64_t>();
        dataset.spec_echo = manifest.value("spec", nlohmann::json::object());
        const auto base = manifest_path.parent_path();
        for (const auto& item : manifest.at("items")) {
            const auto rel = item.at("cloud").get<std::string>();
            dataset.clouds.push_back(read_cloud(base / rel));
            if (dataset.task == "classify") {
                dataset.labels.push_back(item.at("label").get<int>());
            } else if (dataset.task == "survival") {
                SurvivalRecord r;
                r.observed_time = item.at("time").get<double>();
                r.event = item.at("event").get<bool>();
                if (!(r.observed_time > 0.0)) {
                    throw ValidationError("manifest: observed time must be positive");
                }
                dataset.records.push_back(r);
            } else {
                throw ValidationError("manifest: unknown task '" + dataset.task + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest " + manifest_path.string() + ": " + e.what());
    }
    if (dataset.clouds.empty()) {
        throw ValidationError("manifest " + manifest_path.string() + " lists no items");
    }
    return dataset;
}

}  // namespace pointcal
