#include "pointcal/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pointcal/checkpoint.hpp"
#include "pointcal/config.hpp"
#include "pointcal/dataset.hpp"
#include "pointcal/encoder.hpp"
#include "pointcal/errors.hpp"
#include "pointcal/objectives.hpp"
#include "pointcal/synthdata.hpp"

namespace pointcal {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kGradTolerance = 1e-4;
constexpr double kGradEps = 1e-5;
// Fixed salt for the gradcheck data seed: the default probe cloud was picked
// so no relu/max preactivation sits within the finite-difference step of a
// kink, where central differences stop matching any correct gradient.
constexpr std::uint64_t kGradDataSalt = 17;

int worker_count(int n_items) {
    int limit = static_cast<int>(std::thread::hardware_concurrency());
    if (limit < 1) limit = 1;
    if (const char* env = std::getenv("POINTCAL_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || parsed < 1) {
            throw ConfigError("POINTCAL_THREADS must be a positive integer");
        }
        limit = static_cast<int>(parsed);
    }
    return std::max(1, std::min(limit, n_items));
}

// Index-ordered parallel map; results land by item index so the output is
// identical for any worker count.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const int threads = worker_count(n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const int i = next.fetch_add(1);
            if (i >= n) break;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

// Resolved config goes to disk before any real work happens.
void echo_config(const fs::path& out_dir, const RunConfig& cfg) {
    ensure_dir(out_dir);
    write_text(out_dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---- Shared evaluation ------------------------------------------------

int argmax_class(const Tensor& logits) {
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j) {
        if (logits.at(0, j) > logits.at(0, best)) best = j;
    }
    return best;
}

std::vector<int> predict_classes(const Dataset& data, std::span<const int> ids,
                                 const ModelConfig& model, const ModelState& state) {
    std::vector<int> out(ids.size(), -1);
    parallel_for(static_cast<int>(ids.size()), [&](int i) {
        auto forward = encoder_forward(data.clouds[ids[i]], model, state);
        out[i] = argmax_class(classify_head(forward.descriptor, model, state));
    });
    return out;
}

std::vector<double> predict_risks(const Dataset& data, std::span<const int> ids,
                                  const ModelConfig& model, const ModelState& state) {
    std::vector<double> out(ids.size(), 0.0);
    parallel_for(static_cast<int>(ids.size()), [&](int i) {
        auto forward = encoder_forward(data.clouds[ids[i]], model, state);
        out[i] = risk_head(forward.descriptor, model, state).item();
    });
    return out;
}

double validation_metric(const RunConfig& cfg, const Dataset& data,
                         std::span<const int> ids, const ModelState& state) {
    if (ids.empty()) return 0.0;
    if (cfg.is_survival()) {
        auto risks = predict_risks(data, ids, cfg.model, state);
        std::vector<SurvivalRecord> records;
        records.reserve(ids.size());
        for (int id : ids) records.push_back(data.records[id]);
        try {
            return concordance_index(risks, records);
        } catch (const ValidationError&) {
            std::cerr << "warning: validation split has no comparable pairs, "
                         "reporting 0.5\n";
            return 0.5;
        }
    }
    auto preds = predict_classes(data, ids, cfg.model, state);
    std::vector<int> labels;
    labels.reserve(ids.size());
    for (int id : ids) labels.push_back(data.labels[id]);
    return classification_metrics(preds, labels, cfg.model.n_classes).accuracy;
}

// ---- Training -----------------------------------------------------------

struct TrainResult {
    std::vector<std::vector<double>> best_values;  // aligned with all_params()
    double best_metric = -std::numeric_limits<double>::infinity();
    std::string csv;
};

std::vector<std::vector<double>> snapshot_values(std::span<const Tensor> params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        auto v = p.values();
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

TrainResult train_model(const RunConfig& cfg, const Dataset& data, ModelState& state,
                        const SplitResult& split) {
    auto params = state.all_params();
    AdamOptimizer adam;
    TrainResult result;
    result.best_values = snapshot_values(params);
    result.csv = "epoch,train_loss,val_metric\n";

    Xorshift64Star shuffle_rng(cfg.training.seed + 1);
    std::vector<int> order = split.train;
    const int batch_size = cfg.training.batch_size;

    for (int epoch = 0; epoch < cfg.training.epochs; ++epoch) {
        const double lr = scheduled_lr(cfg.training.learning_rate, cfg.training.decay_factor,
                                       cfg.training.decay_interval, epoch);
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        double loss_sum = 0.0;
        double loss_norm = 0.0;
        for (size_t start = 0; start < order.size(); start += batch_size) {
            const size_t stop = std::min(order.size(), start + batch_size);
            adam.zero_grads(params);
            try {
                Tensor loss;
                if (cfg.is_survival()) {
                    std::vector<Tensor> risks;
                    std::vector<SurvivalRecord> records;
                    int events = 0;
                    for (size_t b = start; b < stop; ++b) {
                        const int id = order[b];
                        auto forward = encoder_forward(data.clouds[id], cfg.model, state);
                        risks.push_back(risk_head(forward.descriptor, cfg.model, state));
                        records.push_back(data.records[id]);
                        if (data.records[id].event) ++events;
                    }
                    Tensor total = cox_loss(concat_rows(risks), records);
                    loss = scale_by(total, 1.0 / std::max(1, events));
                    loss_sum += total.item();
                    loss_norm += events;
                } else {
                    Tensor total;
                    for (size_t b = start; b < stop; ++b) {
                        const int id = order[b];
                        auto forward = encoder_forward(data.clouds[id], cfg.model, state);
                        Tensor logits = classify_head(forward.descriptor, cfg.model, state);
                        Tensor ce = softmax_cross_entropy(logits, data.labels[id]);
                        total = total.defined() ? add(total, ce) : ce;
                    }
                    loss = scale_by(total, 1.0 / static_cast<double>(stop - start));
                    loss_sum += total.item();
                    loss_norm += static_cast<double>(stop - start);
                }
                if (!std::isfinite(loss.item())) {
                    throw NumericError("loss is not finite");
                }
                backward(loss);
                adam.step(params, lr);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", batch starting at item " + std::to_string(start) + ": " +
                                   e.what());
            }
        }
        const double train_loss = loss_norm > 0.0 ? loss_sum / loss_norm : 0.0;
        const double val_metric = validation_metric(cfg, data, split.val, state);
        result.csv += std::to_string(epoch) + "," + format_double(train_loss) + "," +
                      format_double(val_metric) + "\n";
        // >= keeps the latest epoch among equally good ones, so a run that
        // saturates a small validation split still ends on trained weights.
        if (val_metric >= result.best_metric) {
            result.best_metric = val_metric;
            result.best_values = snapshot_values(params);
        }
    }
    if (cfg.training.epochs == 0) result.best_metric = 0.0;
    return result;
}

// ---- Commands -------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
    if (!cfg.data.generator) {
        throw ConfigError("gen-data needs a data.generator section");
    }
    const fs::path out_dir = cfg.output;
    echo_config(out_dir, cfg);
    const GeneratorConfig& gen = *cfg.data.generator;
    json report;
    if (cfg.is_survival()) {
        SurvivalDataset ds = make_survival_dataset(gen.survival);
        const auto manifest = write_survival_dataset(
            out_dir, ds.clouds, ds.records, gen.seed,
            run_config_to_json(cfg)["data"]["generator"]);
        int censored = 0;
        for (const auto& r : ds.records) censored += r.event ? 0 : 1;
        report["manifest"] = manifest.string();
        report["items"] = static_cast<int>(ds.records.size());
        report["realized_censoring"] =
            static_cast<double>(censored) / static_cast<double>(ds.records.size());
    } else {
        auto items = make_classification_dataset(gen.per_class, gen.points, gen.jitter,
                                                 gen.seed);
        std::vector<PointCloud> clouds;
        std::vector<int> labels;
        for (auto& item : items) {
            clouds.push_back(std::move(item.cloud));
            labels.push_back(item.label);
        }
        const auto manifest = write_classification_dataset(
            out_dir, clouds, labels, gen.seed, run_config_to_json(cfg)["data"]["generator"]);
        report["manifest"] = manifest.string();
        report["items"] = static_cast<int>(labels.size());
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

Dataset load_for(const RunConfig& cfg, const std::string& manifest_path) {
    if (manifest_path.empty()) {
        throw ConfigError("no dataset manifest given (data.manifest)");
    }
    Dataset data = load_dataset(manifest_path);
    const std::string expected = cfg.is_survival() ? "survival" : "classify";
    if (data.task != expected) {
        throw ConfigError("manifest task '" + data.task + "' does not match config task '" +
                          cfg.task + "'");
    }
    return data;
}

int cmd_train(const RunConfig& cfg) {
    const fs::path out_dir = cfg.output;
    echo_config(out_dir, cfg);
    Dataset data = load_for(cfg, cfg.data.manifest);
    auto split = split_dataset(data.strata(), cfg.data.split_fractions, cfg.data.split_seed);
    if (!split.stratified) {
        std::cerr << "warning: a stratum has fewer than 3 items, using a global split\n";
    }
    if (split.train.empty()) throw ConfigError("training split is empty");

    ModelState state = init_model_state(cfg.model, cfg.training.seed);
    TrainResult result = train_model(cfg, data, state, split);
    write_text(out_dir / "metrics.csv", result.csv);

    // Rebuild the best snapshot into the live state before saving.
    auto params = state.all_params();
    for (size_t i = 0; i < params.size(); ++i) {
        params[i].mutable_values() = result.best_values[i];
    }
    const fs::path ckpt = out_dir / "checkpoint.bin";
    // The embedded echo describes the model and run recipe; the output
    // directory is run-local and would break byte-identical reruns.
    json ckpt_echo = run_config_to_json(cfg);
    ckpt_echo.erase("output");
    save_checkpoint(ckpt, ckpt_echo, named_params(cfg.model, state));

    json report;
    report["checkpoint"] = ckpt.string();
    report["metrics"] = (out_dir / "metrics.csv").string();
    report["best_val_metric"] = result.best_metric;
    std::cout << report.dump(2) << "\n";
    return 0;
}

std::pair<RunConfig, ModelState> load_model(const fs::path& checkpoint_path) {
    CheckpointData ckpt = load_checkpoint(checkpoint_path);
    RunConfig cfg = parse_run_config(ckpt.config_echo);
    ModelState state = model_state_from_tensors(cfg.model, ckpt.tensors);
    return {std::move(cfg), std::move(state)};
}

std::span<const int> pick_split(const SplitResult& split, const std::string& name) {
    if (name == "train") return split.train;
    if (name == "val") return split.val;
    if (name == "test") return split.test;
    throw ConfigError("unknown split '" + name + "', expected train, val or test");
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
             const std::string& split_name, const std::string& out_override) {
    auto [cfg, state] = load_model(checkpoint_path);
    if (!manifest_path.empty()) cfg.data.manifest = manifest_path;
    if (!out_override.empty()) cfg.output = out_override;
    const fs::path out_dir = cfg.output;
    echo_config(out_dir, cfg);

    Dataset data = load_for(cfg, cfg.data.manifest);
    auto split = split_dataset(data.strata(), cfg.data.split_fractions, cfg.data.split_seed);
    auto ids = pick_split(split, split_name);
    if (ids.empty()) throw ConfigError("split '" + split_name + "' is empty");

    json report;
    if (cfg.is_survival()) {
        auto risks = predict_risks(data, ids, cfg.model, state);
        std::vector<SurvivalRecord> records;
        for (int id : ids) records.push_back(data.records[id]);
        report["c_index"] = concordance_index(risks, records);
    } else {
        auto preds = predict_classes(data, ids, cfg.model, state);
        std::vector<int> labels;
        for (int id : ids) labels.push_back(data.labels[id]);
        MetricReport metrics = classification_metrics(preds, labels, cfg.model.n_classes);
        report["accuracy"] = metrics.accuracy;
        report["precision"] = metrics.precision;
        report["recall"] = metrics.recall;
        report["f1"] = metrics.f1;
    }
    write_text(out_dir / ("eval_" + split_name + ".json"), report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    return 0;
}

// Builds the loss the gradient check differentiates: a small synthetic batch
// matching the configured task.
std::function<Tensor()> gradcheck_loss(const RunConfig& cfg, const ModelState& state,
                                       std::uint64_t seed) {
    const int n_points = std::max(32, 2 * cfg.model.layers[0].n_centroids);
    const std::uint64_t data_seed = seed + kGradDataSalt;
    if (cfg.is_survival()) {
        auto clouds = std::make_shared<std::vector<PointCloud>>();
        auto records = std::make_shared<std::vector<SurvivalRecord>>();
        for (int i = 0; i < 4; ++i) {
            ShapeSpec spec{ShapeKind::Sphere, n_points, 0.01, data_seed + i};
            clouds->push_back(sample_shape(spec));
            records->push_back({1.0 + i, i != 2});
        }
        return [&cfg, &state, clouds, records]() {
            std::vector<Tensor> risks;
            for (const auto& cloud : *clouds) {
                auto forward = encoder_forward(cloud, cfg.model, state);
                risks.push_back(risk_head(forward.descriptor, cfg.model, state));
            }
            return cox_loss(concat_rows(risks), *records);
        };
    }
    auto cloud = std::make_shared<PointCloud>(
        sample_shape(ShapeSpec{ShapeKind::Sphere, n_points, 0.01, data_seed}));
    return [&cfg, &state, cloud]() {
        auto forward = encoder_forward(*cloud, cfg.model, state);
        Tensor logits = classify_head(forward.descriptor, cfg.model, state);
        return softmax_cross_entropy(logits, 0);
    };
}

int cmd_gradcheck(const RunConfig& cfg, std::uint64_t seed, bool corrupt) {
    const fs::path out_dir = cfg.output;
    echo_config(out_dir, cfg);

    ModelState state = init_model_state(cfg.model, seed);
    auto params = state.all_params();
    auto build = gradcheck_loss(cfg, state, seed);
    GradReport report = grad_check(params, build, kGradEps, corrupt ? 0 : -1);

    json doc;
    doc["passed"] = report.passes(kGradTolerance);
    doc["tolerance"] = kGradTolerance;
    doc["eps"] = kGradEps;
    doc["max_rel_error"] = report.max_rel_error;
    doc["worst_param"] = report.worst_param;
    doc["worst_index"] = report.worst_index;
    json per_param = json::array();
    for (const auto& p : report.params) {
        per_param.push_back({{"name", p.name}, {"max_rel_error", p.max_rel_error}});
    }
    doc["params"] = std::move(per_param);
    write_text(out_dir / "gradcheck.json", doc.dump(2) + "\n");
    std::cout << doc.dump(2) << "\n";
    if (!report.passes(kGradTolerance)) {
        std::cerr << "gradient check failed: max relative error " +
                         format_double(report.max_rel_error) + " in " + report.worst_param
                  << "\n";
        return 2;
    }
    return 0;
}

int cmd_export_activations(const std::string& checkpoint_path, const std::string& cloud_path,
                           const std::string& out_override) {
    auto [cfg, state] = load_model(checkpoint_path);
    if (!out_override.empty()) cfg.output = out_override;
    const fs::path out_dir = cfg.output;
    echo_config(out_dir, cfg);

    PointCloud cloud = read_cloud(cloud_path);
    auto records = export_activations(cloud, cfg.model, state);
    std::string csv = "x,y,z,gate\n";
    for (const auto& r : records) {
        csv += format_double(r.x) + "," + format_double(r.y) + "," + format_double(r.z) +
               "," + format_double(r.gate) + "\n";
    }
    write_text(out_dir / "activations.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_params(const RunConfig& cfg) {
    const fs::path out_dir = cfg.output;
    echo_config(out_dir, cfg);

    std::int64_t baseline = 0;
    {
        ModelConfig plain = cfg.model;
        plain.recalib_mode = RecalibMode::None;
        for (int l = 0; l < plain.n_layers(); ++l) {
            int in = plain.layer_in_width(l);
            for (int w : plain.layers[l].mlp_widths) {
                baseline += static_cast<std::int64_t>(in) * w + w;  // weight + bias
                in = w;
            }
        }
        int in = plain.descriptor_width();
        for (int w : plain.fc_widths) {
            baseline += static_cast<std::int64_t>(in) * w + w;
            in = w;
        }
        const int out = plain.head == HeadKind::Classification ? plain.n_classes : 1;
        baseline += static_cast<std::int64_t>(in) * out + out;
    }

    json doc;
    for (RecalibMode mode :
         {RecalibMode::None, RecalibMode::Crb, RecalibMode::Srb, RecalibMode::Scrb}) {
        ModelConfig with_mode = cfg.model;
        with_mode.recalib_mode = mode;
        std::int64_t added = 0;
        for (int l = 0; l < with_mode.n_layers(); ++l) {
            added += recalib_param_count(with_mode.layer_channels(l),
                                         with_mode.layers[l].n_centroids, with_mode.reduction,
                                         with_mode.layer_recalib(l));
        }
        json entry;
        entry["total"] = baseline + added;
        entry["added"] = added;
        entry["overhead_pct"] = 100.0 * static_cast<double>(added) / static_cast<double>(baseline);
        doc[to_string(mode)] = std::move(entry);
    }
    write_text(out_dir / "params.json", doc.dump(2) + "\n");
    std::cout << doc.dump(2) << "\n";
    return 0;
}

// ---- Dispatch ---------------------------------------------------------------

RunConfig config_for(const std::string& config_path, std::optional<std::uint64_t> seed,
                     const std::string& out_override, bool default_miniature = false) {
    RunConfig cfg;
    if (!config_path.empty()) {
        cfg = load_run_config(config_path);
    } else if (default_miniature) {
        cfg.model = ModelConfig::miniature();
        cfg.model.validate();
    } else {
        throw ConfigError("--config is required for this command");
    }
    if (seed) {
        cfg.training.seed = *seed;
        if (cfg.data.generator) {
            cfg.data.generator->seed = *seed;
            cfg.data.generator->survival.seed = *seed;
        }
    }
    if (!out_override.empty()) cfg.output = out_override;
    return cfg;
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"point cloud recalibration pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, split = "test";
    std::string checkpoint_path, manifest_path, cloud_path;
    std::optional<std::uint64_t> seed;
    bool corrupt = false;

    auto add_common = [&](CLI::App* cmd, bool with_config) {
        if (with_config) cmd->add_option("--config", config_path, "run config JSON");
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--out", out_dir, "output directory override");
    };

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, true);
    auto* train = app.add_subcommand("train", "train a model from a manifest");
    add_common(train, true);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("manifest", manifest_path, "dataset manifest");
    eval->add_option("--split", split, "train, val or test");
    add_common(eval, false);
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(gradcheck, true);
    gradcheck->add_flag("--corrupt", corrupt,
                        "deliberately corrupt one analytic gradient (must fail)");
    auto* exporter =
        app.add_subcommand("export-activations", "spatial gate per centroid as CSV");
    exporter->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    exporter->add_option("cloud", cloud_path, "point cloud text file")->required();
    add_common(exporter, false);
    auto* params = app.add_subcommand("params", "parameter counts and overhead per mode");
    add_common(params, true);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n";
        return 1;
    }

    if (gen->parsed()) return cmd_gen_data(config_for(config_path, seed, out_dir));
    if (train->parsed()) return cmd_train(config_for(config_path, seed, out_dir));
    if (eval->parsed()) return cmd_eval(checkpoint_path, manifest_path, split, out_dir);
    if (gradcheck->parsed()) {
        RunConfig cfg = config_for(config_path, seed, out_dir, /*default_miniature=*/true);
        return cmd_gradcheck(cfg, seed.value_or(cfg.training.seed), corrupt);
    }
    if (exporter->parsed()) return cmd_export_activations(checkpoint_path, cloud_path, out_dir);
    if (params->parsed()) return cmd_params(config_for(config_path, seed, out_dir));
    std::cerr << "no command given\n";
    return 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace pointcal
