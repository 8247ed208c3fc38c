#include "pointcal/encoder.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "pointcal/errors.hpp"

namespace pointcal {

void ModelConfig::validate() const {
    if (layers.empty()) throw ConfigError("model: at least one encoder layer required");
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& sa = layers[l];
        const std::string where = "model.layers[" + std::to_string(l) + "]";
        if (sa.n_centroids < 1) throw ConfigError(where + ": centroids must be positive");
        if (sa.radius <= 0.0) throw ConfigError(where + ": radius must be positive");
        if (sa.max_neighbors < 1) throw ConfigError(where + ": max_neighbors must be positive");
        if (sa.mlp_widths.empty()) throw ConfigError(where + ": mlp widths must be non-empty");
        for (int w : sa.mlp_widths) {
            if (w < 1) throw ConfigError(where + ": mlp widths must be positive");
        }
        if (l > 0 && sa.n_centroids > layers[l - 1].n_centroids) {
            throw ConfigError(where + ": centroid count may not grow across layers");
        }
    }
    for (int w : fc_widths) {
        if (w < 1) throw ConfigError("model.fc: widths must be positive");
    }
    if (head == HeadKind::Classification && n_classes < 2) {
        throw ConfigError("model: classification needs at least 2 classes");
    }
    if (reduction < 1) throw ConfigError("model: reduction ratio must be positive");
    if (fps_seed_index < 0) throw ConfigError("model: fps seed index must be non-negative");
}

int ModelConfig::layer_channels(int layer) const {
    return layers[layer].mlp_widths.back();
}

int ModelConfig::layer_in_width(int layer) const {
    return layer == 0 ? 3 : 3 + layer_channels(layer - 1);
}

RecalibMode ModelConfig::layer_recalib(int layer) const {
    const bool last = layer == n_layers() - 1;
    switch (recalib_mode) {
        case RecalibMode::None: return RecalibMode::None;
        case RecalibMode::Crb: return RecalibMode::Crb;
        case RecalibMode::Srb:
            return (!srb_final_only || last) ? RecalibMode::Srb : RecalibMode::None;
        case RecalibMode::Scrb:
            return (!srb_final_only || last) ? RecalibMode::Scrb : RecalibMode::Crb;
    }
    return RecalibMode::None;
}

ModelConfig ModelConfig::desk_default() {
    ModelConfig cfg;
    cfg.layers = {{64, 0.2, 16, {16, 32}}, {16, 0.4, 8, {32, 64}}};
    cfg.fc_widths = {32};
    cfg.reduction = 2;
    return cfg;
}

ModelConfig ModelConfig::miniature() {
    ModelConfig cfg;
    cfg.layers = {{16, 0.3, 8, {8}}, {8, 0.6, 4, {8}}};
    cfg.fc_widths = {8};
    cfg.reduction = 2;
    return cfg;
}

namespace {

std::vector<int> head_dims(const ModelConfig& cfg) {
    std::vector<int> dims;
    dims.push_back(cfg.descriptor_width());
    for (int w : cfg.fc_widths) dims.push_back(w);
    dims.push_back(cfg.head == HeadKind::Classification ? cfg.n_classes : 1);
    return dims;
}

// Expected parameter names and shapes, in state order.
struct ParamSpec {
    std::string name;
    int rows;
    int cols;
};

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
    std::vector<ParamSpec> specs;
    for (int l = 0; l < cfg.n_layers(); ++l) {
        const std::string prefix = "sa" + std::to_string(l);
        int in = cfg.layer_in_width(l);
        for (size_t i = 0; i < cfg.layers[l].mlp_widths.size(); ++i) {
            const int out = cfg.layers[l].mlp_widths[i];
            specs.push_back({prefix + ".mlp" + std::to_string(i) + ".w", in, out});
            specs.push_back({prefix + ".mlp" + std::to_string(i) + ".b", 1, out});
            in = out;
        }
        const int c = cfg.layer_channels(l);
        const RecalibMode mode = cfg.layer_recalib(l);
        if (mode == RecalibMode::Crb || mode == RecalibMode::Scrb) {
            const int h = bottleneck_width(c, cfg.reduction);
            specs.push_back({prefix + ".crb.w2", c, h});
            specs.push_back({prefix + ".crb.w1", h, c});
        }
        if (mode == RecalibMode::Srb || mode == RecalibMode::Scrb) {
            const int n = cfg.layers[l].n_centroids;
            const int h = bottleneck_width(n, cfg.reduction);
            specs.push_back({prefix + ".srb.wconv", c, 1});
            specs.push_back({prefix + ".srb.w2", n, h});
            specs.push_back({prefix + ".srb.w1", h, n});
        }
    }
    const auto dims = head_dims(cfg);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool out_layer = i + 2 == dims.size();
        const std::string name =
            out_layer ? "head.out" : "head.fc" + std::to_string(i);
        specs.push_back({name + ".w", dims[i], dims[i + 1]});
        specs.push_back({name + ".b", 1, dims[i + 1]});
    }
    return specs;
}

ModelState assemble_state(const ModelConfig& cfg,
                          const std::function<Tensor(const ParamSpec&)>& provide) {
    ModelState state;
    state.layers.resize(cfg.n_layers());
    auto specs = param_specs(cfg);
    size_t next = 0;
    auto take = [&](const std::string& name) {
        const ParamSpec& spec = specs[next++];
        if (spec.name != name) throw ValidationError("model state assembly out of order");
        return provide(spec);
    };
    for (int l = 0; l < cfg.n_layers(); ++l) {
        const std::string prefix = "sa" + std::to_string(l);
        auto& layer = state.layers[l];
        for (size_t i = 0; i < cfg.layers[l].mlp_widths.size(); ++i) {
            AffineLayer affine;
            affine.weight = take(prefix + ".mlp" + std::to_string(i) + ".w");
            affine.bias = take(prefix + ".mlp" + std::to_string(i) + ".b");
            layer.mlp.push_back(std::move(affine));
        }
        const RecalibMode mode = cfg.layer_recalib(l);
        if (mode == RecalibMode::Crb || mode == RecalibMode::Scrb) {
            ChannelRecalibParams p;
            p.reduction = cfg.reduction;
            p.w2 = take(prefix + ".crb.w2");
            p.w1 = take(prefix + ".crb.w1");
            layer.crb = std::move(p);
        }
        if (mode == RecalibMode::Srb || mode == RecalibMode::Scrb) {
            SpatialRecalibParams p;
            p.reduction = cfg.reduction;
            p.n_fixed = cfg.layers[l].n_centroids;
            p.w_conv = take(prefix + ".srb.wconv");
            p.w2 = take(prefix + ".srb.w2");
            p.w1 = take(prefix + ".srb.w1");
            layer.srb = std::move(p);
        }
    }
    const auto dims = head_dims(cfg);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool out_layer = i + 2 == dims.size();
        const std::string name =
            out_layer ? "head.out" : "head.fc" + std::to_string(i);
        AffineLayer affine;
        affine.weight = take(name + ".w");
        affine.bias = take(name + ".b");
        state.head.push_back(std::move(affine));
    }
    return state;
}

}  // namespace

std::vector<Tensor> ModelState::all_params() const {
    std::vector<Tensor> out;
    for (const auto& layer : layers) {
        for (const auto& affine : layer.mlp) {
            out.push_back(affine.weight);
            out.push_back(affine.bias);
        }
        if (layer.crb) {
            out.push_back(layer.crb->w2);
            out.push_back(layer.crb->w1);
        }
        if (layer.srb) {
            out.push_back(layer.srb->w_conv);
            out.push_back(layer.srb->w2);
            out.push_back(layer.srb->w1);
        }
    }
    for (const auto& affine : head) {
        out.push_back(affine.weight);
        out.push_back(affine.bias);
    }
    return out;
}

std::int64_t ModelState::total_params() const {
    std::int64_t total = 0;
    for (const auto& p : all_params()) total += p.size();
    return total;
}

ModelState init_model_state(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Xorshift64Star rng(seed);
    return assemble_state(cfg, [&](const ParamSpec& spec) {
        // Weights follow the symmetric uniform rule. Biases start near zero:
        // wide bias draws leave half of these narrow relu layers dead from
        // the first step, while exactly zero would park the centroid's own
        // slot (whose relative coordinates vanish) on the relu kink that
        // finite-difference checks cannot straddle.
        if (spec.name.ends_with(".b")) {
            std::vector<double> values(static_cast<size_t>(spec.rows) * spec.cols);
            for (double& v : values) v = rng.uniform(-0.01, 0.01);
            return Tensor::parameter(spec.rows, spec.cols, std::move(values), spec.name);
        }
        if (spec.name.find(".crb.") != std::string::npos ||
            spec.name.find(".srb.") != std::string::npos) {
            return gate_uniform(spec.rows, spec.cols, rng, spec.name);
        }
        return glorot_uniform(spec.rows, spec.cols, rng, spec.name);
    });
}

ModelState model_state_from_tensors(
    const ModelConfig& cfg, const std::vector<std::pair<std::string, Tensor>>& tensors) {
    cfg.validate();
    std::map<std::string, Tensor> by_name;
    for (const auto& [name, tensor] : tensors) {
        if (!by_name.emplace(name, tensor).second) {
            throw ValidationError("checkpoint: duplicate tensor '" + name + "'");
        }
    }
    auto state = assemble_state(cfg, [&](const ParamSpec& spec) {
        auto it = by_name.find(spec.name);
        if (it == by_name.end()) {
            throw ValidationError("checkpoint: missing tensor '" + spec.name + "'");
        }
        const Tensor& t = it->second;
        if (t.rows() != spec.rows || t.cols() != spec.cols) {
            throw ValidationError("checkpoint: tensor '" + spec.name + "' has shape " +
                                  std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                                  ", expected " + std::to_string(spec.rows) + "x" +
                                  std::to_string(spec.cols));
        }
        by_name.erase(it);
        return t;
    });
    if (!by_name.empty()) {
        throw ValidationError("checkpoint: unexpected tensor '" + by_name.begin()->first + "'");
    }
    return state;
}

std::vector<std::pair<std::string, Tensor>> named_params(const ModelConfig& cfg,
                                                         const ModelState& state) {
    auto specs = param_specs(cfg);
    auto params = state.all_params();
    if (specs.size() != params.size()) {
        throw ValidationError("model state does not match config parameter table");
    }
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(specs.size());
    for (size_t i = 0; i < specs.size(); ++i) {
        out.emplace_back(specs[i].name, params[i]);
    }
    return out;
}

SetAbstractionResult set_abstraction(const PointCloud& cloud, const Tensor* features,
                                     const SetAbstractionConfig& cfg,
                                     std::span<const AffineLayer> mlp, int fps_seed_index) {
    if (features && features->rows() != cloud.size()) {
        throw ShapeError("set_abstraction: features do not align with cloud");
    }
    SetAbstractionResult result;
    auto centroid_ids = farthest_point_sampling(cloud, cfg.n_centroids, fps_seed_index);
    result.neighborhoods = ball_query(cloud, centroid_ids, cfg.radius, cfg.max_neighbors);
    const int m = result.neighborhoods.rows();
    const int k = result.neighborhoods.k;

    // Relative coordinates are constants; the feature rows are gathered
    // differentiably so gradients flow back into the previous layer.
    GroupedFeatures rel = group_features(cloud, nullptr, result.neighborhoods);
    Tensor x = Tensor::constant(m * k, 3, std::move(rel.data));
    if (features) {
        x = concat_cols(x, gather_rows(*features, result.neighborhoods.neighbor_ids));
    }
    for (const auto& affine : mlp) {
        x = relu(add_rowwise(matmul(x, affine.weight), affine.bias));
    }
    std::vector<Tensor> pooled;
    pooled.reserve(m);
    std::vector<int> slot_ids(k);
    for (int g = 0; g < m; ++g) {
        for (int s = 0; s < k; ++s) slot_ids[s] = g * k + s;
        pooled.push_back(max_over_group(gather_rows(x, slot_ids)));
    }
    result.features = concat_rows(pooled);
    result.centroids.points.reserve(m);
    for (int id : centroid_ids) result.centroids.points.push_back(cloud.points[id]);
    return result;
}

EncoderResult encoder_forward(const PointCloud& cloud, const ModelConfig& cfg,
                              const ModelState& state) {
    cfg.validate();
    if (static_cast<int>(state.layers.size()) != cfg.n_layers()) {
        throw ShapeError("encoder_forward: state does not match config");
    }
    EncoderResult result;
    PointCloud current = cloud;
    Tensor feats;
    for (int l = 0; l < cfg.n_layers(); ++l) {
        auto sa = set_abstraction(current, feats.defined() ? &feats : nullptr, cfg.layers[l],
                                  state.layers[l].mlp, cfg.fps_seed_index);
        LayerTap tap;
        tap.centroids = sa.centroids;
        tap.feature_rows = sa.features.rows();
        tap.feature_cols = sa.features.cols();
        auto pre = sa.features.values();
        tap.pre_recalib_features.assign(pre.begin(), pre.end());

        Tensor out = sa.features;
        Tensor channel_gates, spatial_gates;
        switch (cfg.layer_recalib(l)) {
            case RecalibMode::None: break;
            case RecalibMode::Crb:
                out = channel_recalibrate(out, *state.layers[l].crb, &channel_gates);
                break;
            case RecalibMode::Srb:
                out = spatial_recalibrate(out, *state.layers[l].srb, &spatial_gates);
                break;
            case RecalibMode::Scrb:
                out = spatial_channel_recalibrate(out, *state.layers[l].crb,
                                                  *state.layers[l].srb, &channel_gates,
                                                  &spatial_gates);
                break;
        }
        if (channel_gates.defined()) {
            auto g = channel_gates.values();
            tap.channel_gates.assign(g.begin(), g.end());
        }
        if (spatial_gates.defined()) {
            auto g = spatial_gates.values();
            tap.spatial_gates.assign(g.begin(), g.end());
        }
        result.taps.push_back(std::move(tap));
        current = sa.centroids;
        feats = out;
    }
    // Global pooling across the remaining centroids; never recalibrated.
    result.descriptor = max_over_group(feats);
    return result;
}

namespace {

Tensor run_head(const Tensor& descriptor, const ModelConfig& cfg, const ModelState& state) {
    if (descriptor.rows() != 1 || descriptor.cols() != cfg.descriptor_width()) {
        throw ShapeError("head: descriptor has unexpected shape");
    }
    if (state.head.empty()) throw ShapeError("head: no parameters");
    Tensor x = descriptor;
    for (size_t i = 0; i + 1 < state.head.size(); ++i) {
        x = relu(add_rowwise(matmul(x, state.head[i].weight), state.head[i].bias));
    }
    return add_rowwise(matmul(x, state.head.back().weight), state.head.back().bias);
}

}  // namespace

Tensor classify_head(const Tensor& descriptor, const ModelConfig& cfg,
                     const ModelState& state) {
    if (cfg.head != HeadKind::Classification) {
        throw ValidationError("classify_head: model head is not classification");
    }
    return run_head(descriptor, cfg, state);
}

Tensor risk_head(const Tensor& descriptor, const ModelConfig& cfg, const ModelState& state) {
    if (cfg.head != HeadKind::Risk) {
        throw ValidationError("risk_head: model head is not risk");
    }
    return run_head(descriptor, cfg, state);
}

std::vector<ActivationRecord> export_activations(const PointCloud& cloud,
                                                 const ModelConfig& cfg,
                                                 const ModelState& state) {
    if (cfg.recalib_mode != RecalibMode::Srb && cfg.recalib_mode != RecalibMode::Scrb) {
        throw ValidationError(
            "export_activations: model has no spatial gates (mode is " +
            std::string(to_string(cfg.recalib_mode)) + ")");
    }
    auto forward = encoder_forward(cloud, cfg, state);
    for (auto it = forward.taps.rbegin(); it != forward.taps.rend(); ++it) {
        if (it->spatial_gates.empty()) continue;
        std::vector<ActivationRecord> records;
        records.reserve(it->spatial_gates.size());
        for (size_t i = 0; i < it->spatial_gates.size(); ++i) {
            const Vec3& p = it->centroids.points[i];
            records.push_back({p[0], p[1], p[2], it->spatial_gates[i]});
        }
        return records;
    }
    throw ValidationError("export_activations: forward pass produced no spatial gates");
}

}  // namespace pointcal
