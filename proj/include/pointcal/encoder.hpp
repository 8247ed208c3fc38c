#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pointcal/geometry.hpp"
#include "pointcal/recalibration.hpp"
#include "pointcal/tensor.hpp"

namespace pointcal {

// One sampling/grouping/feature-extraction stage.
struct SetAbstractionConfig {
    int n_centroids = 0;
    double radius = 0.0;
    int max_neighbors = 0;
    std::vector<int> mlp_widths;
};

enum class HeadKind { Classification, Risk };

struct ModelConfig {
    std::vector<SetAbstractionConfig> layers;
    RecalibMode recalib_mode = RecalibMode::None;
    // When set (the default), the spatial gate network sits only after the
    // final encoder layer while the channel gates follow every layer; with
    // it cleared the full configured block follows every layer. Gates never
    // follow the global pooling or the fully connected head.
    bool srb_final_only = true;
    int reduction = 2;
    HeadKind head = HeadKind::Classification;
    int n_classes = 3;
    std::vector<int> fc_widths;
    int fps_seed_index = 0;

    void validate() const;
    int n_layers() const { return static_cast<int>(layers.size()); }
    // Feature width coming out of layer l.
    int layer_channels(int layer) const;
    // Width of the grouped per-slot input entering layer l's shared MLP.
    int layer_in_width(int layer) const;
    // Which recalibration this layer actually receives under the placement
    // rule. In scrb mode, layers that only carry the channel part degrade to
    // crb so that the scrb parameter overhead is exactly crb + srb.
    RecalibMode layer_recalib(int layer) const;
    int descriptor_width() const { return layer_channels(n_layers() - 1); }

    // Two-stage architecture small enough to train on a desk CPU.
    static ModelConfig desk_default();
    // Toy instance for gradient checking: 32-point clouds, widths <= 8.
    static ModelConfig miniature();
};

// One shared-MLP stage: y = relu(x W + b), bias stored as a 1 x out row.
struct AffineLayer {
    Tensor weight;
    Tensor bias;
};

struct LayerParams {
    std::vector<AffineLayer> mlp;
    std::optional<ChannelRecalibParams> crb;
    std::optional<SpatialRecalibParams> srb;
};

// All trainable tensors of one model. Iteration order (and therefore
// checkpoint and optimizer order) is a pure function of the config.
struct ModelState {
    std::vector<LayerParams> layers;
    std::vector<AffineLayer> head;

    std::vector<Tensor> all_params() const;
    std::int64_t total_params() const;
};

ModelState init_model_state(const ModelConfig& cfg, std::uint64_t seed);

// Rebuild a ModelState from named tensors (checkpoint load); every expected
// name must be present with the exact shape, nothing extra allowed.
ModelState model_state_from_tensors(
    const ModelConfig& cfg, const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> named_params(const ModelConfig& cfg,
                                                         const ModelState& state);

struct SetAbstractionResult {
    PointCloud centroids;
    Tensor features;  // n_centroids x mlp_widths.back()
    NeighborhoodIndex neighborhoods;
};

SetAbstractionResult set_abstraction(const PointCloud& cloud, const Tensor* features,
                                     const SetAbstractionConfig& cfg,
                                     std::span<const AffineLayer> mlp, int fps_seed_index);

// Gate vectors and centroid positions recorded per layer during a forward
// pass, for export and for block-level cross checks.
struct LayerTap {
    PointCloud centroids;
    std::vector<double> channel_gates;
    std::vector<double> spatial_gates;
    int feature_rows = 0;
    int feature_cols = 0;
    std::vector<double> pre_recalib_features;
};

struct EncoderResult {
    Tensor descriptor;  // 1 x descriptor_width
    std::vector<LayerTap> taps;
};

EncoderResult encoder_forward(const PointCloud& cloud, const ModelConfig& cfg,
                              const ModelState& state);

Tensor classify_head(const Tensor& descriptor, const ModelConfig& cfg,
                     const ModelState& state);
Tensor risk_head(const Tensor& descriptor, const ModelConfig& cfg, const ModelState& state);

struct ActivationRecord {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double gate = 0.0;
};

// Spatial gate per centroid of the last spatially recalibrated layer.
// Requires srb or scrb mode.
std::vector<ActivationRecord> export_activations(const PointCloud& cloud,
                                                 const ModelConfig& cfg,
                                                 const ModelState& state);

}  // namespace pointcal
