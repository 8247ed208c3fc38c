#pragma once

#include <cstdint>
#include <string>

#include "pointcal/rng.hpp"
#include "pointcal/tensor.hpp"

namespace pointcal {

// Which recalibration is applied to a feature matrix: channel gating (crb),
// spatial gating (srb), or the elementwise max of both (scrb).
enum class RecalibMode { None, Crb, Srb, Scrb };

const char* to_string(RecalibMode mode);
RecalibMode recalib_mode_from_string(const std::string& name);

// ceil(size / reduction), never below 1.
int bottleneck_width(int size, int reduction);

// Symmetric uniform init with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(int rows, int cols, Xorshift64Star& rng, std::string name);

// Half the bound above, for gate-network weights: full-scale draws saturate
// the sigmoid before training starts and the gates never recover. Smaller
// draws start the block near the neutral 0.5 gate while keeping the
// bottleneck preactivations clear of the relu kink.
Tensor gate_uniform(int rows, int cols, Xorshift64Star& rng, std::string name);

// Channel gate network: squeeze to the per-channel mean, reduce-expand
// bottleneck, sigmoid. w2 (C x ceil(C/r)) is applied first, w1 expands back.
// No bias terms anywhere.
struct ChannelRecalibParams {
    Tensor w2;
    Tensor w1;
    int reduction = 2;

    int channels() const { return w2.rows(); }

    static ChannelRecalibParams init(int channels, int reduction, Xorshift64Star& rng,
                                     const std::string& name_prefix);
    static ChannelRecalibParams zeros(int channels, int reduction);
};

// Spatial gate network: project each point descriptor to one value through
// w_conv (C x 1), bottleneck over the N projections, sigmoid per point. The
// bottleneck shapes bind the block to a fixed row count n_fixed.
struct SpatialRecalibParams {
    Tensor w_conv;
    Tensor w2;
    Tensor w1;
    int reduction = 2;
    int n_fixed = 0;

    int channels() const { return w_conv.rows(); }

    static SpatialRecalibParams init(int channels, int points, int reduction,
                                     Xorshift64Star& rng, const std::string& name_prefix);
    static SpatialRecalibParams zeros(int channels, int points, int reduction);
};

// out[i][j] = sigmoid(z')[j] * f[i][j] with z' = relu(mean(f) w2) w1.
// gates_out, when given, receives the 1xC gate vector.
Tensor channel_recalibrate(const Tensor& f, const ChannelRecalibParams& p,
                           Tensor* gates_out = nullptr);

// out[i][j] = sigmoid(q')[i] * f[i][j] with q' = relu((f w_conv)^T w2) w1.
// Rejects inputs whose row count differs from p.n_fixed. gates_out, when
// given, receives the Nx1 gate vector.
Tensor spatial_recalibrate(const Tensor& f, const SpatialRecalibParams& p,
                           Tensor* gates_out = nullptr);

// Elementwise max of the channel and spatial recalibrations of the same f.
Tensor spatial_channel_recalibrate(const Tensor& f, const ChannelRecalibParams& pc,
                                   const SpatialRecalibParams& ps,
                                   Tensor* channel_gates_out = nullptr,
                                   Tensor* spatial_gates_out = nullptr);

// Closed-form weight counts: crb = 2*C*ceil(C/r), srb = C + 2*N*ceil(N/r),
// scrb = both, none = 0.
std::int64_t recalib_param_count(int channels, int points, int reduction, RecalibMode mode);

}  // namespace pointcal
