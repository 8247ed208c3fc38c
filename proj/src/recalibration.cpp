#include "pointcal/recalibration.hpp"

#include <cmath>

#include "pointcal/errors.hpp"

namespace pointcal {

const char* to_string(RecalibMode mode) {
    switch (mode) {
        case RecalibMode::None: return "none";
        case RecalibMode::Crb: return "crb";
        case RecalibMode::Srb: return "srb";
        case RecalibMode::Scrb: return "scrb";
    }
    return "none";
}

RecalibMode recalib_mode_from_string(const std::string& name) {
    if (name == "none") return RecalibMode::None;
    if (name == "crb") return RecalibMode::Crb;
    if (name == "srb") return RecalibMode::Srb;
    if (name == "scrb") return RecalibMode::Scrb;
    throw ConfigError("unknown recalibration mode '" + name + "'");
}

int bottleneck_width(int size, int reduction) {
    if (size < 1 || reduction < 1) {
        throw ValidationError("bottleneck_width: size and reduction must be positive");
    }
    return (size + reduction - 1) / reduction;
}

Tensor glorot_uniform(int rows, int cols, Xorshift64Star& rng, std::string name) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::vector<double> values(static_cast<size_t>(rows) * cols);
    for (double& v : values) v = rng.uniform(-a, a);
    return Tensor::parameter(rows, cols, std::move(values), std::move(name));
}

Tensor gate_uniform(int rows, int cols, Xorshift64Star& rng, std::string name) {
    const double a = 0.5 * std::sqrt(6.0 / (rows + cols));
    std::vector<double> values(static_cast<size_t>(rows) * cols);
    for (double& v : values) v = rng.uniform(-a, a);
    return Tensor::parameter(rows, cols, std::move(values), std::move(name));
}

ChannelRecalibParams ChannelRecalibParams::init(int channels, int reduction,
                                                Xorshift64Star& rng,
                                                const std::string& name_prefix) {
    const int h = bottleneck_width(channels, reduction);
    ChannelRecalibParams p;
    p.reduction = reduction;
    p.w2 = gate_uniform(channels, h, rng, name_prefix + ".w2");
    p.w1 = gate_uniform(h, channels, rng, name_prefix + ".w1");
    return p;
}

ChannelRecalibParams ChannelRecalibParams::zeros(int channels, int reduction) {
    const int h = bottleneck_width(channels, reduction);
    ChannelRecalibParams p;
    p.reduction = reduction;
    p.w2 = Tensor::parameter(channels, h, std::vector<double>(static_cast<size_t>(channels) * h, 0.0), "w2");
    p.w1 = Tensor::parameter(h, channels, std::vector<double>(static_cast<size_t>(h) * channels, 0.0), "w1");
    return p;
}

SpatialRecalibParams SpatialRecalibParams::init(int channels, int points, int reduction,
                                                Xorshift64Star& rng,
                                                const std::string& name_prefix) {
    const int h = bottleneck_width(points, reduction);
    SpatialRecalibParams p;
    p.reduction = reduction;
    p.n_fixed = points;
    p.w_conv = gate_uniform(channels, 1, rng, name_prefix + ".wconv");
    p.w2 = gate_uniform(points, h, rng, name_prefix + ".w2");
    p.w1 = gate_uniform(h, points, rng, name_prefix + ".w1");
    return p;
}

SpatialRecalibParams SpatialRecalibParams::zeros(int channels, int points, int reduction) {
    const int h = bottleneck_width(points, reduction);
    SpatialRecalibParams p;
    p.reduction = reduction;
    p.n_fixed = points;
    p.w_conv = Tensor::parameter(channels, 1, std::vector<double>(channels, 0.0), "wconv");
    p.w2 = Tensor::parameter(points, h, std::vector<double>(static_cast<size_t>(points) * h, 0.0), "w2");
    p.w1 = Tensor::parameter(h, points, std::vector<double>(static_cast<size_t>(h) * points, 0.0), "w1");
    return p;
}

Tensor channel_recalibrate(const Tensor& f, const ChannelRecalibParams& p,
                           Tensor* gates_out) {
    if (f.cols() != p.channels()) {
        throw ShapeError("channel_recalibrate: feature width " + std::to_string(f.cols()) +
                         " does not match block width " + std::to_string(p.channels()));
    }
    Tensor z = column_mean(f);
    Tensor hidden = relu(matmul(z, p.w2));
    Tensor zp = matmul(hidden, p.w1);
    Tensor gates = sigmoid(zp);
    if (gates_out) *gates_out = gates;
    return scale_columns(f, gates);
}

Tensor spatial_recalibrate(const Tensor& f, const SpatialRecalibParams& p,
                           Tensor* gates_out) {
    if (f.rows() != p.n_fixed) {
        throw ShapeError("spatial_recalibrate: block is bound to " +
                         std::to_string(p.n_fixed) + " points, got " +
                         std::to_string(f.rows()));
    }
    if (f.cols() != p.channels()) {
        throw ShapeError("spatial_recalibrate: feature width " + std::to_string(f.cols()) +
                         " does not match projection width " + std::to_string(p.channels()));
    }
    Tensor q = transpose(matmul(f, p.w_conv));  // 1xN
    Tensor hidden = relu(matmul(q, p.w2));
    Tensor qp = matmul(hidden, p.w1);
    Tensor gates = transpose(sigmoid(qp));  // Nx1
    if (gates_out) *gates_out = gates;
    return scale_rows(f, gates);
}

Tensor spatial_channel_recalibrate(const Tensor& f, const ChannelRecalibParams& pc,
                                   const SpatialRecalibParams& ps,
                                   Tensor* channel_gates_out, Tensor* spatial_gates_out) {
    // Both branches read the same input; the combination is a per-element max
    // with ties routed to the channel branch.
    Tensor f_ch = channel_recalibrate(f, pc, channel_gates_out);
    Tensor f_sp = spatial_recalibrate(f, ps, spatial_gates_out);
    return elementwise_max(f_ch, f_sp);
}

std::int64_t recalib_param_count(int channels, int points, int reduction, RecalibMode mode) {
    if (channels < 1 || points < 1 || reduction < 1) {
        throw ValidationError("recalib_param_count: arguments must be positive");
    }
    const std::int64_t crb =
        2LL * channels * bottleneck_width(channels, reduction);
    const std::int64_t srb =
        channels + 2LL * points * bottleneck_width(points, reduction);
    switch (mode) {
        case RecalibMode::None: return 0;
        case RecalibMode::Crb: return crb;
        case RecalibMode::Srb: return srb;
        case RecalibMode::Scrb: return crb + srb;
    }
    return 0;
}

}  // namespace pointcal
