#pragma once

#include <span>
#include <vector>

#include "pointcal/tensor.hpp"

namespace pointcal {

// One subject of right-censored time-to-event data: observed_time is
// min(event time, censoring time); event is true when the event itself was
// observed within follow-up.
struct SurvivalRecord {
    double observed_time = 0.0;
    bool event = false;
};

struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Negative Cox partial log-likelihood over the batch:
//   L = -sum_{i with event} [ h_i - log sum_{j: y_j >= y_i} exp(h_j) ]
// Risk sets use all tied-or-later subjects (Breslow). Log-sum-exp is
// max-shifted. risks is an Nx1 tensor aligned with records; returns a scalar
// tensor, zero when no subject had an event.
Tensor cox_loss(const Tensor& risks, std::span<const SurvivalRecord> records);

// Harrell's concordance index. A pair is comparable when the strictly
// earlier observed time belongs to an event subject; concordant pairs score
// 1, risk ties 0.5. Throws when no pair is comparable.
double concordance_index(std::span<const double> risks,
                         std::span<const SurvivalRecord> records);

// Accuracy plus macro-averaged precision/recall over n_classes; per-class
// ratios with an empty denominator count as 0. f1 is the harmonic mean of
// the macro precision and recall, 0 when both vanish.
MetricReport classification_metrics(std::span<const int> predictions,
                                    std::span<const int> labels, int n_classes);

// Learning-rate schedule: base * decay^(epoch / interval), integer division.
double scheduled_lr(double base, double decay, int interval, int epoch);

// Standard bias-corrected Adam over an ordered parameter list. Moment
// buffers are keyed by position, so the same ordered list must be passed to
// every call.
class AdamOptimizer {
  public:
    struct Config {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    AdamOptimizer() = default;
    explicit AdamOptimizer(Config cfg) : cfg_(cfg) {}

    void zero_grads(std::span<Tensor> params);
    // One update using the caller-supplied (already scheduled) learning rate.
    void step(std::span<Tensor> params, double lr);
    int steps_taken() const { return t_; }

  private:
    Config cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace pointcal
