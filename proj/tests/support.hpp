#pragma once

// Shared test utilities: independent finite-difference machinery and
// brute-force oracles. Everything here reimplements the behavior it checks
// from the definitions, without calling the library's own shortcut paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pointcal/geometry.hpp"
#include "pointcal/objectives.hpp"
#include "pointcal/rng.hpp"
#include "pointcal/tensor.hpp"

namespace testsupport {

using pointcal::PointCloud;
using pointcal::SurvivalRecord;
using pointcal::Tensor;
using pointcal::Vec3;
using pointcal::Xorshift64Star;

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

// Central differences on every element of param, test-owned differencing.
inline std::vector<double> fd_gradient(Tensor& param, const std::function<double()>& eval,
                                       double eps = 1e-5) {
    auto& values = param.mutable_values();
    std::vector<double> grad(values.size());
    for (size_t k = 0; k < values.size(); ++k) {
        const double orig = values[k];
        values[k] = orig + eps;
        const double up = eval();
        values[k] = orig - eps;
        const double down = eval();
        values[k] = orig;
        grad[k] = (up - down) / (2.0 * eps);
    }
    return grad;
}

inline double max_grad_rel_err(const Tensor& param, std::span<const double> numeric) {
    auto analytic = param.grad();
    double worst = 0.0;
    for (size_t k = 0; k < numeric.size(); ++k) {
        worst = std::max(worst, rel_err(analytic[k], numeric[k]));
    }
    return worst;
}

inline std::vector<double> random_values(int count, Xorshift64Star& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(count);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Tensor random_param(int rows, int cols, Xorshift64Star& rng, const char* name = "p") {
    return Tensor::parameter(rows, cols, random_values(rows * cols, rng), name);
}

inline PointCloud random_cloud(int n, Xorshift64Star& rng, double extent = 1.0) {
    PointCloud cloud;
    cloud.points.reserve(n);
    for (int i = 0; i < n; ++i) {
        cloud.points.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                                rng.uniform(-extent, extent)});
    }
    return cloud;
}

// Greedy max-min selection recomputed from scratch at every step (no
// incremental min-distance array): the oracle for farthest point sampling.
inline std::vector<int> fps_oracle(const PointCloud& cloud, int m, int seed_index) {
    std::vector<int> selected{seed_index};
    std::vector<bool> taken(cloud.points.size(), false);
    taken[seed_index] = true;
    while (static_cast<int>(selected.size()) < m) {
        int best = -1;
        double best_min = -1.0;
        for (int i = 0; i < cloud.size(); ++i) {
            if (taken[i]) continue;
            double min_d = std::numeric_limits<double>::infinity();
            for (int s : selected) {
                min_d = std::min(min_d, pointcal::squared_distance(cloud.points[i],
                                                                   cloud.points[s]));
            }
            if (min_d > best_min) {
                best_min = min_d;
                best = i;
            }
        }
        selected.push_back(best);
        taken[best] = true;
    }
    return selected;
}

// All indices within the radius, ascending; the reference result set for a
// ball query row before the cap and padding rules apply.
inline std::vector<int> ball_oracle(const PointCloud& cloud, int centroid, double radius) {
    std::vector<int> hits;
    for (int i = 0; i < cloud.size(); ++i) {
        const double d = std::sqrt(
            pointcal::squared_distance(cloud.points[i], cloud.points[centroid]));
        if (d <= radius) hits.push_back(i);
    }
    return hits;
}

// Exhaustive pairwise concordance per Harrell's definition.
inline double cindex_oracle(std::span<const double> risks,
                            std::span<const SurvivalRecord> records, bool* defined = nullptr) {
    double pairs = 0.0, score = 0.0;
    const int n = static_cast<int>(records.size());
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            if (!records[a].event) continue;
            if (!(records[a].observed_time < records[b].observed_time)) continue;
            pairs += 1.0;
            if (risks[a] > risks[b]) {
                score += 1.0;
            } else if (risks[a] == risks[b]) {
                score += 0.5;
            }
        }
    }
    if (defined) *defined = pairs > 0.0;
    return pairs > 0.0 ? score / pairs : 0.0;
}

struct OracleMetrics {
    double accuracy, precision, recall, f1;
};

// Confusion-matrix route to the Table-style metrics.
inline OracleMetrics metrics_oracle(std::span<const int> preds, std::span<const int> labels,
                                    int k) {
    std::vector<std::vector<double>> confusion(k, std::vector<double>(k, 0.0));
    const int n = static_cast<int>(preds.size());
    for (int i = 0; i < n; ++i) confusion[labels[i]][preds[i]] += 1.0;
    double correct = 0.0;
    for (int c = 0; c < k; ++c) correct += confusion[c][c];
    double precision = 0.0, recall = 0.0;
    for (int c = 0; c < k; ++c) {
        double col = 0.0, row = 0.0;
        for (int o = 0; o < k; ++o) {
            col += confusion[o][c];
            row += confusion[c][o];
        }
        precision += col > 0.0 ? confusion[c][c] / col : 0.0;
        recall += row > 0.0 ? confusion[c][c] / row : 0.0;
    }
    precision /= k;
    recall /= k;
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return {correct / n, precision, recall, f1};
}

}  // namespace testsupport
