#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pointcal/geometry.hpp"
#include "pointcal/objectives.hpp"

namespace pointcal {

enum class ShapeKind { Sphere, Cube, Torus };

const char* to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

struct ShapeSpec {
    ShapeKind kind = ShapeKind::Sphere;
    int n_points = 0;
    double jitter = 0.0;  // Gaussian noise scale, must stay below 0.1
    std::uint64_t seed = 0;
};

// Uniform surface sample before jitter and normalization; exposed so tests
// can probe the analytic surface invariants directly.
PointCloud sample_shape_raw(const ShapeSpec& spec);
// sample_shape_raw + jitter + normalize_unit_sphere.
PointCloud sample_shape(const ShapeSpec& spec);

struct LabeledCloud {
    PointCloud cloud;
    int label = 0;
};

// Balanced 3-class set: label 0 sphere, 1 cube, 2 torus; class-major order.
std::vector<LabeledCloud> make_classification_dataset(int n_per_class, int n_points,
                                                      double jitter, std::uint64_t seed);

enum class RiskLink { Identity, Exp };

const char* to_string(RiskLink link);
RiskLink risk_link_from_string(const std::string& name);

struct SurvivalSpec {
    int n_subjects = 0;
    double censoring_fraction = 0.0;  // [0, 1)
    RiskLink link = RiskLink::Exp;
    double link_gain = 8.0;           // hazard = exp(gain * (stretch - 1)) for Exp
    double stretch_min = 0.7;
    double stretch_max = 1.5;
    int n_points = 256;
    std::uint64_t seed = 0;

    double hazard(double stretch) const;
};

// Ground truth kept alongside each subject so tests can compare against the
// ranking an ideal model would produce.
struct SurvivalLatent {
    double stretch = 0.0;
    double hazard = 0.0;
    double event_time = 0.0;
    double censor_time = 0.0;  // +inf when censoring is disabled
};

struct SurvivalDataset {
    std::vector<PointCloud> clouds;
    std::vector<SurvivalRecord> records;
    std::vector<SurvivalLatent> latents;
};

// Each subject is a unit sphere stretched along z by a uniform factor; event
// times are exponential in the hazard of that factor, censoring times are
// exponential with the rate calibrated so the realized censored count equals
// round(censoring_fraction * n).
SurvivalDataset make_survival_dataset(const SurvivalSpec& spec);

// Consistency check of records against latents (y = min(t, c), event iff
// t <= c, positive times). Throws NumericError on any violation.
void verify_survival_bookkeeping(const SurvivalDataset& dataset);

struct SplitResult {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
    bool stratified = true;  // false when some stratum was too small
};

// Seeded disjoint exhaustive split, stratified per distinct value in strata
// (within one item of the exact per-stratum fractions). Any stratum smaller
// than 3 items drops stratification for the whole split.
SplitResult split_dataset(std::span<const int> strata,
                          const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace pointcal
