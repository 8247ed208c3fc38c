#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "pointcal/errors.hpp"
#include "pointcal/synthdata.hpp"
#include "support.hpp"

using namespace pointcal;
using namespace testsupport;

namespace {

double norm(const Vec3& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

bool clouds_identical(const PointCloud& a, const PointCloud& b) {
    if (a.size() != b.size()) return false;
    for (int i = 0; i < a.size(); ++i) {
        for (int d = 0; d < 3; ++d) {
            if (a.points[i][d] != b.points[i][d]) return false;
        }
    }
    return true;
}

// Kendall rank correlation over all pairs.
double kendall_tau(std::span<const double> x, std::span<const double> y) {
    double concordant = 0.0, discordant = 0.0;
    const int n = static_cast<int>(x.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double s = (x[i] - x[j]) * (y[i] - y[j]);
            if (s > 0) concordant += 1.0;
            if (s < 0) discordant += 1.0;
        }
    }
    return (concordant - discordant) / (0.5 * n * (n - 1));
}

}  // namespace

TEST_CASE("noiseless sphere samples sit on the unit sphere after normalization") {
    PointCloud cloud = sample_shape({ShapeKind::Sphere, 256, 0.0, 3});
    for (const auto& p : cloud.points) {
        CHECK(std::fabs(norm(p) - 1.0) < 1e-9);
    }
}

TEST_CASE("noiseless cube samples touch a face before normalization") {
    PointCloud cloud = sample_shape_raw({ShapeKind::Cube, 200, 0.0, 5});
    for (const auto& p : cloud.points) {
        const bool on_face = std::fabs(std::fabs(p[0]) - 1.0) < 1e-12 ||
                             std::fabs(std::fabs(p[1]) - 1.0) < 1e-12 ||
                             std::fabs(std::fabs(p[2]) - 1.0) < 1e-12;
        CHECK(on_face);
        CHECK(std::fabs(p[0]) <= 1.0 + 1e-12);
        CHECK(std::fabs(p[1]) <= 1.0 + 1e-12);
        CHECK(std::fabs(p[2]) <= 1.0 + 1e-12);
    }
}

TEST_CASE("noiseless torus samples satisfy the ring-distance invariant") {
    PointCloud cloud = sample_shape_raw({ShapeKind::Torus, 300, 0.0, 7});
    for (const auto& p : cloud.points) {
        const double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]) - 1.0;
        const double d = std::sqrt(ring * ring + p[2] * p[2]);
        CHECK(std::fabs(d - 0.4) < 1e-9);
    }
}

TEST_CASE("shape sampling is pure in its seed") {
    ShapeSpec spec{ShapeKind::Torus, 64, 0.03, 11};
    CHECK(clouds_identical(sample_shape(spec), sample_shape(spec)));
    ShapeSpec other = spec;
    other.seed = 12;
    CHECK_FALSE(clouds_identical(sample_shape(spec), sample_shape(other)));
}

TEST_CASE("shape spec validation") {
    CHECK_THROWS_AS(sample_shape({ShapeKind::Sphere, 3, 0.0, 1}), ValidationError);
    CHECK_THROWS_AS(sample_shape({ShapeKind::Sphere, 16, 0.2, 1}), ValidationError);
    CHECK_THROWS_AS(sample_shape({ShapeKind::Sphere, 16, -0.01, 1}), ValidationError);
}

TEST_CASE("classification dataset is balanced and seed-pure") {
    auto items = make_classification_dataset(5, 32, 0.02, 9);
    REQUIRE(items.size() == 15);
    int counts[3] = {0, 0, 0};
    for (const auto& item : items) {
        REQUIRE(item.label >= 0);
        REQUIRE(item.label < 3);
        ++counts[item.label];
        CHECK(item.cloud.size() == 32);
    }
    CHECK(counts[0] == 5);
    CHECK(counts[1] == 5);
    CHECK(counts[2] == 5);

    auto again = make_classification_dataset(5, 32, 0.02, 9);
    for (size_t i = 0; i < items.size(); ++i) {
        CHECK(clouds_identical(items[i].cloud, again[i].cloud));
    }
    auto different = make_classification_dataset(5, 32, 0.02, 10);
    bool all_same = true;
    for (size_t i = 0; i < items.size(); ++i) {
        all_same = all_same && clouds_identical(items[i].cloud, different[i].cloud);
    }
    CHECK_FALSE(all_same);
}

TEST_CASE("survival dataset honors its bookkeeping by construction") {
    SurvivalSpec spec;
    spec.n_subjects = 100;
    spec.censoring_fraction = 0.5;
    spec.n_points = 32;
    spec.seed = 21;
    auto ds = make_survival_dataset(spec);
    REQUIRE(ds.records.size() == 100);
    verify_survival_bookkeeping(ds);
    for (const auto& r : ds.records) CHECK(r.observed_time > 0.0);
    for (const auto& l : ds.latents) {
        CHECK(l.stretch >= spec.stretch_min);
        CHECK(l.stretch <= spec.stretch_max);
        CHECK(l.hazard > 0.0);
    }
}

TEST_CASE("zero censoring fraction leaves every subject observed") {
    SurvivalSpec spec;
    spec.n_subjects = 50;
    spec.censoring_fraction = 0.0;
    spec.n_points = 16;
    spec.seed = 31;
    auto ds = make_survival_dataset(spec);
    for (const auto& r : ds.records) CHECK(r.event);
}

TEST_CASE("realized censoring lands on the target fraction") {
    SurvivalSpec spec;
    spec.n_subjects = 440;
    spec.censoring_fraction = 0.76;
    spec.n_points = 16;
    spec.seed = 11;
    auto ds = make_survival_dataset(spec);
    int censored = 0;
    for (const auto& r : ds.records) censored += r.event ? 0 : 1;
    const double realized = static_cast<double>(censored) / spec.n_subjects;
    CHECK(std::fabs(realized - 0.76) < 0.05);
    // The calibration is exact-count, so the bound is actually much tighter.
    CHECK(censored == 334);
}

TEST_CASE("identity link makes higher stretch mean earlier events") {
    SurvivalSpec spec;
    spec.n_subjects = 400;
    spec.censoring_fraction = 0.0;  // keep the full event-time range visible
    spec.link = RiskLink::Identity;
    spec.stretch_min = 0.3;
    spec.stretch_max = 3.0;
    spec.n_points = 16;
    spec.seed = 41;
    auto ds = make_survival_dataset(spec);
    std::vector<double> stretch, times;
    for (size_t i = 0; i < ds.records.size(); ++i) {
        if (!ds.records[i].event) continue;
        stretch.push_back(ds.latents[i].stretch);
        times.push_back(ds.records[i].observed_time);
    }
    REQUIRE(stretch.size() > 100);
    CHECK(kendall_tau(stretch, times) < -0.2);
}

TEST_CASE("survival clouds are stretched spheres") {
    SurvivalSpec spec;
    spec.n_subjects = 3;
    spec.censoring_fraction = 0.0;
    spec.n_points = 64;
    spec.seed = 51;
    auto ds = make_survival_dataset(spec);
    for (size_t s = 0; s < ds.clouds.size(); ++s) {
        // Undo the normalization scale: the implied ellipsoid must satisfy
        // x^2 + y^2 + (z/a)^2 = r^2 for the latent aspect ratio a.
        const auto& cloud = ds.clouds[s];
        const double a = ds.latents[s].stretch;
        double r_min = 1e300, r_max = 0.0;
        for (const auto& p : cloud.points) {
            const double r =
                std::sqrt(p[0] * p[0] + p[1] * p[1] + (p[2] / a) * (p[2] / a));
            r_min = std::min(r_min, r);
            r_max = std::max(r_max, r);
        }
        CHECK(r_max - r_min < 1e-9);
    }
}

TEST_CASE("split is disjoint, exhaustive and stratified within one item") {
    Xorshift64Star rng(61);
    std::vector<int> strata;
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 50; ++i) strata.push_back(c);
    }
    auto split = split_dataset(strata, {0.6, 0.2, 0.2}, 7);
    CHECK(split.stratified);
    std::set<int> seen;
    for (const auto* list : {&split.train, &split.val, &split.test}) {
        for (int id : *list) {
            CHECK(seen.insert(id).second);  // disjoint
        }
    }
    CHECK(seen.size() == strata.size());  // exhaustive
    CHECK(split.train.size() == 90);
    CHECK(split.val.size() == 30);
    CHECK(split.test.size() == 30);

    // Per-class counts within +-1 of the exact share.
    for (int c = 0; c < 3; ++c) {
        int in_train = 0;
        for (int id : split.train) in_train += strata[id] == c ? 1 : 0;
        CHECK(std::abs(in_train - 30) <= 1);
    }
}

TEST_CASE("ten seeds give ten distinct splits") {
    std::vector<int> strata(60, 0);
    for (int i = 0; i < 60; ++i) strata[i] = i % 2;
    std::set<std::vector<int>> trains;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        trains.insert(split_dataset(strata, {0.7, 0.15, 0.15}, seed).train);
    }
    CHECK(trains.size() == 10);
}

TEST_CASE("undersized strata fall back to a global split") {
    std::vector<int> strata{0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
    auto split = split_dataset(strata, {0.6, 0.2, 0.2}, 3);
    CHECK_FALSE(split.stratified);
    CHECK(split.train.size() + split.val.size() + split.test.size() == strata.size());
}

TEST_CASE("split validates its fractions") {
    std::vector<int> strata(10, 0);
    CHECK_THROWS_AS(split_dataset(strata, {0.5, 0.2, 0.2}, 1), ValidationError);
    CHECK_THROWS_AS(split_dataset(strata, {1.2, -0.1, -0.1}, 1), ValidationError);
}
