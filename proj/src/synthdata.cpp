#include "pointcal/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "pointcal/errors.hpp"
#include "pointcal/rng.hpp"

namespace pointcal {

const char* to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Cube: return "cube";
        case ShapeKind::Torus: return "torus";
    }
    return "sphere";
}

ShapeKind shape_kind_from_string(const std::string& name) {
    if (name == "sphere") return ShapeKind::Sphere;
    if (name == "cube") return ShapeKind::Cube;
    if (name == "torus") return ShapeKind::Torus;
    throw ConfigError("unknown shape kind '" + name + "'");
}

const char* to_string(RiskLink link) {
    return link == RiskLink::Identity ? "identity" : "exp";
}

RiskLink risk_link_from_string(const std::string& name) {
    if (name == "identity") return RiskLink::Identity;
    if (name == "exp") return RiskLink::Exp;
    throw ConfigError("unknown risk link '" + name + "'");
}

namespace {

constexpr double kTorusMajor = 1.0;
constexpr double kTorusMinor = 0.4;

void validate(const ShapeSpec& spec) {
    if (spec.n_points < 4) throw ValidationError("shape: need at least 4 points");
    if (spec.jitter < 0.0 || spec.jitter >= 0.1) {
        throw ValidationError("shape: jitter must lie in [0, 0.1)");
    }
}

Vec3 sample_sphere_point(Xorshift64Star& rng) {
    while (true) {
        const double x = rng.normal();
        const double y = rng.normal();
        const double z = rng.normal();
        const double norm = std::sqrt(x * x + y * y + z * z);
        if (norm > 1e-9) return {x / norm, y / norm, z / norm};
    }
}

Vec3 sample_cube_point(Xorshift64Star& rng) {
    // Faces of the [-1,1]^3 cube all have equal area.
    const int face = static_cast<int>(rng.next_below(6));
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const double sign = (face % 2 == 0) ? 1.0 : -1.0;
    switch (face / 2) {
        case 0: return {sign, a, b};
        case 1: return {a, sign, b};
        default: return {a, b, sign};
    }
}

Vec3 sample_torus_point(Xorshift64Star& rng) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // The surface element grows with R + r*cos(phi); rejection keeps the
    // sample uniform over area rather than over angle.
    double phi;
    while (true) {
        phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double accept = (kTorusMajor + kTorusMinor * std::cos(phi)) /
                              (kTorusMajor + kTorusMinor);
        if (rng.next_double() <= accept) break;
    }
    const double ring = kTorusMajor + kTorusMinor * std::cos(phi);
    return {ring * std::cos(theta), ring * std::sin(theta), kTorusMinor * std::sin(phi)};
}

}  // namespace

PointCloud sample_shape_raw(const ShapeSpec& spec) {
    validate(spec);
    Xorshift64Star rng(spec.seed);
    PointCloud cloud;
    cloud.points.reserve(spec.n_points);
    Vec3 mirror{0, 0, 0};
    for (int i = 0; i < spec.n_points; ++i) {
        Vec3 p;
        switch (spec.kind) {
            case ShapeKind::Sphere:
                // Antithetic pairs: the empirical mean cancels exactly, so
                // normalization re-centers a noiseless sphere by zero and
                // every point keeps unit norm.
                if (i % 2 == 1) {
                    p = {-mirror[0], -mirror[1], -mirror[2]};
                } else {
                    p = sample_sphere_point(rng);
                    mirror = p;
                }
                break;
            case ShapeKind::Cube: p = sample_cube_point(rng); break;
            case ShapeKind::Torus: p = sample_torus_point(rng); break;
        }
        if (spec.jitter > 0.0) {
            p[0] += spec.jitter * rng.normal();
            p[1] += spec.jitter * rng.normal();
            p[2] += spec.jitter * rng.normal();
        }
        cloud.points.push_back(p);
    }
    return cloud;
}

PointCloud sample_shape(const ShapeSpec& spec) {
    return normalize_unit_sphere(sample_shape_raw(spec));
}

std::vector<LabeledCloud> make_classification_dataset(int n_per_class, int n_points,
                                                      double jitter, std::uint64_t seed) {
    if (n_per_class < 1) throw ValidationError("classification dataset: n_per_class must be positive");
    Xorshift64Star master(seed);
    std::vector<LabeledCloud> items;
    items.reserve(static_cast<size_t>(n_per_class) * 3);
    const ShapeKind kinds[3] = {ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Torus};
    for (int label = 0; label < 3; ++label) {
        for (int i = 0; i < n_per_class; ++i) {
            ShapeSpec spec;
            spec.kind = kinds[label];
            spec.n_points = n_points;
            spec.jitter = jitter;
            spec.seed = master.next_u64();
            items.push_back({sample_shape(spec), label});
        }
    }
    return items;
}

double SurvivalSpec::hazard(double stretch) const {
    switch (link) {
        case RiskLink::Identity: return stretch;
        case RiskLink::Exp: return std::exp(link_gain * (stretch - 1.0));
    }
    return stretch;
}

SurvivalDataset make_survival_dataset(const SurvivalSpec& spec) {
    if (spec.n_subjects < 1) throw ValidationError("survival dataset: need at least one subject");
    if (spec.censoring_fraction < 0.0 || spec.censoring_fraction >= 1.0) {
        throw ValidationError("survival dataset: censoring fraction must lie in [0, 1)");
    }
    if (!(spec.stretch_min > 0.0) || !(spec.stretch_max >= spec.stretch_min)) {
        throw ValidationError("survival dataset: invalid stretch range");
    }
    if (spec.n_points < 4) throw ValidationError("survival dataset: need at least 4 points");

    const int n = spec.n_subjects;
    Xorshift64Star master(spec.seed);
    std::vector<double> stretch(n), u_event(n), u_censor(n);
    std::vector<std::uint64_t> cloud_seed(n);
    for (int i = 0; i < n; ++i) {
        stretch[i] = master.uniform(spec.stretch_min, spec.stretch_max);
        cloud_seed[i] = master.next_u64();
        u_event[i] = master.next_double();
        u_censor[i] = master.next_double();
    }

    SurvivalDataset out;
    out.clouds.reserve(n);
    out.records.resize(n);
    out.latents.resize(n);
    std::vector<double> event_time(n);
    for (int i = 0; i < n; ++i) {
        const double lambda = spec.hazard(stretch[i]);
        double t = -std::log(1.0 - u_event[i]) / lambda;
        if (t <= 0.0) t = 1e-12;
        event_time[i] = t;
        out.latents[i].stretch = stretch[i];
        out.latents[i].hazard = lambda;
        out.latents[i].event_time = t;
    }

    // Censoring times are exponential; the rate is placed between the order
    // statistics of the per-subject thresholds so that exactly
    // round(fraction * n) subjects end up censored.
    double censor_rate = 0.0;
    if (spec.censoring_fraction > 0.0) {
        std::vector<double> threshold(n);
        for (int i = 0; i < n; ++i) {
            threshold[i] = -std::log(1.0 - u_censor[i]) / event_time[i];
        }
        std::vector<double> sorted = threshold;
        std::sort(sorted.begin(), sorted.end());
        int want = static_cast<int>(std::llround(spec.censoring_fraction * n));
        want = std::clamp(want, 0, n - 1);
        if (want == 0) {
            censor_rate = 0.0;
        } else {
            const double below = sorted[want - 1];
            const double above = sorted[want];
            censor_rate = 0.5 * (below + above);
        }
    }

    for (int i = 0; i < n; ++i) {
        double censor_time = std::numeric_limits<double>::infinity();
        if (censor_rate > 0.0) {
            censor_time = -std::log(1.0 - u_censor[i]) / censor_rate;
            if (censor_time <= 0.0) censor_time = 1e-12;
        }
        out.latents[i].censor_time = censor_time;
        out.records[i].observed_time = std::min(event_time[i], censor_time);
        out.records[i].event = event_time[i] <= censor_time;

        ShapeSpec shape;
        shape.kind = ShapeKind::Sphere;
        shape.n_points = spec.n_points;
        shape.jitter = 0.0;
        shape.seed = cloud_seed[i];
        PointCloud cloud = sample_shape_raw(shape);
        for (auto& p : cloud.points) p[2] *= stretch[i];
        out.clouds.push_back(normalize_unit_sphere(cloud));
    }
    verify_survival_bookkeeping(out);
    return out;
}

void verify_survival_bookkeeping(const SurvivalDataset& dataset) {
    const size_t n = dataset.records.size();
    if (dataset.latents.size() != n || dataset.clouds.size() != n) {
        throw NumericError("survival dataset: arrays out of step");
    }
    for (size_t i = 0; i < n; ++i) {
        const auto& r = dataset.records[i];
        const auto& l = dataset.latents[i];
        if (!(r.observed_time > 0.0)) {
            throw NumericError("survival dataset: non-positive observed time");
        }
        if (r.observed_time != std::min(l.event_time, l.censor_time)) {
            throw NumericError("survival dataset: observed time is not min(t, c)");
        }
        if (r.event != (l.event_time <= l.censor_time)) {
            throw NumericError("survival dataset: event flag contradicts latent times");
        }
    }
}

SplitResult split_dataset(std::span<const int> strata,
                          const std::array<double, 3>& fractions, std::uint64_t seed) {
    const int n = static_cast<int>(strata.size());
    if (n < 1) throw ValidationError("split: no items");
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw ValidationError("split: fractions must be non-negative");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw ValidationError("split: fractions must sum to 1");

    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[strata[i]].push_back(i);

    SplitResult result;
    bool too_small = false;
    for (const auto& [key, members] : groups) {
        if (static_cast<int>(members.size()) < 3) too_small = true;
    }
    if (too_small) {
        result.stratified = false;
        std::vector<int> everything(n);
        for (int i = 0; i < n; ++i) everything[i] = i;
        groups.clear();
        groups[0] = std::move(everything);
    }

    Xorshift64Star rng(seed);
    std::vector<int>* outputs[3] = {&result.train, &result.val, &result.test};
    for (auto& [key, members] : groups) {
        for (int i = static_cast<int>(members.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(members[i], members[j]);
        }
        const int s = static_cast<int>(members.size());
        int counts[3];
        double remainders[3];
        int assigned = 0;
        for (int k = 0; k < 3; ++k) {
            const double exact = s * fractions[k];
            counts[k] = static_cast<int>(std::floor(exact));
            remainders[k] = exact - counts[k];
            assigned += counts[k];
        }
        // Largest remainder gets the leftovers; ties favor earlier splits.
        int order[3] = {0, 1, 2};
        std::stable_sort(order, order + 3,
                         [&](int a, int b) { return remainders[a] > remainders[b]; });
        for (int leftover = s - assigned, k = 0; leftover > 0; --leftover, ++k) {
            ++counts[order[k % 3]];
        }
        int offset = 0;
        for (int k = 0; k < 3; ++k) {
            for (int i = 0; i < counts[k]; ++i) outputs[k]->push_back(members[offset + i]);
            offset += counts[k];
        }
    }
    for (auto* list : outputs) std::sort(list->begin(), list->end());
    return result;
}

}  // namespace pointcal
