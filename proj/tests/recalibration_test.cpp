#include "doctest.h"

#include <cmath>
#include <vector>

#include "pointcal/errors.hpp"
#include "pointcal/recalibration.hpp"
#include "support.hpp"

using namespace pointcal;
using namespace testsupport;

namespace {

// Dyadic values (multiples of 1/256) keep every sum exactly representable,
// so permutation checks can demand bitwise equality.
std::vector<double> dyadic_values(int count, Xorshift64Star& rng) {
    std::vector<double> v(count);
    for (double& x : v) {
        x = static_cast<double>(static_cast<int>(rng.next_below(513)) - 256) / 256.0;
    }
    return v;
}

Tensor permute_rows(const Tensor& f, std::span<const int> perm) {
    std::vector<double> data;
    data.reserve(f.size());
    for (int i : perm) {
        for (int j = 0; j < f.cols(); ++j) data.push_back(f.at(i, j));
    }
    return Tensor::constant(f.rows(), f.cols(), std::move(data));
}

}  // namespace

TEST_CASE("bottleneck width is the ceiling and never below one") {
    CHECK(bottleneck_width(4, 2) == 2);
    CHECK(bottleneck_width(5, 2) == 3);
    CHECK(bottleneck_width(1, 8) == 1);
    CHECK(bottleneck_width(3, 7) == 1);
}

TEST_CASE("zero-weight channel recalibration halves the features") {
    Xorshift64Star rng(7);
    auto p = ChannelRecalibParams::zeros(4, 2);
    Tensor f = random_param(5, 4, rng, "f");
    Tensor gates;
    auto out = channel_recalibrate(f, p, &gates);
    for (int j = 0; j < 4; ++j) CHECK(gates.at(0, j) == 0.5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(out.at(i, j) == 0.5 * f.at(i, j));
    }
}

TEST_CASE("channel recalibration hand-computed fixed-weight example") {
    ChannelRecalibParams p;
    p.reduction = 2;
    p.w2 = Tensor::parameter(2, 1, {1, 0}, "w2");  // picks channel 0
    p.w1 = Tensor::parameter(1, 2, {1, 1}, "w1");  // duplicates it
    Tensor f = Tensor::constant(2, 2, {2, 2, 2, 2});
    Tensor gates;
    auto out = channel_recalibrate(f, p, &gates);
    const double sigma2 = 1.0 / (1.0 + std::exp(-2.0));
    CHECK(gates.at(0, 0) == doctest::Approx(sigma2).epsilon(1e-12));
    CHECK(gates.at(0, 1) == doctest::Approx(sigma2).epsilon(1e-12));
    CHECK(sigma2 == doctest::Approx(0.8808).epsilon(1e-4));
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(out.at(i, j) == doctest::Approx(sigma2 * 2.0).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(channel_recalibrate(Tensor::zeros(2, 3), p), ShapeError);
}

TEST_CASE("channel recalibration is exactly row-permutation equivariant") {
    Xorshift64Star rng(17);
    const int n = 6, c = 4;
    ChannelRecalibParams p;
    p.reduction = 2;
    p.w2 = Tensor::parameter(c, 2, dyadic_values(c * 2, rng), "w2");
    p.w1 = Tensor::parameter(2, c, dyadic_values(2 * c, rng), "w1");
    Tensor f = Tensor::constant(n, c, dyadic_values(n * c, rng));
    std::vector<int> perm{3, 0, 5, 1, 4, 2};

    Tensor gates_a, gates_b;
    auto direct = channel_recalibrate(permute_rows(f, perm), p, &gates_a);
    auto swapped = permute_rows(channel_recalibrate(f, p, &gates_b), perm);
    for (int j = 0; j < c; ++j) CHECK(gates_a.at(0, j) == gates_b.at(0, j));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) CHECK(direct.at(i, j) == swapped.at(i, j));
    }
}

TEST_CASE("zero-weight spatial recalibration halves the features") {
    Xorshift64Star rng(27);
    auto p = SpatialRecalibParams::zeros(3, 5, 2);
    Tensor f = random_param(5, 3, rng, "f");
    Tensor gates;
    auto out = spatial_recalibrate(f, p, &gates);
    for (int i = 0; i < 5; ++i) CHECK(gates.at(i, 0) == 0.5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(out.at(i, j) == 0.5 * f.at(i, j));
    }
}

TEST_CASE("spatial recalibration hand-computed fixed-weight example") {
    SpatialRecalibParams p;
    p.reduction = 2;
    p.n_fixed = 2;
    p.w_conv = Tensor::parameter(2, 1, {1, 1}, "wconv");  // sums channels
    p.w2 = Tensor::parameter(2, 1, {1, 0}, "w2");
    p.w1 = Tensor::parameter(1, 2, {1, 0}, "w1");
    Tensor f = Tensor::constant(2, 2, {1, 0, 0, 0});
    Tensor gates;
    auto out = spatial_recalibrate(f, p, &gates);
    const double sigma1 = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(gates.at(0, 0) == doctest::Approx(sigma1).epsilon(1e-12));
    CHECK(gates.at(1, 0) == 0.5);
    CHECK(sigma1 == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(out.at(0, 0) == doctest::Approx(sigma1).epsilon(1e-12));
    CHECK(out.at(1, 0) == 0.0);
    CHECK(out.at(1, 1) == 0.0);
}

TEST_CASE("spatial recalibration rejects inputs of a different height") {
    auto p = SpatialRecalibParams::zeros(3, 5, 2);
    CHECK_THROWS_AS(spatial_recalibrate(Tensor::zeros(4, 3), p), ShapeError);
    CHECK_THROWS_AS(spatial_recalibrate(Tensor::zeros(5, 2), p), ShapeError);
}

TEST_CASE("spatial recalibration gates are invariant to channel relabeling") {
    Xorshift64Star rng(37);
    const int n = 4, c = 3;
    SpatialRecalibParams p;
    p.reduction = 2;
    p.n_fixed = n;
    p.w_conv = Tensor::parameter(c, 1, random_values(c, rng), "wconv");
    p.w2 = random_param(n, 2, rng, "w2");
    p.w1 = random_param(2, n, rng, "w1");
    Tensor f = Tensor::constant(n, c, random_values(n * c, rng));

    // Permute channels of F and of w_conv in lockstep.
    std::vector<int> cp{2, 0, 1};
    std::vector<double> f2(n * c), w2(c);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) f2[i * c + j] = f.at(i, cp[j]);
    }
    for (int j = 0; j < c; ++j) w2[j] = p.w_conv.at(cp[j], 0);
    SpatialRecalibParams q = p;
    q.w_conv = Tensor::parameter(c, 1, w2, "wconv");

    Tensor gates_a, gates_b;
    spatial_recalibrate(f, p, &gates_a);
    spatial_recalibrate(Tensor::constant(n, c, f2), q, &gates_b);
    for (int i = 0; i < n; ++i) {
        CHECK(gates_a.at(i, 0) == doctest::Approx(gates_b.at(i, 0)).epsilon(1e-12));
    }
}

TEST_CASE("spatial recalibration is not row-permutation equivariant") {
    Xorshift64Star rng(47);
    const int n = 5, c = 3;
    auto p = SpatialRecalibParams::init(c, n, 2, rng, "srb");
    Tensor f = Tensor::constant(n, c, random_values(n * c, rng));
    std::vector<int> perm{1, 0, 2, 3, 4};
    auto direct = spatial_recalibrate(permute_rows(f, perm), p);
    auto swapped = permute_rows(spatial_recalibrate(f, p), perm);
    double max_diff = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            max_diff = std::max(max_diff, std::fabs(direct.at(i, j) - swapped.at(i, j)));
        }
    }
    CHECK(max_diff > 1e-6);  // a counterexample exists
}

TEST_CASE("combined recalibration equals the elementwise max of its branches") {
    Xorshift64Star rng(57);
    const int n = 6, c = 4;
    auto pc = ChannelRecalibParams::init(c, 2, rng, "crb");
    auto ps = SpatialRecalibParams::init(c, n, 2, rng, "srb");
    Tensor f = Tensor::constant(n, c, random_values(n * c, rng));

    auto combined = spatial_channel_recalibrate(f, pc, ps);
    auto ch = channel_recalibrate(f, pc);
    auto sp = spatial_recalibrate(f, ps);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            CHECK(combined.at(i, j) == std::max(ch.at(i, j), sp.at(i, j)));
            const bool from_branch = combined.at(i, j) == ch.at(i, j) ||
                                     combined.at(i, j) == sp.at(i, j);
            CHECK(from_branch);
        }
    }
}

TEST_CASE("combined recalibration with zero weights halves the features") {
    Xorshift64Star rng(67);
    auto pc = ChannelRecalibParams::zeros(3, 2);
    auto ps = SpatialRecalibParams::zeros(3, 4, 2);
    Tensor f = random_param(4, 3, rng, "f");
    auto out = spatial_channel_recalibrate(f, pc, ps);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(out.at(i, j) == 0.5 * f.at(i, j));
    }
}

TEST_CASE("dominant spatial branch passes features through almost unchanged") {
    const int n = 3, c = 2;
    // Spatial gates driven to 1, channel gates driven to 0.
    SpatialRecalibParams ps;
    ps.reduction = 2;
    ps.n_fixed = n;
    ps.w_conv = Tensor::parameter(c, 1, {10, 10}, "wconv");
    ps.w2 = Tensor::parameter(n, 2, std::vector<double>(n * 2, 10.0), "w2");
    ps.w1 = Tensor::parameter(2, n, std::vector<double>(2 * n, 10.0), "w1");
    ChannelRecalibParams pc;
    pc.reduction = 2;
    pc.w2 = Tensor::parameter(c, 1, {1, 1}, "w2");
    pc.w1 = Tensor::parameter(1, c, {-100, -100}, "w1");

    Tensor f = Tensor::constant(n, c, {0.5, 1.0, 0.25, 0.75, 1.5, 0.125});
    auto out = spatial_channel_recalibrate(f, pc, ps);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            CHECK(out.at(i, j) == doctest::Approx(f.at(i, j)).epsilon(1e-8));
        }
    }
}

TEST_CASE("gates attenuate and never amplify") {
    Xorshift64Star rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + static_cast<int>(rng.next_below(6));
        const int c = 2 + static_cast<int>(rng.next_below(5));
        auto pc = ChannelRecalibParams::init(c, 2, rng, "crb");
        auto ps = SpatialRecalibParams::init(c, n, 2, rng, "srb");
        Tensor f = Tensor::constant(n, c, random_values(n * c, rng));
        Tensor cg, sg;
        auto ch = channel_recalibrate(f, pc, &cg);
        auto sp = spatial_recalibrate(f, ps, &sg);
        for (int j = 0; j < c; ++j) {
            CHECK(cg.at(0, j) > 0.0);
            CHECK(cg.at(0, j) < 1.0);
        }
        for (int i = 0; i < n; ++i) {
            CHECK(sg.at(i, 0) > 0.0);
            CHECK(sg.at(i, 0) < 1.0);
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < c; ++j) {
                if (f.at(i, j) != 0.0) {
                    CHECK(std::fabs(ch.at(i, j)) < std::fabs(f.at(i, j)));
                    CHECK(std::fabs(sp.at(i, j)) < std::fabs(f.at(i, j)));
                }
            }
        }
    }
}

TEST_CASE("for nonnegative features the combined gate dominates both branch gates") {
    Xorshift64Star rng(87);
    const int n = 5, c = 3;
    auto pc = ChannelRecalibParams::init(c, 2, rng, "crb");
    auto ps = SpatialRecalibParams::init(c, n, 2, rng, "srb");
    Tensor f = Tensor::constant(n, c, random_values(n * c, rng, 0.0, 1.0));
    auto combined = spatial_channel_recalibrate(f, pc, ps);
    auto ch = channel_recalibrate(f, pc);
    auto sp = spatial_recalibrate(f, ps);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            CHECK(combined.at(i, j) >= ch.at(i, j));
            CHECK(combined.at(i, j) >= sp.at(i, j));
        }
    }
}

TEST_CASE("gradient check of each block passes") {
    Xorshift64Star rng(97);

    SUBCASE("channel block on a random 8x4 input") {
        auto p = ChannelRecalibParams::init(4, 2, rng, "crb");
        Tensor f = random_param(8, 4, rng, "f");
        Tensor u = Tensor::constant(1, 8, random_values(8, rng));
        Tensor v = Tensor::constant(4, 1, random_values(4, rng));
        std::vector<Tensor> params{f, p.w2, p.w1};
        auto build = [&] { return matmul(matmul(u, channel_recalibrate(f, p)), v); };
        auto report = grad_check(params, build, 1e-5);
        CHECK(report.max_rel_error < 1e-4);
    }
    SUBCASE("spatial block") {
        auto p = SpatialRecalibParams::init(3, 6, 2, rng, "srb");
        Tensor f = random_param(6, 3, rng, "f");
        Tensor u = Tensor::constant(1, 6, random_values(6, rng));
        Tensor v = Tensor::constant(3, 1, random_values(3, rng));
        std::vector<Tensor> params{f, p.w_conv, p.w2, p.w1};
        auto build = [&] { return matmul(matmul(u, spatial_recalibrate(f, p)), v); };
        auto report = grad_check(params, build, 1e-5);
        CHECK(report.max_rel_error < 1e-4);
    }
    SUBCASE("combined block") {
        auto pc = ChannelRecalibParams::init(4, 2, rng, "crb");
        auto ps = SpatialRecalibParams::init(4, 5, 2, rng, "srb");
        Tensor f = random_param(5, 4, rng, "f");
        Tensor u = Tensor::constant(1, 5, random_values(5, rng));
        Tensor v = Tensor::constant(4, 1, random_values(4, rng));
        std::vector<Tensor> params{f, pc.w2, pc.w1, ps.w_conv, ps.w2, ps.w1};
        auto build = [&] {
            return matmul(matmul(u, spatial_channel_recalibrate(f, pc, ps)), v);
        };
        auto report = grad_check(params, build, 1e-5);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("parameter counts follow the closed forms") {
    CHECK(recalib_param_count(4, 1, 2, RecalibMode::Crb) == 16);
    CHECK(recalib_param_count(4, 4, 2, RecalibMode::Srb) == 20);
    CHECK(recalib_param_count(10, 10, 2, RecalibMode::None) == 0);

    Xorshift64Star rng(107);
    for (int trial = 0; trial < 30; ++trial) {
        const int c = 1 + static_cast<int>(rng.next_below(40));
        const int n = 1 + static_cast<int>(rng.next_below(40));
        const int r = 1 + static_cast<int>(rng.next_below(6));
        const auto crb = recalib_param_count(c, n, r, RecalibMode::Crb);
        const auto srb = recalib_param_count(c, n, r, RecalibMode::Srb);
        const auto scrb = recalib_param_count(c, n, r, RecalibMode::Scrb);
        CHECK(scrb == crb + srb);
        CHECK(crb == 2LL * c * bottleneck_width(c, r));
        CHECK(srb == c + 2LL * n * bottleneck_width(n, r));
    }
}

TEST_CASE("initialized blocks have the declared shapes") {
    Xorshift64Star rng(117);
    auto pc = ChannelRecalibParams::init(5, 2, rng, "crb");
    CHECK(pc.w2.rows() == 5);
    CHECK(pc.w2.cols() == 3);  // ceil(5/2)
    CHECK(pc.w1.rows() == 3);
    CHECK(pc.w1.cols() == 5);
    auto ps = SpatialRecalibParams::init(5, 7, 2, rng, "srb");
    CHECK(ps.w_conv.rows() == 5);
    CHECK(ps.w_conv.cols() == 1);
    CHECK(ps.w2.rows() == 7);
    CHECK(ps.w2.cols() == 4);
    CHECK(ps.w1.rows() == 4);
    CHECK(ps.w1.cols() == 7);
}
