// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"
#include "segs/renderer.hpp"
#include "segs/uncertainty.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace segs;

namespace {

RenderBuffer filled(const std::vector<Image>& frames) {
    RenderBuffer b(0, frames.size());
    std::int64_t it = 100;
    for (const Image& f : frames) push_frame(b, f, it += 100);
    return b;
}

ScalarMap as_map(const std::vector<double>& v, int w, int h) {
    ScalarMap m(w, h);
    m.data = v;
    return m;
}

/// Triple loop over (gaussian, view, pixel).
std::vector<bool> brute_flags(std::size_t n, const std::vector<UncertaintyMap>& maps,
                              const std::vector<std::vector<std::vector<std::int32_t>>>& cov,
                              bool all) {
    std::vector<bool> out(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        int seen = 0, hit = 0;
        for (std::size_t v = 0; v < maps.size(); ++v) {
            bool any = false;
            for (std::int32_t p : cov[v][i]) any = any || maps[v].smoothed.data[p] >= maps[v].tau;
            if (!cov[v][i].empty()) ++seen;
            if (any) ++hit;
        }
        out[i] = all ? (seen > 0 && hit == seen) : hit > 0;
    }
    return out;
}

Coverage to_csr(const std::vector<std::vector<std::int32_t>>& sets) {
    Coverage c;
    c.offsets.assign(1, 0);
    for (const auto& s : sets) {
        c.pixels.insert(c.pixels.end(), s.begin(), s.end());
        c.offsets.push_back(static_cast<std::uint32_t>(c.pixels.size()));
    }
    return c;
}

}  // namespace

TEST(RenderBuffer, FifoEviction) {
    RenderBuffer b(0, 3);
    for (int k = 1; k <= 4; ++k) push_frame(b, Image(8, 8, 0.1 * k), 100 * k);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_EQ(b.frames[0].iter, 200);
    EXPECT_EQ(b.frames[1].iter, 300);
    EXPECT_EQ(b.frames[2].iter, 400);
    EXPECT_DOUBLE_EQ(b.frames[0].image.data[0], 0.2);
}

TEST(RenderBuffer, SinglePushAndStampOrder) {
    RenderBuffer b(0, 3);
    push_frame(b, Image(8, 8), 100);
    EXPECT_EQ(b.size(), 1u);
    push_frame(b, Image(8, 8), 200);
    push_frame(b, Image(8, 8), 300);
    EXPECT_EQ(b.frames[0].iter, 100);
    EXPECT_EQ(b.frames[2].iter, 300);
    EXPECT_THROW(push_frame(b, Image(8, 8), 300), ContractViolation);
    EXPECT_THROW(push_frame(b, Image(8, 8), 250), ContractViolation);
}

TEST(UncertaintyMap, UnderfullIsNotReady) {
    RenderBuffer b(0, 3);
    push_frame(b, Image(8, 8), 100);
    EXPECT_FALSE(uncertainty_map(b).has_value());
}

TEST(UncertaintyMap, IdenticalFramesAreZero) {
    std::mt19937_64 rng(41);
    const Image f = oracle::random_image(rng, 8, 8);
    const auto m = uncertainty_map(filled({f, f, f}));
    ASSERT_TRUE(m);
    for (double v : m->data) EXPECT_EQ(v, 0.0);
}

TEST(UncertaintyMap, TwoPointAndThreePointStd) {
    const auto m2 = uncertainty_map(filled({Image(8, 8, 0.3), Image(8, 8, 0.3 + 0.2)}));
    EXPECT_NEAR(m2->data[5], 0.1, 1e-15);
    const auto m3 = uncertainty_map(filled({Image(8, 8, 0.2), Image(8, 8, 0.4), Image(8, 8, 0.6)}));
    EXPECT_NEAR(m3->data[7], std::sqrt(0.08 / 3.0), 1e-12);
    EXPECT_NEAR(m3->data[7], 0.1633, 1e-4);
}

TEST(UncertaintyMap, MatchesBruteForceStd) {
    std::mt19937_64 rng(42);
    std::vector<Image> frames;
    for (int k = 0; k < 3; ++k) frames.push_back(oracle::random_image(rng, 13, 9));
    const auto m = uncertainty_map(filled(frames));
    const auto ref = oracle::ref_std_map(frames);
    for (std::size_t p = 0; p < ref.size(); ++p) EXPECT_NEAR(m->data[p], ref[p], 1e-12);
}

TEST(UncertaintyMap, PermutationInvariantAndScaleHomogeneous) {
    std::mt19937_64 rng(43);
    std::vector<Image> f;
    for (int k = 0; k < 3; ++k) f.push_back(oracle::random_image(rng, 10, 10));
    const auto a = uncertainty_map(filled(f));
    std::vector<Image> g = {f[2], f[0], f[1]};
    EXPECT_TRUE(uncertainty_map(filled(g))->data == a->data);
    for (double s : {0.25, 0.5}) {  // powers of two scale exactly
        std::vector<Image> sc = f;
        for (Image& im : sc)
            for (double& v : im.data) v *= s;
        const auto b = uncertainty_map(filled(sc));
        for (std::size_t p = 0; p < a->data.size(); ++p) EXPECT_EQ(b->data[p], s * a->data[p]);
    }
    std::vector<Image> sc = f;
    for (Image& im : sc)
        for (double& v : im.data) v *= 0.37;
    const auto b = uncertainty_map(filled(sc));
    for (std::size_t p = 0; p < a->data.size(); ++p) EXPECT_NEAR(b->data[p], 0.37 * a->data[p], 1e-15);
}

TEST(SmoothMap, ConstantUnchanged) {
    const ScalarMap m = smooth_map(ScalarMap(9, 7, 0.3), 5);
    for (double v : m.data) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(SmoothMap, InteriorSpike) {
    ScalarMap raw(15, 15, 0.0);
    raw.at(7, 7) = 1.0;
    const ScalarMap m = smooth_map(raw, 5);
    int nonzero = 0;
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 15; ++x) {
            const bool inside = std::abs(x - 7) <= 2 && std::abs(y - 7) <= 2;
            if (inside) EXPECT_NEAR(m.at(x, y), 0.04, 1e-15);
            else EXPECT_EQ(m.at(x, y), 0.0);
            nonzero += m.at(x, y) != 0.0;
        }
    EXPECT_EQ(nonzero, 25);
}

TEST(SmoothMap, SmallMapUsesReplicatePadding) {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(16);
    for (double& x : v) x = u(rng);
    const ScalarMap m = smooth_map(as_map(v, 4, 4), 5);
    const auto ref = oracle::ref_box(v, 4, 4, 5);
    for (std::size_t p = 0; p < v.size(); ++p) EXPECT_NEAR(m.data[p], ref[p], 1e-15);
}

TEST(SmoothMap, MatchesDirectConvolutionAndIsNonNegative) {
    std::mt19937_64 rng(45);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(31 * 17);
    for (double& x : v) x = u(rng);
    for (int k : {1, 3, 5, 7}) {
        const ScalarMap m = smooth_map(as_map(v, 31, 17), k);
        const auto ref = oracle::ref_box(v, 31, 17, k);
        for (std::size_t p = 0; p < v.size(); ++p) {
            EXPECT_NEAR(m.data[p], ref[p], 1e-14);
            EXPECT_GE(m.data[p], 0.0);
        }
    }
}

TEST(SmoothMap, EvenKernelIsConfigError) { EXPECT_THROW(smooth_map(ScalarMap(8, 8), 4), ConfigError); }

TEST(ComputeTau, SortOracleExamples) {
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(i / 100.0);
    std::shuffle(v.begin(), v.end(), std::mt19937_64(46));
    EXPECT_DOUBLE_EQ(compute_tau(as_map(v, 10, 10), 0.05, 0.01), 0.96);
    EXPECT_DOUBLE_EQ(compute_tau(ScalarMap(10, 10, 0.001), 0.05, 0.01), 0.01);
    EXPECT_DOUBLE_EQ(compute_tau(as_map(v, 10, 10), 1.0, 0.0), 0.01);
    EXPECT_DOUBLE_EQ(compute_tau(as_map(v, 10, 10), 1.0, 0.5), 0.5);
}

TEST(ComputeTau, MatchesOracleOnRandomMaps) {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> u(0, 0.05);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> v(17 * 13);
        for (double& x : v) x = u(rng);
        for (double r : {0.01, 0.05, 0.3, 1.0})
            EXPECT_EQ(compute_tau(as_map(v, 17, 13), r, 0.01), oracle::ref_tau(v, r, 0.01));
    }
}

TEST(FlagGaussians, BelowThresholdFlagsNothing) {
    UncertaintyMap m;
    m.smoothed = ScalarMap(8, 8, 0.001);
    m.raw = m.smoothed;
    m.tau = compute_tau(m.smoothed, 0.05, 0.01);
    const Coverage c = to_csr({{0, 1, 2}, {10, 11}});
    const std::vector<UncertaintyMap> maps{m};
    const std::vector<const Coverage*> cov{&c};
    const auto f = flag_gaussians(2, maps, cov);
    EXPECT_FALSE(f[0]);
    EXPECT_FALSE(f[1]);
}

TEST(FlagGaussians, SpikeFlagsOnlyTheCoveringGaussian) {
    // Two splats with disjoint footprints; the buffer varies at one pixel under the first.
    GaussianCloud c;
    for (double x : {-0.5, 0.5}) {
        Gaussian g;
        g.mu = Vec3(x, 0, 0);
        g.log_scale = Vec3::Constant(std::log(0.08));
        g.opacity_logit = 1.0;
        c.gaussians.push_back(g);
    }
    const CameraPose cam = oracle::look_from(Vec3(0, 0, -3), 32, 32);
    const RenderOutput out = render(c, cam);
    ASSERT_FALSE(out.coverage.of(0).empty());
    const Vec2 m0 = out.projected[0].splat.mean2d;
    const int px = static_cast<int>(std::lround(m0.x())), py = static_cast<int>(std::lround(m0.y()));
    for (std::int32_t p : out.coverage.of(1)) {
        EXPECT_GT(std::abs(p % 32 - px), 2);
    }
    Image a(32, 32, 0.0), b(32, 32, 0.0);
    for (int ch = 0; ch < 3; ++ch) b.at(px, py, ch) = 1.0;
    const auto m = build_uncertainty_map(filled({a, b}), 5, 0.05, 0.01);
    ASSERT_TRUE(m);
    EXPECT_DOUBLE_EQ(m->tau, 0.01);
    const std::vector<UncertaintyMap> maps{*m};
    const std::vector<const Coverage*> cov{&out.coverage};
    const auto f = flag_gaussians(2, maps, cov);
    EXPECT_TRUE(f[0]);
    EXPECT_FALSE(f[1]);
}

TEST(FlagGaussians, MatchesTripleLoopOracleAndIsMonotoneInTheta) {
    std::mt19937_64 rng(48);
    std::uniform_real_distribution<double> u(0, 0.04);
    std::uniform_int_distribution<int> pix(0, 16 * 12 - 1), len(0, 12);
    for (int t = 0; t < 20; ++t) {
        const std::size_t n = 15, views = 4;
        std::vector<std::vector<std::vector<std::int32_t>>> sets(views);
        std::vector<Coverage> covs;
        std::vector<std::vector<double>> raws;
        for (std::size_t v = 0; v < views; ++v) {
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<std::int32_t> s;
                const int l = len(rng);
                for (int k = 0; k < l; ++k) s.push_back(pix(rng));
                std::sort(s.begin(), s.end());
                s.erase(std::unique(s.begin(), s.end()), s.end());
                sets[v].push_back(s);
            }
            covs.push_back(to_csr(sets[v]));
            std::vector<double> raw(16 * 12);
            for (double& x : raw) x = u(rng);
            raws.push_back(raw);
        }
        std::size_t prev = n + 1;
        for (double theta : {0.0, 0.005, 0.01, 0.02, 0.03, 0.05}) {
            std::vector<UncertaintyMap> maps;
            for (const auto& raw : raws) {
                UncertaintyMap m;
                m.raw = as_map(raw, 16, 12);
                m.smoothed = smooth_map(m.raw, 3);
                m.tau = compute_tau(m.smoothed, 0.05, theta);
                maps.push_back(m);
            }
            std::vector<const Coverage*> cp;
            for (const auto& c : covs) cp.push_back(&c);
            const auto any = flag_gaussians(n, maps, cp, FlagAggregation::Any);
            const auto all = flag_gaussians(n, maps, cp, FlagAggregation::All);
            EXPECT_EQ(any, brute_flags(n, maps, sets, false));
            EXPECT_EQ(all, brute_flags(n, maps, sets, true));
            const auto count = static_cast<std::size_t>(std::count(any.begin(), any.end(), true));
            EXPECT_LE(count, prev);
            prev = count;
        }
    }
}

TEST(FlagGaussians, ViewCountMismatchIsContractViolation) {
    const std::vector<UncertaintyMap> maps(2);
    const Coverage c = to_csr({{0}});
    const std::vector<const Coverage*> cov{&c};
    EXPECT_THROW(flag_gaussians(1, maps, cov), ContractViolation);
}
