// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/optimizer.hpp"
#include "segs/random.hpp"
#include "segs/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace segs {

/// View-space positional gradient statistics accumulated between density-control events.
struct DensityStats {
    std::vector<double> grad_accum;  // sum of |d loss / d mean2d| in NDC units
    std::vector<int> denom;          // number of renders the Gaussian was visible in
    std::vector<Vec3> pos_grad;      // sum of world-space position gradients

    explicit DensityStats(std::size_t n = 0) { reset(n); }

    void reset(std::size_t n) {
        grad_accum.assign(n, 0.0);
        denom.assign(n, 0);
        pos_grad.assign(n, Vec3::Zero());
    }
    std::size_t size() const { return grad_accum.size(); }

    void accumulate(const CloudGradients& g, int width, int height) {
        if (g.grads.size() != size()) throw ContractViolation("DensityStats: size mismatch");
        for (std::size_t i = 0; i < size(); ++i) {
            if (!g.visible[i]) continue;
            const Vec2 ndc(g.mean2d[i].x() * 0.5 * width, g.mean2d[i].y() * 0.5 * height);
            grad_accum[i] += ndc.norm();
            denom[i] += 1;
            pos_grad[i] += g.grads[i].mu;
        }
    }

    double average(std::size_t i) const { return denom[i] > 0 ? grad_accum[i] / denom[i] : 0.0; }
};

struct DensityParams {
    double grad_threshold = 2e-4;
    double dense_scale = 0.01;  // world-space split/clone boundary (percent_dense * extent)
    double split_factor = 1.6;
    double prune_opacity = 0.005;
};

struct DensityResult {
    std::size_t clones = 0;
    std::size_t splits = 0;
    std::size_t pruned = 0;
};

namespace detail {

/// Keeps rows where keep[i]; cloud and optimizer rows move together.
inline void compact(GaussianCloud& cloud, AdamState& state, const std::vector<bool>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!keep[i]) continue;
        cloud.gaussians[out] = cloud.gaussians[i];
        state.m[out] = state.m[i];
        state.v[out] = state.v[i];
        ++out;
    }
    cloud.gaussians.resize(out);
    state.m.resize(out);
    state.v.resize(out);
}

/// Index of the most opaque Gaussian, used to keep a cloud non-empty.
inline std::size_t most_opaque(const GaussianCloud& cloud) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cloud.size(); ++i)
        if (cloud[i].opacity_logit > cloud[best].opacity_logit) best = i;
    return best;
}

inline std::size_t prune_with_guard(GaussianCloud& cloud, AdamState& state,
                                    std::vector<bool> keep) {
    if (cloud.empty()) return 0;
    if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; }))
        keep[most_opaque(cloud)] = true;
    const std::size_t before = cloud.size();
    compact(cloud, state, keep);
    return before - cloud.size();
}

}  // namespace detail

/// Clone small high-gradient Gaussians, split large ones into two children
/// with scale / split_factor, then prune near-transparent Gaussians.
inline DensityResult density_control(GaussianCloud& cloud, const DensityStats& stats,
                                     AdamState& state, const DensityParams& p,
                                     std::uint64_t stream) {
    if (stats.size() != cloud.size() || state.rows() != cloud.size())
        throw ContractViolation("density_control: stats/state rows do not match the cloud");
    DensityResult res;
    const std::size_t n = cloud.size();
    std::vector<bool> split(n, false);

    for (std::size_t i = 0; i < n; ++i) {
        if (stats.average(i) < p.grad_threshold || stats.denom[i] == 0) continue;
        const Gaussian& g = cloud[i];
        const double max_scale = g.log_scale.array().exp().maxCoeff();
        if (max_scale <= p.dense_scale) {
            Gaussian c = g;
            const double gn = stats.pos_grad[i].norm();
            if (gn > 0.0)
                c.mu -= stats.pos_grad[i] / gn * g.log_scale.array().exp().mean();
            cloud.gaussians.push_back(c);
            state.m.push_back(state.m[i]);
            state.v.push_back(state.v[i]);
            ++res.clones;
        } else {
            split[i] = true;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (!split[i]) continue;
        const Gaussian parent = cloud[i];
        const Vec3 s = parent.log_scale.array().exp().matrix();
        const Mat3 r = quat_to_rotation(parent.rot);
        std::mt19937_64 eng(derive_seed(stream, {i}));
        std::normal_distribution<double> nd(0.0, 1.0);
        for (int child = 0; child < 2; ++child) {
            Gaussian c = parent;
            Vec3 sample;
            for (int k = 0; k < 3; ++k) sample[k] = nd(eng) * s[k];
            c.mu = parent.mu + r * sample;
            c.log_scale = (s / p.split_factor).array().log().matrix();
            cloud.gaussians.push_back(c);
            state.m.push_back(state.m[i]);
            state.v.push_back(state.v[i]);
        }
        ++res.splits;
    }

    std::vector<bool> keep(cloud.size(), true);
    for (std::size_t i = 0; i < n; ++i)
        if (split[i]) keep[i] = false;
    detail::compact(cloud, state, keep);

    keep.assign(cloud.size(), true);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (sigmoid(cloud[i].opacity_logit) < p.prune_opacity) keep[i] = false;
    res.pruned = detail::prune_with_guard(cloud, state, std::move(keep));
    return res;
}

/// Distance from each center in `a` to its nearest center in `b`.
inline std::vector<double> nearest_distances(const GaussianCloud& a, const GaussianCloud& b) {
    std::vector<double> d(a.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (const Gaussian& g : b.gaussians) d[i] = std::min(d[i], (a[i].mu - g.mu).squaredNorm());
    for (double& v : d) v = std::sqrt(v);
    return d;
}

/// Median distance from each center to its nearest other center.
inline double median_nn_spacing(const GaussianCloud& c) {
    if (c.size() < 2) return 0.0;
    std::vector<double> d(c.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j)
            if (i != j) d[i] = std::min(d[i], (c[i].mu - c[j].mu).squaredNorm());
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    return std::sqrt(d[d.size() / 2]);
}

struct CoPruneResult {
    std::size_t pruned_a = 0;
    std::size_t pruned_b = 0;
};

/// Removes Gaussians of either model with no counterpart center in the other
/// model within `threshold`. Both tests use the pre-prune clouds.
inline CoPruneResult co_prune(GaussianCloud& a, AdamState& state_a, GaussianCloud& b,
                              AdamState& state_b, double threshold) {
    CoPruneResult res;
    if (a.empty() || b.empty() || !(threshold < std::numeric_limits<double>::infinity()))
        return res;
    const std::vector<double> da = nearest_distances(a, b);
    const std::vector<double> db = nearest_distances(b, a);
    std::vector<bool> keep_a(a.size()), keep_b(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) keep_a[i] = da[i] <= threshold;
    for (std::size_t i = 0; i < b.size(); ++i) keep_b[i] = db[i] <= threshold;
    res.pruned_a = detail::prune_with_guard(a, state_a, std::move(keep_a));
    res.pruned_b = detail::prune_with_guard(b, state_b, std::move(keep_b));
    return res;
}

}  // namespace segs
