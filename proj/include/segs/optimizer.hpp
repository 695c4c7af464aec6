// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/renderer.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace segs {

using ParamRow = std::array<double, kParamsPerGaussian>;

/// Adam moments, one row per Gaussian, index-aligned with the cloud.
struct AdamState {
    std::vector<ParamRow> m;
    std::vector<ParamRow> v;
    std::int64_t step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, ParamRow{}), v(n, ParamRow{}) {}
    std::size_t rows() const { return m.size(); }
};

struct AdamHyper {
    std::array<double, kNumParamGroups> lr{};
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// Exponential interpolation between two learning rates over [0, total].
inline double exp_decay_lr(double lr_init, double lr_final, std::int64_t step, std::int64_t total) {
    if (total <= 0 || lr_init <= 0.0 || lr_final <= 0.0) return lr_init;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
    return std::exp(std::log(lr_init) * (1.0 - t) + std::log(lr_final) * t);
}

/// One Adam step on every Gaussian. Non-finite gradient entries are skipped
/// (their moments and parameters stay put); returns how many were skipped.
inline std::size_t optimizer_step(GaussianCloud& cloud, const std::vector<GaussianGrad>& grads,
                                  AdamState& state, const AdamHyper& hp) {
    if (grads.size() != cloud.size() || state.rows() != cloud.size())
        throw ContractViolation("optimizer_step: gradient/state rows do not match the cloud");
    ++state.step;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        ParamRow p = flatten_params(cloud[i]);
        const ParamRow g = flatten_params(grads[i]);
        ParamRow& m = state.m[i];
        ParamRow& v = state.v[i];
        bool rot_moved = false;
        bool moved = false;
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            if (!std::isfinite(g[k])) {
                ++skipped;
                continue;
            }
            m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
            v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
            const double upd = hp.lr[static_cast<int>(kParamGroupOf[k])] * (m[k] / bc1) /
                               (std::sqrt(v[k] / bc2) + hp.eps);
            if (upd != 0.0) {
                p[k] -= upd;
                moved = true;
                if (kParamGroupOf[k] == ParamGroup::Rotation) rot_moved = true;
            }
        }
        if (!moved) continue;
        unflatten_params(p, cloud[i]);
        if (rot_moved) {
            const double n = cloud[i].rot.norm();
            if (n > 0.0 && std::isfinite(n)) cloud[i].rot /= n;
        }
    }
    return skipped;
}

}  // namespace segs
