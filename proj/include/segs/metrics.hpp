// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/losses.hpp"
#include "segs/renderer.hpp"
#include "segs/scene.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace segs {

constexpr double kPsnrCap = 99.0;

inline double mse(const Image& a, const Image& b) {
    detail::require_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

/// 10 log10(1 / MSE) for images in [0,1], capped at 99 dB.
inline double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(m));
}

struct EvalReport {
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Renders `cams` and scores against `images`.
inline EvalReport eval_views(const GaussianCloud& model, const std::vector<CameraPose>& cams,
                             const std::vector<Image>& images, const RenderSettings& settings = {}) {
    if (cams.size() != images.size()) throw ContractViolation("eval_views: camera/image count mismatch");
    EvalReport r;
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const Image img = render(model, cams[v], settings).image;
        r.psnr.push_back(psnr(img, images[v]));
        r.ssim.push_back(ssim(img, images[v]));
    }
    r.mean_psnr = mean_of(r.psnr);
    r.mean_ssim = mean_of(r.ssim);
    return r;
}

inline EvalReport eval_heldout(const GaussianCloud& model, const SyntheticScene& scene,
                               const RenderSettings& settings = {}) {
    EvalReport r = eval_views(model, scene.heldout_cams, scene.heldout_images, settings);
    r.seed = scene.spec.seed;
    return r;
}

inline double mean_train_psnr(const GaussianCloud& model, const SyntheticScene& scene,
                              const RenderSettings& settings = {}) {
    std::vector<double> p;
    for (std::size_t v = 0; v < scene.train_cams.size(); ++v)
        p.push_back(psnr(render(model, scene.train_cams[v], settings).image, scene.train_images[v]));
    return mean_of(p);
}

}  // namespace segs
