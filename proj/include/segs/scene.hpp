// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/random.hpp"
#include "segs/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace segs {

struct SceneSpec {
    int num_gaussians = 200;
    int num_cams = 12;
    int num_train = 3;
    int width = 64;
    int height = 64;
    double orbit_radius = 3.5;
    double arc_degrees = 120.0;    // azimuth span of the camera arc
    double fov_degrees = 60.0;
    double jitter_degrees = 4.0;   // per-camera azimuth/elevation jitter
    double elevation_degrees = 15.0;
    double init_noise = 0.05;      // std of the SfM stand-in point noise
    bool random_init = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_cams < 1) throw ConfigError("scene: need at least one camera");
        if (num_train < 1 || num_train > num_cams)
            throw ConfigError("scene: num_train must lie in [1, num_cams]");
        if (num_gaussians < 1) throw ConfigError("scene: need at least one Gaussian");
        if (width < 8 || height < 8) throw ConfigError("scene: images must be at least 8x8");
        if (!(orbit_radius > 0.0)) throw ConfigError("scene: orbit radius must be positive");
    }
};

/// Closed-loop synthetic capture: ground-truth Gaussians, posed cameras, and
/// images rendered from the ground truth with this library's renderer.
struct SyntheticScene {
    SceneSpec spec;
    GaussianCloud gt_cloud;
    std::vector<CameraPose> cameras;  // all cameras in orbit order
    std::vector<int> train_indices;
    std::vector<int> heldout_indices;
    std::vector<CameraPose> train_cams, heldout_cams;
    std::vector<Image> train_images, heldout_images;
    std::vector<Vec3> init_points;
    std::vector<Vec3> init_colors;

    /// Fills camera splits and renders images from the ground-truth cloud.
    void finalize() {
        train_cams.clear();
        heldout_cams.clear();
        train_images.clear();
        heldout_images.clear();
        for (int i : train_indices) {
            train_cams.push_back(cameras.at(i));
            train_images.push_back(render(gt_cloud, cameras[i]).image);
        }
        for (int i : heldout_indices) {
            heldout_cams.push_back(cameras.at(i));
            heldout_images.push_back(render(gt_cloud, cameras[i]).image);
        }
    }
};

/// Training views evenly spread over the arc (both ends included), the rest held out.
inline void split_views(int num_cams, int num_train, std::vector<int>& train, std::vector<int>& held) {
    train.clear();
    held.clear();
    std::vector<bool> is_train(num_cams, false);
    for (int k = 0; k < num_train; ++k) {
        const int idx = num_train == 1
                            ? num_cams / 2
                            : static_cast<int>(std::lround(double(k) * (num_cams - 1) / (num_train - 1)));
        is_train[idx] = true;
    }
    for (int i = 0; i < num_cams; ++i) (is_train[i] ? train : held).push_back(i);
}

inline SyntheticScene gen_scene(const SceneSpec& spec) {
    spec.validate();
    SyntheticScene scene;
    scene.spec = spec;
    std::mt19937_64 rng(derive_seed(spec.seed, StreamTag::Scene));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);

    for (int i = 0; i < spec.num_gaussians; ++i) {
        Gaussian g;
        // Uniform in the unit ball, slightly flattened vertically.
        Vec3 p;
        do {
            p = Vec3(2.0 * u01(rng) - 1.0, 2.0 * u01(rng) - 1.0, 2.0 * u01(rng) - 1.0);
        } while (p.squaredNorm() > 1.0);
        p.y() *= 0.7;
        g.mu = p;
        g.rot = Vec4(n01(rng), n01(rng), n01(rng), n01(rng)).normalized();
        for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(0.05 + 0.12 * u01(rng));
        g.opacity_logit = logit(0.55 + 0.4 * u01(rng));
        for (int ch = 0; ch < 3; ++ch) {
            const double c = 0.1 + 0.8 * u01(rng);
            g.sh[0][ch] = (c - 0.5) / kShC0;
            for (int k = 1; k < kShCoeffs; ++k) g.sh[k][ch] = 0.2 * (2.0 * u01(rng) - 1.0);
        }
        scene.gt_cloud.gaussians.push_back(g);
    }

    const double deg = std::numbers::pi / 180.0;
    const double fx = 0.5 * spec.width / std::tan(0.5 * spec.fov_degrees * deg);
    const double fy = fx;
    for (int i = 0; i < spec.num_cams; ++i) {
        const double t = spec.num_cams == 1 ? 0.5 : double(i) / (spec.num_cams - 1);
        const double az = (-0.5 * spec.arc_degrees + spec.arc_degrees * t +
                           spec.jitter_degrees * (2.0 * u01(rng) - 1.0)) * deg;
        const double el = (spec.elevation_degrees + spec.jitter_degrees * (2.0 * u01(rng) - 1.0)) * deg;
        const Vec3 eye(spec.orbit_radius * std::cos(el) * std::sin(az),
                       -spec.orbit_radius * std::sin(el),
                       -spec.orbit_radius * std::cos(el) * std::cos(az));
        const Mat3 r = CameraPose::look_at(eye, Vec3::Zero(), Vec3(0.0, -1.0, 0.0));
        scene.cameras.push_back(CameraPose::from_center(r, eye, fx, fy, 0.5 * spec.width,
                                                        0.5 * spec.height, spec.width, spec.height));
    }
    split_views(spec.num_cams, spec.num_train, scene.train_indices, scene.heldout_indices);

    for (const Gaussian& g : scene.gt_cloud.gaussians) {
        if (spec.random_init) {
            scene.init_points.emplace_back(2.4 * u01(rng) - 1.2, 2.4 * u01(rng) - 1.2,
                                           2.4 * u01(rng) - 1.2);
            scene.init_colors.emplace_back(u01(rng), u01(rng), u01(rng));
        } else {
            scene.init_points.push_back(
                g.mu + spec.init_noise * Vec3(n01(rng), n01(rng), n01(rng)));
            Vec3 c = (kShC0 * g.sh[0]).array() + 0.5;
            for (int ch = 0; ch < 3; ++ch) c[ch] = std::clamp(c[ch] + 0.1 * n01(rng), 0.0, 1.0);
            scene.init_colors.push_back(c);
        }
    }
    scene.finalize();
    return scene;
}

/// Model initialization from a point set: isotropic scale from the mean
/// distance to the three nearest neighbours, identity rotation, opacity 0.1.
inline GaussianCloud init_cloud_from_points(const std::vector<Vec3>& points,
                                            const std::vector<Vec3>& colors) {
    if (points.empty() || points.size() != colors.size())
        throw ConfigError("init_cloud_from_points: need matching, non-empty points and colors");
    GaussianCloud cloud;
    const std::size_t n = points.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d;
        d.reserve(n);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back((points[i] - points[j]).squaredNorm());
        double mean_d2 = 0.01;
        if (!d.empty()) {
            const std::size_t k = std::min<std::size_t>(3, d.size());
            std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
            mean_d2 = 0.0;
            for (std::size_t q = 0; q < k; ++q) mean_d2 += d[q];
            mean_d2 = std::max(mean_d2 / static_cast<double>(k), 1e-7);
        }
        Gaussian g;
        g.mu = points[i];
        g.log_scale = Vec3::Constant(std::log(std::sqrt(mean_d2)));
        g.opacity_logit = logit(0.1);
        g.sh[0] = (colors[i].array() - 0.5) / kShC0;
        cloud.gaussians.push_back(g);
    }
    return cloud;
}

/// 1.1 x the largest distance of a camera center from the cameras' mean center.
inline double scene_extent(const std::vector<CameraPose>& cams) {
    if (cams.empty()) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const auto& c : cams) mean += c.center;
    mean /= static_cast<double>(cams.size());
    double r = 0.0;
    for (const auto& c : cams) r = std::max(r, (c.center - mean).norm());
    return r > 0.0 ? 1.1 * r : 1.0;
}

}  // namespace segs
