// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"

#include "json.hpp"

#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace segs {

/// Geodesic interpolation on SO(3): beta = 1 gives r1, beta = 0 gives r2.
inline Mat3 slerp_rotation(const Mat3& r1, const Mat3& r2, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractViolation("slerp_rotation: beta outside [0,1]");
    if (beta == 1.0) return r1;
    if (beta == 0.0) return r2;
    const Vec4 q1 = rotation_to_quat(r1);
    Vec4 q2 = rotation_to_quat(r2);
    double dot = q1.dot(q2);
    if (dot < 0.0) {
        q2 = -q2;
        dot = -dot;
    }
    dot = std::min(dot, 1.0);
    const double omega = std::acos(dot);
    const double sin_omega = std::sin(omega);
    Vec4 q;
    if (dot < 1e-6 || sin_omega < 1e-12) {
        // Antipodal rotations or identical ones: normalized lerp.
        q = beta * q1 + (1.0 - beta) * q2;
        if (q.norm() < 1e-12) q = q2;
    } else {
        q = (std::sin(beta * omega) * q1 + std::sin((1.0 - beta) * omega) * q2) / sin_omega;
    }
    return quat_to_rotation(q);
}

/// Pseudo camera between two training cameras. Intrinsics are copied from cam1.
inline CameraPose interpolate_camera(const CameraPose& cam1, const CameraPose& cam2, double beta) {
    if (!cam1.same_intrinsics(cam2))
        throw ContractViolation("interpolate_camera: cameras have different intrinsics");
    if (beta == 1.0) return cam1;
    const Mat3 r = slerp_rotation(cam1.rotation, cam2.rotation, beta);
    const Vec3 c = beta * cam1.center + (1.0 - beta) * cam2.center;
    return CameraPose::from_center(r, c, cam1.fx, cam1.fy, cam1.cx, cam1.cy, cam1.width,
                                   cam1.height);
}

struct PseudoViewSet {
    struct Parent {
        int cam1 = 0;
        int cam2 = 0;
        double beta = 0.5;
    };
    std::vector<CameraPose> views;
    std::vector<Parent> parents;

    std::size_t size() const { return views.size(); }
};

/// M pseudo views, each between a uniformly drawn pair of distinct training
/// cameras with beta ~ U[beta_min, beta_max].
template <typename Rng>
PseudoViewSet sample_pseudo_views(const std::vector<CameraPose>& cams, int m, Rng& rng,
                                  double beta_min = 0.3, double beta_max = 0.7) {
    if (cams.size() < 2) throw ConfigError("sample_pseudo_views: need at least 2 training cameras");
    if (m < 1) throw ConfigError("sample_pseudo_views: need at least one pseudo view");
    if (!(beta_min >= 0.0 && beta_max <= 1.0 && beta_min <= beta_max))
        throw ConfigError("sample_pseudo_views: beta range must lie in [0,1]");
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < static_cast<int>(cams.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(cams.size()); ++j) pairs.emplace_back(i, j);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    std::uniform_real_distribution<double> beta_dist(beta_min, beta_max);
    PseudoViewSet set;
    for (int k = 0; k < m; ++k) {
        const auto [a, b] = pairs[pick(rng)];
        const double beta = beta_dist(rng);
        set.views.push_back(interpolate_camera(cams[a], cams[b], beta));
        set.parents.push_back({a, b, beta});
    }
    return set;
}

// ---------------------------------------------------------------------------
// JSON records: rotation row-major, center, intrinsics.
// ---------------------------------------------------------------------------

inline nlohmann::json camera_to_json(const CameraPose& c) {
    nlohmann::json j;
    std::vector<double> r;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
    j["rotation"] = r;
    j["center"] = {c.center.x(), c.center.y(), c.center.z()};
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    j["width"] = c.width;
    j["height"] = c.height;
    return j;
}

inline CameraPose camera_from_json(const nlohmann::json& j) {
    const auto r = j.at("rotation").get<std::vector<double>>();
    const auto c = j.at("center").get<std::vector<double>>();
    if (r.size() != 9 || c.size() != 3) throw ConfigError("camera record: bad rotation/center size");
    Mat3 rot;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) rot(i, k) = r[i * 3 + k];
    CameraPose cam = CameraPose::from_center(rot, Vec3(c[0], c[1], c[2]), j.at("fx").get<double>(),
                                             j.at("fy").get<double>(), j.at("cx").get<double>(),
                                             j.at("cy").get<double>(), j.at("width").get<int>(),
                                             j.at("height").get<int>());
    if (const auto v = cam.violations(); !v.empty())
        throw ConfigError("camera record: " + v.front());
    return cam;
}

}  // namespace segs
