// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace segs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Non-finite or otherwise unusable Gaussian parameters.
struct InvalidParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A numerical construction collapsed (singular covariance, parallel 6D columns).
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration value, unknown config key, infeasible scene request.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller broke a precondition (shape mismatch, stale render, etc).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Gaussian parameters
// ---------------------------------------------------------------------------

/// Degree-1 spherical harmonics: one DC band plus three linear bands.
constexpr int kShCoeffs = 4;
constexpr int kShFloats = kShCoeffs * 3;
/// mu(3) + rot(4) + log_scale(3) + opacity_logit(1) + sh(12)
constexpr int kParamsPerGaussian = 3 + 4 + 3 + 1 + kShFloats;

enum class ParamGroup : int { Position = 0, Rotation, Scale, Opacity, ShDc, ShRest };
constexpr int kNumParamGroups = 6;

/// Offset of each flattened parameter slot's group, see flatten_params().
constexpr std::array<ParamGroup, kParamsPerGaussian> kParamGroupOf = [] {
    std::array<ParamGroup, kParamsPerGaussian> g{};
    int i = 0;
    for (int k = 0; k < 3; ++k) g[i++] = ParamGroup::Position;
    for (int k = 0; k < 4; ++k) g[i++] = ParamGroup::Rotation;
    for (int k = 0; k < 3; ++k) g[i++] = ParamGroup::Scale;
    g[i++] = ParamGroup::Opacity;
    for (int k = 0; k < 3; ++k) g[i++] = ParamGroup::ShDc;
    for (int k = 0; k < kShFloats - 3; ++k) g[i++] = ParamGroup::ShRest;
    return g;
}();

/// One anisotropic 3D Gaussian. Parameters live in unconstrained spaces:
/// log scales, logit opacity, and a (w, x, y, z) quaternion kept at unit norm.
struct Gaussian {
    Vec3 mu = Vec3::Zero();
    Vec4 rot = Vec4(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z)
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    std::array<Vec3, kShCoeffs> sh{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
};

/// Same layout as Gaussian; holds d(loss)/d(parameter).
using GaussianGrad = Gaussian;

inline GaussianGrad zero_grad() {
    GaussianGrad g;
    g.rot.setZero();
    return g;
}

template <typename G>
std::array<double, kParamsPerGaussian> flatten_params(const G& g) {
    std::array<double, kParamsPerGaussian> p{};
    int i = 0;
    for (int k = 0; k < 3; ++k) p[i++] = g.mu[k];
    for (int k = 0; k < 4; ++k) p[i++] = g.rot[k];
    for (int k = 0; k < 3; ++k) p[i++] = g.log_scale[k];
    p[i++] = g.opacity_logit;
    for (int c = 0; c < kShCoeffs; ++c)
        for (int ch = 0; ch < 3; ++ch) p[i++] = g.sh[c][ch];
    return p;
}

template <typename G>
void unflatten_params(const std::array<double, kParamsPerGaussian>& p, G& g) {
    int i = 0;
    for (int k = 0; k < 3; ++k) g.mu[k] = p[i++];
    for (int k = 0; k < 4; ++k) g.rot[k] = p[i++];
    for (int k = 0; k < 3; ++k) g.log_scale[k] = p[i++];
    g.opacity_logit = p[i++];
    for (int c = 0; c < kShCoeffs; ++c)
        for (int ch = 0; ch < 3; ++ch) g.sh[c][ch] = p[i++];
}

struct GaussianCloud {
    std::vector<Gaussian> gaussians;
    std::int64_t step = 0;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    Gaussian& operator[](std::size_t i) { return gaussians[i]; }
    const Gaussian& operator[](std::size_t i) const { return gaussians[i]; }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline bool all_finite(const Gaussian& g) {
    for (double v : flatten_params(g))
        if (!std::isfinite(v)) return false;
    return true;
}

/// Rotation matrix of a (w, x, y, z) quaternion. The quaternion is normalized
/// first, so q and -q give the same matrix bit for bit.
inline Mat3 quat_to_rotation(const Vec4& q_raw) {
    const Vec4 q = q_raw / q_raw.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Quaternion (w, x, y, z) with w >= 0 for a rotation matrix.
inline Vec4 rotation_to_quat(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    if (out[0] < 0.0) out = -out;
    return out;
}

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)).
inline Mat3 covariance3d(const Gaussian& g) {
    if (!g.mu.allFinite() || !g.rot.allFinite() || !g.log_scale.allFinite())
        throw InvalidParameterError("covariance3d: non-finite Gaussian parameters");
    const double qn = g.rot.norm();
    if (!(qn > 0.0)) throw InvalidParameterError("covariance3d: zero quaternion");
    const Mat3 r = quat_to_rotation(g.rot);
    const Vec3 s = g.log_scale.array().exp().matrix();
    const Mat3 m = r * s.asDiagonal();
    return m * m.transpose();
}

// ---------------------------------------------------------------------------
// Cameras and images
// ---------------------------------------------------------------------------

/// Pinhole camera. `rotation` maps world to camera; translation = -rotation * center.
struct CameraPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 center = Vec3::Zero();
    Vec3 translation = Vec3::Zero();
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 8, height = 8;

    static CameraPose from_center(const Mat3& rotation, const Vec3& center, double fx, double fy,
                                  double cx, double cy, int width, int height) {
        CameraPose c;
        c.rotation = rotation;
        c.center = center;
        c.translation = -rotation * center;
        c.fx = fx;
        c.fy = fy;
        c.cx = cx;
        c.cy = cy;
        c.width = width;
        c.height = height;
        return c;
    }

    /// World-to-camera rotation looking from `eye` at `target`; camera +z forward, +y down.
    static Mat3 look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
        const Vec3 fwd = (target - eye).normalized();
        Vec3 right = fwd.cross(up_hint);
        if (right.norm() < 1e-9) right = fwd.cross(Vec3::UnitX());
        right.normalize();
        const Vec3 down = fwd.cross(right);
        Mat3 r;
        r.row(0) = right.transpose();
        r.row(1) = down.transpose();
        r.row(2) = fwd.transpose();
        return r;
    }

    bool same_intrinsics(const CameraPose& o) const {
        return fx == o.fx && fy == o.fy && cx == o.cx && cy == o.cy && width == o.width &&
               height == o.height;
    }

    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
            v.emplace_back("rotation not orthonormal");
        if (std::abs(rotation.determinant() - 1.0) > 1e-6) v.emplace_back("rotation det != +1");
        if ((translation + rotation * center).cwiseAbs().maxCoeff() > 1e-6)
            v.emplace_back("translation != -rotation*center");
        if (width < 8 || height < 8) v.emplace_back("image smaller than 8 px");
        return v;
    }
};

/// H x W x 3 image, row-major, interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

/// H x W single-channel scalar field (uncertainty maps).
struct ScalarMap {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ScalarMap() = default;
    ScalarMap(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}
    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
    std::size_t index;
    std::string field;
    std::string message;
};

/// Checks every Gaussian invariant; returns an empty list for a healthy cloud.
inline std::vector<Violation> validate_cloud(const GaussianCloud& cloud) {
    std::vector<Violation> out;
    if (cloud.empty()) out.push_back({0, "gaussians", "cloud is empty"});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud[i];
        if (!g.mu.allFinite()) out.push_back({i, "mu", "non-finite position"});
        if (!g.rot.allFinite() || std::abs(g.rot.norm() - 1.0) > 1e-6)
            out.push_back({i, "rot", "quaternion not unit norm"});
        const Vec3 s = g.log_scale.array().exp().matrix();
        if (!g.log_scale.allFinite() || !s.allFinite() || (s.array() <= 0.0).any())
            out.push_back({i, "log_scale", "scale not finite and positive"});
        const double o = sigmoid(g.opacity_logit);
        if (!std::isfinite(g.opacity_logit) || !(o > 0.0 && o < 1.0))
            out.push_back({i, "opacity_logit", "opacity outside (0,1)"});
        for (const Vec3& c : g.sh)
            if (!c.allFinite()) {
                out.push_back({i, "sh", "non-finite SH coefficient"});
                break;
            }
    }
    return out;
}

inline void normalize_rotations(GaussianCloud& cloud) {
    for (Gaussian& g : cloud.gaussians) {
        const double n = g.rot.norm();
        if (n > 0.0 && std::isfinite(n)) g.rot /= n;
        else g.rot = Vec4(1.0, 0.0, 0.0, 0.0);
    }
}

}  // namespace segs
