// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace segs {

// Splatting numerics shared by render(), the backward pass and the test oracles.
constexpr double kNearPlane = 0.01;
constexpr double kCov2dDilation = 0.3;     // pixel^2 added before inversion
constexpr double kAlphaMax = 0.99;
constexpr double kAlphaMin = 1.0 / 255.0;
constexpr double kMinTransmittance = 1e-4;
constexpr double kFootprintSigmas = 3.0;

constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;

struct RenderSettings {
    Vec3 background = Vec3::Zero();
};

/// One Gaussian projected into a camera.
struct Splat2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();  // J W Sigma W^T J^T, before dilation
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
    bool culled = true;
};

/// Per-Gaussian intermediate values kept from the forward pass for the backward pass.
struct ProjectedGaussian {
    Splat2D splat;
    Vec3 t_cam = Vec3::Zero();
    Mat23 jacobian = Mat23::Zero();
    Mat3 rotation = Mat3::Identity();  // R of Sigma, from the normalized quaternion
    Vec3 scale = Vec3::Ones();
    Mat3 cov3d = Mat3::Identity();
    Mat2 conic = Mat2::Identity();     // (cov2d + dilation I)^-1
    Vec3 view_dir = Vec3::UnitZ();     // normalized (mu - camera center)
    double view_dist = 1.0;
    std::array<bool, 3> color_clamped{false, false, false};
};

struct BlendRecord {
    std::int32_t gaussian = 0;
    bool clamped = false;       // alpha hit kAlphaMax; no gradient through alpha
    double alpha = 0.0;
    double gauss = 0.0;         // exp(-0.5 d^T conic d)
    double transmittance = 1.0; // T before this splat
};

/// Pixel ids overlapped by each Gaussian's splat, CSR layout.
struct Coverage {
    std::vector<std::uint32_t> offsets{0};
    std::vector<std::int32_t> pixels;

    std::size_t num_gaussians() const { return offsets.size() - 1; }
    std::span<const std::int32_t> of(std::size_t i) const {
        return {pixels.data() + offsets[i], pixels.data() + offsets[i + 1]};
    }
};

struct RenderOutput {
    Image image;
    Vec3 background = Vec3::Zero();
    std::vector<ProjectedGaussian> projected;  // index-aligned with the cloud

    Coverage coverage;

    // Blend records per pixel, CSR with per-pixel counts; ascending depth.
    std::vector<std::uint32_t> pixel_offsets;
    std::vector<std::uint32_t> pixel_record_count;
    std::vector<BlendRecord> records;
    std::vector<double> final_transmittance;

    std::size_t num_gaussians() const { return projected.size(); }

    std::span<const BlendRecord> blend_records(std::size_t pixel) const {
        return {records.data() + pixel_offsets[pixel], pixel_record_count[pixel]};
    }
};

struct CloudGradients {
    std::vector<GaussianGrad> grads;
    std::vector<Vec2> mean2d;   // d loss / d pixel-space mean
    std::vector<bool> visible;  // contributed to at least one pixel
};

// ---------------------------------------------------------------------------

/// exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)).
inline double eval_gaussian3d(const Gaussian& g, const Vec3& x) {
    Mat3 cov = covariance3d(g);
    Eigen::LLT<Mat3> llt(cov);
    if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <
                                            1e-9 * std::sqrt(cov.trace())) {
        cov += Mat3::Identity() * (1e-9 * cov.trace() / 3.0 + 1e-300);
        llt.compute(cov);
        if (llt.info() != Eigen::Success)
            throw DegeneracyError("eval_gaussian3d: singular covariance");
    }
    const Vec3 d = x - g.mu;
    return std::exp(-0.5 * d.dot(llt.solve(d)));
}

namespace detail {

inline Vec3 eval_sh_color(const Gaussian& g, const Vec3& dir, std::array<bool, 3>& clamped) {
    Vec3 c = kShC0 * g.sh[0] +
             kShC1 * (-dir.y() * g.sh[1] + dir.z() * g.sh[2] - dir.x() * g.sh[3]);
    c.array() += 0.5;
    for (int ch = 0; ch < 3; ++ch) {
        clamped[ch] = c[ch] < 0.0 || c[ch] > 1.0;
        c[ch] = std::clamp(c[ch], 0.0, 1.0);
    }
    return c;
}

inline ProjectedGaussian project_full(const Gaussian& g, const CameraPose& cam) {
    ProjectedGaussian p;
    p.t_cam = cam.rotation * g.mu + cam.translation;
    const double tz = p.t_cam.z();
    p.splat.depth = tz;
    if (!(tz > kNearPlane)) {
        p.splat.culled = true;
        return p;
    }
    p.splat.culled = false;
    const double tx = p.t_cam.x(), ty = p.t_cam.y();
    p.splat.mean2d = Vec2(cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy);
    p.jacobian << cam.fx / tz, 0.0, -cam.fx * tx / (tz * tz), 0.0, cam.fy / tz,
        -cam.fy * ty / (tz * tz);
    p.rotation = quat_to_rotation(g.rot);
    p.scale = g.log_scale.array().exp().matrix();
    const Mat3 m = p.rotation * p.scale.asDiagonal();
    p.cov3d = m * m.transpose();
    const Mat23 t = p.jacobian * cam.rotation;
    p.splat.cov2d = t * p.cov3d * t.transpose();
    const Mat2 dilated = p.splat.cov2d + kCov2dDilation * Mat2::Identity();
    p.conic = dilated.inverse();
    p.splat.opacity = sigmoid(g.opacity_logit);
    const Vec3 v = g.mu - cam.center;
    p.view_dist = v.norm();
    p.view_dir = p.view_dist > 0.0 ? Vec3(v / p.view_dist) : Vec3::UnitZ();
    p.splat.color = eval_sh_color(g, p.view_dir, p.color_clamped);
    return p;
}

/// Pixels (x, y) with (p - mean)^T conic (p - mean) <= 9, row-major ids, clipped to the image.
template <typename Fn>
void for_each_footprint_pixel(const Vec2& mean, const Mat2& cov, const Mat2& conic, int width,
                              int height, Fn&& fn) {
    const double r2 = kFootprintSigmas * kFootprintSigmas;
    const double hx = kFootprintSigmas * std::sqrt(std::max(cov(0, 0), 0.0));
    const double hy = kFootprintSigmas * std::sqrt(std::max(cov(1, 1), 0.0));
    if (!std::isfinite(hx) || !std::isfinite(hy) || !mean.allFinite()) return;
    // Clamp in floating point first so far off-screen splats never overflow int.
    const auto lo = [](double v, int hi) { return static_cast<int>(std::clamp(std::floor(v), 0.0, double(hi))); };
    const auto up = [](double v, int hi) { return static_cast<int>(std::clamp(std::ceil(v), -1.0, double(hi))); };
    const int x0 = lo(mean.x() - hx, width), x1 = up(mean.x() + hx, width - 1);
    const int y0 = lo(mean.y() - hy, height), y1 = up(mean.y() + hy, height - 1);
    for (int y = y0; y <= y1; ++y) {
        const double dy = y - mean.y();
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - mean.x();
            const double q = conic(0, 0) * dx * dx + 2.0 * conic(0, 1) * dx * dy +
                             conic(1, 1) * dy * dy;
            if (q <= r2) fn(y * width + x);
        }
    }
}

}  // namespace detail

/// Pinhole projection of one Gaussian; culled when camera-z <= kNearPlane.
inline Splat2D project(const Gaussian& g, const CameraPose& cam) {
    return detail::project_full(g, cam).splat;
}

/// Pixel ids inside the 3-sigma ellipse of `s.cov2d` around `s.mean2d`.
inline std::vector<std::int32_t> coverage_footprint(const Splat2D& s, int width, int height) {
    std::vector<std::int32_t> out;
    if (s.culled) return out;
    const double det = s.cov2d.determinant();
    if (!(det > 0.0)) return out;
    detail::for_each_footprint_pixel(s.mean2d, s.cov2d, s.cov2d.inverse(), width, height,
                                     [&](int id) { out.push_back(id); });
    return out;
}

/// Depth-sorted alpha compositing of every splat over the camera's pixel grid.
inline RenderOutput render(const GaussianCloud& cloud, const CameraPose& cam,
                           const RenderSettings& settings = {}) {
    const int w = cam.width, h = cam.height;
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    const std::size_t n = cloud.size();

    RenderOutput out;
    out.image = Image(w, h);
    out.background = settings.background;
    out.projected.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.projected[i] = detail::project_full(cloud[i], cam);

    // Coverage per Gaussian.
    Coverage& cov = out.coverage;
    cov.offsets.assign(n + 1, 0);
    cov.pixels.clear();
    for (std::size_t i = 0; i < n; ++i) {
        cov.offsets[i] = static_cast<std::uint32_t>(cov.pixels.size());
        const ProjectedGaussian& p = out.projected[i];
        if (!p.splat.culled) {
            const Mat2 dilated = p.splat.cov2d + kCov2dDilation * Mat2::Identity();
            detail::for_each_footprint_pixel(p.splat.mean2d, dilated, p.conic, w, h, [&](int id) {
                cov.pixels.push_back(id);
            });
        }
    }
    cov.offsets[n] = static_cast<std::uint32_t>(cov.pixels.size());

    // Global depth order, ties broken by index.
    std::vector<std::int32_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!out.projected[i].splat.culled) order.push_back(static_cast<std::int32_t>(i));
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        const double da = out.projected[a].splat.depth, db = out.projected[b].splat.depth;
        return da < db || (da == db && a < b);
    });

    // Bucket (pixel, gaussian) pairs by pixel keeping depth order.
    out.pixel_offsets.assign(npix + 1, 0);
    for (std::int32_t pix : cov.pixels) ++out.pixel_offsets[pix + 1];
    for (std::size_t p = 0; p < npix; ++p) out.pixel_offsets[p + 1] += out.pixel_offsets[p];
    std::vector<std::int32_t> entries(cov.pixels.size());
    std::vector<std::uint32_t> fill(out.pixel_offsets.begin(), out.pixel_offsets.end() - 1);
    for (std::int32_t gi : order)
        for (std::int32_t pix : cov.of(gi)) entries[fill[pix]++] = gi;

    out.records.resize(entries.size());
    out.pixel_record_count.assign(npix, 0);
    out.final_transmittance.assign(npix, 1.0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * w + x;
            double t = 1.0;
            Vec3 c = Vec3::Zero();
            std::uint32_t count = 0;
            for (std::uint32_t e = out.pixel_offsets[pix]; e < out.pixel_offsets[pix + 1]; ++e) {
                const std::int32_t gi = entries[e];
                const ProjectedGaussian& p = out.projected[gi];
                const double dx = x - p.splat.mean2d.x(), dy = y - p.splat.mean2d.y();
                const double power = -0.5 * (p.conic(0, 0) * dx * dx +
                                             2.0 * p.conic(0, 1) * dx * dy +
                                             p.conic(1, 1) * dy * dy);
                const double gval = std::exp(power);
                double alpha = p.splat.opacity * gval;
                const bool clamped = alpha > kAlphaMax;
                if (clamped) alpha = kAlphaMax;
                if (alpha < kAlphaMin) continue;
                const double next_t = t * (1.0 - alpha);
                if (next_t < kMinTransmittance) break;
                out.records[out.pixel_offsets[pix] + count++] = {gi, clamped, alpha, gval, t};
                c += p.splat.color * (alpha * t);
                t = next_t;
            }
            out.pixel_record_count[pix] = count;
            out.final_transmittance[pix] = t;
            c += t * settings.background;
            for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = std::clamp(c[ch], 0.0, 1.0);
        }
    }
    return out;
}

namespace detail {

/// d loss / d (w, x, y, z) of the normalized quaternion given d loss / d R.
inline Vec4 rotation_grad_to_quat(const Vec4& q_raw, const Mat3& dr) {
    const double qn = q_raw.norm();
    const Vec4 q = q_raw / qn;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 dq;
    dq[0] = 2.0 * (-z * dr(0, 1) + y * dr(0, 2) + z * dr(1, 0) - x * dr(1, 2) - y * dr(2, 0) +
                   x * dr(2, 1));
    dq[1] = 2.0 * (y * dr(0, 1) + z * dr(0, 2) + y * dr(1, 0) - 2.0 * x * dr(1, 1) -
                   w * dr(1, 2) + z * dr(2, 0) + w * dr(2, 1) - 2.0 * x * dr(2, 2));
    dq[2] = 2.0 * (-2.0 * y * dr(0, 0) + x * dr(0, 1) + w * dr(0, 2) + x * dr(1, 0) +
                   z * dr(1, 2) - w * dr(2, 0) + z * dr(2, 1) - 2.0 * y * dr(2, 2));
    dq[3] = 2.0 * (-2.0 * z * dr(0, 0) - w * dr(0, 1) + x * dr(0, 2) + w * dr(1, 0) -
                   2.0 * z * dr(1, 1) + y * dr(1, 2) + x * dr(2, 0) + y * dr(2, 1));
    // Through q / |q|.
    return (dq - q * q.dot(dq)) / qn;
}

}  // namespace detail

/// Analytic gradient of a scalar loss w.r.t. every Gaussian parameter, given
/// d loss / d pixel for the image produced by render(cloud, cam).
inline CloudGradients render_backward(const GaussianCloud& cloud, const CameraPose& cam,
                                      const RenderOutput& out, const Image& d_image) {
    const std::size_t n = cloud.size();
    if (out.num_gaussians() != n)
        throw ContractViolation("render_backward: render output does not match cloud size");
    if (!d_image.same_shape(out.image))
        throw ContractViolation("render_backward: gradient image shape mismatch");

    const int w = out.image.width, h = out.image.height;
    std::vector<Vec3> d_color(n, Vec3::Zero());
    std::vector<double> d_opacity(n, 0.0);
    std::vector<Vec2> d_mean(n, Vec2::Zero());
    std::vector<Mat2> d_conic(n, Mat2::Zero());

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * w + x;
            const Vec3 dpix(d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2));
            const auto recs = out.blend_records(pix);
            if (recs.empty() || dpix.isZero(0.0)) continue;
            Vec3 behind = out.final_transmittance[pix] * out.background;
            for (std::size_t k = recs.size(); k-- > 0;) {
                const BlendRecord& r = recs[k];
                const ProjectedGaussian& p = out.projected[r.gaussian];
                const Vec3& c = p.splat.color;
                d_color[r.gaussian] += (r.alpha * r.transmittance) * dpix;
                const double dl_dalpha =
                    dpix.dot(c * r.transmittance - behind / (1.0 - r.alpha));
                behind += c * (r.alpha * r.transmittance);
                if (r.clamped) continue;
                d_opacity[r.gaussian] += dl_dalpha * r.gauss;
                const double dl_dg = dl_dalpha * p.splat.opacity;
                const Vec2 d(x - p.splat.mean2d.x(), y - p.splat.mean2d.y());
                d_mean[r.gaussian] += (dl_dg * r.gauss) * (p.conic * d);
                d_conic[r.gaussian] += (-0.5 * dl_dg * r.gauss) * (d * d.transpose());
            }
        }
    }

    CloudGradients grads;
    grads.grads.assign(n, zero_grad());
    grads.mean2d.assign(n, Vec2::Zero());
    grads.visible.assign(n, false);

    for (std::size_t i = 0; i < n; ++i) {
        const ProjectedGaussian& p = out.projected[i];
        if (p.splat.culled) continue;
        const Gaussian& g = cloud[i];
        GaussianGrad& gg = grads.grads[i];
        grads.mean2d[i] = d_mean[i];
        grads.visible[i] = !out.coverage.of(i).empty();

        // Opacity.
        gg.opacity_logit = d_opacity[i] * p.splat.opacity * (1.0 - p.splat.opacity);

        // SH color.
        Vec3 dc = d_color[i];
        for (int ch = 0; ch < 3; ++ch)
            if (p.color_clamped[ch]) dc[ch] = 0.0;
        const Vec3& dir = p.view_dir;
        gg.sh[0] = kShC0 * dc;
        gg.sh[1] = (-kShC1 * dir.y()) * dc;
        gg.sh[2] = (kShC1 * dir.z()) * dc;
        gg.sh[3] = (-kShC1 * dir.x()) * dc;
        const Vec3 d_dir(-kShC1 * g.sh[3].dot(dc), -kShC1 * g.sh[1].dot(dc),
                         kShC1 * g.sh[2].dot(dc));
        Vec3 d_mu = (d_dir - dir * dir.dot(d_dir)) / p.view_dist;

        // conic -> cov2d -> Sigma and J.
        const Mat2 d_cov2d = -p.conic * d_conic[i] * p.conic;
        const Mat23 t = p.jacobian * cam.rotation;
        const Mat3 d_sigma = t.transpose() * d_cov2d * t;
        const Mat23 d_t = 2.0 * d_cov2d * t * p.cov3d;
        const Mat23 d_j = d_t * cam.rotation.transpose();

        const double tx = p.t_cam.x(), ty = p.t_cam.y(), tz = p.t_cam.z();
        const double tz2 = tz * tz, tz3 = tz2 * tz;
        Vec3 d_tcam;
        d_tcam.x() = d_j(0, 2) * (-cam.fx / tz2) + d_mean[i].x() * cam.fx / tz;
        d_tcam.y() = d_j(1, 2) * (-cam.fy / tz2) + d_mean[i].y() * cam.fy / tz;
        d_tcam.z() = d_j(0, 0) * (-cam.fx / tz2) + d_j(0, 2) * (2.0 * cam.fx * tx / tz3) +
                     d_j(1, 1) * (-cam.fy / tz2) + d_j(1, 2) * (2.0 * cam.fy * ty / tz3) -
                     d_mean[i].x() * cam.fx * tx / tz2 - d_mean[i].y() * cam.fy * ty / tz2;
        d_mu += cam.rotation.transpose() * d_tcam;
        gg.mu = d_mu;

        // Sigma = M M^T, M = R S.
        const Mat3 m = p.rotation * p.scale.asDiagonal();
        const Mat3 d_m = 2.0 * d_sigma * m;
        Mat3 d_r;
        for (int col = 0; col < 3; ++col) d_r.col(col) = d_m.col(col) * p.scale[col];
        for (int col = 0; col < 3; ++col)
            gg.log_scale[col] = d_m.col(col).dot(p.rotation.col(col)) * p.scale[col];
        gg.rot = detail::rotation_grad_to_quat(g.rot, d_r);
    }
    return grads;
}

}  // namespace segs
