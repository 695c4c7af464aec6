// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations shared by the unit and acceptance tests.
// Nothing here calls into the library's renderer, losses or uncertainty code.

#pragma once

#include "segs/core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>
#include <vector>

namespace oracle {

using segs::CameraPose;
using segs::Gaussian;
using segs::GaussianCloud;
using segs::Image;
using segs::Mat2;
using segs::Mat3;
using segs::Vec2;
using segs::Vec3;
using segs::Vec4;

// Rotation from a quaternion written out element by element.
inline Mat3 quat_rot(Vec4 q) {
    q /= q.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

inline Mat3 cov3(const Gaussian& g) {
    const Mat3 r = quat_rot(g.rot);
    Mat3 s = Mat3::Zero();
    for (int k = 0; k < 3; ++k) s(k, k) = std::exp(2.0 * g.log_scale[k]);
    return r * s * r.transpose();
}

struct RefSplat {
    bool culled = true;
    double depth = 0.0;
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Zero();  // undilated
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
};

inline RefSplat ref_project(const Gaussian& g, const CameraPose& cam) {
    RefSplat s;
    const Vec3 t = cam.rotation * (g.mu - cam.center);
    s.depth = t.z();
    if (t.z() <= 0.01) return s;
    s.culled = false;
    s.mean = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / t.z(), 0, -cam.fx * t.x() / (t.z() * t.z()), 0, cam.fy / t.z(),
        -cam.fy * t.y() / (t.z() * t.z());
    s.cov = j * cam.rotation * cov3(g) * cam.rotation.transpose() * j.transpose();
    const Vec3 d = (g.mu - cam.center).normalized();
    const double c0 = 0.28209479177387814, c1 = 0.4886025119029199;
    for (int ch = 0; ch < 3; ++ch) {
        const double v = c0 * g.sh[0][ch] - c1 * d.y() * g.sh[1][ch] + c1 * d.z() * g.sh[2][ch] -
                         c1 * d.x() * g.sh[3][ch] + 0.5;
        s.color[ch] = std::min(1.0, std::max(0.0, v));
    }
    s.opacity = 1.0 / (1.0 + std::exp(-g.opacity_logit));
    return s;
}

/// Naive renderer: every pixel tests every Gaussian, then sorts its hits.
inline Image ref_render(const GaussianCloud& cloud, const CameraPose& cam,
                        const Vec3& bg = Vec3::Zero()) {
    std::vector<RefSplat> splats;
    for (const Gaussian& g : cloud.gaussians) splats.push_back(ref_project(g, cam));
    Image img(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            std::vector<std::tuple<double, std::size_t, double>> hits;  // depth, index, alpha
            for (std::size_t i = 0; i < splats.size(); ++i) {
                const RefSplat& s = splats[i];
                if (s.culled) continue;
                const Mat2 dil = s.cov + 0.3 * Mat2::Identity();
                const Vec2 d(x - s.mean.x(), y - s.mean.y());
                const double q = d.dot(dil.inverse() * d);
                if (q > 9.0) continue;
                hits.emplace_back(s.depth, i, std::min(0.99, s.opacity * std::exp(-0.5 * q)));
            }
            std::sort(hits.begin(), hits.end());
            double t = 1.0;
            Vec3 c = Vec3::Zero();
            for (const auto& [depth, i, a] : hits) {
                if (a < 1.0 / 255.0) continue;
                if (t * (1.0 - a) < 1e-4) break;
                c += splats[i].color * a * t;
                t *= 1.0 - a;
            }
            c += t * bg;
            for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = std::min(1.0, std::max(0.0, c[ch]));
        }
    }
    return img;
}

/// Lattice points (row-major ids) with d^T cov^-1 d <= 9, brute force over the whole image.
inline std::vector<std::int32_t> ref_footprint(const Vec2& mean, const Mat2& cov, int w, int h) {
    std::vector<std::int32_t> out;
    const Mat2 inv = cov.inverse();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Vec2 d(x - mean.x(), y - mean.y());
            if (d.dot(inv * d) <= 9.0) out.push_back(y * w + x);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Scene builders
// ---------------------------------------------------------------------------

inline CameraPose look_from(const Vec3& eye, int w, int h, double fov_deg = 60.0) {
    const Vec3 fwd = (-eye).normalized();
    Vec3 right = fwd.cross(Vec3(0, -1, 0));
    if (right.norm() < 1e-9) right = fwd.cross(Vec3::UnitX());
    right.normalize();
    const Vec3 down = fwd.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = fwd.transpose();
    const double f = 0.5 * w / std::tan(0.5 * fov_deg * 3.14159265358979323846 / 180.0);
    return CameraPose::from_center(r, eye, f, f, 0.5 * w, 0.5 * h, w, h);
}

template <typename Rng>
Gaussian random_gaussian(Rng& rng, double extent = 1.0, double scale_lo = 0.05,
                         double scale_hi = 0.3) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    Gaussian g;
    g.mu = extent * Vec3(u(rng), u(rng), u(rng));
    g.rot = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized();
    std::uniform_real_distribution<double> ls(std::log(scale_lo), std::log(scale_hi));
    for (int k = 0; k < 3; ++k) g.log_scale[k] = ls(rng);
    g.opacity_logit = 2.0 * u(rng);
    for (int c = 0; c < 4; ++c)
        for (int ch = 0; ch < 3; ++ch) g.sh[c][ch] = (c == 0 ? 1.2 : 0.4) * u(rng);
    return g;
}

template <typename Rng>
GaussianCloud random_cloud(Rng& rng, int n, double extent = 1.0) {
    GaussianCloud c;
    for (int i = 0; i < n; ++i) c.gaussians.push_back(random_gaussian(rng, extent));
    return c;
}

template <typename Rng>
CameraPose random_camera(Rng& rng, int w, int h, double radius = 3.5) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 d(n(rng), 0.4 * n(rng), n(rng));
    return look_from(radius * d.normalized(), w, h);
}

template <typename Rng>
Image random_image(Rng& rng, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (double& v : img.data) v = u(rng);
    return img;
}

// ---------------------------------------------------------------------------
// Uncertainty references
// ---------------------------------------------------------------------------

/// Per-pixel population std over frames, averaged over channels, two-pass.
inline std::vector<double> ref_std_map(const std::vector<Image>& frames) {
    const Image& f0 = frames.front();
    std::vector<double> out(f0.pixel_count(), 0.0);
    const double s = static_cast<double>(frames.size());
    for (std::size_t p = 0; p < out.size(); ++p) {
        double acc = 0.0;
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (const Image& f : frames) mean += f.data[p * 3 + c];
            mean /= s;
            double var = 0.0;
            for (const Image& f : frames) var += (f.data[p * 3 + c] - mean) * (f.data[p * 3 + c] - mean);
            acc += std::sqrt(var / s);
        }
        out[p] = acc / 3.0;
    }
    return out;
}

/// Direct k x k box convolution with clamped (replicate) indices.
inline std::vector<double> ref_box(const std::vector<double>& m, int w, int h, int k) {
    std::vector<double> out(m.size());
    const int r = k / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = std::clamp(x + dx, 0, w - 1), yy = std::clamp(y + dy, 0, h - 1);
                    s += m[static_cast<std::size_t>(yy) * w + xx];
                }
            out[static_cast<std::size_t>(y) * w + x] = s / (k * k);
        }
    return out;
}

/// Sort descending, take the 1-based ceil(r n)-th value, floor by theta.
inline double ref_tau(std::vector<double> v, double r, double theta) {
    std::sort(v.begin(), v.end(), std::greater<>());
    long idx = static_cast<long>(std::ceil(r * static_cast<double>(v.size()) - 1e-12));
    idx = std::clamp<long>(idx, 1, static_cast<long>(v.size()));
    return std::max(v[static_cast<std::size_t>(idx - 1)], theta);
}

// ---------------------------------------------------------------------------
// SSIM reference: direct 2D windowed sums with zero padding.
// ---------------------------------------------------------------------------

inline double ref_ssim(const Image& a, const Image& b) {
    const int w = a.width, h = a.height, r = 5;
    double win[11][11];
    double tot = 0.0;
    for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
            win[i + r][j + r] = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
            tot += win[i + r][j + r];
        }
    for (auto& row : win)
        for (double& v : row) v /= tot;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double sum = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                        const double k = win[dy + r][dx + r];
                        const double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
    return sum / (3.0 * w * h);
}

}  // namespace oracle
