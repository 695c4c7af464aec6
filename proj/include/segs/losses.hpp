// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace segs {

/// A loss value together with its gradients w.r.t. both inputs.
struct LossGrad {
    double value = 0.0;
    Image d_a;
    Image d_b;
};

namespace detail {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, kSsimWindow>& ssim_kernel() {
    static const std::array<double, kSsimWindow> k = [] {
        std::array<double, kSsimWindow> g{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double x = i - kSsimWindow / 2;
            g[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
            sum += g[i];
        }
        for (double& v : g) v /= sum;
        return g;
    }();
    return k;
}

/// Separable "same" Gaussian filtering with zero padding. The kernel is
/// symmetric, so this operator is its own adjoint.
inline void gaussian_filter(const std::vector<double>& in, int w, int h,
                            std::vector<double>& out, std::vector<double>& scratch) {
    const auto& k = ssim_kernel();
    constexpr int r = kSsimWindow / 2;
    scratch.assign(in.size(), 0.0);
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            const int lo = std::max(-r, -x), hi = std::min(r, w - 1 - x);
            for (int o = lo; o <= hi; ++o) s += k[o + r] * in[y * w + x + o];
            scratch[y * w + x] = s;
        }
    for (int y = 0; y < h; ++y) {
        const int lo = std::max(-r, -y), hi = std::min(r, h - 1 - y);
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int o = lo; o <= hi; ++o) s += k[o + r] * scratch[(y + o) * w + x];
            out[y * w + x] = s;
        }
    }
}

inline std::vector<double> channel(const Image& img, int c) {
    std::vector<double> v(img.pixel_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.data[i * 3 + c];
    return v;
}

/// Mean SSIM over channels and pixels; optionally d(mean SSIM)/da and /db.
inline double ssim_impl(const Image& a, const Image& b, Image* d_a, Image* d_b) {
    const int w = a.width, h = a.height;
    const std::size_t np = a.pixel_count();
    const double inv_n = 1.0 / static_cast<double>(np * 3);
    double total = 0.0;
    std::vector<double> scratch, mu1, mu2, e11, e22, e12, tmp;
    std::vector<double> g_mu1, g_mu2, g_e11, g_e22, g_e12;
    for (int c = 0; c < 3; ++c) {
        const std::vector<double> x = channel(a, c), y = channel(b, c);
        gaussian_filter(x, w, h, mu1, scratch);
        gaussian_filter(y, w, h, mu2, scratch);
        tmp.resize(np);
        for (std::size_t i = 0; i < np; ++i) tmp[i] = x[i] * x[i];
        gaussian_filter(tmp, w, h, e11, scratch);
        for (std::size_t i = 0; i < np; ++i) tmp[i] = y[i] * y[i];
        gaussian_filter(tmp, w, h, e22, scratch);
        for (std::size_t i = 0; i < np; ++i) tmp[i] = x[i] * y[i];
        gaussian_filter(tmp, w, h, e12, scratch);

        const bool grad = d_a || d_b;
        if (grad) {
            g_mu1.assign(np, 0.0);
            g_mu2.assign(np, 0.0);
            g_e11.assign(np, 0.0);
            g_e22.assign(np, 0.0);
            g_e12.assign(np, 0.0);
        }
        for (std::size_t i = 0; i < np; ++i) {
            const double m1 = mu1[i], m2 = mu2[i];
            const double s11 = e11[i] - m1 * m1, s22 = e22[i] - m2 * m2, s12 = e12[i] - m1 * m2;
            const double a1 = 2.0 * m1 * m2 + kSsimC1, a2 = 2.0 * s12 + kSsimC2;
            const double b1 = m1 * m1 + m2 * m2 + kSsimC1, b2 = s11 + s22 + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                const double bb = b1 * b2;
                g_mu1[i] = inv_n * (2.0 * m2 * (a2 - a1) / bb - 2.0 * m1 * s * (1.0 / b1 - 1.0 / b2));
                g_mu2[i] = inv_n * (2.0 * m1 * (a2 - a1) / bb - 2.0 * m2 * s * (1.0 / b1 - 1.0 / b2));
                g_e11[i] = inv_n * (-s / b2);
                g_e22[i] = inv_n * (-s / b2);
                g_e12[i] = inv_n * (2.0 * a1 / bb);
            }
        }
        if (!grad) continue;
        std::vector<double> f_mu1, f_mu2, f_e11, f_e22, f_e12;
        gaussian_filter(g_mu1, w, h, f_mu1, scratch);
        gaussian_filter(g_mu2, w, h, f_mu2, scratch);
        gaussian_filter(g_e11, w, h, f_e11, scratch);
        gaussian_filter(g_e22, w, h, f_e22, scratch);
        gaussian_filter(g_e12, w, h, f_e12, scratch);
        for (std::size_t i = 0; i < np; ++i) {
            if (d_a) d_a->data[i * 3 + c] = f_mu1[i] + 2.0 * x[i] * f_e11[i] + y[i] * f_e12[i];
            if (d_b) d_b->data[i * 3 + c] = f_mu2[i] + 2.0 * y[i] * f_e22[i] + x[i] * f_e12[i];
        }
    }
    return total * inv_n;
}

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b) || a.data.size() != b.data.size())
        throw ContractViolation(std::string(what) + ": image shape mismatch");
}

}  // namespace detail

/// Mean SSIM (11x11 Gaussian window, sigma 1.5, zero padding), averaged over channels.
inline double ssim(const Image& a, const Image& b) {
    detail::require_same_shape(a, b, "ssim");
    return detail::ssim_impl(a, b, nullptr, nullptr);
}

inline double l1_loss(const Image& a, const Image& b) {
    detail::require_same_shape(a, b, "l1_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

/// (1 - SSIM) / 2
inline double dssim_loss(const Image& a, const Image& b) { return 0.5 * (1.0 - ssim(a, b)); }

inline LossGrad l1_loss_grad(const Image& a, const Image& b) {
    detail::require_same_shape(a, b, "l1_loss");
    LossGrad lg{0.0, Image(a.width, a.height), Image(a.width, a.height)};
    const double inv = 1.0 / static_cast<double>(a.data.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += std::abs(d);
        const double g = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
        lg.d_a.data[i] = g;
        lg.d_b.data[i] = -g;
    }
    lg.value = s / static_cast<double>(a.data.size());
    return lg;
}

inline LossGrad dssim_loss_grad(const Image& a, const Image& b) {
    detail::require_same_shape(a, b, "dssim_loss");
    LossGrad lg{0.0, Image(a.width, a.height), Image(a.width, a.height)};
    const double s = detail::ssim_impl(a, b, &lg.d_a, &lg.d_b);
    lg.value = 0.5 * (1.0 - s);
    for (double& v : lg.d_a.data) v *= -0.5;
    for (double& v : lg.d_b.data) v *= -0.5;
    return lg;
}

/// (1 - lambda) * L1 + lambda * D-SSIM
inline double photometric_loss(const Image& rendered, const Image& gt, double lambda) {
    return (1.0 - lambda) * l1_loss(rendered, gt) + lambda * dssim_loss(rendered, gt);
}

/// photometric_loss with gradients for both images (d_a: rendered, d_b: target).
inline LossGrad photometric_loss_grad(const Image& rendered, const Image& gt, double lambda) {
    LossGrad l1 = l1_loss_grad(rendered, gt);
    LossGrad lg;
    lg.value = (1.0 - lambda) * l1.value;
    lg.d_a = std::move(l1.d_a);
    lg.d_b = std::move(l1.d_b);
    for (double& v : lg.d_a.data) v *= (1.0 - lambda);
    for (double& v : lg.d_b.data) v *= (1.0 - lambda);
    if (lambda != 0.0) {
        const LossGrad ds = dssim_loss_grad(rendered, gt);
        lg.value += lambda * ds.value;
        for (std::size_t i = 0; i < lg.d_a.data.size(); ++i) {
            lg.d_a.data[i] += lambda * ds.d_a.data[i];
            lg.d_b.data[i] += lambda * ds.d_b.data[i];
        }
    }
    return lg;
}

/// Discrepancy between Sigma- and Delta-model renderings of the same pseudo view.
inline double regularization_loss(const Image& img_sigma, const Image& img_delta, double lambda) {
    return photometric_loss(img_sigma, img_delta, lambda);
}

inline LossGrad regularization_loss_grad(const Image& img_sigma, const Image& img_delta,
                                         double lambda) {
    return photometric_loss_grad(img_sigma, img_delta, lambda);
}

/// L = L_rgb + gamma * L_r
inline double total_loss(double photo, double reg, double gamma) { return photo + gamma * reg; }

}  // namespace segs
