// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/random.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace segs {

enum class DecayShape { LogLinear, Linear };

struct NoiseSchedule {
    double omega_start = 0.08;
    double omega_end = 0.02;
    std::int64_t total_iters = 10000;
    DecayShape shape = DecayShape::LogLinear;
    bool positions = true;
    bool rotations = true;
    bool scales = true;
    bool opacities = true;

    void validate() const {
        if (!(omega_end > 0.0 && omega_start >= omega_end))
            throw ConfigError("noise schedule: need omega_start >= omega_end > 0");
        if (total_iters < 1) throw ConfigError("noise schedule: total_iters must be positive");
    }
};

/// Noise level at `iter`; log-linear by default: w0 * (w1 / w0)^(t / T).
inline double omega_at(const NoiseSchedule& s, std::int64_t iter) {
    if (iter <= 0) return s.omega_start;
    if (iter >= s.total_iters) return s.omega_end;
    const double t = static_cast<double>(iter) / static_cast<double>(s.total_iters);
    if (s.shape == DecayShape::Linear) return s.omega_start + (s.omega_end - s.omega_start) * t;
    return std::exp(std::log(s.omega_start) * (1.0 - t) + std::log(s.omega_end) * t);
}

/// omega times the mean L1 norm of a parameter group over the cloud.
template <typename Range>
double noise_sigma(const Range& values, double omega) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        sum += v.template lpNorm<1>();
        ++n;
    }
    if (n == 0) throw ContractViolation("noise_sigma: empty parameter group");
    return omega * (sum / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// 6D rotation representation: first two columns of R.
// ---------------------------------------------------------------------------

inline Vec6 rot_to_6d(const Mat3& r) {
    Vec6 v;
    v << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1);
    return v;
}

/// Gram-Schmidt on the two 3-vectors, third column by cross product; det = +1.
inline Mat3 sixd_to_rot(const Vec6& v) {
    const Vec3 a1 = v.head<3>(), a2 = v.tail<3>();
    const double n1 = a1.norm();
    if (!(n1 > 1e-12) || !std::isfinite(n1)) throw DegeneracyError("sixd_to_rot: zero first column");
    const Vec3 b1 = a1 / n1;
    Vec3 b2 = a2 - b1 * b1.dot(a2);
    const double n2 = b2.norm();
    if (!(n2 > 1e-9 * std::max(1.0, a2.norm())) || !std::isfinite(n2))
        throw DegeneracyError("sixd_to_rot: columns parallel");
    b2 /= n2;
    Mat3 r;
    r.col(0) = b1;
    r.col(1) = b2;
    r.col(2) = b1.cross(b2);
    return r;
}

struct GroupSigmas {
    double position = 0.0;
    double rotation = 0.0;
    double scale = 0.0;
    double opacity = 0.0;
};

inline GroupSigmas group_sigmas(const GaussianCloud& cloud, double omega) {
    std::vector<Vec3> mu, ls;
    std::vector<Vec6> rot;
    std::vector<Eigen::Matrix<double, 1, 1>> op;
    for (const Gaussian& g : cloud.gaussians) {
        mu.push_back(g.mu);
        ls.push_back(g.log_scale);
        rot.push_back(rot_to_6d(quat_to_rotation(g.rot)));
        op.push_back(Eigen::Matrix<double, 1, 1>(g.opacity_logit));
    }
    return {noise_sigma(mu, omega), noise_sigma(rot, omega), noise_sigma(ls, omega),
            noise_sigma(op, omega)};
}

// Sub-stream keys per parameter group.
enum class NoiseGroup : std::uint64_t { Position = 0, Scale = 1, Opacity = 2, Rotation = 3 };

constexpr int kRotationRetries = 8;

struct PerturbStats {
    std::size_t perturbed = 0;
    std::size_t rotation_skipped = 0;
};

/// Adds zero-mean Gaussian noise to the flagged Gaussians in place. Noise for
/// Gaussian i and group g comes from mt19937_64(derive_seed(stream, {i, g})),
/// so draws are independent of visiting order. SH coefficients are untouched
/// and unflagged Gaussians stay bit-identical.
inline PerturbStats perturb_model(GaussianCloud& cloud, const std::vector<bool>& flags,
                                  const NoiseSchedule& sched, std::int64_t iter,
                                  std::uint64_t stream) {
    if (flags.size() != cloud.size())
        throw ContractViolation("perturb_model: flag count differs from Gaussian count");
    PerturbStats stats;
    if (cloud.empty()) return stats;
    const GroupSigmas sigma = group_sigmas(cloud, omega_at(sched, iter));

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!flags[i]) continue;
        ++stats.perturbed;
        Gaussian& g = cloud[i];
        const auto engine = [&](NoiseGroup grp) {
            return std::mt19937_64(derive_seed(stream, {i, static_cast<std::uint64_t>(grp)}));
        };
        if (sched.positions && sigma.position > 0.0) {
            auto eng = engine(NoiseGroup::Position);
            std::normal_distribution<double> nd(0.0, sigma.position);
            for (int k = 0; k < 3; ++k) g.mu[k] += nd(eng);
        }
        if (sched.scales && sigma.scale > 0.0) {
            auto eng = engine(NoiseGroup::Scale);
            std::normal_distribution<double> nd(0.0, sigma.scale);
            for (int k = 0; k < 3; ++k) g.log_scale[k] += nd(eng);
        }
        if (sched.opacities && sigma.opacity > 0.0) {
            auto eng = engine(NoiseGroup::Opacity);
            std::normal_distribution<double> nd(0.0, sigma.opacity);
            g.opacity_logit += nd(eng);
        }
        if (sched.rotations && sigma.rotation > 0.0) {
            auto eng = engine(NoiseGroup::Rotation);
            std::normal_distribution<double> nd(0.0, sigma.rotation);
            const Vec6 base = rot_to_6d(quat_to_rotation(g.rot));
            bool done = false;
            for (int attempt = 0; attempt < kRotationRetries && !done; ++attempt) {
                Vec6 noisy = base;
                for (int k = 0; k < 6; ++k) noisy[k] += nd(eng);
                try {
                    Vec4 q = rotation_to_quat(sixd_to_rot(noisy));
                    // Keep the hemisphere of the old quaternion so optimizer moments stay meaningful.
                    if (q.dot(g.rot) < 0.0) q = -q;
                    g.rot = q;
                    done = true;
                } catch (const DegeneracyError&) {
                }
            }
            if (!done) ++stats.rotation_skipped;
        }
    }
    return stats;
}

}  // namespace segs
