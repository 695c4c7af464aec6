// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace segs {

/// FIFO of the last S renderings of one pseudo view, each stamped with its iteration.
struct RenderBuffer {
    struct Frame {
        Image image;
        std::int64_t iter = 0;
    };

    int view_index = 0;
    std::size_t capacity = 3;
    std::deque<Frame> frames;

    RenderBuffer() = default;
    RenderBuffer(int view, std::size_t s) : view_index(view), capacity(s) {}

    bool full() const { return frames.size() == capacity; }
    std::size_t size() const { return frames.size(); }
};

/// Pushes a frame, evicting the oldest when the buffer already holds S frames.
inline void push_frame(RenderBuffer& buf, Image img, std::int64_t iter) {
    if (!buf.frames.empty() && iter <= buf.frames.back().iter)
        throw ContractViolation("push_frame: iteration stamps must increase");
    if (!buf.frames.empty() && !img.same_shape(buf.frames.front().image))
        throw ContractViolation("push_frame: frame shape differs from buffered frames");
    if (buf.capacity == 0) throw ContractViolation("push_frame: zero-capacity buffer");
    if (buf.frames.size() == buf.capacity) buf.frames.pop_front();
    buf.frames.push_back({std::move(img), iter});
}

struct UncertaintyMap {
    ScalarMap raw;       // per-pixel std across buffered frames
    ScalarMap smoothed;  // k x k box average of raw
    double tau = 0.0;
};

/// Per-pixel population standard deviation across the buffered frames, averaged
/// over the three channels. Empty when the buffer is not yet full.
inline std::optional<ScalarMap> uncertainty_map(const RenderBuffer& buf) {
    if (!buf.full() || buf.frames.empty()) return std::nullopt;
    const Image& first = buf.frames.front().image;
    const std::size_t s = buf.frames.size();
    ScalarMap out(first.width, first.height);
    std::vector<double> v(s);
    for (std::size_t p = 0; p < first.pixel_count(); ++p) {
        double acc = 0.0;
        for (int c = 0; c < 3; ++c) {
            for (std::size_t k = 0; k < s; ++k) v[k] = buf.frames[k].image.data[p * 3 + c];
            // Sorted accumulation makes the result independent of frame order.
            std::sort(v.begin(), v.end());
            // Shift by the smallest value so constant pixels give exactly zero.
            const double lo = v.front();
            double mean = 0.0;
            for (double x : v) mean += x - lo;
            mean /= static_cast<double>(s);
            double var = 0.0;
            for (double x : v) var += (x - lo - mean) * (x - lo - mean);
            acc += std::sqrt(var / static_cast<double>(s));
        }
        out.data[p] = acc / 3.0;
    }
    return out;
}

/// k x k box average with replicate padding.
inline ScalarMap smooth_map(const ScalarMap& raw, int k) {
    if (k < 1 || k % 2 == 0) throw ConfigError("smooth_map: kernel size must be odd and positive");
    const int w = raw.width, h = raw.height, r = k / 2;
    const double inv = 1.0 / static_cast<double>(k * k);
    ScalarMap out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int m = -r; m <= r; ++m) {
                const int yy = std::clamp(y + m, 0, h - 1);
                for (int n = -r; n <= r; ++n) s += raw.at(std::clamp(x + n, 0, w - 1), yy);
            }
            out.at(x, y) = s * inv;
        }
    return out;
}

/// The ceil(r * n)-th largest value (1-based), floored at theta.
inline double compute_tau(const ScalarMap& smoothed, double r, double theta) {
    const std::size_t n = smoothed.data.size();
    if (n == 0) throw ContractViolation("compute_tau: empty map");
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("compute_tau: ratio must lie in (0,1]");
    auto k = static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, n);
    std::vector<double> v = smoothed.data;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end(),
                     std::greater<>());
    return std::max(v[k - 1], theta);
}

/// Full map for one buffer: raw std, smoothing, threshold.
inline std::optional<UncertaintyMap> build_uncertainty_map(const RenderBuffer& buf, int k,
                                                           double r, double theta) {
    auto raw = uncertainty_map(buf);
    if (!raw) return std::nullopt;
    UncertaintyMap m;
    m.raw = std::move(*raw);
    m.smoothed = smooth_map(m.raw, k);
    m.tau = compute_tau(m.smoothed, r, theta);
    return m;
}

enum class FlagAggregation { Any, All };

/// Flags Gaussians whose splat overlaps a pixel with smoothed uncertainty >= tau.
/// Any: uncertain in at least one view. All: uncertain in every view that sees it.
/// A Gaussian that covers no pixel in any view is never flagged.
inline std::vector<bool> flag_gaussians(std::size_t num_gaussians,
                                        std::span<const UncertaintyMap> maps,
                                        std::span<const Coverage* const> coverages,
                                        FlagAggregation agg = FlagAggregation::Any) {
    if (maps.size() != coverages.size())
        throw ContractViolation("flag_gaussians: maps and coverages differ in view count");
    std::vector<int> seen(num_gaussians, 0), hits(num_gaussians, 0);
    for (std::size_t v = 0; v < maps.size(); ++v) {
        const Coverage& cov = *coverages[v];
        if (cov.num_gaussians() != num_gaussians)
            throw ContractViolation("flag_gaussians: coverage does not match cloud size");
        const UncertaintyMap& map = maps[v];
        for (std::size_t i = 0; i < num_gaussians; ++i) {
            const auto pixels = cov.of(i);
            if (pixels.empty()) continue;
            ++seen[i];
            double best = -1.0;
            for (std::int32_t p : pixels) best = std::max(best, map.smoothed.data[p]);
            if (best >= map.tau) ++hits[i];
        }
    }
    std::vector<bool> flags(num_gaussians, false);
    for (std::size_t i = 0; i < num_gaussians; ++i)
        flags[i] = agg == FlagAggregation::Any ? hits[i] > 0 : (seen[i] > 0 && hits[i] == seen[i]);
    return flags;
}

}  // namespace segs
