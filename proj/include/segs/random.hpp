// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>

namespace segs {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for a path of keys below `base`. Streams derived with different
/// keys are independent, so per-Gaussian draws do not depend on visiting order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

// Top-level stream tags.
enum class StreamTag : std::uint64_t {
    PseudoViews = 1,
    Perturbation = 2,
    DensitySigma = 3,
    DensityDelta = 4,
    Scene = 5,
    Init = 6,
};

constexpr std::uint64_t derive_seed(std::uint64_t base, StreamTag tag) {
    return derive_seed(base, {static_cast<std::uint64_t>(tag)});
}

}  // namespace segs
