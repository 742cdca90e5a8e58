// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace relgen::core {

// FNV-1a 64-bit over raw bytes. Used for config hashes and parameter checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

// Deterministic generator: splitmix64 core with Box-Muller normals. We do not
// use std::normal_distribution because its output sequence is
// implementation-defined; this keeps seed replay bit-for-bit everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed), has_spare_(false), spare_(0.0) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        return next_u64() % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(std::vector<double>& out, double scale = 1.0) {
        for (auto& v : out) v = scale * normal();
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = uniform_index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_;
    double spare_;
};

// Stable sub-seed derivation, e.g. derive_seed(seed, "adapters/layer0").
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
    return fnv1a64(tag, seed ^ 0x9e3779b97f4a7c15ull);
}

}  // namespace relgen::core
