#pragma once

#include <cmath>
#include <cstdint>

#include "flowcomp/tensor.hpp"

namespace flowcomp {

// Deterministic counter-based generator (SplitMix64) plus Marsaglia's polar
// method for normal draws. Fully specified here so the same seed yields the
// same stream on any platform; no std::..._distribution is used anywhere.
class RngState {
public:
    explicit RngState(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via the polar method; both values of each accepted
    // pair are consumed (the second is cached).
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_unit() - 1.0;
            v = 2.0 * next_unit() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Independent child stream: mixes the current seed with a stream tag.
    // Used to split work (per component, per run) without sharing state.
    RngState child(std::uint64_t tag) const {
        std::uint64_t z = state_ ^ (0x9E3779B97F4A7C15ULL * (tag + 1));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return RngState(z ^ (z >> 31));
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// i.i.d. standard normal tensor; advances rng deterministically in
// row-major, channel-major order.
inline Tensor gaussian_sample(RngState& rng, Shape shape) {
    if (!shape.valid()) {
        throw config_error("empty tensor: gaussian_sample needs positive dims, got " +
                           shape.str());
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<float>(rng.next_normal());
    }
    return t;
}

}  // namespace flowcomp
