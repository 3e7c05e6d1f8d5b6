#pragma once

#include <string>
#include <vector>

#include "flowcomp/errors.hpp"

namespace flowcomp {

// Discrete noise levels sigma_0..sigma_K with sigma_0 = 0 (clean data) and
// sigma_K = 1 (pure noise). Sampling walks k = K..1, each step moving from
// sigma_k down to sigma_{k-1}.
class NoiseSchedule {
public:
    static NoiseSchedule from_sigmas(std::vector<float> sigmas) {
        if (sigmas.size() < 2) {
            throw config_error("noise schedule needs at least two sigma values");
        }
        if (sigmas.front() != 0.0f) {
            throw config_error("noise schedule must start at sigma_0 = 0");
        }
        if (sigmas.back() != 1.0f) {
            throw config_error("noise schedule must end at sigma_K = 1");
        }
        for (std::size_t k = 1; k < sigmas.size(); ++k) {
            if (!(sigmas[k] > sigmas[k - 1])) {
                throw config_error("noise schedule sigmas must be strictly increasing in k");
            }
        }
        NoiseSchedule s;
        s.sigmas_ = std::move(sigmas);
        return s;
    }

    int step_count() const { return static_cast<int>(sigmas_.size()) - 1; }

    float sigma(int k) const {
        if (k < 0 || k > step_count()) {
            throw config_error("sigma index " + std::to_string(k) + " out of range 0.." +
                               std::to_string(step_count()));
        }
        return sigmas_[static_cast<std::size_t>(k)];
    }

    const std::vector<float>& sigmas() const { return sigmas_; }

private:
    std::vector<float> sigmas_;
};

// Identity schedule sigma_k = k/K on the uniform grid.
inline NoiseSchedule linear_schedule(int steps) {
    if (steps < 1) {
        throw config_error("linear_schedule needs K >= 1, got " + std::to_string(steps));
    }
    std::vector<float> sigmas(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        sigmas[static_cast<std::size_t>(k)] =
            static_cast<float>(static_cast<double>(k) / static_cast<double>(steps));
    }
    return NoiseSchedule::from_sigmas(std::move(sigmas));
}

}  // namespace flowcomp
