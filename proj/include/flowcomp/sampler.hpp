#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowcomp/mask.hpp"
#include "flowcomp/rng.hpp"
#include "flowcomp/schedule.hpp"
#include "flowcomp/tensor.hpp"
#include "flowcomp/velocity.hpp"

namespace flowcomp {

// One style entering the composition: its velocity field, its prompt
// conditioning, and the spatial region it owns.
struct StyleBinding {
    std::shared_ptr<const VelocityModel> model;
    Conditioning condition = Conditioning::null();
    BinaryMask mask;
};

struct ComposeConfig {
    int steps = 28;          // K
    int merge_start = 8;     // tau: steps k <= tau are merging updates
    float guidance = 3.5f;   // w
    std::uint64_t seed = 0;
    StructureHint structure = StructureHint::none();
    NoiseSchedule schedule = linear_schedule(28);

    void validate() const {
        if (schedule.step_count() != steps) {
            throw config_error("compose config: schedule has " +
                               std::to_string(schedule.step_count()) + " steps but K = " +
                               std::to_string(steps));
        }
        if (merge_start < 0 || merge_start > steps) {
            throw config_error("compose config: tau must satisfy 0 <= tau <= K");
        }
        if (guidance < 0.0f) {
            throw config_error("compose config: guidance scale must be >= 0");
        }
    }
};

inline ComposeConfig make_compose_config(int steps, int merge_start, float guidance,
                                         std::uint64_t seed,
                                         StructureHint structure = StructureHint::none()) {
    ComposeConfig cfg;
    cfg.steps = steps;
    cfg.merge_start = merge_start;
    cfg.guidance = guidance;
    cfg.seed = seed;
    cfg.structure = std::move(structure);
    cfg.schedule = linear_schedule(steps);
    cfg.validate();
    return cfg;
}

// One record per step k = K..1: latents after the step (now at sigma_{k-1})
// and, for merging steps, the fused clean estimate.
struct StepRecord {
    int k = 0;
    float sigma = 0.0f;  // sigma_k at the start of the step
    std::vector<Tensor> latents;
    std::optional<Tensor> fused_clean;
};

struct Trajectory {
    std::vector<StepRecord> steps;
};

struct SampleResult {
    Tensor image;
    Trajectory trajectory;
};

// The step kernels accumulate in double and round once to float32, so each
// estimate/renoise round trip perturbs a latent by at most one rounding of
// each operand instead of three.

// z_{k-1} = z_k - (sigma_hi - sigma_lo) * v
inline Tensor euler_step(const Tensor& z, const Tensor& v, float sigma_hi, float sigma_lo) {
    require_same_shape(z, v, "euler_step");
    if (!(sigma_hi > sigma_lo)) {
        throw config_error("euler_step: sigma_hi must exceed sigma_lo");
    }
    const double dt = static_cast<double>(sigma_hi) - static_cast<double>(sigma_lo);
    Tensor out(z.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(z[i] - dt * v[i]);
    }
    return out;
}

// One-step clean endpoint estimate z_hat_0 = z - sigma * v; for linear
// Gaussian fields this is the posterior mean E[x_data | z].
inline Tensor estimate_clean(const Tensor& z, const Tensor& v, float sigma) {
    require_same_shape(z, v, "estimate_clean");
    if (!(sigma > 0.0f && sigma <= 1.0f)) {
        throw config_error("estimate_clean: sigma must be in (0,1]");
    }
    const double s = sigma;
    Tensor out(z.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(z[i] - s * v[i]);
    }
    return out;
}

// Return the fused clean latent to noise level sigma through the
// unconditional velocity: z = z0_fused + sigma * v_uncond. The merged
// latent holds several styles at once, so conditioning on any single style
// prompt here would mismatch; the unconditional field avoids that.
inline Tensor renoise(const Tensor& z0_fused, const Tensor& v_uncond, float sigma) {
    require_same_shape(z0_fused, v_uncond, "renoise");
    if (!(sigma > 0.0f && sigma <= 1.0f)) {
        throw config_error("renoise: sigma must be in (0,1]");
    }
    const double s = sigma;
    Tensor out(z0_fused.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(z0_fused[i] + s * v_uncond[i]);
    }
    return out;
}

namespace detail {

// Two-phase sampling loop shared by sample_single and compose.
//
// Every style starts from one shared z_T. Steps k = K..tau+1 are simple
// updates: per style, an independent guided Euler step. Steps k = tau..1
// are merging updates: estimate each style's clean latent from its guided
// velocity, fuse the estimates through the masks, return each style to
// noise level sigma_k through its unconditional velocity, then take the
// Euler step with the guided velocity computed before the fusion.
//
// Per-style latents are carried in double between steps. In float32 the
// estimate/renoise round trip drifts by up to half an ulp of |z| per
// merging step with a persistent sign, i.e. tau * ulp/2, which breaches
// the 1e-6 single-style collapse tolerance for latents beyond |z| ~ 4.
// Models, trajectory records, and outputs still see float32 tensors.
inline SampleResult run_sampler(const std::vector<StyleBinding>& bindings,
                                const ComposeConfig& cfg, const MaskSet& masks) {
    cfg.validate();
    const std::size_t n = bindings.size();
    for (const auto& b : bindings) {
        if (!b.model) throw config_error("compose: null model in binding");
    }
    const Shape shape = bindings.front().model->latent_shape();
    for (const auto& b : bindings) {
        if (b.model->latent_shape() != shape) {
            throw config_error("compose: all models must share one latent shape, got " +
                               b.model->latent_shape().str() + " vs " + shape.str());
        }
    }
    if (masks.height() != shape.height || masks.width() != shape.width) {
        throw config_error("compose: mask shape (" + std::to_string(masks.height()) + "," +
                           std::to_string(masks.width()) + ") does not match latent shape " +
                           shape.str());
    }
    if (cfg.structure.has_depth()) {
        const Shape d = cfg.structure.depth().shape();
        if (d.height != shape.height || d.width != shape.width) {
            throw config_error("compose: structure hint shape " + d.str() +
                               " does not match latent shape " + shape.str());
        }
    }

    RngState rng(cfg.seed);
    const Tensor z_init = gaussian_sample(rng, shape);
    const std::size_t count = z_init.size();
    std::vector<std::vector<double>> z(n, std::vector<double>(count));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < count; ++p) z[i][p] = z_init[p];
    }
    const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;

    auto to_tensor = [&shape, count](const std::vector<double>& values) {
        Tensor t(shape);
        for (std::size_t p = 0; p < count; ++p) t[p] = static_cast<float>(values[p]);
        return t;
    };

    const Conditioning null_cond = Conditioning::null();
    SampleResult result;
    result.trajectory.steps.reserve(static_cast<std::size_t>(cfg.steps));

    for (int k = cfg.steps; k >= 1; --k) {
        const float sig_hi = cfg.schedule.sigma(k);
        const double sigma = sig_hi;
        const double dt = sigma - static_cast<double>(cfg.schedule.sigma(k - 1));

        std::vector<Tensor> v_uncond(n);
        std::vector<Tensor> v_guided(n);
        for (std::size_t i = 0; i < n; ++i) {
            const StyleBinding& b = bindings[i];
            const Tensor z_f = to_tensor(z[i]);
            v_uncond[i] = b.model->evaluate(z_f, sig_hi, null_cond, cfg.structure);
            if (b.condition.is_null()) {
                v_guided[i] = v_uncond[i];
            } else {
                const Tensor v_cond = b.model->evaluate(z_f, sig_hi, b.condition, cfg.structure);
                v_guided[i] = cfg_velocity(v_uncond[i], v_cond, cfg.guidance);
            }
            if (v_guided[i].shape() != shape) {
                throw config_error("compose: model returned shape " +
                                   v_guided[i].shape().str() + ", expected " + shape.str());
            }
        }

        StepRecord record;
        record.k = k;
        record.sigma = sig_hi;

        if (k <= cfg.merge_start) {
            // z_hat_0 per style, fused through the masks (each pixel has one
            // owner), then back to level sigma via the unconditional field.
            std::vector<double> fused(count, 0.0);
            std::vector<std::vector<double>> clean(n, std::vector<double>(count));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < count; ++p) {
                    clean[i][p] = z[i][p] - sigma * v_guided[i][p];
                }
                const float* m = masks.mask(i).data();
                for (int c = 0; c < shape.channels; ++c) {
                    const std::size_t base = static_cast<std::size_t>(c) * plane;
                    for (std::size_t p = 0; p < plane; ++p) {
                        fused[base + p] += clean[i][base + p] * m[p];
                    }
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < count; ++p) {
                    z[i][p] = fused[p] + sigma * v_uncond[i][p];
                }
            }
            record.fused_clean = to_tensor(fused);
        }

        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < count; ++p) {
                z[i][p] -= dt * v_guided[i][p];
            }
        }

        record.latents.reserve(n);
        for (std::size_t i = 0; i < n; ++i) record.latents.push_back(to_tensor(z[i]));
        result.trajectory.steps.push_back(std::move(record));
    }

    std::vector<Tensor> finals;
    finals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) finals.push_back(to_tensor(z[i]));
    result.image = masked_sum(finals, masks);
    return result;
}

}  // namespace detail

// Plain guided Euler sampling of one model (no merging; requires tau = 0).
inline SampleResult sample_single(const std::shared_ptr<const VelocityModel>& model,
                                  const Conditioning& condition, const ComposeConfig& cfg) {
    if (!model) throw config_error("sample_single: model must not be null");
    if (cfg.merge_start != 0) {
        throw config_error("sample_single: config must have tau = 0");
    }
    const Shape shape = model->latent_shape();
    std::vector<StyleBinding> bindings;
    bindings.push_back({model, condition, BinaryMask::ones(shape.height, shape.width)});
    MaskSet masks = MaskSet::make({bindings.front().mask});
    return detail::run_sampler(bindings, cfg, masks);
}

// Style-compositive sampling: simple updates for k = K..tau+1, merging
// updates with clean-latent fusion for k = tau..1, final fusion at sigma=0.
// Decode is the identity (latents are pixel space here).
inline SampleResult compose(const std::vector<StyleBinding>& bindings,
                            const ComposeConfig& cfg) {
    if (bindings.empty()) throw config_error("compose: need at least one binding");
    std::vector<BinaryMask> mask_list;
    mask_list.reserve(bindings.size());
    for (const auto& b : bindings) mask_list.push_back(b.mask);
    MaskSet masks = MaskSet::make(std::move(mask_list));
    return detail::run_sampler(bindings, cfg, masks);
}

}  // namespace flowcomp
