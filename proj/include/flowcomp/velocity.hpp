#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "flowcomp/tensor.hpp"

namespace flowcomp {

// Prompt-side conditioning: either null (unconditional pass) or a style
// token with a fixed-length embedding vector.
class Conditioning {
public:
    static Conditioning null() { return Conditioning(); }

    static Conditioning style_token(int style_id, std::vector<float> embedding) {
        Conditioning c;
        c.is_null_ = false;
        c.style_id_ = style_id;
        c.embedding_ = std::move(embedding);
        return c;
    }

    bool is_null() const { return is_null_; }
    int style_id() const { return style_id_; }
    const std::vector<float>& embedding() const { return embedding_; }

private:
    bool is_null_ = true;
    int style_id_ = -1;
    std::vector<float> embedding_;
};

// Optional structural conditioning channel: a single-channel depth map in
// [0,1] matching the latent spatial shape. Stands in for depth-conditioned
// control of the backbone.
class StructureHint {
public:
    static StructureHint none() { return StructureHint(); }

    static StructureHint depth_map(Tensor depth) {
        if (depth.shape().channels != 1) {
            throw config_error("structure hint depth must have 1 channel, got " +
                               depth.shape().str());
        }
        for (std::size_t i = 0; i < depth.size(); ++i) {
            if (!std::isfinite(depth[i])) {
                throw numeric_error("structure hint depth contains non-finite values");
            }
            if (depth[i] < 0.0f) depth[i] = 0.0f;
            if (depth[i] > 1.0f) depth[i] = 1.0f;
        }
        StructureHint s;
        s.depth_ = std::move(depth);
        return s;
    }

    bool has_depth() const { return depth_.has_value(); }
    const Tensor& depth() const { return *depth_; }

private:
    std::optional<Tensor> depth_;
};

// Velocity field v(z, sigma, c, s) under the convention
//   z_sigma = (1 - sigma) * x_data + sigma * eps,   target v = eps - x_data,
// so sigma=1 is pure noise and sigma=0 is clean data.
class VelocityModel {
public:
    virtual ~VelocityModel() = default;

    virtual Tensor evaluate(const Tensor& z, float sigma, const Conditioning& condition,
                            const StructureHint& structure) const = 0;

    virtual Shape latent_shape() const = 0;
};

// Closed-form field for Gaussian data x_data ~ N(mu, stddev^2 I). Serves as
// an exact oracle: z - sigma * v equals the posterior mean E[x_data | z].
//
// For jointly Gaussian (x_data, eps) with z = (1-sigma) x_data + sigma eps:
//   Var(z)        = (1-sigma)^2 s^2 + sigma^2
//   Cov(eps-x, z) = sigma - (1-sigma) s^2
// so the conditional expectation E[eps - x_data | z] is
//   v(z, sigma) = -mu + [(sigma - (1-sigma) s^2) / Var(z)] * (z - (1-sigma) mu).
class GaussianFieldModel : public VelocityModel {
public:
    GaussianFieldModel(Tensor mean, float stddev) : mu_(std::move(mean)), stddev_(stddev) {
        if (!(stddev > 0.0f)) {
            throw config_error("GaussianFieldModel stddev must be > 0");
        }
    }

    static GaussianFieldModel constant(Shape shape, float mean, float stddev) {
        return GaussianFieldModel(Tensor(shape, mean), stddev);
    }

    const Tensor& mean() const { return mu_; }
    float stddev() const { return stddev_; }

    // The analytic model has no prompt or structure pathway: conditional and
    // unconditional velocities coincide, making guidance exact for tests.
    Tensor evaluate(const Tensor& z, float sigma, const Conditioning&,
                    const StructureHint&) const override;

    Shape latent_shape() const override { return mu_.shape(); }

private:
    Tensor mu_;
    float stddev_;
};

inline Tensor gaussian_velocity(const GaussianFieldModel& model, const Tensor& z, float sigma) {
    if (!(sigma >= 0.0f && sigma <= 1.0f)) {
        throw config_error("gaussian_velocity: sigma must be in [0,1]");
    }
    require_same_shape(z, model.mean(), "gaussian_velocity");
    const double s2 = static_cast<double>(model.stddev()) * model.stddev();
    const double sig = sigma;
    const double keep = 1.0 - sig;
    const double var_z = keep * keep * s2 + sig * sig;
    const double coef = (sig - keep * s2) / var_z;
    Tensor v(z.shape());
    const float* zp = z.data();
    const float* mp = model.mean().data();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double mu = mp[i];
        v[i] = static_cast<float>(-mu + coef * (zp[i] - keep * mu));
    }
    return v;
}

inline Tensor GaussianFieldModel::evaluate(const Tensor& z, float sigma, const Conditioning&,
                                           const StructureHint&) const {
    return gaussian_velocity(*this, z, sigma);
}

// Classifier-free guidance: v_uc + w * (v_c - v_uc).
inline Tensor cfg_velocity(const Tensor& v_uncond, const Tensor& v_cond, float w) {
    require_same_shape(v_uncond, v_cond, "cfg_velocity");
    if (w < 0.0f) {
        throw config_error("cfg_velocity: guidance scale must be >= 0");
    }
    const double scale = w;
    Tensor out(v_uncond.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(
            v_uncond[i] + scale * (static_cast<double>(v_cond[i]) - v_uncond[i]));
    }
    return out;
}

}  // namespace flowcomp
