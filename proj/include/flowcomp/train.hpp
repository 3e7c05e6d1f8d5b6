#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "flowcomp/mlp.hpp"
#include "flowcomp/rng.hpp"
#include "flowcomp/tensor.hpp"

namespace flowcomp {

struct TrainConfig {
    int steps = 3500;
    int batch = 16;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    int holdout = 64;  // held-out batch size, fixed at training start

    void validate() const {
        if (steps < 0) throw config_error("train steps must be >= 0");
        if (batch < 1) throw config_error("train batch must be >= 1");
        if (!(lr > 0.0)) throw config_error("learning rate must be > 0");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
            throw config_error("Adam betas must lie in (0,1)");
        }
        if (!(eps > 0.0)) throw config_error("Adam eps must be > 0");
        if (holdout < 1) throw config_error("holdout batch must be >= 1");
    }
};

// Synthetic style distributions standing in for per-style image datasets.
// Stripes and Checker are sign-of-sine patterns sampled at cell centers
// ((coord + 0.5)/period) so no sample point lands on a zero crossing, plus
// i.i.d. Gaussian noise with amplitude eta. GaussTexture is N(mu, s^2) per
// pixel.
struct StyleDataset {
    enum class Kind { GaussTexture, Stripes, Checker };
    enum class Axis { Horizontal, Vertical };

    Kind kind = Kind::GaussTexture;
    Shape shape{1, 8, 8};
    double mu = 0.0;        // GaussTexture mean
    double s = 1.0;         // GaussTexture stddev
    int period = 4;         // Stripes/Checker
    double amplitude = 1.0; // Stripes/Checker
    Axis axis = Axis::Vertical;  // Stripes: direction the bands run
    double eta = 0.0;       // additive noise floor, all kinds

    void validate() const {
        if (!shape.valid()) throw config_error("dataset shape must be positive");
        switch (kind) {
            case Kind::GaussTexture:
                if (!(s > 0.0)) throw config_error("GaussTexture s must be > 0");
                break;
            case Kind::Stripes:
            case Kind::Checker:
                if (period < 2) throw config_error("pattern period must be >= 2");
                if (amplitude < 0.0) throw config_error("pattern amplitude must be >= 0");
                break;
        }
        if (eta < 0.0) throw config_error("noise floor eta must be >= 0");
    }

    // Noise-free pattern; zero for GaussTexture (mu is added in sample()).
    Tensor pattern() const {
        validate();
        Tensor p(shape);
        if (kind == Kind::GaussTexture) return p;
        for (int c = 0; c < shape.channels; ++c) {
            for (int h = 0; h < shape.height; ++h) {
                for (int w = 0; w < shape.width; ++w) {
                    double v = 0.0;
                    if (kind == Kind::Stripes) {
                        const int coord = (axis == Axis::Vertical) ? w : h;
                        v = amplitude * sign_of_sine(coord);
                    } else {
                        v = amplitude * sign_of_sine(h) * sign_of_sine(w);
                    }
                    p.at(c, h, w) = static_cast<float>(v);
                }
            }
        }
        return p;
    }

    Tensor sample(RngState& rng) const {
        Tensor x = pattern();
        const double base = (kind == Kind::GaussTexture) ? mu : 0.0;
        const double noise = (kind == Kind::GaussTexture) ? s : eta;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double v = x[i] + base;
            if (noise > 0.0) v += noise * rng.next_normal();
            x[i] = static_cast<float>(v);
        }
        return x;
    }

private:
    double sign_of_sine(int coord) const {
        const double v = std::sin(2.0 * M_PI * (coord + 0.5) / static_cast<double>(period));
        return v >= 0.0 ? 1.0 : -1.0;
    }
};

// Linear interpolation path z = (1-sigma) x_data + sigma eps with the
// sigma-independent regression target eps - x_data.
inline std::pair<Tensor, Tensor> interpolate(const Tensor& x_data, const Tensor& eps,
                                             float sigma) {
    require_same_shape(x_data, eps, "interpolate");
    if (!(sigma >= 0.0f && sigma <= 1.0f)) {
        throw config_error("interpolate: sigma must be in [0,1]");
    }
    Tensor z(x_data.shape());
    Tensor target(x_data.shape());
    const float keep = 1.0f - sigma;
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = keep * x_data[i] + sigma * eps[i];
        target[i] = eps[i] - x_data[i];
    }
    return {std::move(z), std::move(target)};
}

struct TrainExample {
    Tensor x_data;
    Tensor eps;
    float sigma = 0.0f;
};

struct LossGrads {
    double loss = 0.0;
    MlpFieldModel::Gradients grads;
};

// Mean over the batch of per-example mean squared error between the model
// velocity and eps - x_data; gradients by reverse mode through the cached
// forward pass. Training always runs the unconditional pathway (null
// conditioning, no structure hint).
inline LossGrads fm_loss(const MlpFieldModel& model, const std::vector<TrainExample>& batch) {
    if (batch.empty()) throw config_error("fm_loss: batch must be non-empty");
    LossGrads result;
    result.grads = MlpFieldModel::Gradients::zeros_like(model);
    const Conditioning null_cond = Conditioning::null();
    const StructureHint no_hint = StructureHint::none();
    const std::size_t dim = model.config().latent.size();
    const double scale = 1.0 / (static_cast<double>(dim) * batch.size());
    MlpFieldModel::Workspace ws;
    for (const TrainExample& ex : batch) {
        auto [z, target] = interpolate(ex.x_data, ex.eps, ex.sigma);
        const std::vector<double> x = model.encode(z, ex.sigma, null_cond, no_hint);
        const std::vector<double> out = model.forward(x, &ws);
        std::vector<double> dout(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!std::isfinite(out[i])) {
                throw numeric_error("fm_loss: non-finite forward output");
            }
            const double err = out[i] - static_cast<double>(target[i]);
            result.loss += err * err * scale;
            dout[i] = 2.0 * err * scale;
        }
        model.backward(ws, dout, result.grads);
    }
    return result;
}

struct AdamState {
    MlpFieldModel::Gradients m;
    MlpFieldModel::Gradients v;
    long timestep = 0;

    static AdamState zeros_like(const MlpFieldModel& model) {
        AdamState s;
        s.m = MlpFieldModel::Gradients::zeros_like(model);
        s.v = MlpFieldModel::Gradients::zeros_like(model);
        return s;
    }
};

// Bias-corrected Adam over parameters in declaration order: for each layer,
// weights row-major then biases.
inline void adam_step(MlpFieldModel& model, const MlpFieldModel::Gradients& grads,
                      AdamState& state, const TrainConfig& cfg) {
    if (grads.layers.size() != model.layer_count() ||
        state.m.layers.size() != model.layer_count()) {
        throw config_error("adam_step: gradient/state layout does not match model");
    }
    state.timestep += 1;
    const double t = static_cast<double>(state.timestep);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
        if (g.size() != p.size()) throw config_error("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    };
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        update(model.layer(l).w, grads.layers[l].w, state.m.layers[l].w, state.v.layers[l].w);
        update(model.layer(l).b, grads.layers[l].b, state.m.layers[l].b, state.v.layers[l].b);
    }
}

struct TrainResult {
    MlpFieldModel model;
    std::vector<double> loss_curve;  // one batch loss per optimizer step
    double holdout_initial = 0.0;
    double holdout_final = 0.0;
};

// One model per style. Child streams of the config seed:
//   child(0) weight init, child(1) batch data, child(2) held-out batch.
// Per example the data stream draws x_data, then eps, then sigma ~ U(0,1).
inline TrainResult train_style(const StyleDataset& dataset, const MlpConfig& mlp_cfg,
                               const TrainConfig& cfg) {
    dataset.validate();
    cfg.validate();
    if (mlp_cfg.latent != dataset.shape) {
        throw config_error("train_style: model latent shape " + mlp_cfg.latent.str() +
                           " does not match dataset shape " + dataset.shape.str());
    }
    RngState root(cfg.seed);
    RngState rng_init = root.child(0);
    RngState rng_data = root.child(1);
    RngState rng_holdout = root.child(2);

    auto draw = [&dataset](RngState& rng, int n) {
        std::vector<TrainExample> batch(static_cast<std::size_t>(n));
        for (auto& ex : batch) {
            ex.x_data = dataset.sample(rng);
            ex.eps = gaussian_sample(rng, dataset.shape);
            ex.sigma = static_cast<float>(rng.next_unit());
        }
        return batch;
    };

    TrainResult result;
    result.model = MlpFieldModel::init(mlp_cfg, rng_init);
    const std::vector<TrainExample> holdout = draw(rng_holdout, cfg.holdout);
    result.holdout_initial = fm_loss(result.model, holdout).loss;

    AdamState adam = AdamState::zeros_like(result.model);
    result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        const std::vector<TrainExample> batch = draw(rng_data, cfg.batch);
        LossGrads lg = fm_loss(result.model, batch);
        if (!std::isfinite(lg.loss)) {
            throw numeric_error("training diverged at step " + std::to_string(step) +
                                ": loss is not finite");
        }
        adam_step(result.model, lg.grads, adam, cfg);
        result.loss_curve.push_back(lg.loss);
    }
    result.holdout_final = cfg.steps > 0 ? fm_loss(result.model, holdout).loss
                                         : result.holdout_initial;
    return result;
}

}  // namespace flowcomp
