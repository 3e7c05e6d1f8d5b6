#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "flowcomp/rng.hpp"
#include "flowcomp/tensor.hpp"
#include "flowcomp/velocity.hpp"

namespace flowcomp {

struct MlpConfig {
    Shape latent;
    int embed_dim = 8;         // conditioning embedding length
    std::vector<int> hidden;   // hidden layer widths, may be empty

    bool operator==(const MlpConfig& other) const = default;
};

// Small fully-connected velocity field. Input encoding, in order:
//   flattened z  |  sinusoidal sigma embedding  |  conditioning embedding
//   (zeros when null)  |  flattened depth (zeros when absent).
// Hidden layers use tanh; the output layer is linear so velocities are
// unbounded. Parameters are kept in double for stable training and exact
// finite-difference checks; tensors at the interface stay float32.
class MlpFieldModel : public VelocityModel {
public:
    static constexpr int kSigmaFrequencies = 4;  // sin/cos pairs -> 8 features

    struct Layer {
        int in = 0;
        int out = 0;
        std::vector<double> w;  // row-major [out][in]
        std::vector<double> b;  // [out]
    };

    MlpFieldModel() = default;

    static int encoding_dim(const MlpConfig& cfg) {
        return static_cast<int>(cfg.latent.size()) + 2 * kSigmaFrequencies + cfg.embed_dim +
               cfg.latent.height * cfg.latent.width;
    }

    // Weights drawn uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
    // row-major per layer in declaration order; biases start at zero.
    static MlpFieldModel init(const MlpConfig& cfg, RngState& rng) {
        if (!cfg.latent.valid() || cfg.embed_dim < 0) {
            throw config_error("invalid MLP config");
        }
        for (int hsize : cfg.hidden) {
            if (hsize <= 0) throw config_error("hidden layer sizes must be positive");
        }
        MlpFieldModel m;
        m.cfg_ = cfg;
        std::vector<int> sizes = layer_sizes(cfg);
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            Layer layer;
            layer.in = sizes[l];
            layer.out = sizes[l + 1];
            const double a = std::sqrt(6.0 / (layer.in + layer.out));
            layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
            for (double& wv : layer.w) wv = (2.0 * rng.next_unit() - 1.0) * a;
            layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
            m.layers_.push_back(std::move(layer));
        }
        return m;
    }

    static MlpFieldModel from_layers(const MlpConfig& cfg, std::vector<Layer> layers) {
        std::vector<int> sizes = layer_sizes(cfg);
        if (layers.size() + 1 != sizes.size()) {
            throw config_error("layer count does not match config");
        }
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].in != sizes[l] || layers[l].out != sizes[l + 1] ||
                layers[l].w.size() != static_cast<std::size_t>(sizes[l]) * sizes[l + 1] ||
                layers[l].b.size() != static_cast<std::size_t>(sizes[l + 1])) {
                throw config_error("layer " + std::to_string(l) + " dimensions do not match config");
            }
        }
        MlpFieldModel m;
        m.cfg_ = cfg;
        m.layers_ = std::move(layers);
        return m;
    }

    static std::vector<int> layer_sizes(const MlpConfig& cfg) {
        std::vector<int> sizes;
        sizes.push_back(encoding_dim(cfg));
        for (int hsize : cfg.hidden) sizes.push_back(hsize);
        sizes.push_back(static_cast<int>(cfg.latent.size()));
        return sizes;
    }

    const MlpConfig& config() const { return cfg_; }
    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t l) { return layers_[l]; }
    const Layer& layer(std::size_t l) const { return layers_[l]; }

    std::vector<double> encode(const Tensor& z, float sigma, const Conditioning& condition,
                               const StructureHint& structure) const {
        if (z.shape() != cfg_.latent) {
            throw config_error("mlp encode: latent shape " + z.shape().str() +
                               " does not match model shape " + cfg_.latent.str());
        }
        std::vector<double> x;
        x.reserve(static_cast<std::size_t>(encoding_dim(cfg_)));
        for (std::size_t i = 0; i < z.size(); ++i) x.push_back(z[i]);
        for (int j = 0; j < kSigmaFrequencies; ++j) {
            const double arg = M_PI * std::ldexp(1.0, j) * static_cast<double>(sigma);
            x.push_back(std::sin(arg));
            x.push_back(std::cos(arg));
        }
        if (condition.is_null()) {
            x.insert(x.end(), static_cast<std::size_t>(cfg_.embed_dim), 0.0);
        } else {
            if (condition.embedding().size() != static_cast<std::size_t>(cfg_.embed_dim)) {
                throw config_error("conditioning embedding length " +
                                   std::to_string(condition.embedding().size()) +
                                   " does not match model embed_dim " +
                                   std::to_string(cfg_.embed_dim));
            }
            for (float e : condition.embedding()) x.push_back(e);
        }
        const std::size_t plane =
            static_cast<std::size_t>(cfg_.latent.height) * cfg_.latent.width;
        if (structure.has_depth()) {
            const Tensor& d = structure.depth();
            if (d.shape().height != cfg_.latent.height || d.shape().width != cfg_.latent.width) {
                throw config_error("structure hint shape " + d.shape().str() +
                                   " does not match latent spatial shape " + cfg_.latent.str());
            }
            for (std::size_t i = 0; i < plane; ++i) x.push_back(d[i]);
        } else {
            x.insert(x.end(), plane, 0.0);
        }
        return x;
    }

    // Per-layer inputs and pre-activations cached for reverse mode.
    struct Workspace {
        std::vector<std::vector<double>> inputs;
        std::vector<std::vector<double>> preacts;
    };

    std::vector<double> forward(const std::vector<double>& x, Workspace* ws = nullptr) const {
        if (x.size() != static_cast<std::size_t>(encoding_dim(cfg_))) {
            throw config_error("mlp forward: input dim " + std::to_string(x.size()) +
                               " does not match encoding dim " +
                               std::to_string(encoding_dim(cfg_)));
        }
        if (ws) {
            ws->inputs.clear();
            ws->preacts.clear();
        }
        std::vector<double> act = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            if (ws) ws->inputs.push_back(act);
            std::vector<double> pre(static_cast<std::size_t>(layer.out));
            for (int r = 0; r < layer.out; ++r) {
                const double* row = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
                double acc = layer.b[static_cast<std::size_t>(r)];
                for (int c = 0; c < layer.in; ++c) acc += row[c] * act[static_cast<std::size_t>(c)];
                pre[static_cast<std::size_t>(r)] = acc;
            }
            if (ws) ws->preacts.push_back(pre);
            const bool last = (l + 1 == layers_.size());
            if (last) {
                act = std::move(pre);
            } else {
                act.resize(pre.size());
                for (std::size_t i = 0; i < pre.size(); ++i) act[i] = std::tanh(pre[i]);
            }
        }
        return act;
    }

    struct Gradients {
        struct LayerGrad {
            std::vector<double> w;
            std::vector<double> b;
        };
        std::vector<LayerGrad> layers;

        static Gradients zeros_like(const MlpFieldModel& model) {
            Gradients g;
            g.layers.resize(model.layer_count());
            for (std::size_t l = 0; l < model.layer_count(); ++l) {
                g.layers[l].w.assign(model.layer(l).w.size(), 0.0);
                g.layers[l].b.assign(model.layer(l).b.size(), 0.0);
            }
            return g;
        }
    };

    // Accumulates parameter gradients for one cached forward pass given
    // dL/d(output); returns nothing since input gradients are not needed.
    void backward(const Workspace& ws, const std::vector<double>& dout, Gradients& grads) const {
        std::vector<double> delta = dout;
        for (std::size_t li = layers_.size(); li-- > 0;) {
            const Layer& layer = layers_[li];
            const std::vector<double>& input = ws.inputs[li];
            auto& g = grads.layers[li];
            for (int r = 0; r < layer.out; ++r) {
                const double d = delta[static_cast<std::size_t>(r)];
                g.b[static_cast<std::size_t>(r)] += d;
                double* grow = g.w.data() + static_cast<std::size_t>(r) * layer.in;
                for (int c = 0; c < layer.in; ++c) grow[c] += d * input[static_cast<std::size_t>(c)];
            }
            if (li == 0) break;
            std::vector<double> prev(static_cast<std::size_t>(layer.in), 0.0);
            for (int r = 0; r < layer.out; ++r) {
                const double d = delta[static_cast<std::size_t>(r)];
                const double* row = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
                for (int c = 0; c < layer.in; ++c) prev[static_cast<std::size_t>(c)] += d * row[c];
            }
            // the input to layer li was tanh(pre) of layer li-1
            const std::vector<double>& pre = ws.preacts[li - 1];
            for (std::size_t c = 0; c < prev.size(); ++c) {
                const double t = std::tanh(pre[c]);
                prev[c] *= 1.0 - t * t;
            }
            delta = std::move(prev);
        }
    }

    Tensor evaluate(const Tensor& z, float sigma, const Conditioning& condition,
                    const StructureHint& structure) const override {
        const std::vector<double> out = forward(encode(z, sigma, condition, structure));
        Tensor v(cfg_.latent);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(out[i]);
        return v;
    }

    Shape latent_shape() const override { return cfg_.latent; }

private:
    MlpConfig cfg_;
    std::vector<Layer> layers_;
};

}  // namespace flowcomp
