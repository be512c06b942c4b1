// Minimal dense feed-forward network engine: forward pass with a reusable
// tape, reverse-mode gradients, SGD with a 1/sqrt(k) schedule, Adam, and a
// value-exact JSON checkpoint format. Everything is double precision.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "rng.hpp"

namespace e2eso::nnet {

enum class Activation { linear, relu, sigmoid, softplus };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softplus: return "softplus";
    }
    throw ContractError("activation_name: unknown activation");
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softplus") return Activation::softplus;
    throw ConfigError("unknown activation: " + name);
}

/// Numerically stable logistic function.
inline double stable_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::linear: return z;
        // The subgradient convention at z == 0 picks 0, matching the slope
        // branch below.
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return stable_sigmoid(z);
        case Activation::softplus:
            if (z > 30.0) return z;
            if (z < -30.0) return std::exp(z);
            return std::log1p(std::exp(z));
    }
    throw ContractError("apply_activation: unknown activation");
}

/// Derivative of the activation given pre-activation z and output h.
inline double activation_slope(Activation a, double z, double h) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return h * (1.0 - h);
        case Activation::softplus: return stable_sigmoid(z);
    }
    throw ContractError("activation_slope: unknown activation");
}

/// Fully connected network. weights[l] has shape (layer_dims[l+1],
/// layer_dims[l]); biases[l] is either that layer's bias vector or empty,
/// in which case the layer has no intercept term and none is ever trained.
struct Mlp {
    std::vector<std::size_t> layer_dims;   // input dim followed by each layer's width
    std::vector<Activation> activations;   // one per layer
    std::vector<Matrix> weights;
    std::vector<Vec> biases;
    std::uint64_t init_seed = 0;
    std::uint64_t revision = 0;            // bumped by every in-place parameter change

    std::size_t layer_count() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& w : weights)
            n += w.size();
        for (const auto& b : biases)
            n += b.size();
        return n;
    }
};

/// Per-parameter tensor container mirroring an Mlp's shapes; used for
/// gradients and optimizer moments.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vec> biases;

    static Gradients zeros_like(const Mlp& net) {
        Gradients g;
        g.weights.reserve(net.weights.size());
        for (const auto& w : net.weights)
            g.weights.emplace_back(w.rows, w.cols);
        g.biases.reserve(net.biases.size());
        for (const auto& b : net.biases)
            g.biases.emplace_back(b.size(), 0.0);
        return g;
    }

    void zero() {
        for (auto& w : weights)
            w.data.assign(w.data.size(), 0.0);
        for (auto& b : biases)
            b.assign(b.size(), 0.0);
    }

    /// this += scale * other (shapes must match).
    void accumulate(const Gradients& other, double scale = 1.0) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].data.size(); ++i)
                weights[l].data[i] += scale * other.weights[l].data[i];
            for (std::size_t i = 0; i < biases[l].size(); ++i)
                biases[l][i] += scale * other.biases[l][i];
        }
    }

    void scale(double s) {
        for (auto& w : weights)
            for (double& v : w.data)
                v *= s;
        for (auto& b : biases)
            for (double& v : b)
                v *= s;
    }

    double squared_norm() const {
        double acc = 0.0;
        for (const auto& w : weights)
            acc += dot(w.data, w.data);
        for (const auto& b : biases)
            acc += dot(b, b);
        return acc;
    }

    bool finite() const {
        for (const auto& w : weights)
            if (!all_finite(w.data))
                return false;
        for (const auto& b : biases)
            if (!all_finite(b))
                return false;
        return true;
    }

    bool same_shape(const Mlp& net) const {
        if (weights.size() != net.weights.size() || biases.size() != net.biases.size())
            return false;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (weights[l].rows != net.weights[l].rows || weights[l].cols != net.weights[l].cols ||
                biases[l].size() != net.biases[l].size())
                return false;
        return true;
    }
};

/// Intermediate activations of one forward pass, consumed by backward().
/// The revision stamp detects tapes that outlived a parameter update.
struct ForwardTape {
    Vec input;
    std::vector<Vec> pre;    // pre-activation per layer
    std::vector<Vec> post;   // post-activation per layer
    std::uint64_t revision = UINT64_MAX;
};

/**
 * @brief Evaluate the network on x.
 *
 * When a tape is supplied, the pre- and post-activations of every layer are
 * recorded so a subsequent backward() can run without recomputation.
 */
inline Vec forward(const Mlp& net, std::span<const double> x, ForwardTape* tape = nullptr) {
    if (x.size() != net.input_dim())
        throw DomainError("forward: input has dimension " + std::to_string(x.size()) +
                          ", network expects " + std::to_string(net.input_dim()));
    if (tape) {
        tape->input.assign(x.begin(), x.end());
        tape->pre.assign(net.layer_count(), Vec{});
        tape->post.assign(net.layer_count(), Vec{});
        tape->revision = net.revision;
    }
    Vec h(x.begin(), x.end());
    Vec z;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        matvec(net.weights[l], h, z);
        if (!net.biases[l].empty())
            for (std::size_t i = 0; i < z.size(); ++i)
                z[i] += net.biases[l][i];
        if (tape)
            tape->pre[l] = z;
        h.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            h[i] = apply_activation(net.activations[l], z[i]);
        if (tape)
            tape->post[l] = h;
    }
    return h;
}

/**
 * @brief Reverse-mode gradient of a scalar loss through the network.
 *
 * upstream holds dLoss/dOutput for the forward pass recorded on the tape.
 * Returns the parameter gradient; when input_grad is non-null it receives
 * dLoss/dInput so sensitivities can be chained further.
 *
 * The tape must come from a forward() on the current parameters; a tape
 * recorded before a parameter update is rejected.
 */
inline Gradients backward(const Mlp& net, const ForwardTape& tape,
                          std::span<const double> upstream, Vec* input_grad = nullptr) {
    if (tape.revision != net.revision)
        throw ContractError("backward: tape is stale (parameters changed since forward)");
    if (upstream.size() != net.output_dim())
        throw DomainError("backward: upstream has dimension " + std::to_string(upstream.size()) +
                          ", network output is " + std::to_string(net.output_dim()));
    Gradients grad = Gradients::zeros_like(net);
    // delta = dLoss/d(pre-activation of current layer)
    Vec delta(upstream.begin(), upstream.end());
    for (std::size_t l = net.layer_count(); l-- > 0;) {
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] *= activation_slope(net.activations[l], tape.pre[l][i], tape.post[l][i]);
        const Vec& below = l == 0 ? tape.input : tape.post[l - 1];
        Matrix& gw = grad.weights[l];
        for (std::size_t i = 0; i < gw.rows; ++i) {
            const double di = delta[i];
            double* row = gw.data.data() + i * gw.cols;
            for (std::size_t j = 0; j < gw.cols; ++j)
                row[j] = di * below[j];
        }
        if (!net.biases[l].empty())
            for (std::size_t i = 0; i < delta.size(); ++i)
                grad.biases[l][i] = delta[i];
        if (l > 0 || input_grad) {
            Vec next;
            matvec_transpose(net.weights[l], delta, next);
            delta = std::move(next);
        }
    }
    if (input_grad)
        *input_grad = std::move(delta);
    return grad;
}

/**
 * @brief Construct a network with deterministic, seed-keyed initialization.
 *
 * ReLU layers draw He-normal weights (stdev sqrt(2/fan_in)); all other
 * activations draw Glorot-uniform weights on [-sqrt(6/(fan_in+fan_out)),
 * +sqrt(6/(fan_in+fan_out))]. Biases start at zero. With with_bias false the
 * layers carry no intercept at all.
 */
inline Mlp init_weights(const std::vector<std::size_t>& layer_dims,
                        const std::vector<Activation>& activations, std::uint64_t seed,
                        bool with_bias = true) {
    if (layer_dims.size() < 2)
        throw ConfigError("init_weights: need an input dimension and at least one layer");
    if (activations.size() != layer_dims.size() - 1)
        throw ConfigError("init_weights: expected " + std::to_string(layer_dims.size() - 1) +
                          " activations, got " + std::to_string(activations.size()));
    for (std::size_t d : layer_dims)
        if (d == 0)
            throw ConfigError("init_weights: zero-width layer");

    Mlp net;
    net.layer_dims = layer_dims;
    net.activations = activations;
    net.init_seed = seed;
    Rng rng = Rng::at(seed, /*stream=*/0x5eedULL, 0);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        Matrix w(fan_out, fan_in);
        if (activations[l] == Activation::relu) {
            const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : w.data)
                v = rng.normal(0.0, sd);
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (double& v : w.data)
                v = rng.uniform(-limit, limit);
        }
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(with_bias ? fan_out : 0, 0.0);
    }
    return net;
}

/// Optimizer state. sgd_sqrt applies w -= (base_step / sqrt(k)) * g at the
/// k-th call (k starts at 1); adam uses the fixed base_step with the usual
/// bias-corrected moment estimates; adam_sqrt keeps the moment estimates
/// but decays the step as base_step / sqrt(k), so its stationary noise
/// floor vanishes like plain decayed SGD while the per-coordinate scaling
/// is preserved.
struct OptimState {
    enum class Kind { sgd_sqrt, adam, adam_sqrt };

    Kind kind = Kind::sgd_sqrt;
    double base_step = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step_count = 0;
    Gradients first_moment;    // adam only, sized lazily
    Gradients second_moment;   // adam only

    static OptimState sgd(double eta0) {
        if (!(eta0 > 0.0))
            throw ConfigError("sgd: step size must be positive");
        OptimState s;
        s.kind = Kind::sgd_sqrt;
        s.base_step = eta0;
        return s;
    }

    static OptimState adam(double eta0, double beta1 = 0.9, double beta2 = 0.999,
                           double epsilon = 1e-8) {
        if (!(eta0 > 0.0))
            throw ConfigError("adam: step size must be positive");
        OptimState s;
        s.kind = Kind::adam;
        s.base_step = eta0;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.epsilon = epsilon;
        return s;
    }

    static OptimState adam_sqrt(double eta0, double beta1 = 0.9, double beta2 = 0.999,
                                double epsilon = 1e-8) {
        OptimState s = adam(eta0, beta1, beta2, epsilon);
        s.kind = Kind::adam_sqrt;
        return s;
    }
};

/// Step size the next step() call will apply (for sgd_sqrt and adam_sqrt
/// this is base_step / sqrt(step_count + 1); adam reports its base step).
inline double next_step_size(const OptimState& opt) {
    if (opt.kind == OptimState::Kind::adam)
        return opt.base_step;
    return opt.base_step / std::sqrt(static_cast<double>(opt.step_count + 1));
}

/// Apply one optimizer update in place and advance the step counter.
inline void step(Mlp& net, OptimState& opt, const Gradients& grad) {
    if (!grad.same_shape(net))
        throw ContractError("step: gradient shapes do not match the network");
    const std::uint64_t k = opt.step_count + 1;
    if (opt.kind == OptimState::Kind::sgd_sqrt) {
        const double eta = opt.base_step / std::sqrt(static_cast<double>(k));
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            for (std::size_t i = 0; i < net.weights[l].data.size(); ++i)
                net.weights[l].data[i] -= eta * grad.weights[l].data[i];
            for (std::size_t i = 0; i < net.biases[l].size(); ++i)
                net.biases[l][i] -= eta * grad.biases[l][i];
        }
    } else {
        if (opt.first_moment.weights.empty()) {
            opt.first_moment = Gradients::zeros_like(net);
            opt.second_moment = Gradients::zeros_like(net);
        }
        if (!opt.first_moment.same_shape(net))
            throw ContractError("step: adam state does not match the network");
        const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(k));
        const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(k));
        const double rate = opt.kind == OptimState::Kind::adam_sqrt
                                ? opt.base_step / std::sqrt(static_cast<double>(k))
                                : opt.base_step;
        auto update = [&](double& w, double& m, double& v, double g) {
            m = opt.beta1 * m + (1.0 - opt.beta1) * g;
            v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
            w -= rate * (m / c1) / (std::sqrt(v / c2) + opt.epsilon);
        };
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            for (std::size_t i = 0; i < net.weights[l].data.size(); ++i)
                update(net.weights[l].data[i], opt.first_moment.weights[l].data[i],
                       opt.second_moment.weights[l].data[i], grad.weights[l].data[i]);
            for (std::size_t i = 0; i < net.biases[l].size(); ++i)
                update(net.biases[l][i], opt.first_moment.biases[l][i],
                       opt.second_moment.biases[l][i], grad.biases[l][i]);
        }
    }
    opt.step_count = k;
    ++net.revision;
}

inline nlohmann::json checkpoint_json(const Mlp& net) {
    nlohmann::json j;
    j["format"] = "e2eso-mlp-v1";
    j["layer_dims"] = net.layer_dims;
    nlohmann::json acts = nlohmann::json::array();
    for (Activation a : net.activations)
        acts.push_back(activation_name(a));
    j["activations"] = std::move(acts);
    nlohmann::json ws = nlohmann::json::array();
    for (const auto& w : net.weights)
        ws.push_back(w.data);
    j["weights"] = std::move(ws);
    nlohmann::json bs = nlohmann::json::array();
    for (const auto& b : net.biases)
        bs.push_back(b);
    j["biases"] = std::move(bs);
    j["init_seed"] = net.init_seed;
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "e2eso-mlp-v1")
            throw FormatError("checkpoint: unsupported format tag");
        Mlp net;
        net.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
        if (net.layer_dims.size() < 2)
            throw FormatError("checkpoint: fewer than two layer dimensions");
        for (const auto& a : j.at("activations"))
            net.activations.push_back(activation_from_name(a.get<std::string>()));
        if (net.activations.size() != net.layer_dims.size() - 1)
            throw FormatError("checkpoint: activation count does not match layers");
        const auto& ws = j.at("weights");
        const auto& bs = j.at("biases");
        if (ws.size() != net.activations.size() || bs.size() != net.activations.size())
            throw FormatError("checkpoint: tensor count does not match layers");
        for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
            Matrix w(net.layer_dims[l + 1], net.layer_dims[l]);
            Vec flat = ws[l].get<Vec>();
            if (flat.size() != w.data.size())
                throw FormatError("checkpoint: weight tensor size mismatch at layer " +
                                  std::to_string(l));
            w.data = std::move(flat);
            net.weights.push_back(std::move(w));
            Vec b = bs[l].get<Vec>();
            if (!b.empty() && b.size() != net.layer_dims[l + 1])
                throw FormatError("checkpoint: bias size mismatch at layer " + std::to_string(l));
            net.biases.push_back(std::move(b));
        }
        net.init_seed = j.at("init_seed").get<std::uint64_t>();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const Mlp& net, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open checkpoint for writing: " + path);
    out << checkpoint_json(net).dump(2) << '\n';
    if (!out)
        throw IoError("failed writing checkpoint: " + path);
}

inline Mlp load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    return mlp_from_json(j);
}

}  // namespace e2eso::nnet
