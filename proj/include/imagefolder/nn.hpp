#pragma once

// Small trainable layers with hand-written backward passes, and Adam.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imagefolder/error.hpp"
#include "imagefolder/rng.hpp"

namespace imagefolder {

/// A named view onto one parameter tensor and its gradient accumulator.
struct ParamRef {
    std::string name;
    std::span<double> value;
    std::span<double> grad;
};

using ParamList = std::vector<ParamRef>;

inline void zero_grads(const ParamList& params) {
    for (const auto& p : params)
        for (double& g : p.grad) g = 0.0;
}

inline void scale_grads(const ParamList& params, double s) {
    for (const auto& p : params)
        for (double& g : p.grad) g *= s;
}

struct LinearLayer {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<double> weights;  // out_dim x in_dim, row-major
    std::vector<double> bias;
    std::vector<double> grad_weights;
    std::vector<double> grad_bias;

    LinearLayer() = default;
    LinearLayer(int in, int out) : in_dim(in), out_dim(out) {
        detail::require_arg(in > 0 && out > 0, "linear layer dims must be positive");
        weights.assign(static_cast<std::size_t>(in) * out, 0.0);
        bias.assign(out, 0.0);
        grad_weights.assign(weights.size(), 0.0);
        grad_bias.assign(out, 0.0);
    }

    void init_gaussian(Rng& rng, double stddev) {
        for (double& w : weights) w = rng.normal(0.0, stddev);
        for (double& b : bias) b = 0.0;
    }

    void append_params(ParamList& out, const std::string& prefix) {
        out.push_back({prefix + ".weight", weights, grad_weights});
        out.push_back({prefix + ".bias", bias, grad_bias});
    }
};

/// y = W x + b
inline std::vector<double> linear_forward(const LinearLayer& layer, std::span<const double> x) {
    detail::require_arg(static_cast<int>(x.size()) == layer.in_dim, "linear_forward: input size mismatch");
    std::vector<double> y(layer.bias);
    for (int o = 0; o < layer.out_dim; ++o) {
        const double* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
        double s = 0.0;
        for (int i = 0; i < layer.in_dim; ++i) s += row[i] * x[i];
        y[o] += s;
    }
    return y;
}

/// Accumulates dW += dy x^T and db += dy; returns dx = W^T dy.
inline std::vector<double> linear_backward(LinearLayer& layer, std::span<const double> x, std::span<const double> dy) {
    detail::require_arg(static_cast<int>(x.size()) == layer.in_dim && static_cast<int>(dy.size()) == layer.out_dim,
                        "linear_backward: size mismatch");
    std::vector<double> dx(layer.in_dim, 0.0);
    for (int o = 0; o < layer.out_dim; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        const std::size_t row = static_cast<std::size_t>(o) * layer.in_dim;
        layer.grad_bias[o] += g;
        for (int i = 0; i < layer.in_dim; ++i) {
            layer.grad_weights[row + i] += g * x[i];
            dx[i] += layer.weights[row + i] * g;
        }
    }
    return dx;
}

inline std::vector<double> relu(std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    return y;
}

/// Gradient through ReLU given the pre-activation.
inline std::vector<double> relu_backward(std::span<const double> pre, std::span<const double> dy) {
    std::vector<double> dx(dy.begin(), dy.end());
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(pre[i] > 0.0)) dx[i] = 0.0;
    return dx;
}

/// Activations recorded by Mlp::forward and consumed by Mlp::backward.
struct MlpTrace {
    bool recorded = false;
    std::vector<double> input;
    std::vector<double> hidden_pre;
    std::vector<double> hidden;
};

/// Linear -> ReLU -> Linear.
struct Mlp {
    LinearLayer first;
    LinearLayer second;

    Mlp() = default;
    Mlp(int in, int hidden, int out) : first(in, hidden), second(hidden, out) {}

    int in_dim() const { return first.in_dim; }
    int out_dim() const { return second.out_dim; }

    void init_gaussian(Rng& rng, double stddev) {
        first.init_gaussian(rng, stddev);
        second.init_gaussian(rng, stddev);
    }

    std::vector<double> forward(std::span<const double> x) const {
        return linear_forward(second, relu(linear_forward(first, x)));
    }

    std::vector<double> forward(std::span<const double> x, MlpTrace& trace) const {
        trace.input.assign(x.begin(), x.end());
        trace.hidden_pre = linear_forward(first, x);
        trace.hidden = relu(trace.hidden_pre);
        trace.recorded = true;
        return linear_forward(second, trace.hidden);
    }

    /// Accumulates parameter gradients; returns the input gradient.
    std::vector<double> backward(const MlpTrace& trace, std::span<const double> dy) {
        detail::require(trace.recorded, ErrorCode::invalid_state, "Mlp::backward called without a recorded forward pass");
        const auto dh = linear_backward(second, trace.hidden, dy);
        const auto dpre = relu_backward(trace.hidden_pre, dh);
        return linear_backward(first, trace.input, dpre);
    }

    void append_params(ParamList& out, const std::string& prefix) {
        first.append_params(out, prefix + ".0");
        second.append_params(out, prefix + ".1");
    }
};

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    AdamState() = default;
    explicit AdamState(double lr) : learning_rate(lr) {}
};

/// Bias-corrected Adam update applied in place. Moments are allocated on the
/// first call from the parameter shapes.
inline void adam_step(const ParamList& params, AdamState& state) {
    for (const auto& p : params)
        for (double g : p.grad)
            if (!std::isfinite(g)) throw Error(ErrorCode::training_diverged, "non-finite gradient in " + p.name);
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.value.size(), 0.0);
            state.second_moment.emplace_back(p.value.size(), 0.0);
        }
    }
    detail::require_arg(state.first_moment.size() == params.size(), "adam_step: parameter count changed");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        const auto& p = params[k];
        detail::require_arg(m.size() == p.value.size(), "adam_step: shape mismatch for " + p.name);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

}  // namespace imagefolder
