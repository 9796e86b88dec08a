#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>

#include "reefgrad/layers.hpp"

namespace reefgrad {

/// w <- w - lr * g, elementwise.
template <typename T>
void sgd_step(TensorT<T>& param, const TensorT<T>& grad, T learning_rate) {
    if (!param.same_shape(grad)) {
        throw DimensionError("sgd_step: param " + param.shape_string() + " vs grad " +
                             grad.shape_string());
    }
    for (std::size_t i = 0; i < param.numel(); ++i) {
        param[i] -= learning_rate * grad[i];
    }
}

template <typename T>
struct AdamState {
    TensorT<T> m;
    TensorT<T> v;
};

/// Bias-corrected Adam update. `t` is the 1-based step count.
template <typename T>
void adam_step(TensorT<T>& param, const TensorT<T>& grad, AdamState<T>& state, std::size_t t,
               T learning_rate, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8)) {
    if (!param.same_shape(grad)) {
        throw DimensionError("adam_step: param " + param.shape_string() + " vs grad " +
                             grad.shape_string());
    }
    if (t < 1) {
        throw ArgumentError("adam_step: step count must be >= 1");
    }
    if (state.m.numel() == 0) {
        state.m = TensorT<T>(param.shape());
        state.v = TensorT<T>(param.shape());
    }
    if (!state.m.same_shape(param) || !state.v.same_shape(param)) {
        throw DimensionError("adam_step: moment state does not match param shape");
    }
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(t));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const T g = grad[i];
        state.m[i] = beta1 * state.m[i] + (T(1) - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (T(1) - beta2) * g * g;
        const T m_hat = state.m[i] / bc1;
        const T v_hat = state.v[i] / bc2;
        param[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + eps);
    }
}

/// Applies one update from a named gradient store, skipping frozen parameters
/// and parameters without a gradient entry.
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(std::vector<ParamT<float>*>& params, const GradStoreT<float>& grads) = 0;
};

class SgdOptimizer : public Optimizer {
public:
    explicit SgdOptimizer(float learning_rate) : lr_(learning_rate) {}

    void step(std::vector<ParamT<float>*>& params, const GradStoreT<float>& grads) override {
        for (auto* p : params) {
            if (p->frozen) continue;
            auto it = grads.find(p->name);
            if (it == grads.end()) continue;
            sgd_step(p->value, it->second, lr_);
        }
    }

private:
    float lr_;
};

class AdamOptimizer : public Optimizer {
public:
    explicit AdamOptimizer(float learning_rate, float beta1 = 0.9f, float beta2 = 0.999f,
                           float eps = 1e-8f)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<ParamT<float>*>& params, const GradStoreT<float>& grads) override {
        ++t_;
        for (auto* p : params) {
            if (p->frozen) continue;
            auto it = grads.find(p->name);
            if (it == grads.end()) continue;
            adam_step(p->value, it->second, states_[p->name], t_, lr_, beta1_, beta2_, eps_);
        }
    }

private:
    float lr_;
    float beta1_;
    float beta2_;
    float eps_;
    std::size_t t_ = 0;
    std::map<std::string, AdamState<float>> states_;
};

} // namespace reefgrad
