#pragma once

// Test-side reference implementations, written directly from the operation
// definitions and kept independent of the library kernels they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "reefgrad/tensor.hpp"

namespace oracles {

/// Direct convolution over an explicitly zero-padded buffer; quadruple nested
/// output loop, innermost (c, kh, kw) accumulation.
inline reefgrad::TensorD conv2d_direct(const reefgrad::TensorD& input,
                                       const reefgrad::TensorD& kernels,
                                       const reefgrad::TensorD& bias, std::size_t stride,
                                       std::size_t padding) {
    const std::size_t n_batch = input.dim(0), channels = input.dim(1);
    const std::size_t in_h = input.dim(2), in_w = input.dim(3);
    const std::size_t n_kernels = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const std::size_t pad_h = in_h + 2 * padding, pad_w = in_w + 2 * padding;
    const std::size_t out_h = (pad_h - kh) / stride + 1;
    const std::size_t out_w = (pad_w - kw) / stride + 1;

    // Zero-padded copy of the input.
    reefgrad::TensorD padded({n_batch, channels, pad_h, pad_w});
    for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < in_h; ++y)
                for (std::size_t x = 0; x < in_w; ++x)
                    padded.at4(n, c, y + padding, x + padding) = input.at4(n, c, y, x);

    reefgrad::TensorD out({n_batch, n_kernels, out_h, out_w});
    for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t k = 0; k < n_kernels; ++k)
            for (std::size_t oh = 0; oh < out_h; ++oh)
                for (std::size_t ow = 0; ow < out_w; ++ow) {
                    double acc = bias[k];
                    for (std::size_t c = 0; c < channels; ++c)
                        for (std::size_t i = 0; i < kh; ++i)
                            for (std::size_t j = 0; j < kw; ++j)
                                acc += padded.at4(n, c, oh * stride + i, ow * stride + j) *
                                       kernels.at4(k, c, i, j);
                    out.at4(n, k, oh, ow) = acc;
                }
    return out;
}

/// Nested-loop max pooling, no argmax bookkeeping.
inline reefgrad::TensorD maxpool_direct(const reefgrad::TensorD& input, std::size_t window,
                                        std::size_t stride) {
    const std::size_t n_batch = input.dim(0), channels = input.dim(1);
    const std::size_t in_h = input.dim(2), in_w = input.dim(3);
    const std::size_t out_h = (in_h - window) / stride + 1;
    const std::size_t out_w = (in_w - window) / stride + 1;
    reefgrad::TensorD out({n_batch, channels, out_h, out_w});
    for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t oh = 0; oh < out_h; ++oh)
                for (std::size_t ow = 0; ow < out_w; ++ow) {
                    double best = input.at4(n, c, oh * stride, ow * stride);
                    for (std::size_t i = 0; i < window; ++i)
                        for (std::size_t j = 0; j < window; ++j)
                            best = std::max(best,
                                            input.at4(n, c, oh * stride + i, ow * stride + j));
                    out.at4(n, c, oh, ow) = best;
                }
    return out;
}

/// One scalar Adam trajectory, maintained independently of the library state.
struct ScalarAdam {
    double m = 0.0;
    double v = 0.0;
    std::size_t t = 0;

    double step(double param, double grad, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad * grad;
        const double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
        const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
        return param - lr * m_hat / (std::sqrt(v_hat) + eps);
    }
};

/// |a - b| <= tol * max(1, |a|, |b|).
inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Central finite difference of a scalar function with respect to x[i].
inline double central_diff(const std::function<double()>& f, reefgrad::TensorD& x, std::size_t i,
                           double step = 1e-3) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f();
    x[i] = orig - step;
    const double down = f();
    x[i] = orig;
    return (up - down) / (2.0 * step);
}

/// Checks every component of `analytic` (the gradient of f with respect to x)
/// against central differences. Returns the worst relative discrepancy info.
struct GradCheckResult {
    bool ok = true;
    double worst = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

inline GradCheckResult check_gradient(const std::function<double()>& f, reefgrad::TensorD& x,
                                      const reefgrad::TensorD& analytic, double tol,
                                      double step = 1e-3) {
    GradCheckResult result;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double numeric = central_diff(f, x, i, step);
        const double a = analytic[i];
        const double err =
            std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        if (err > result.worst) {
            result.worst = err;
            result.worst_index = i;
            result.analytic_at_worst = a;
            result.numeric_at_worst = numeric;
        }
        if (err > tol) {
            result.ok = false;
        }
    }
    return result;
}

inline reefgrad::TensorD random_tensor(std::vector<std::size_t> shape, std::mt19937& rng,
                                       double lo = -1.0, double hi = 1.0) {
    reefgrad::TensorD t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

/// Uniform values bounded away from zero, for checks around ReLU/maxpool kinks.
inline reefgrad::TensorD random_tensor_off_kink(std::vector<std::size_t> shape, std::mt19937& rng,
                                                double margin = 0.05) {
    reefgrad::TensorD t(std::move(shape));
    std::uniform_real_distribution<double> dist(margin, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t[i] = sign(rng) ? dist(rng) : -dist(rng);
    }
    return t;
}

} // namespace oracles
