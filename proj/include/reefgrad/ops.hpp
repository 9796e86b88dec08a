#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "reefgrad/errors.hpp"
#include "reefgrad/tensor.hpp"

// Forward and backward numerical kernels. Every op is a pure function of its
// inputs; batchnorm's running-stats update is the one explicit mutation and is
// confined to the caller-owned BatchNormStats record.

namespace reefgrad {

/// Stride/padding geometry of a convolution. Padding is symmetric zero-padding.
struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
};

/// Output extent of a convolution/pooling axis. The formula
/// (in + 2*padding - kernel)/stride + 1 must be an integer >= 1.
inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
    if (stride == 0) {
        throw GeometryError("stride must be positive");
    }
    const std::size_t padded = in + 2 * padding;
    if (padded < kernel) {
        throw GeometryError("kernel " + std::to_string(kernel) + " exceeds padded input extent " +
                            std::to_string(padded));
    }
    const std::size_t span = padded - kernel;
    if (span % stride != 0) {
        throw GeometryError("geometry (" + std::to_string(in) + " + 2*" + std::to_string(padding) +
                            " - " + std::to_string(kernel) + ") is not divisible by stride " +
                            std::to_string(stride));
    }
    return span / stride + 1;
}

namespace detail {

template <typename T>
void check_conv_args(const TensorT<T>& input, const TensorT<T>& kernels, const TensorT<T>& bias,
                     const ConvGeometry& geom) {
    require_ndim(input, 4, "conv2d input");
    require_ndim(kernels, 4, "conv2d kernels");
    require_ndim(bias, 1, "conv2d bias");
    if (kernels.dim(1) != input.dim(1)) {
        throw DimensionError("conv2d: kernel channels " + std::to_string(kernels.dim(1)) +
                             " does not match input channels " + std::to_string(input.dim(1)));
    }
    if (bias.dim(0) != kernels.dim(0)) {
        throw DimensionError("conv2d: bias length " + std::to_string(bias.dim(0)) +
                             " does not match kernel count " + std::to_string(kernels.dim(0)));
    }
    if (geom.kernel_h != kernels.dim(2) || geom.kernel_w != kernels.dim(3)) {
        throw DimensionError("conv2d: geometry kernel " + std::to_string(geom.kernel_h) + "x" +
                             std::to_string(geom.kernel_w) + " does not match kernel tensor " +
                             kernels.shape_string());
    }
}

} // namespace detail

/// Reference direct convolution: one accumulator per output element, bias
/// first, then terms in (channel, kh, kw) order. Kept as the correctness
/// anchor for the optimized path.
template <typename T>
TensorT<T> conv2d_naive(const TensorT<T>& input, const TensorT<T>& kernels, const TensorT<T>& bias,
                        const ConvGeometry& geom) {
    detail::check_conv_args(input, kernels, bias, geom);
    const std::size_t n_batch = input.dim(0), channels = input.dim(1);
    const std::size_t in_h = input.dim(2), in_w = input.dim(3);
    const std::size_t n_kernels = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const std::size_t out_h = conv_output_extent(in_h, kh, geom.stride, geom.padding);
    const std::size_t out_w = conv_output_extent(in_w, kw, geom.stride, geom.padding);

    TensorT<T> out({n_batch, n_kernels, out_h, out_w});
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(geom.padding);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t k = 0; k < n_kernels; ++k) {
            for (std::size_t oh = 0; oh < out_h; ++oh) {
                for (std::size_t ow = 0; ow < out_w; ++ow) {
                    T acc = bias[k];
                    for (std::size_t c = 0; c < channels; ++c) {
                        for (std::size_t i = 0; i < kh; ++i) {
                            const std::ptrdiff_t ih =
                                static_cast<std::ptrdiff_t>(oh * geom.stride + i) - pad;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
                            for (std::size_t j = 0; j < kw; ++j) {
                                const std::ptrdiff_t iw =
                                    static_cast<std::ptrdiff_t>(ow * geom.stride + j) - pad;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in_w)) continue;
                                acc += input.at4(n, c, static_cast<std::size_t>(ih),
                                                 static_cast<std::size_t>(iw)) *
                                       kernels.at4(k, c, i, j);
                            }
                        }
                    }
                    out.at4(n, k, oh, ow) = acc;
                }
            }
        }
    }
    return out;
}

/// Optimized direct convolution. Vectorizes across output columns instead of
/// within the reduction, so every output element accumulates its terms in the
/// same (channel, kh, kw) order as conv2d_naive and the two paths agree
/// exactly.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernels, const TensorT<T>& bias,
                  const ConvGeometry& geom) {
    detail::check_conv_args(input, kernels, bias, geom);
    const std::size_t n_batch = input.dim(0), channels = input.dim(1);
    const std::size_t in_h = input.dim(2), in_w = input.dim(3);
    const std::size_t n_kernels = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const std::size_t stride = geom.stride;
    const std::size_t out_h = conv_output_extent(in_h, kh, stride, geom.padding);
    const std::size_t out_w = conv_output_extent(in_w, kw, stride, geom.padding);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(geom.padding);

    TensorT<T> out({n_batch, n_kernels, out_h, out_w});
    const std::size_t in_plane = in_h * in_w;
    const std::size_t out_plane = out_h * out_w;

    for (std::size_t n = 0; n < n_batch; ++n) {
        const T* in_base = input.data() + n * channels * in_plane;
        for (std::size_t k = 0; k < n_kernels; ++k) {
            T* out_k = out.data() + (n * n_kernels + k) * out_plane;
            std::fill(out_k, out_k + out_plane, bias[k]);
            for (std::size_t c = 0; c < channels; ++c) {
                const T* in_c = in_base + c * in_plane;
                const T* w_row = kernels.data() + ((k * channels + c) * kh) * kw;
                for (std::size_t i = 0; i < kh; ++i) {
                    for (std::size_t j = 0; j < kw; ++j) {
                        const T w = w_row[i * kw + j];
                        // Output rows whose sampled input row stays in bounds.
                        for (std::size_t oh = 0; oh < out_h; ++oh) {
                            const std::ptrdiff_t ih =
                                static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
                            // Clip the output column range so iw stays in bounds.
                            // iw = ow*stride + j - pad in [0, in_w).
                            std::size_t ow_begin = 0;
                            if (pad > static_cast<std::ptrdiff_t>(j)) {
                                const std::size_t deficit = static_cast<std::size_t>(pad) - j;
                                ow_begin = (deficit + stride - 1) / stride;
                            }
                            std::size_t ow_end = out_w;
                            {
                                // Largest ow with ow*stride + j - pad <= in_w - 1.
                                const std::ptrdiff_t limit =
                                    static_cast<std::ptrdiff_t>(in_w - 1) -
                                    static_cast<std::ptrdiff_t>(j) + pad;
                                if (limit < 0) {
                                    ow_end = ow_begin;
                                } else {
                                    ow_end = std::min<std::size_t>(
                                        out_w, static_cast<std::size_t>(limit) / stride + 1);
                                }
                            }
                            if (ow_begin >= ow_end) continue;
                            const T* __restrict in_row =
                                in_c + static_cast<std::size_t>(ih) * in_w;
                            T* __restrict out_row = out_k + oh * out_w;
                            const std::ptrdiff_t col0 =
                                static_cast<std::ptrdiff_t>(ow_begin * stride + j) - pad;
                            const T* in_ptr = in_row + col0;
                            if (stride == 1) {
                                const std::size_t len = ow_end - ow_begin;
                                T* o = out_row + ow_begin;
                                for (std::size_t t = 0; t < len; ++t) {
                                    o[t] += w * in_ptr[t];
                                }
                            } else {
                                for (std::size_t ow = ow_begin; ow < ow_end; ++ow) {
                                    out_row[ow] += w * in_ptr[(ow - ow_begin) * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
struct Conv2dGrads {
    TensorT<T> input;
    TensorT<T> kernels;
    TensorT<T> bias;
};

/// Analytic gradients of conv2d with respect to input, kernels and bias.
template <typename T>
Conv2dGrads<T> conv2d_grad(const TensorT<T>& input, const TensorT<T>& kernels,
                           const ConvGeometry& geom, const TensorT<T>& grad_output) {
    require_ndim(input, 4, "conv2d_grad input");
    require_ndim(kernels, 4, "conv2d_grad kernels");
    require_ndim(grad_output, 4, "conv2d_grad grad_output");
    const std::size_t n_batch = input.dim(0), channels = input.dim(1);
    const std::size_t in_h = input.dim(2), in_w = input.dim(3);
    const std::size_t n_kernels = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (kernels.dim(1) != channels) {
        throw DimensionError("conv2d_grad: kernel/input channel mismatch");
    }
    const std::size_t out_h = conv_output_extent(in_h, kh, geom.stride, geom.padding);
    const std::size_t out_w = conv_output_extent(in_w, kw, geom.stride, geom.padding);
    require_shape(grad_output, {n_batch, n_kernels, out_h, out_w}, "conv2d_grad grad_output");

    Conv2dGrads<T> grads{TensorT<T>(input.shape()), TensorT<T>(kernels.shape()),
                         TensorT<T>({n_kernels})};
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(geom.padding);
    const std::size_t stride = geom.stride;
    const std::size_t in_plane = in_h * in_w;
    const std::size_t out_plane = out_h * out_w;

    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t k = 0; k < n_kernels; ++k) {
            const T* g_k = grad_output.data() + (n * n_kernels + k) * out_plane;
            T bias_acc = 0;
            for (std::size_t p = 0; p < out_plane; ++p) bias_acc += g_k[p];
            grads.bias[k] += bias_acc;

            for (std::size_t c = 0; c < channels; ++c) {
                const T* in_c = input.data() + (n * channels + c) * in_plane;
                T* gin_c = grads.input.data() + (n * channels + c) * in_plane;
                const T* w_c = kernels.data() + ((k * channels + c) * kh) * kw;
                T* gw_c = grads.kernels.data() + ((k * channels + c) * kh) * kw;
                for (std::size_t i = 0; i < kh; ++i) {
                    for (std::size_t j = 0; j < kw; ++j) {
                        const T w = w_c[i * kw + j];
                        T gw_acc = 0;
                        for (std::size_t oh = 0; oh < out_h; ++oh) {
                            const std::ptrdiff_t ih =
                                static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
                            std::size_t ow_begin = 0;
                            if (pad > static_cast<std::ptrdiff_t>(j)) {
                                const std::size_t deficit = static_cast<std::size_t>(pad) - j;
                                ow_begin = (deficit + stride - 1) / stride;
                            }
                            std::size_t ow_end = out_w;
                            {
                                const std::ptrdiff_t limit =
                                    static_cast<std::ptrdiff_t>(in_w - 1) -
                                    static_cast<std::ptrdiff_t>(j) + pad;
                                if (limit < 0) {
                                    ow_end = ow_begin;
                                } else {
                                    ow_end = std::min<std::size_t>(
                                        out_w, static_cast<std::size_t>(limit) / stride + 1);
                                }
                            }
                            if (ow_begin >= ow_end) continue;
                            const std::ptrdiff_t col0 =
                                static_cast<std::ptrdiff_t>(ow_begin * stride + j) - pad;
                            const T* in_row = in_c + static_cast<std::size_t>(ih) * in_w + col0;
                            T* gin_row = gin_c + static_cast<std::size_t>(ih) * in_w + col0;
                            const T* g_row = g_k + oh * out_w;
                            if (stride == 1) {
                                const std::size_t len = ow_end - ow_begin;
                                const T* __restrict g = g_row + ow_begin;
                                T* __restrict gi = gin_row;
                                const T* __restrict xi = in_row;
                                T acc = 0;
                                for (std::size_t t = 0; t < len; ++t) {
                                    gi[t] += w * g[t];
                                    acc += xi[t] * g[t];
                                }
                                gw_acc += acc;
                            } else {
                                for (std::size_t ow = ow_begin; ow < ow_end; ++ow) {
                                    const T g = g_row[ow];
                                    gin_row[(ow - ow_begin) * stride] += w * g;
                                    gw_acc += in_row[(ow - ow_begin) * stride] * g;
                                }
                            }
                        }
                        gw_c[i * kw + j] += gw_acc;
                    }
                }
            }
        }
    }
    return grads;
}

template <typename T>
struct MaxPoolResult {
    TensorT<T> output;
    /// Flat index into the input tensor of each output's winning element.
    std::vector<std::size_t> argmax;
};

/// Unpadded max pooling. Ties break to the first occurrence in row-major scan
/// order so the backward pass is deterministic.
template <typename T>
MaxPoolResult<T> maxpool2d(const TensorT<T>& input, std::size_t window, std::size_t stride) {
    require_ndim(input, 4, "maxpool2d input");
    if (window == 0) {
        throw GeometryError("maxpool2d: window must be positive");
    }
    const std::size_t n_batch = input.dim(0), channels = input.dim(1);
    const std::size_t in_h = input.dim(2), in_w = input.dim(3);
    const std::size_t out_h = conv_output_extent(in_h, window, stride, 0);
    const std::size_t out_w = conv_output_extent(in_w, window, stride, 0);

    MaxPoolResult<T> result{TensorT<T>({n_batch, channels, out_h, out_w}), {}};
    result.argmax.resize(result.output.numel());
    std::size_t out_idx = 0;
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t plane_base = (n * channels + c) * in_h * in_w;
            for (std::size_t oh = 0; oh < out_h; ++oh) {
                for (std::size_t ow = 0; ow < out_w; ++ow) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t i = 0; i < window; ++i) {
                        const std::size_t ih = oh * stride + i;
                        for (std::size_t j = 0; j < window; ++j) {
                            const std::size_t iw = ow * stride + j;
                            const std::size_t idx = plane_base + ih * in_w + iw;
                            const T v = input[idx];
                            if (v > best) {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    result.output[out_idx] = best;
                    result.argmax[out_idx] = best_idx;
                    ++out_idx;
                }
            }
        }
    }
    return result;
}

/// Routes each grad_output element to its argmax position; overlapping windows
/// accumulate additively.
template <typename T>
TensorT<T> maxpool2d_grad(const std::vector<std::size_t>& argmax, const TensorT<T>& grad_output,
                          const std::vector<std::size_t>& input_shape) {
    if (argmax.size() != grad_output.numel()) {
        throw DimensionError("maxpool2d_grad: argmax size " + std::to_string(argmax.size()) +
                             " does not match grad_output " + grad_output.shape_string());
    }
    TensorT<T> grad_input(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= grad_input.numel()) {
            throw DimensionError("maxpool2d_grad: argmax entry out of range for input shape");
        }
        grad_input[argmax[i]] += grad_output[i];
    }
    return grad_input;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
    TensorT<T> out(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) {
        out[i] = input[i] > T(0) ? input[i] : T(0);
    }
    return out;
}

/// Subgradient at exactly zero is zero.
template <typename T>
TensorT<T> relu_grad(const TensorT<T>& input, const TensorT<T>& grad_output) {
    if (!input.same_shape(grad_output)) {
        throw DimensionError("relu_grad: input " + input.shape_string() +
                             " vs grad_output " + grad_output.shape_string());
    }
    TensorT<T> out(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) {
        out[i] = input[i] > T(0) ? grad_output[i] : T(0);
    }
    return out;
}

/// Affine map: out[n,m] = bias[m] + sum_d input[n,d] * weights[d,m].
template <typename T>
TensorT<T> dense(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias) {
    require_ndim(input, 2, "dense input");
    require_ndim(weights, 2, "dense weights");
    require_ndim(bias, 1, "dense bias");
    const std::size_t n = input.dim(0), d = input.dim(1);
    const std::size_t m = weights.dim(1);
    if (weights.dim(0) != d) {
        throw DimensionError("dense: input features " + std::to_string(d) +
                             " vs weight rows " + std::to_string(weights.dim(0)));
    }
    if (bias.dim(0) != m) {
        throw DimensionError("dense: bias length does not match output features");
    }
    TensorT<T> out({n, m});
    for (std::size_t r = 0; r < n; ++r) {
        T* out_row = out.data() + r * m;
        for (std::size_t j = 0; j < m; ++j) out_row[j] = bias[j];
        const T* in_row = input.data() + r * d;
        for (std::size_t k = 0; k < d; ++k) {
            const T x = in_row[k];
            const T* __restrict w_row = weights.data() + k * m;
            T* __restrict o = out_row;
            for (std::size_t j = 0; j < m; ++j) {
                o[j] += x * w_row[j];
            }
        }
    }
    return out;
}

template <typename T>
struct DenseGrads {
    TensorT<T> input;
    TensorT<T> weights;
    TensorT<T> bias;
};

template <typename T>
DenseGrads<T> dense_grad(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& grad_output) {
    require_ndim(input, 2, "dense_grad input");
    require_ndim(weights, 2, "dense_grad weights");
    const std::size_t n = input.dim(0), d = input.dim(1), m = weights.dim(1);
    require_shape(grad_output, {n, m}, "dense_grad grad_output");

    DenseGrads<T> grads{TensorT<T>({n, d}), TensorT<T>({d, m}), TensorT<T>({m})};
    for (std::size_t r = 0; r < n; ++r) {
        const T* g_row = grad_output.data() + r * m;
        const T* in_row = input.data() + r * d;
        T* gin_row = grads.input.data() + r * d;
        for (std::size_t j = 0; j < m; ++j) grads.bias[j] += g_row[j];
        for (std::size_t k = 0; k < d; ++k) {
            const T* __restrict w_row = weights.data() + k * m;
            T* __restrict gw_row = grads.weights.data() + k * m;
            const T x = in_row[k];
            T acc = 0;
            for (std::size_t j = 0; j < m; ++j) {
                acc += w_row[j] * g_row[j];
                gw_row[j] += x * g_row[j];
            }
            gin_row[k] = acc;
        }
    }
    return grads;
}

/// Mean over spatial positions per channel: [N,C,H,W] -> [N,C].
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& input) {
    require_ndim(input, 4, "global_avg_pool input");
    const std::size_t n = input.dim(0), c = input.dim(1);
    const std::size_t plane = input.dim(2) * input.dim(3);
    TensorT<T> out({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        const T* p = input.data() + i * plane;
        T acc = 0;
        for (std::size_t j = 0; j < plane; ++j) acc += p[j];
        out[i] = acc / static_cast<T>(plane);
    }
    return out;
}

template <typename T>
TensorT<T> global_avg_pool_grad(const TensorT<T>& grad_output,
                                const std::vector<std::size_t>& input_shape) {
    if (input_shape.size() != 4) {
        throw DimensionError("global_avg_pool_grad: input shape must be 4-d");
    }
    require_shape(grad_output, {input_shape[0], input_shape[1]}, "global_avg_pool_grad");
    const std::size_t plane = input_shape[2] * input_shape[3];
    TensorT<T> grad_input(input_shape);
    for (std::size_t i = 0; i < grad_output.numel(); ++i) {
        const T g = grad_output[i] / static_cast<T>(plane);
        T* p = grad_input.data() + i * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] = g;
    }
    return grad_input;
}

enum class BatchNormMode { kTrain, kInfer };

/// Caller-owned running statistics updated by train-mode batchnorm.
template <typename T>
struct BatchNormStats {
    TensorT<T> running_mean;
    TensorT<T> running_var;

    explicit BatchNormStats(std::size_t channels)
        : running_mean({channels}), running_var(TensorT<T>::full({channels}, T(1))) {}
};

/// Per-call values the batchnorm backward needs from its forward.
template <typename T>
struct BatchNormCache {
    TensorT<T> normalized;     // x-hat
    std::vector<T> inv_std;    // per channel
    bool used_batch_stats = false;
};

/// Per-channel batch normalization over (N,H,W). Train mode standardizes with
/// batch statistics and folds them into the running stats with
/// running = momentum*running + (1-momentum)*batch; infer mode uses the
/// running stats directly.
template <typename T>
TensorT<T> batchnorm2d(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
                       T eps, BatchNormMode mode, BatchNormStats<T>& stats,
                       BatchNormCache<T>* cache = nullptr, T momentum = T(0.9)) {
    require_ndim(input, 4, "batchnorm2d input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    require_shape(gamma, {c}, "batchnorm2d gamma");
    require_shape(beta, {c}, "batchnorm2d beta");
    require_shape(stats.running_mean, {c}, "batchnorm2d running_mean");
    require_shape(stats.running_var, {c}, "batchnorm2d running_var");
    if (!(eps > T(0))) {
        throw ArgumentError("batchnorm2d: eps must be positive");
    }
    const std::size_t count = n * h * w;
    if (count == 0) {
        throw ArgumentError("batchnorm2d: degenerate input with zero batch*spatial size");
    }

    std::vector<T> mean(c, T(0)), var(c, T(0));
    if (mode == BatchNormMode::kTrain) {
        const std::size_t plane = h * w;
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T* p = input.data() + (b * c + ch) * plane;
                T acc = 0;
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                mean[ch] += acc;
            }
        }
        for (std::size_t ch = 0; ch < c; ++ch) mean[ch] /= static_cast<T>(count);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T* p = input.data() + (b * c + ch) * plane;
                const T mu = mean[ch];
                T acc = 0;
                for (std::size_t i = 0; i < plane; ++i) {
                    const T d = p[i] - mu;
                    acc += d * d;
                }
                var[ch] += acc;
            }
        }
        for (std::size_t ch = 0; ch < c; ++ch) var[ch] /= static_cast<T>(count);
        for (std::size_t ch = 0; ch < c; ++ch) {
            stats.running_mean[ch] = momentum * stats.running_mean[ch] + (T(1) - momentum) * mean[ch];
            stats.running_var[ch] = momentum * stats.running_var[ch] + (T(1) - momentum) * var[ch];
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = stats.running_mean[ch];
            var[ch] = stats.running_var[ch];
        }
    }

    std::vector<T> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        inv_std[ch] = T(1) / std::sqrt(var[ch] + eps);
    }

    TensorT<T> out(input.shape());
    TensorT<T> normalized(input.shape());
    const std::size_t plane = h * w;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* p = input.data() + (b * c + ch) * plane;
            T* xh = normalized.data() + (b * c + ch) * plane;
            T* o = out.data() + (b * c + ch) * plane;
            const T mu = mean[ch], is = inv_std[ch], g = gamma[ch], bt = beta[ch];
            for (std::size_t i = 0; i < plane; ++i) {
                const T z = (p[i] - mu) * is;
                xh[i] = z;
                o[i] = z * g + bt;
            }
        }
    }
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
        cache->used_batch_stats = (mode == BatchNormMode::kTrain);
    }
    return out;
}

template <typename T>
struct BatchNormGrads {
    TensorT<T> input;
    TensorT<T> gamma;
    TensorT<T> beta;
};

/// Full analytic batchnorm backward. When the forward used batch statistics
/// the batch-coupling terms apply; with running stats the map is a fixed
/// per-channel affine transform.
template <typename T>
BatchNormGrads<T> batchnorm2d_grad(const TensorT<T>& grad_output, const TensorT<T>& gamma,
                                   const BatchNormCache<T>& cache) {
    require_ndim(grad_output, 4, "batchnorm2d_grad grad_output");
    const std::size_t n = grad_output.dim(0), c = grad_output.dim(1);
    const std::size_t plane = grad_output.dim(2) * grad_output.dim(3);
    if (!grad_output.same_shape(cache.normalized)) {
        throw StateError("batchnorm2d_grad: cache does not match grad_output shape");
    }

    BatchNormGrads<T> grads{TensorT<T>(grad_output.shape()), TensorT<T>({c}), TensorT<T>({c})};
    std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* g = grad_output.data() + (b * c + ch) * plane;
            const T* xh = cache.normalized.data() + (b * c + ch) * plane;
            T s1 = 0, s2 = 0;
            for (std::size_t i = 0; i < plane; ++i) {
                s1 += g[i];
                s2 += g[i] * xh[i];
            }
            sum_dy[ch] += s1;
            sum_dy_xhat[ch] += s2;
        }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
        grads.beta[ch] = sum_dy[ch];
        grads.gamma[ch] = sum_dy_xhat[ch];
    }

    const T m = static_cast<T>(n * plane);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* g = grad_output.data() + (b * c + ch) * plane;
            const T* xh = cache.normalized.data() + (b * c + ch) * plane;
            T* gi = grads.input.data() + (b * c + ch) * plane;
            const T scale = gamma[ch] * cache.inv_std[ch];
            if (cache.used_batch_stats) {
                const T sdy = sum_dy[ch], sdyx = sum_dy_xhat[ch];
                for (std::size_t i = 0; i < plane; ++i) {
                    gi[i] = (scale / m) * (m * g[i] - sdy - xh[i] * sdyx);
                }
            } else {
                for (std::size_t i = 0; i < plane; ++i) {
                    gi[i] = scale * g[i];
                }
            }
        }
    }
    return grads;
}

template <typename T>
struct SoftmaxCrossEntropyResult {
    T loss;                  // mean over the batch
    TensorT<T> grad_logits;  // (softmax - onehot) / N
};

/// Numerically stable softmax cross-entropy with integer class labels.
template <typename T>
SoftmaxCrossEntropyResult<T> softmax_cross_entropy(const TensorT<T>& logits,
                                                   const std::vector<int>& labels) {
    require_ndim(logits, 2, "softmax_cross_entropy logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                             " labels for batch of " + std::to_string(n));
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw ArgumentError("softmax_cross_entropy: label " + std::to_string(label) +
                                " outside [0, " + std::to_string(k) + ")");
        }
    }

    SoftmaxCrossEntropyResult<T> result{T(0), TensorT<T>({n, k})};
    for (std::size_t r = 0; r < n; ++r) {
        const T* row = logits.data() + r * k;
        T mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        T* g = result.grad_logits.data() + r * k;
        for (std::size_t j = 0; j < k; ++j) {
            g[j] = std::exp(row[j] - mx);
            sum += g[j];
        }
        const std::size_t label = static_cast<std::size_t>(labels[r]);
        result.loss += std::log(sum) - (row[label] - mx);
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < k; ++j) {
            g[j] = g[j] * inv / static_cast<T>(n);
        }
        g[label] -= T(1) / static_cast<T>(n);
    }
    result.loss /= static_cast<T>(n);
    return result;
}

} // namespace reefgrad
