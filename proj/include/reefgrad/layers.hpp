#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "reefgrad/ops.hpp"
#include "reefgrad/tensor.hpp"

namespace reefgrad {

/// Execution mode of a forward pass.
///  kTrain   — batch statistics, running-stat updates, cache populated.
///  kInfer   — running statistics, no cache.
///  kCapture — running statistics, cache populated (Grad-CAM style read-only
///             passes that still need a backward).
enum class Mode { kTrain, kInfer, kCapture };

/// A learnable tensor with a unique name and a freeze flag.
template <typename T>
struct ParamT {
    std::string name;
    TensorT<T> value;
    bool frozen = false;
};

/// Named gradient store returned by Network::backward.
template <typename T>
using GradStoreT = std::map<std::string, TensorT<T>>;

/// Per-layer values recorded by a caching forward pass.
template <typename T>
struct CacheNodeT {
    TensorT<T> input;
    std::vector<std::size_t> argmax;  // maxpool
    BatchNormCache<T> bn;             // batchnorm
    TensorT<T> preact;                // residual block: branch + shortcut sum
    std::vector<CacheNodeT<T>> children;
};

/// Captures one named layer's output activation (forward) and the gradient of
/// a scalar score with respect to it (backward).
template <typename T>
struct ActivationTapT {
    std::string target;
    TensorT<T> activation;
    TensorT<T> gradient;
    bool found_forward = false;
    bool found_backward = false;
};

template <typename T>
class LayerT {
public:
    explicit LayerT(std::string name) : name_(std::move(name)) {}
    virtual ~LayerT() = default;

    const std::string& name() const { return name_; }

    virtual TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                               ActivationTapT<T>* tap) const = 0;
    /// Returns the gradient with respect to the layer input; writes parameter
    /// gradients for non-frozen parameters into `grads` when non-null.
    virtual TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache,
                                GradStoreT<T>* grads, ActivationTapT<T>* tap) const = 0;

    virtual std::vector<ParamT<T>*> params() { return {}; }
    virtual std::vector<const ParamT<T>*> params() const { return {}; }
    /// Non-learnable persistent tensors (batchnorm running stats).
    virtual std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() { return {}; }
    virtual std::vector<std::pair<std::string, const TensorT<T>*>> state_tensors() const {
        return {};
    }

    /// Shape chase without the batch dimension: [C,H,W] or [D] in, same out.
    virtual std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const = 0;

    virtual std::unique_ptr<LayerT<T>> clone() const = 0;
    virtual void set_frozen(bool frozen) {
        for (auto* p : params()) p->frozen = frozen;
    }

    virtual bool spatial_feature_layer() const { return false; }

private:
    std::string name_;
};

namespace detail {

template <typename T>
TensorT<T> add_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
void store_grad(GradStoreT<T>* grads, const ParamT<T>& param, TensorT<T>&& grad) {
    if (grads && !param.frozen) {
        (*grads)[param.name] = std::move(grad);
    }
}

} // namespace detail

template <typename T>
class Conv2dLayerT : public LayerT<T> {
public:
    Conv2dLayerT(std::string name, std::size_t in_channels, std::size_t out_channels,
                 std::size_t kernel, std::size_t stride, std::size_t padding)
        : LayerT<T>(std::move(name)),
          geom_{stride, padding, kernel, kernel},
          weight_{this->name() + ".weight",
                  TensorT<T>({out_channels, in_channels, kernel, kernel})},
          bias_{this->name() + ".bias", TensorT<T>({out_channels})} {}

    TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                       ActivationTapT<T>*) const override {
        if (cache && mode != Mode::kInfer) cache->input = x;
        return conv2d(x, weight_.value, bias_.value, geom_);
    }

    TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache,
                        GradStoreT<T>* grads, ActivationTapT<T>*) const override {
        auto g = conv2d_grad(cache.input, weight_.value, geom_, grad_out);
        detail::store_grad(grads, weight_, std::move(g.kernels));
        detail::store_grad(grads, bias_, std::move(g.bias));
        return std::move(g.input);
    }

    std::vector<ParamT<T>*> params() override { return {&weight_, &bias_}; }
    std::vector<const ParamT<T>*> params() const override { return {&weight_, &bias_}; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        if (in.size() != 3) {
            throw GeometryError(this->name() + ": expects a [C,H,W] input");
        }
        if (in[0] != weight_.value.dim(1)) {
            throw GeometryError(this->name() + ": input has " + std::to_string(in[0]) +
                                " channels, kernels expect " +
                                std::to_string(weight_.value.dim(1)));
        }
        return {weight_.value.dim(0),
                conv_output_extent(in[1], geom_.kernel_h, geom_.stride, geom_.padding),
                conv_output_extent(in[2], geom_.kernel_w, geom_.stride, geom_.padding)};
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<Conv2dLayerT<T>>(*this);
    }

    bool spatial_feature_layer() const override { return true; }

    ParamT<T>& weight() { return weight_; }
    ParamT<T>& bias() { return bias_; }
    const ConvGeometry& geometry() const { return geom_; }

private:
    ConvGeometry geom_;
    ParamT<T> weight_;
    ParamT<T> bias_;
};

template <typename T>
class BatchNorm2dLayerT : public LayerT<T> {
public:
    BatchNorm2dLayerT(std::string name, std::size_t channels, T eps = T(1e-5),
                      T momentum = T(0.9))
        : LayerT<T>(std::move(name)),
          eps_(eps),
          momentum_(momentum),
          gamma_{this->name() + ".gamma", TensorT<T>::full({channels}, T(1))},
          beta_{this->name() + ".beta", TensorT<T>({channels})},
          stats_(channels) {}

    TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                       ActivationTapT<T>*) const override {
        // A frozen batchnorm behaves like inference even inside a training
        // pass: backbone outputs stay bitwise stable across the run.
        const bool batch_stats = (mode == Mode::kTrain) && !gamma_.frozen;
        BatchNormCache<T>* bn_cache = nullptr;
        if (cache && mode != Mode::kInfer) {
            cache->input = x;
            bn_cache = &cache->bn;
        }
        return batchnorm2d(x, gamma_.value, beta_.value, eps_,
                           batch_stats ? BatchNormMode::kTrain : BatchNormMode::kInfer, stats_,
                           bn_cache, momentum_);
    }

    TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache,
                        GradStoreT<T>* grads, ActivationTapT<T>*) const override {
        auto g = batchnorm2d_grad(grad_out, gamma_.value, cache.bn);
        detail::store_grad(grads, gamma_, std::move(g.gamma));
        detail::store_grad(grads, beta_, std::move(g.beta));
        return std::move(g.input);
    }

    std::vector<ParamT<T>*> params() override { return {&gamma_, &beta_}; }
    std::vector<const ParamT<T>*> params() const override { return {&gamma_, &beta_}; }

    std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() override {
        return {{this->name() + ".running_mean", &stats_.running_mean},
                {this->name() + ".running_var", &stats_.running_var}};
    }
    std::vector<std::pair<std::string, const TensorT<T>*>> state_tensors() const override {
        return {{this->name() + ".running_mean", &stats_.running_mean},
                {this->name() + ".running_var", &stats_.running_var}};
    }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        if (in.size() != 3 || in[0] != gamma_.value.dim(0)) {
            throw GeometryError(this->name() + ": expects [C,H,W] with C = " +
                                std::to_string(gamma_.value.dim(0)));
        }
        return in;
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<BatchNorm2dLayerT<T>>(*this);
    }

    BatchNormStats<T>& stats() { return stats_; }

private:
    T eps_;
    T momentum_;
    ParamT<T> gamma_;
    ParamT<T> beta_;
    mutable BatchNormStats<T> stats_;
};

template <typename T>
class ReluLayerT : public LayerT<T> {
public:
    explicit ReluLayerT(std::string name) : LayerT<T>(std::move(name)) {}

    TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                       ActivationTapT<T>*) const override {
        if (cache && mode != Mode::kInfer) cache->input = x;
        return relu(x);
    }

    TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache, GradStoreT<T>*,
                        ActivationTapT<T>*) const override {
        return relu_grad(cache.input, grad_out);
    }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        return in;
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<ReluLayerT<T>>(*this);
    }
};

template <typename T>
class MaxPool2dLayerT : public LayerT<T> {
public:
    MaxPool2dLayerT(std::string name, std::size_t window, std::size_t stride)
        : LayerT<T>(std::move(name)), window_(window), stride_(stride) {}

    TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                       ActivationTapT<T>*) const override {
        auto result = maxpool2d(x, window_, stride_);
        if (cache && mode != Mode::kInfer) {
            cache->input = x;
            cache->argmax = std::move(result.argmax);
        }
        return std::move(result.output);
    }

    TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache, GradStoreT<T>*,
                        ActivationTapT<T>*) const override {
        return maxpool2d_grad(cache.argmax, grad_out, cache.input.shape());
    }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        if (in.size() != 3) {
            throw GeometryError(this->name() + ": expects a [C,H,W] input");
        }
        return {in[0], conv_output_extent(in[1], window_, stride_, 0),
                conv_output_extent(in[2], window_, stride_, 0)};
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<MaxPool2dLayerT<T>>(*this);
    }

private:
    std::size_t window_;
    std::size_t stride_;
};

template <typename T>
class GlobalAvgPoolLayerT : public LayerT<T> {
public:
    explicit GlobalAvgPoolLayerT(std::string name) : LayerT<T>(std::move(name)) {}

    TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                       ActivationTapT<T>*) const override {
        if (cache && mode != Mode::kInfer) cache->input = x;
        return global_avg_pool(x);
    }

    TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache, GradStoreT<T>*,
                        ActivationTapT<T>*) const override {
        return global_avg_pool_grad(grad_out, cache.input.shape());
    }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        if (in.size() != 3) {
            throw GeometryError(this->name() + ": expects a [C,H,W] input");
        }
        return {in[0]};
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<GlobalAvgPoolLayerT<T>>(*this);
    }
};

template <typename T>
class DenseLayerT : public LayerT<T> {
public:
    DenseLayerT(std::string name, std::size_t in_features, std::size_t out_features)
        : LayerT<T>(std::move(name)),
          weight_{this->name() + ".weight", TensorT<T>({in_features, out_features})},
          bias_{this->name() + ".bias", TensorT<T>({out_features})} {}

    TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                       ActivationTapT<T>*) const override {
        if (cache && mode != Mode::kInfer) cache->input = x;
        return dense(x, weight_.value, bias_.value);
    }

    TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache,
                        GradStoreT<T>* grads, ActivationTapT<T>*) const override {
        auto g = dense_grad(cache.input, weight_.value, grad_out);
        detail::store_grad(grads, weight_, std::move(g.weights));
        detail::store_grad(grads, bias_, std::move(g.bias));
        return std::move(g.input);
    }

    std::vector<ParamT<T>*> params() override { return {&weight_, &bias_}; }
    std::vector<const ParamT<T>*> params() const override { return {&weight_, &bias_}; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        if (in.size() != 1 || in[0] != weight_.value.dim(0)) {
            throw GeometryError(this->name() + ": expects a flat [" +
                                std::to_string(weight_.value.dim(0)) + "] feature input");
        }
        return {weight_.value.dim(1)};
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<DenseLayerT<T>>(*this);
    }

    ParamT<T>& weight() { return weight_; }
    ParamT<T>& bias() { return bias_; }

private:
    ParamT<T> weight_;
    ParamT<T> bias_;
};

namespace detail {

/// Runs a layer sequence forward, populating one cache child per layer and
/// honoring the activation tap between layers.
template <typename T>
TensorT<T> sequence_forward(const std::vector<std::unique_ptr<LayerT<T>>>& layers,
                            const TensorT<T>& x, Mode mode, std::vector<CacheNodeT<T>>* children,
                            ActivationTapT<T>* tap) {
    TensorT<T> cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        CacheNodeT<T>* node = nullptr;
        if (children) node = &(*children)[i];
        cur = layers[i]->forward(cur, mode, node, tap);
        if (tap && layers[i]->name() == tap->target) {
            tap->activation = cur;
            tap->found_forward = true;
        }
    }
    return cur;
}

template <typename T>
TensorT<T> sequence_backward(const std::vector<std::unique_ptr<LayerT<T>>>& layers,
                             const TensorT<T>& grad_out,
                             const std::vector<CacheNodeT<T>>& children, GradStoreT<T>* grads,
                             ActivationTapT<T>* tap) {
    TensorT<T> g = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
        if (tap && layers[i]->name() == tap->target) {
            tap->gradient = g;
            tap->found_backward = true;
        }
        g = layers[i]->backward(g, children[i], grads, tap);
    }
    return g;
}

} // namespace detail

/// Residual building block: y = relu(F(x) + shortcut(x)). An empty shortcut
/// sequence is the identity path.
template <typename T>
class ResidualBlockLayerT : public LayerT<T> {
public:
    ResidualBlockLayerT(std::string name, std::vector<std::unique_ptr<LayerT<T>>> branch,
                        std::vector<std::unique_ptr<LayerT<T>>> shortcut)
        : LayerT<T>(std::move(name)), branch_(std::move(branch)), shortcut_(std::move(shortcut)) {}

    ResidualBlockLayerT(const ResidualBlockLayerT& other) : LayerT<T>(other.name()) {
        branch_.reserve(other.branch_.size());
        for (const auto& l : other.branch_) branch_.push_back(l->clone());
        shortcut_.reserve(other.shortcut_.size());
        for (const auto& l : other.shortcut_) shortcut_.push_back(l->clone());
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode, CacheNodeT<T>* cache,
                       ActivationTapT<T>* tap) const override {
        TensorT<T> branch_out;
        TensorT<T> shortcut_out;
        if (cache && mode != Mode::kInfer) {
            // children layout: [branch..., shortcut...]
            std::vector<CacheNodeT<T>> b(branch_.size());
            std::vector<CacheNodeT<T>> s(shortcut_.size());
            branch_out = detail::sequence_forward(branch_, x, mode, &b, tap);
            shortcut_out =
                shortcut_.empty() ? x : detail::sequence_forward(shortcut_, x, mode, &s, tap);
            cache->children.clear();
            for (auto& n : b) cache->children.push_back(std::move(n));
            for (auto& n : s) cache->children.push_back(std::move(n));
        } else {
            std::vector<CacheNodeT<T>>* no_cache = nullptr;
            branch_out = detail::sequence_forward(branch_, x, mode, no_cache, tap);
            shortcut_out = shortcut_.empty()
                               ? x
                               : detail::sequence_forward(shortcut_, x, mode, no_cache, tap);
        }
        TensorT<T> sum =
            detail::add_same_shape(branch_out, shortcut_out, "residual branch/shortcut sum");
        if (cache && mode != Mode::kInfer) cache->preact = sum;
        return relu(sum);
    }

    TensorT<T> backward(const TensorT<T>& grad_out, const CacheNodeT<T>& cache,
                        GradStoreT<T>* grads, ActivationTapT<T>* tap) const override {
        if (cache.children.size() != branch_.size() + shortcut_.size()) {
            throw StateError(this->name() + ": cache does not match block structure");
        }
        TensorT<T> g_sum = relu_grad(cache.preact, grad_out);
        TensorT<T> g_branch = g_sum;
        for (std::size_t i = branch_.size(); i-- > 0;) {
            if (tap && branch_[i]->name() == tap->target) {
                tap->gradient = g_branch;
                tap->found_backward = true;
            }
            g_branch = branch_[i]->backward(g_branch, cache.children[i], grads, tap);
        }
        TensorT<T> g_shortcut = g_sum;
        for (std::size_t i = shortcut_.size(); i-- > 0;) {
            if (tap && shortcut_[i]->name() == tap->target) {
                tap->gradient = g_shortcut;
                tap->found_backward = true;
            }
            g_shortcut =
                shortcut_[i]->backward(g_shortcut, cache.children[branch_.size() + i], grads, tap);
        }
        return detail::add_same_shape(g_branch, g_shortcut, "residual input gradient");
    }

    std::vector<ParamT<T>*> params() override {
        std::vector<ParamT<T>*> out;
        for (auto& l : branch_)
            for (auto* p : l->params()) out.push_back(p);
        for (auto& l : shortcut_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<const ParamT<T>*> params() const override {
        std::vector<const ParamT<T>*> out;
        for (const auto& l : branch_)
            for (const auto* p : std::as_const(*l).params()) out.push_back(p);
        for (const auto& l : shortcut_)
            for (const auto* p : std::as_const(*l).params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() override {
        std::vector<std::pair<std::string, TensorT<T>*>> out;
        for (auto& l : branch_)
            for (auto& s : l->state_tensors()) out.push_back(s);
        for (auto& l : shortcut_)
            for (auto& s : l->state_tensors()) out.push_back(s);
        return out;
    }
    std::vector<std::pair<std::string, const TensorT<T>*>> state_tensors() const override {
        std::vector<std::pair<std::string, const TensorT<T>*>> out;
        for (const auto& l : branch_)
            for (auto& s : std::as_const(*l).state_tensors()) out.push_back(s);
        for (const auto& l : shortcut_)
            for (auto& s : std::as_const(*l).state_tensors()) out.push_back(s);
        return out;
    }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        std::vector<std::size_t> branch_shape = in;
        for (const auto& l : branch_) branch_shape = l->output_shape(branch_shape);
        std::vector<std::size_t> shortcut_shape = in;
        for (const auto& l : shortcut_) shortcut_shape = l->output_shape(shortcut_shape);
        if (branch_shape != shortcut_shape) {
            throw GeometryError(this->name() + ": branch and shortcut output shapes differ");
        }
        return branch_shape;
    }

    std::unique_ptr<LayerT<T>> clone() const override {
        return std::make_unique<ResidualBlockLayerT<T>>(*this);
    }

    void set_frozen(bool frozen) override {
        for (auto& l : branch_) l->set_frozen(frozen);
        for (auto& l : shortcut_) l->set_frozen(frozen);
    }

    bool spatial_feature_layer() const override { return true; }

    const std::vector<std::unique_ptr<LayerT<T>>>& branch() const { return branch_; }
    const std::vector<std::unique_ptr<LayerT<T>>>& shortcut() const { return shortcut_; }

private:
    std::vector<std::unique_ptr<LayerT<T>>> branch_;
    std::vector<std::unique_ptr<LayerT<T>>> shortcut_;
};

using Layer = LayerT<float>;
using Conv2dLayer = Conv2dLayerT<float>;
using BatchNorm2dLayer = BatchNorm2dLayerT<float>;
using ReluLayer = ReluLayerT<float>;
using MaxPool2dLayer = MaxPool2dLayerT<float>;
using GlobalAvgPoolLayer = GlobalAvgPoolLayerT<float>;
using DenseLayer = DenseLayerT<float>;
using ResidualBlockLayer = ResidualBlockLayerT<float>;

} // namespace reefgrad
