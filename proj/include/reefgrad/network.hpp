#pragma once

#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "reefgrad/layers.hpp"

namespace reefgrad {

/// Full cache of one caching forward pass: one node per top-level layer.
template <typename T>
struct ForwardCacheT {
    std::vector<CacheNodeT<T>> nodes;
    bool from_training_pass = false;
};

/// Ordered layer graph. The network plus its parameters is a value: copying
/// clones every layer, so snapshots for checkpoint comparison are cheap to
/// reason about.
template <typename T>
class NetworkT {
public:
    NetworkT() = default;
    explicit NetworkT(std::size_t input_channels) : input_channels_(input_channels) {}

    NetworkT(const NetworkT& other) : input_channels_(other.input_channels_) {
        layers_.reserve(other.layers_.size());
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    NetworkT& operator=(const NetworkT& other) {
        if (this != &other) {
            NetworkT copy(other);
            *this = std::move(copy);
        }
        return *this;
    }
    NetworkT(NetworkT&&) noexcept = default;
    NetworkT& operator=(NetworkT&&) noexcept = default;

    void add(std::unique_ptr<LayerT<T>> layer) {
        std::set<std::string> names;
        for (const auto& l : layers_) collect_names(*l, names);
        std::set<std::string> incoming;
        collect_names(*layer, incoming);
        for (const auto& n : incoming) {
            if (names.count(n)) {
                throw ArgumentError("duplicate layer name '" + n + "'");
            }
        }
        layers_.push_back(std::move(layer));
    }

    std::size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }
    std::size_t input_channels() const { return input_channels_; }

    const LayerT<T>& layer(std::size_t i) const { return *layers_[i]; }
    LayerT<T>& layer(std::size_t i) { return *layers_[i]; }

    /// Mutating entry point; required for train-mode passes (batchnorm
    /// running-stat updates).
    TensorT<T> forward(const TensorT<T>& batch, Mode mode, ForwardCacheT<T>* cache = nullptr,
                       ActivationTapT<T>* tap = nullptr) {
        return forward_impl(batch, mode, cache, tap);
    }

    /// Read-only passes only: train mode on a const network is rejected.
    TensorT<T> forward(const TensorT<T>& batch, Mode mode, ForwardCacheT<T>* cache = nullptr,
                       ActivationTapT<T>* tap = nullptr) const {
        if (mode == Mode::kTrain) {
            throw StateError("train-mode forward requires a mutable network");
        }
        return forward_impl(batch, mode, cache, tap);
    }

    GradStoreT<T> backward(const ForwardCacheT<T>& cache, const TensorT<T>& grad_logits) const {
        GradStoreT<T> grads;
        backward_impl(cache, grad_logits, &grads, nullptr);
        return grads;
    }

    /// Backward that only captures the tap gradient (no parameter gradients).
    void backward_tap(const ForwardCacheT<T>& cache, const TensorT<T>& grad_logits,
                      ActivationTapT<T>& tap) const {
        backward_impl(cache, grad_logits, nullptr, &tap);
    }

    std::vector<ParamT<T>*> params() {
        std::vector<ParamT<T>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<const ParamT<T>*> params() const {
        std::vector<const ParamT<T>*> out;
        for (const auto& l : layers_)
            for (const auto* p : std::as_const(*l).params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() {
        std::vector<std::pair<std::string, TensorT<T>*>> out;
        for (auto& l : layers_)
            for (auto& s : l->state_tensors()) out.push_back(s);
        return out;
    }
    std::vector<std::pair<std::string, const TensorT<T>*>> state_tensors() const {
        std::vector<std::pair<std::string, const TensorT<T>*>> out;
        for (const auto& l : layers_)
            for (auto& s : std::as_const(*l).state_tensors()) out.push_back(s);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto* p : params()) n += p->value.numel();
        return n;
    }

    void set_frozen_all(bool frozen) {
        for (auto& l : layers_) l->set_frozen(frozen);
    }

    /// Shape chase for the declared input resolution; throws GeometryError on
    /// the first incompatible layer. Returns per-layer output shapes.
    std::vector<std::vector<std::size_t>> infer_shapes(std::size_t height,
                                                       std::size_t width) const {
        std::vector<std::vector<std::size_t>> shapes;
        std::vector<std::size_t> cur{input_channels_, height, width};
        for (const auto& l : layers_) {
            cur = l->output_shape(cur);
            shapes.push_back(cur);
        }
        return shapes;
    }

    /// Names of activations Grad-CAM may select: standalone convolutions and
    /// residual block outputs, in execution order.
    std::vector<std::string> spatial_activation_names() const {
        std::vector<std::string> names;
        for (const auto& l : layers_) {
            collect_spatial_names(*l, names);
        }
        return names;
    }

    /// Default explanation point: the last spatial activation before the head.
    std::string last_spatial_activation() const {
        auto names = spatial_activation_names();
        if (names.empty()) {
            throw SelectorError("network has no convolutional activations");
        }
        return names.back();
    }

    enum class LayerKind { kMissing, kSpatial, kOther };

    /// Classifies a selector against this network, descending into blocks.
    LayerKind classify_selector(const std::string& name) const {
        LayerKind kind = LayerKind::kMissing;
        for (const auto& l : layers_) {
            classify_in_layer(*l, name, kind);
        }
        return kind;
    }

private:
    static void collect_names(const LayerT<T>& layer, std::set<std::string>& names) {
        names.insert(layer.name());
        if (const auto* block = dynamic_cast<const ResidualBlockLayerT<T>*>(&layer)) {
            for (const auto& l : block->branch()) collect_names(*l, names);
            for (const auto& l : block->shortcut()) collect_names(*l, names);
        }
    }

    static void collect_spatial_names(const LayerT<T>& layer, std::vector<std::string>& names) {
        if (const auto* block = dynamic_cast<const ResidualBlockLayerT<T>*>(&layer)) {
            for (const auto& l : block->branch()) collect_spatial_names(*l, names);
            for (const auto& l : block->shortcut()) collect_spatial_names(*l, names);
            names.push_back(layer.name());
        } else if (layer.spatial_feature_layer()) {
            names.push_back(layer.name());
        }
    }

    static void classify_in_layer(const LayerT<T>& layer, const std::string& name,
                                  LayerKind& kind) {
        if (layer.name() == name) {
            if (layer.spatial_feature_layer()) {
                kind = LayerKind::kSpatial;
            } else if (kind == LayerKind::kMissing) {
                kind = LayerKind::kOther;
            }
        }
        if (const auto* block = dynamic_cast<const ResidualBlockLayerT<T>*>(&layer)) {
            for (const auto& l : block->branch()) classify_in_layer(*l, name, kind);
            for (const auto& l : block->shortcut()) classify_in_layer(*l, name, kind);
        }
    }

    TensorT<T> forward_impl(const TensorT<T>& batch, Mode mode, ForwardCacheT<T>* cache,
                            ActivationTapT<T>* tap) const {
        require_ndim(batch, 4, "network input");
        if (input_channels_ != 0 && batch.dim(1) != input_channels_) {
            throw DimensionError("network input has " + std::to_string(batch.dim(1)) +
                                 " channels, expected " + std::to_string(input_channels_));
        }
        if (cache) {
            cache->nodes.assign(layers_.size(), CacheNodeT<T>{});
            cache->from_training_pass = (mode == Mode::kTrain);
        }
        TensorT<T> cur = batch;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            CacheNodeT<T>* node = (cache && mode != Mode::kInfer) ? &cache->nodes[i] : nullptr;
            cur = layers_[i]->forward(cur, mode, node, tap);
            if (tap && layers_[i]->name() == tap->target) {
                tap->activation = cur;
                tap->found_forward = true;
            }
        }
        return cur;
    }

    void backward_impl(const ForwardCacheT<T>& cache, const TensorT<T>& grad_logits,
                       GradStoreT<T>* grads, ActivationTapT<T>* tap) const {
        if (cache.nodes.size() != layers_.size()) {
            throw StateError("forward cache has " + std::to_string(cache.nodes.size()) +
                             " entries for a network of " + std::to_string(layers_.size()) +
                             " layers");
        }
        TensorT<T> g = grad_logits;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            if (tap && layers_[i]->name() == tap->target) {
                tap->gradient = g;
                tap->found_backward = true;
                if (!grads) {
                    return;  // nothing below the tap is needed
                }
            }
            g = layers_[i]->backward(g, cache.nodes[i], grads, tap);
            if (tap && !grads && tap->found_backward) {
                return;
            }
        }
    }

    std::size_t input_channels_ = 0;
    std::vector<std::unique_ptr<LayerT<T>>> layers_;
};

using ForwardCache = ForwardCacheT<float>;
using Network = NetworkT<float>;
using GradStore = GradStoreT<float>;
using ActivationTap = ActivationTapT<float>;

} // namespace reefgrad
