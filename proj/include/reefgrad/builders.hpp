#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reefgrad/network.hpp"

// Architecture builders. All downsampling steps use even kernels (stem 6x6/2,
// branch 4x4/2, projection 2x2/2) so that every stride divides its padded
// input extent exactly; the classic odd-kernel strided geometry truncates,
// which the convolution kernels here reject.

namespace reefgrad {

namespace detail {

template <typename T>
void he_init(TensorT<T>& w, std::size_t fan_in, std::mt19937& rng) {
    std::normal_distribution<T> dist(T(0), std::sqrt(T(2) / static_cast<T>(fan_in)));
    for (auto& v : w.storage()) v = dist(rng);
}

template <typename T>
std::unique_ptr<Conv2dLayerT<T>> make_conv(const std::string& name, std::size_t in_ch,
                                           std::size_t out_ch, std::size_t kernel,
                                           std::size_t stride, std::size_t padding,
                                           std::mt19937& rng) {
    auto conv = std::make_unique<Conv2dLayerT<T>>(name, in_ch, out_ch, kernel, stride, padding);
    he_init(conv->weight().value, in_ch * kernel * kernel, rng);
    return conv;
}

template <typename T>
std::unique_ptr<DenseLayerT<T>> make_dense(const std::string& name, std::size_t in_features,
                                           std::size_t out_features, std::mt19937& rng) {
    auto fc = std::make_unique<DenseLayerT<T>>(name, in_features, out_features);
    he_init(fc->weight().value, in_features, rng);
    return fc;
}

/// Basic two-conv residual block. Downsampling variants use a 4x4/2 first
/// conv and a 2x2/2 projection shortcut.
template <typename T>
std::unique_ptr<ResidualBlockLayerT<T>> make_basic_block(const std::string& name,
                                                         std::size_t in_ch, std::size_t out_ch,
                                                         bool downsample, std::mt19937& rng) {
    std::vector<std::unique_ptr<LayerT<T>>> branch;
    if (downsample) {
        branch.push_back(make_conv<T>(name + ".conv1", in_ch, out_ch, 4, 2, 1, rng));
    } else {
        branch.push_back(make_conv<T>(name + ".conv1", in_ch, out_ch, 3, 1, 1, rng));
    }
    branch.push_back(std::make_unique<BatchNorm2dLayerT<T>>(name + ".bn1", out_ch));
    branch.push_back(std::make_unique<ReluLayerT<T>>(name + ".relu"));
    branch.push_back(make_conv<T>(name + ".conv2", out_ch, out_ch, 3, 1, 1, rng));
    branch.push_back(std::make_unique<BatchNorm2dLayerT<T>>(name + ".bn2", out_ch));

    std::vector<std::unique_ptr<LayerT<T>>> shortcut;
    if (downsample || in_ch != out_ch) {
        if (downsample) {
            shortcut.push_back(make_conv<T>(name + ".shortcut.conv", in_ch, out_ch, 2, 2, 0, rng));
        } else {
            shortcut.push_back(make_conv<T>(name + ".shortcut.conv", in_ch, out_ch, 1, 1, 0, rng));
        }
        shortcut.push_back(std::make_unique<BatchNorm2dLayerT<T>>(name + ".shortcut.bn", out_ch));
    }
    return std::make_unique<ResidualBlockLayerT<T>>(name, std::move(branch), std::move(shortcut));
}

/// Bottleneck block (1x1 reduce, 3x3 spatial, 1x1 expand).
template <typename T>
std::unique_ptr<ResidualBlockLayerT<T>> make_bottleneck_block(const std::string& name,
                                                              std::size_t in_ch,
                                                              std::size_t base_ch,
                                                              std::size_t out_ch, bool downsample,
                                                              std::mt19937& rng) {
    std::vector<std::unique_ptr<LayerT<T>>> branch;
    branch.push_back(make_conv<T>(name + ".conv1", in_ch, base_ch, 1, 1, 0, rng));
    branch.push_back(std::make_unique<BatchNorm2dLayerT<T>>(name + ".bn1", base_ch));
    branch.push_back(std::make_unique<ReluLayerT<T>>(name + ".relu1"));
    if (downsample) {
        branch.push_back(make_conv<T>(name + ".conv2", base_ch, base_ch, 4, 2, 1, rng));
    } else {
        branch.push_back(make_conv<T>(name + ".conv2", base_ch, base_ch, 3, 1, 1, rng));
    }
    branch.push_back(std::make_unique<BatchNorm2dLayerT<T>>(name + ".bn2", base_ch));
    branch.push_back(std::make_unique<ReluLayerT<T>>(name + ".relu2"));
    branch.push_back(make_conv<T>(name + ".conv3", base_ch, out_ch, 1, 1, 0, rng));
    branch.push_back(std::make_unique<BatchNorm2dLayerT<T>>(name + ".bn3", out_ch));

    std::vector<std::unique_ptr<LayerT<T>>> shortcut;
    if (downsample || in_ch != out_ch) {
        if (downsample) {
            shortcut.push_back(make_conv<T>(name + ".shortcut.conv", in_ch, out_ch, 2, 2, 0, rng));
        } else {
            shortcut.push_back(make_conv<T>(name + ".shortcut.conv", in_ch, out_ch, 1, 1, 0, rng));
        }
        shortcut.push_back(std::make_unique<BatchNorm2dLayerT<T>>(name + ".shortcut.bn", out_ch));
    }
    return std::make_unique<ResidualBlockLayerT<T>>(name, std::move(branch), std::move(shortcut));
}

} // namespace detail

/// Number of output features if the network ends in a feature vector
/// (global-avg-pool or dense); throws ArgumentError otherwise.
template <typename T>
std::size_t output_feature_dim(const NetworkT<T>& net) {
    if (net.empty()) {
        throw ArgumentError("network is empty");
    }
    // Walk backwards to find the layer that fixes the channel count.
    struct ChannelVisitor {
        static std::optional<std::size_t> of(const LayerT<T>& layer) {
            if (const auto* block = dynamic_cast<const ResidualBlockLayerT<T>*>(&layer)) {
                for (std::size_t i = block->branch().size(); i-- > 0;) {
                    if (auto c = of(*block->branch()[i])) return c;
                }
                return std::nullopt;
            }
            for (const auto* p : std::as_const(layer).params()) {
                if (p->name.ends_with(".gamma")) return p->value.dim(0);
                if (p->name.ends_with(".weight") && p->value.ndim() == 4) return p->value.dim(0);
                if (p->name.ends_with(".weight") && p->value.ndim() == 2) return p->value.dim(1);
            }
            return std::nullopt;
        }
    };
    const auto& last = net.layer(net.size() - 1);
    const bool vector_out = dynamic_cast<const GlobalAvgPoolLayerT<T>*>(&last) != nullptr ||
                            dynamic_cast<const DenseLayerT<T>*>(&last) != nullptr;
    if (!vector_out) {
        throw ArgumentError("backbone does not end in a feature vector (last layer '" +
                            last.name() + "')");
    }
    for (std::size_t i = net.size(); i-- > 0;) {
        if (auto c = ChannelVisitor::of(net.layer(i))) return *c;
    }
    throw ArgumentError("cannot determine the backbone's feature width");
}

/// Small from-scratch residual classifier: 3x3/16 stem, three stages of two
/// basic blocks at 16/32/64 channels with stride-2 transitions, global average
/// pooling and a dense head.
template <typename T = float>
NetworkT<T> build_imitation_resnet(std::size_t input_resolution, std::size_t num_classes,
                                   std::uint32_t seed, bool include_classifier = true) {
    if (input_resolution < 32) {
        throw GeometryError("imitation resnet requires input resolution >= 32, got " +
                            std::to_string(input_resolution));
    }
    std::mt19937 rng(seed);
    NetworkT<T> net(3);
    net.add(detail::make_conv<T>("stem.conv", 3, 16, 3, 1, 1, rng));
    net.add(std::make_unique<BatchNorm2dLayerT<T>>("stem.bn", 16));
    net.add(std::make_unique<ReluLayerT<T>>("stem.relu"));

    const std::size_t stage_channels[3] = {16, 32, 64};
    std::size_t in_ch = 16;
    for (std::size_t s = 0; s < 3; ++s) {
        const std::size_t out_ch = stage_channels[s];
        for (std::size_t b = 0; b < 2; ++b) {
            const bool downsample = (s > 0 && b == 0);
            const std::string name =
                "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
            net.add(detail::make_basic_block<T>(name, in_ch, out_ch, downsample, rng));
            in_ch = out_ch;
        }
    }
    net.add(std::make_unique<GlobalAvgPoolLayerT<T>>("gap"));
    if (include_classifier) {
        net.add(detail::make_dense<T>("fc", 64, num_classes, rng));
    }
    net.infer_shapes(input_resolution, input_resolution);  // validates the chain
    return net;
}

/// Bottleneck ResNet builders for the 50/101/152 depths. The stage block
/// counts follow the standard tables; weights are randomly initialized.
template <typename T = float>
NetworkT<T> build_resnet_family(int depth, std::size_t num_classes, std::uint32_t seed,
                                bool include_classifier = true) {
    std::vector<std::size_t> blocks;
    switch (depth) {
        case 50: blocks = {3, 4, 6, 3}; break;
        case 101: blocks = {3, 4, 23, 3}; break;
        case 152: blocks = {3, 8, 36, 3}; break;
        default:
            throw ArgumentError("unsupported resnet depth " + std::to_string(depth) +
                                " (supported: 50, 101, 152)");
    }
    std::mt19937 rng(seed);
    NetworkT<T> net(3);
    net.add(detail::make_conv<T>("stem.conv", 3, 64, 6, 2, 2, rng));
    net.add(std::make_unique<BatchNorm2dLayerT<T>>("stem.bn", 64));
    net.add(std::make_unique<ReluLayerT<T>>("stem.relu"));
    net.add(std::make_unique<MaxPool2dLayerT<T>>("stem.pool", 2, 2));

    const std::size_t base_channels[4] = {64, 128, 256, 512};
    std::size_t in_ch = 64;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t base = base_channels[s];
        const std::size_t out_ch = base * 4;
        for (std::size_t b = 0; b < blocks[s]; ++b) {
            const bool downsample = (s > 0 && b == 0);
            const std::string name =
                "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
            net.add(detail::make_bottleneck_block<T>(name, in_ch, base, out_ch, downsample, rng));
            in_ch = out_ch;
        }
    }
    net.add(std::make_unique<GlobalAvgPoolLayerT<T>>("gap"));
    if (include_classifier) {
        net.add(detail::make_dense<T>("fc", 2048, num_classes, rng));
    }
    return net;
}

/// Appends dense(hidden)+ReLU+dense(num_classes) to a backbone that ends in a
/// feature vector. With freeze_backbone all existing parameters are marked
/// frozen and the backbone's batchnorms switch to running statistics.
template <typename T = float>
NetworkT<T> attach_transfer_head(NetworkT<T> backbone, std::size_t hidden_units,
                                 std::size_t num_classes, bool freeze_backbone,
                                 std::uint32_t seed) {
    const std::size_t features = output_feature_dim(backbone);
    if (freeze_backbone) {
        backbone.set_frozen_all(true);
    }
    std::mt19937 rng(seed);
    backbone.add(detail::make_dense<T>("head.fc1", features, hidden_units, rng));
    backbone.add(std::make_unique<ReluLayerT<T>>("head.relu"));
    backbone.add(detail::make_dense<T>("head.fc2", hidden_units, num_classes, rng));
    return backbone;
}

} // namespace reefgrad
