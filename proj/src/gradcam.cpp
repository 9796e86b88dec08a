#include "reefgrad/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace reefgrad {

HeatMap gradcam(const Network& network, const Tensor& input_chw, int target_class,
                const std::string& layer_name) {
    require_ndim(input_chw, 3, "gradcam input");
    switch (network.classify_selector(layer_name)) {
        case Network::LayerKind::kSpatial:
            break;
        case Network::LayerKind::kOther:
            throw LayerTypeError("layer '" + layer_name +
                                 "' is not a convolutional or residual-block activation");
        case Network::LayerKind::kMissing: {
            std::string valid;
            for (const auto& n : network.spatial_activation_names()) {
                if (!valid.empty()) valid += ", ";
                valid += n;
            }
            throw SelectorError("unknown layer '" + layer_name + "' (valid: " + valid + ")");
        }
    }

    Tensor batch({1, input_chw.dim(0), input_chw.dim(1), input_chw.dim(2)},
                 input_chw.storage());

    ActivationTap tap;
    tap.target = layer_name;
    ForwardCache cache;
    const Tensor logits = network.forward(batch, Mode::kCapture, &cache, &tap);
    if (!tap.found_forward) {
        throw SelectorError("layer '" + layer_name + "' produced no activation");
    }
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= logits.dim(1)) {
        throw ArgumentError("target class " + std::to_string(target_class) +
                            " outside [0, " + std::to_string(logits.dim(1)) + ")");
    }
    if (tap.activation.ndim() != 4) {
        throw LayerTypeError("layer '" + layer_name + "' is not spatial");
    }

    Tensor grad_logits(logits.shape());
    grad_logits.at2(0, static_cast<std::size_t>(target_class)) = 1.0f;
    network.backward_tap(cache, grad_logits, tap);
    if (!tap.found_backward) {
        throw StateError("backward pass did not reach layer '" + layer_name + "'");
    }

    const Tensor& activation = tap.activation;  // [1,K,h,w]
    const Tensor& gradient = tap.gradient;
    const std::size_t channels = activation.dim(1);
    const std::size_t h = activation.dim(2), w = activation.dim(3);
    const std::size_t plane = h * w;

    std::vector<float> raw(plane, 0.0f);
    for (std::size_t k = 0; k < channels; ++k) {
        const float* g = gradient.data() + k * plane;
        float alpha_k = 0.0f;
        for (std::size_t i = 0; i < plane; ++i) alpha_k += g[i];
        alpha_k /= static_cast<float>(plane);
        const float* a = activation.data() + k * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            raw[i] += alpha_k * a[i];
        }
    }
    for (auto& v : raw) {
        v = v > 0.0f ? v : 0.0f;
    }

    HeatMap heatmap;
    heatmap.width = input_chw.dim(2);
    heatmap.height = input_chw.dim(1);
    heatmap.values = bilinear_resample_plane(raw.data(), w, h, heatmap.width, heatmap.height);

    float mx = 0.0f;
    for (const float v : heatmap.values) mx = std::max(mx, v);
    if (mx > 0.0f) {
        for (auto& v : heatmap.values) {
            v = std::clamp(v / mx, 0.0f, 1.0f);
        }
    } else {
        std::fill(heatmap.values.begin(), heatmap.values.end(), 0.0f);
    }
    return heatmap;
}

HeatMap gradcam(const Network& network, const Tensor& input_chw, int target_class) {
    return gradcam(network, input_chw, target_class, network.last_spatial_activation());
}

std::array<std::uint8_t, 3> heat_colormap(float t) {
    t = std::clamp(t, 0.0f, 1.0f);
    const auto to_byte = [](float v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
    };
    if (t <= 0.5f) {
        return {0, to_byte(510.0f * t), to_byte(255.0f - 510.0f * t)};
    }
    return {to_byte(510.0f * t - 255.0f), to_byte(510.0f - 510.0f * t), 0};
}

ImageRGB overlay(const HeatMap& heatmap, const ImageRGB& original, float alpha) {
    if (heatmap.width != original.width || heatmap.height != original.height) {
        throw DimensionError("overlay: heatmap " + std::to_string(heatmap.width) + "x" +
                             std::to_string(heatmap.height) + " vs image " +
                             std::to_string(original.width) + "x" +
                             std::to_string(original.height));
    }
    ImageRGB out = make_image(original.width, original.height);
    for (std::size_t i = 0; i < heatmap.values.size(); ++i) {
        const auto color = heat_colormap(heatmap.values[i]);
        for (std::size_t c = 0; c < 3; ++c) {
            const float blended = (1.0f - alpha) * static_cast<float>(original.pixels[i * 3 + c]) +
                                  alpha * static_cast<float>(color[c]);
            out.pixels[i * 3 + c] =
                static_cast<std::uint8_t>(std::lround(std::clamp(blended, 0.0f, 255.0f)));
        }
    }
    return out;
}

std::string heatmap_csv(const HeatMap& heatmap) {
    std::ostringstream os;
    for (std::size_t y = 0; y < heatmap.height; ++y) {
        for (std::size_t x = 0; x < heatmap.width; ++x) {
            if (x) os << ',';
            os << heatmap.at(x, y);
        }
        os << '\n';
    }
    return os.str();
}

} // namespace reefgrad
