#pragma once

#include <array>
#include <string>

#include "reefgrad/image.hpp"
#include "reefgrad/network.hpp"

namespace reefgrad {

/// Localization map over the explained input; values are in [0,1] and the
/// all-zero map is the legitimate no-evidence result.
struct HeatMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> values;  // row-major, height x width

    float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

/// Gradient-weighted class activation map for the selected convolutional (or
/// residual-block output) activation:
///   alpha_k = spatial mean of d(logit_target)/dA_k,
///   raw map = relu(sum_k alpha_k * A_k),
/// bilinearly upsampled to the input resolution and normalized by its maximum
/// when positive. The pass is read-only: running statistics and parameters are
/// untouched.
HeatMap gradcam(const Network& network, const Tensor& input_chw, int target_class,
                const std::string& layer_name);

/// Convenience overload using the last spatial activation before the head.
HeatMap gradcam(const Network& network, const Tensor& input_chw, int target_class);

/// Piecewise-linear blue(0) -> green(0.5) -> red(1) colormap:
///   t <= 0.5: r = 0,          g = 510*t,      b = 255 - 510*t
///   t >  0.5: r = 510*t - 255, g = 510 - 510*t, b = 0
/// with each channel rounded half away from zero.
std::array<std::uint8_t, 3> heat_colormap(float t);

/// Alpha-blends the colormapped heatmap onto the original image.
ImageRGB overlay(const HeatMap& heatmap, const ImageRGB& original, float alpha = 0.4f);

/// Raw heatmap values as a CSV grid (one row per image row).
std::string heatmap_csv(const HeatMap& heatmap);

} // namespace reefgrad
