#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "reefgrad/errors.hpp"
#include "reefgrad/tensor.hpp"

namespace reefgrad {

/// 8-bit-per-channel RGB raster, row-major.
struct ImageRGB {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // 3 * width * height bytes

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
        return pixels[(y * width + x) * 3 + c];
    }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }

    bool operator==(const ImageRGB&) const = default;
};

ImageRGB make_image(std::size_t width, std::size_t height, std::uint8_t fill = 0);

/// Decodes binary PPM (P6, maxval 255) always; PNG when built with libpng.
/// Malformed input raises FormatError naming the byte offset.
ImageRGB decode_image(const std::vector<std::uint8_t>& bytes);
/// Encodes as binary PPM; decode(encode(img)) is bitwise lossless.
std::vector<std::uint8_t> encode_image(const ImageRGB& img);

#ifdef REEFGRAD_HAS_PNG
std::vector<std::uint8_t> encode_png(const ImageRGB& img);
#endif

bool png_supported();

ImageRGB load_image_file(const std::filesystem::path& path);
void save_image_file(const ImageRGB& img, const std::filesystem::path& path);

/// Downscales so max(width, height) == max_dim, preserving aspect ratio
/// (bilinear, half-pixel centers). Images already within the bound pass
/// through unchanged; there is no upscaling.
ImageRGB resize_max_dim(const ImageRGB& img, std::size_t max_dim = 300);

/// Exact-size bilinear resample (half-pixel centers, round half away from
/// zero back to 8 bits).
ImageRGB resize_bilinear(const ImageRGB& img, std::size_t width, std::size_t height);

/// 3x3 sharpening convolution [[0,-1,0],[-1,5,-1],[0,-1,0]] per channel with
/// replicate-edge padding, clamped to [0,255]. Constant images are unchanged.
ImageRGB sharpen(const ImageRGB& img);

struct Normalization {
    bool standardize = false;           // false: scale to [0,1]
    std::array<float, 3> mean{0, 0, 0};  // applied after /255 when standardizing
    std::array<float, 3> stddev{1, 1, 1};
};

/// Bilinear-resizes to target x target (aspect ratio not preserved) and lays
/// the result out channels-first as a [3,target,target] tensor.
Tensor to_tensor(const ImageRGB& img, std::size_t target,
                 const Normalization& normalization = {});

/// Resamples one float plane with bilinear interpolation at half-pixel
/// centers. Shared by the image pipeline and heatmap upsampling.
std::vector<float> bilinear_resample_plane(const float* src, std::size_t src_w, std::size_t src_h,
                                           std::size_t dst_w, std::size_t dst_h);

} // namespace reefgrad
