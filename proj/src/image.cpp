#include "reefgrad/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#ifdef REEFGRAD_HAS_PNG
#include <png.h>
#endif

namespace reefgrad {

namespace {

constexpr std::size_t kMaxImageDim = 1u << 16;

struct PpmParser {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("ppm: " + what + " at byte " + std::to_string(pos));
    }

    std::uint8_t peek() const {
        if (pos >= bytes.size()) {
            throw FormatError("ppm: unexpected end of data at byte " + std::to_string(pos));
        }
        return bytes[pos];
    }

    std::uint8_t next() {
        const std::uint8_t b = peek();
        ++pos;
        return b;
    }

    static bool is_space(std::uint8_t b) {
        return b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\f' || b == '\v';
    }

    // Whitespace and '#' comments between header tokens.
    void skip_separators() {
        while (pos < bytes.size()) {
            if (is_space(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                return;
            }
        }
    }

    std::size_t read_number(const char* what) {
        skip_separators();
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
            fail(std::string("expected ") + what);
        }
        std::size_t value = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            value = value * 10 + (bytes[pos] - '0');
            if (value > kMaxImageDim * kMaxImageDim) {
                fail(std::string("unreasonably large ") + what);
            }
            ++pos;
        }
        return value;
    }
};

ImageRGB decode_ppm(const std::vector<std::uint8_t>& bytes) {
    PpmParser p{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw FormatError("ppm: bad magic at byte 0 (expected 'P6')");
    }
    p.pos = 2;
    const std::size_t width = p.read_number("width");
    const std::size_t height = p.read_number("height");
    const std::size_t maxval = p.read_number("maxval");
    if (width == 0 || height == 0 || width > kMaxImageDim || height > kMaxImageDim) {
        throw FormatError("ppm: invalid dimensions " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    if (maxval != 255) {
        p.fail("maxval must be 255, got " + std::to_string(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if (p.pos >= bytes.size() || !PpmParser::is_space(bytes[p.pos])) {
        p.fail("expected single whitespace before pixel data");
    }
    ++p.pos;

    const std::size_t expected = 3 * width * height;
    if (bytes.size() - p.pos < expected) {
        throw FormatError("ppm: truncated pixel data at byte " + std::to_string(bytes.size()) +
                          " (need " + std::to_string(expected) + " bytes from offset " +
                          std::to_string(p.pos) + ")");
    }
    ImageRGB img{width, height, {}};
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(p.pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(p.pos + expected));
    return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageRGB& img) {
    const std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

#ifdef REEFGRAD_HAS_PNG
ImageRGB decode_png_bytes(const std::vector<std::uint8_t>& bytes) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw FormatError(std::string("png: ") + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    ImageRGB img{image.width, image.height, {}};
    img.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError(std::string("png: ") + image.message);
    }
    return img;
}
#endif

float sample_bilinear(const float* src, std::size_t src_w, std::size_t src_h, float sx, float sy) {
    const float fx = sx < 0 ? 0.0f : sx;
    const float fy = sy < 0 ? 0.0f : sy;
    std::size_t x0 = static_cast<std::size_t>(fx);
    std::size_t y0 = static_cast<std::size_t>(fy);
    x0 = std::min(x0, src_w - 1);
    y0 = std::min(y0, src_h - 1);
    const std::size_t x1 = std::min(x0 + 1, src_w - 1);
    const std::size_t y1 = std::min(y0 + 1, src_h - 1);
    const float wx = std::min(std::max(sx - static_cast<float>(x0), 0.0f), 1.0f);
    const float wy = std::min(std::max(sy - static_cast<float>(y0), 0.0f), 1.0f);
    const float top = src[y0 * src_w + x0] * (1.0f - wx) + src[y0 * src_w + x1] * wx;
    const float bottom = src[y1 * src_w + x0] * (1.0f - wx) + src[y1 * src_w + x1] * wx;
    return top * (1.0f - wy) + bottom * wy;
}

std::uint8_t to_byte(float v) {
    const float clamped = std::min(std::max(v, 0.0f), 255.0f);
    return static_cast<std::uint8_t>(std::lround(clamped));
}

} // namespace

ImageRGB make_image(std::size_t width, std::size_t height, std::uint8_t fill) {
    ImageRGB img{width, height, {}};
    img.pixels.assign(3 * width * height, fill);
    return img;
}

ImageRGB decode_image(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        return decode_ppm(bytes);
    }
    static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) {
#ifdef REEFGRAD_HAS_PNG
        return decode_png_bytes(bytes);
#else
        throw FormatError("png input but this build has no PNG support");
#endif
    }
    throw FormatError("unsupported image format: bad magic at byte 0");
}

std::vector<std::uint8_t> encode_image(const ImageRGB& img) {
    if (img.pixels.size() != 3 * img.width * img.height) {
        throw DimensionError("image pixel buffer does not match its dimensions");
    }
    return encode_ppm(img);
}

#ifdef REEFGRAD_HAS_PNG
std::vector<std::uint8_t> encode_png(const ImageRGB& img) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
        throw FormatError(std::string("png: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
        throw FormatError(std::string("png: ") + image.message);
    }
    out.resize(size);
    return out;
}
#endif

bool png_supported() {
#ifdef REEFGRAD_HAS_PNG
    return true;
#else
    return false;
#endif
}

ImageRGB load_image_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open image '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return decode_image(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_image_file(const ImageRGB& img, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
#ifdef REEFGRAD_HAS_PNG
    if (path.extension() == ".png") {
        bytes = encode_png(img);
    } else {
        bytes = encode_image(img);
    }
#else
    bytes = encode_image(img);
#endif
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

std::vector<float> bilinear_resample_plane(const float* src, std::size_t src_w, std::size_t src_h,
                                           std::size_t dst_w, std::size_t dst_h) {
    std::vector<float> out(dst_w * dst_h);
    if (src_w == dst_w && src_h == dst_h) {
        std::copy(src, src + src_w * src_h, out.begin());
        return out;
    }
    const float scale_x = static_cast<float>(src_w) / static_cast<float>(dst_w);
    const float scale_y = static_cast<float>(src_h) / static_cast<float>(dst_h);
    for (std::size_t y = 0; y < dst_h; ++y) {
        const float sy = (static_cast<float>(y) + 0.5f) * scale_y - 0.5f;
        for (std::size_t x = 0; x < dst_w; ++x) {
            const float sx = (static_cast<float>(x) + 0.5f) * scale_x - 0.5f;
            out[y * dst_w + x] = sample_bilinear(src, src_w, src_h, sx, sy);
        }
    }
    return out;
}

ImageRGB resize_bilinear(const ImageRGB& img, std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) {
        throw ArgumentError("resize_bilinear: target dimensions must be positive");
    }
    if (width == img.width && height == img.height) {
        return img;
    }
    ImageRGB out = make_image(width, height);
    std::vector<float> plane(img.width * img.height);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < img.width * img.height; ++i) {
            plane[i] = static_cast<float>(img.pixels[i * 3 + c]);
        }
        const auto resized = bilinear_resample_plane(plane.data(), img.width, img.height, width,
                                                     height);
        for (std::size_t i = 0; i < width * height; ++i) {
            out.pixels[i * 3 + c] = to_byte(resized[i]);
        }
    }
    return out;
}

ImageRGB resize_max_dim(const ImageRGB& img, std::size_t max_dim) {
    if (max_dim == 0) {
        throw ArgumentError("resize_max_dim: max_dim must be >= 1");
    }
    const std::size_t longest = std::max(img.width, img.height);
    if (longest <= max_dim) {
        return img;
    }
    const double scale = static_cast<double>(max_dim) / static_cast<double>(longest);
    std::size_t new_w, new_h;
    if (img.width >= img.height) {
        new_w = max_dim;
        new_h = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(static_cast<double>(img.height) * scale)));
    } else {
        new_h = max_dim;
        new_w = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(static_cast<double>(img.width) * scale)));
    }
    return resize_bilinear(img, new_w, new_h);
}

ImageRGB sharpen(const ImageRGB& img) {
    ImageRGB out = make_image(img.width, img.height);
    const auto clamp_x = [&](std::ptrdiff_t x) {
        return static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(img.width) - 1));
    };
    const auto clamp_y = [&](std::ptrdiff_t y) {
        return static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(img.height) - 1));
    };
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x);
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y);
            for (std::size_t c = 0; c < 3; ++c) {
                const int center = img.at(x, y, c);
                const int up = img.at(clamp_x(sx), clamp_y(sy - 1), c);
                const int down = img.at(clamp_x(sx), clamp_y(sy + 1), c);
                const int left = img.at(clamp_x(sx - 1), clamp_y(sy), c);
                const int right = img.at(clamp_x(sx + 1), clamp_y(sy), c);
                const int v = 5 * center - up - down - left - right;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
            }
        }
    }
    return out;
}

Tensor to_tensor(const ImageRGB& img, std::size_t target, const Normalization& normalization) {
    if (target == 0) {
        throw ArgumentError("to_tensor: target resolution must be positive");
    }
    Tensor out({3, target, target});
    std::vector<float> plane(img.width * img.height);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < img.width * img.height; ++i) {
            plane[i] = static_cast<float>(img.pixels[i * 3 + c]);
        }
        const auto resized =
            bilinear_resample_plane(plane.data(), img.width, img.height, target, target);
        float* dst = out.data() + c * target * target;
        if (normalization.standardize) {
            const float mean = normalization.mean[c];
            const float inv = 1.0f / normalization.stddev[c];
            for (std::size_t i = 0; i < resized.size(); ++i) {
                dst[i] = (resized[i] / 255.0f - mean) * inv;
            }
        } else {
            for (std::size_t i = 0; i < resized.size(); ++i) {
                dst[i] = resized[i] / 255.0f;
            }
        }
    }
    return out;
}

} // namespace reefgrad
