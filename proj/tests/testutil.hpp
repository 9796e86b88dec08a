#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "reefgrad/dataset.hpp"
#include "reefgrad/image.hpp"

namespace testutil {

/// Self-removing unique temp directory.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("reefgrad_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Writes a brightness-separable two-class corpus: bright images are bleached,
/// dark images are healthy. Per-pixel noise keeps the task non-degenerate.
inline void write_synthetic_dataset(const std::filesystem::path& root, std::size_t per_class,
                                    std::size_t size, std::uint32_t seed) {
    std::filesystem::create_directories(root / "bleached");
    std::filesystem::create_directories(root / "healthy");
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> noise(-25, 25);
    for (std::size_t i = 0; i < per_class; ++i) {
        for (const bool bright : {true, false}) {
            reefgrad::ImageRGB img = reefgrad::make_image(size, size);
            const int base = bright ? 205 : 50;
            for (auto& p : img.pixels) {
                p = static_cast<std::uint8_t>(std::clamp(base + noise(rng), 0, 255));
            }
            char name[32];
            std::snprintf(name, sizeof(name), "img%03zu.ppm", i);
            reefgrad::save_image_file(img, root / (bright ? "bleached" : "healthy") / name);
        }
    }
}

} // namespace testutil
