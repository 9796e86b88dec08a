#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "reefgrad/image.hpp"
#include "reefgrad/tensor.hpp"

namespace reefgrad {

/// The two-class label set. Bleached is the positive ("damage") class.
enum class CoralClass : int { kBleached = 0, kHealthy = 1 };

const char* class_name(CoralClass c);
CoralClass parse_class(const std::string& name);

struct ManifestEntry {
    std::string path;  // relative to the dataset root
    CoralClass label;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::size_t size() const { return entries.size(); }
    std::size_t count(CoralClass c) const;

    bool operator==(const DatasetManifest&) const = default;
};

struct ManifestScan {
    DatasetManifest manifest;
    std::size_t skipped = 0;  // non-image files under the class directories
};

/// Scans `<root>/bleached` and `<root>/healthy` for image files (.ppm, .png)
/// in lexicographic path order. Missing class directories raise IoError.
ManifestScan build_manifest(const std::filesystem::path& root);

struct SplitSpec {
    double validation_fraction = 0.25;
    std::uint32_t seed = 0;
    /// Per-class ceil rounding by default; false selects the global-ceil rule
    /// (923 entries at 0.25 give 232 stratified, 231 global).
    bool stratified = true;
};

struct SplitResult {
    DatasetManifest train;
    DatasetManifest validation;
};

/// Deterministic seeded shuffle, then a partition honoring the ceil rule.
/// Entries keep their manifest order within each side.
SplitResult split(const DatasetManifest& manifest, const SplitSpec& spec);

/// CSV with header `path,label`, UTF-8, LF line endings.
void write_manifest_csv(const DatasetManifest& manifest, std::ostream& out);
void write_manifest_csv_file(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_csv(std::istream& in);
DatasetManifest read_manifest_csv_file(const std::filesystem::path& path);

/// Image loading knobs shared by training, evaluation and explanation.
struct PipelineConfig {
    std::size_t input_resolution = 128;
    bool sharpen = false;  // applied after decode, before tensor conversion
    Normalization normalization;
};

struct LoadedDataset {
    std::vector<Tensor> images;  // each [3,R,R]
    std::vector<int> labels;
};

LoadedDataset load_dataset(const DatasetManifest& manifest, const std::filesystem::path& root,
                           const PipelineConfig& config);

/// Stacks a subset of loaded images into one [B,3,R,R] batch.
Tensor stack_batch(const std::vector<Tensor>& images, const std::vector<std::size_t>& indices);

} // namespace reefgrad
