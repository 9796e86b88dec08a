#include "reefgrad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace reefgrad {

namespace fs = std::filesystem;

const char* class_name(CoralClass c) {
    return c == CoralClass::kBleached ? "bleached" : "healthy";
}

CoralClass parse_class(const std::string& name) {
    if (name == "bleached") return CoralClass::kBleached;
    if (name == "healthy") return CoralClass::kHealthy;
    throw ArgumentError("unknown class '" + name + "' (expected bleached or healthy)");
}

std::size_t DatasetManifest::count(CoralClass c) const {
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.label == c) ++n;
    }
    return n;
}

namespace {

bool image_extension(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".ppm" || ext == ".png";
}

} // namespace

ManifestScan build_manifest(const fs::path& root) {
    ManifestScan scan;
    for (CoralClass c : {CoralClass::kBleached, CoralClass::kHealthy}) {
        const fs::path dir = root / class_name(c);
        if (!fs::is_directory(dir)) {
            throw IoError("dataset layout error: missing class directory '" + dir.string() + "'");
        }
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            if (!image_extension(entry.path())) {
                ++scan.skipped;
                continue;
            }
            scan.manifest.entries.push_back(
                {std::string(class_name(c)) + "/" + entry.path().filename().string(), c});
        }
    }
    std::sort(scan.manifest.entries.begin(), scan.manifest.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
    return scan;
}

SplitResult split(const DatasetManifest& manifest, const SplitSpec& spec) {
    if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) {
        throw ArgumentError("validation fraction must be in (0,1), got " +
                            std::to_string(spec.validation_fraction));
    }
    if (manifest.size() < 2) {
        throw ArgumentError("split requires at least 2 manifest entries");
    }

    std::mt19937 rng(spec.seed);
    std::vector<bool> in_validation(manifest.size(), false);
    std::size_t val_total = 0;

    const auto take = [&](std::vector<std::size_t>& indices, std::size_t count) {
        std::shuffle(indices.begin(), indices.end(), rng);
        for (std::size_t i = 0; i < count && i < indices.size(); ++i) {
            in_validation[indices[i]] = true;
            ++val_total;
        }
    };

    if (spec.stratified) {
        for (CoralClass c : {CoralClass::kBleached, CoralClass::kHealthy}) {
            std::vector<std::size_t> indices;
            for (std::size_t i = 0; i < manifest.size(); ++i) {
                if (manifest.entries[i].label == c) indices.push_back(i);
            }
            if (indices.empty()) continue;
            const auto count = static_cast<std::size_t>(
                std::ceil(spec.validation_fraction * static_cast<double>(indices.size())));
            take(indices, count);
        }
    } else {
        std::vector<std::size_t> indices(manifest.size());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        const auto count = static_cast<std::size_t>(
            std::ceil(spec.validation_fraction * static_cast<double>(indices.size())));
        take(indices, count);
    }

    if (val_total == 0 || val_total >= manifest.size()) {
        throw ArgumentError("split leaves an empty side (validation " +
                            std::to_string(val_total) + " of " + std::to_string(manifest.size()) +
                            ")");
    }

    SplitResult result;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        (in_validation[i] ? result.validation : result.train).entries.push_back(
            manifest.entries[i]);
    }
    return result;
}

void write_manifest_csv(const DatasetManifest& manifest, std::ostream& out) {
    out << "path,label\n";
    for (const auto& e : manifest.entries) {
        out << e.path << ',' << class_name(e.label) << '\n';
    }
}

void write_manifest_csv_file(const DatasetManifest& manifest, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    write_manifest_csv(manifest, out);
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

DatasetManifest read_manifest_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "path,label") {
        throw FormatError("manifest csv: missing 'path,label' header");
    }
    DatasetManifest manifest;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0) {
            throw FormatError("manifest csv: malformed line " + std::to_string(line_no));
        }
        const std::string path = line.substr(0, comma);
        const std::string label = line.substr(comma + 1);
        manifest.entries.push_back({path, parse_class(label)});
    }
    return manifest;
}

DatasetManifest read_manifest_csv_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open manifest '" + path.string() + "'");
    }
    return read_manifest_csv(in);
}

LoadedDataset load_dataset(const DatasetManifest& manifest, const fs::path& root,
                           const PipelineConfig& config) {
    LoadedDataset data;
    data.images.reserve(manifest.size());
    data.labels.reserve(manifest.size());
    for (const auto& entry : manifest.entries) {
        ImageRGB img = load_image_file(root / entry.path);
        if (config.sharpen) {
            img = sharpen(img);
        }
        data.images.push_back(to_tensor(img, config.input_resolution, config.normalization));
        data.labels.push_back(static_cast<int>(entry.label));
    }
    return data;
}

Tensor stack_batch(const std::vector<Tensor>& images, const std::vector<std::size_t>& indices) {
    if (indices.empty()) {
        throw ArgumentError("stack_batch: empty index list");
    }
    const auto& first = images.at(indices[0]);
    require_ndim(first, 3, "stack_batch image");
    Tensor batch({indices.size(), first.dim(0), first.dim(1), first.dim(2)});
    const std::size_t stride = first.numel();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& img = images.at(indices[i]);
        if (!img.same_shape(first)) {
            throw DimensionError("stack_batch: images have mixed shapes");
        }
        std::copy(img.data(), img.data() + stride, batch.data() + i * stride);
    }
    return batch;
}

} // namespace reefgrad
