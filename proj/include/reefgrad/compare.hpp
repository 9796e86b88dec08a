#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "reefgrad/dataset.hpp"
#include "reefgrad/metrics.hpp"
#include "reefgrad/train.hpp"

namespace reefgrad {

/// Settings for the five-model comparison. The three pretrained-style rows
/// train a transfer head on a freshly initialized backbone unless a weight
/// file is supplied for that model key (imitation, resnet50, resnet101,
/// resnet152).
struct CompareOptions {
    PipelineConfig pipeline;  // resolution/normalization; sharpen is per-row
    TrainConfig train;
    SplitSpec split;
    std::size_t hidden_units = 256;
    bool freeze_backbone = false;
    std::map<std::string, std::filesystem::path> weight_files;
};

struct CompareRow {
    std::string label;    // Tabel-3 row label string
    std::string weights;  // "random-init" or the supplied file name
    bool ok = false;
    std::string error;
    MetricsReport report;
};

struct CompareResult {
    std::vector<CompareRow> rows;
    std::uint32_t seed = 0;

    std::size_t succeeded() const;
};

/// Runs the five configurations on one shared split. A failing row is marked
/// failed and the remaining rows still run.
CompareResult run_comparison(const DatasetManifest& manifest,
                             const std::filesystem::path& root, const CompareOptions& options);

nlohmann::json comparison_to_json(const CompareResult& result);
std::string comparison_table(const CompareResult& result);

} // namespace reefgrad
