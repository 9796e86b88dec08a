#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "reefgrad/dataset.hpp"
#include "reefgrad/network.hpp"

namespace reefgrad {

/// Counts with bleached as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }

    bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricsReport {
    std::string model;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    ConfusionMatrix confusion;
    /// Degenerate denominators are reported as 0 with the flag set rather
    /// than NaN, keeping reports comparable.
    bool degenerate_precision = false;
    bool degenerate_recall = false;
};

MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion, std::string model);

/// Infer-mode pass over the whole manifest; argmax per image (ties to the
/// lower class index).
MetricsReport evaluate(const Network& network, const DatasetManifest& manifest,
                       const std::filesystem::path& root, const PipelineConfig& config,
                       std::string model_name);

/// Evaluation over tensors already in memory.
MetricsReport evaluate_loaded(const Network& network, const LoadedDataset& data,
                              std::string model_name);

nlohmann::json report_to_json(const MetricsReport& report);

/// "0.78"-style fixed two-decimal formatting used in report tables.
std::string format_metric(double value);

} // namespace reefgrad
