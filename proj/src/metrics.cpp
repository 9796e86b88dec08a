#include "reefgrad/metrics.hpp"

#include <cstdio>
#include <numeric>

namespace reefgrad {

MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion, std::string model) {
    MetricsReport report;
    report.model = std::move(model);
    report.confusion = confusion;
    const std::size_t total = confusion.total();
    if (total == 0) {
        throw ArgumentError("metrics require at least one evaluated sample");
    }
    report.accuracy =
        static_cast<double>(confusion.tp + confusion.tn) / static_cast<double>(total);
    if (confusion.tp + confusion.fp > 0) {
        report.precision = static_cast<double>(confusion.tp) /
                           static_cast<double>(confusion.tp + confusion.fp);
    } else {
        report.degenerate_precision = true;
    }
    if (confusion.tp + confusion.fn > 0) {
        report.recall = static_cast<double>(confusion.tp) /
                        static_cast<double>(confusion.tp + confusion.fn);
    } else {
        report.degenerate_recall = true;
    }
    return report;
}

MetricsReport evaluate_loaded(const Network& network, const LoadedDataset& data,
                              std::string model_name) {
    if (data.images.empty()) {
        throw ArgumentError("evaluate: empty dataset");
    }
    constexpr std::size_t kBatch = 16;
    ConfusionMatrix confusion;
    for (std::size_t start = 0; start < data.images.size(); start += kBatch) {
        const std::size_t end = std::min(start + kBatch, data.images.size());
        std::vector<std::size_t> indices(end - start);
        std::iota(indices.begin(), indices.end(), start);
        const Tensor batch = stack_batch(data.images, indices);
        const Tensor logits = network.forward(batch, Mode::kInfer);
        const std::size_t k = logits.dim(1);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const float* row = logits.data() + i * k;
            std::size_t pred = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (row[j] > row[pred]) pred = j;
            }
            const bool actual_pos = data.labels[indices[i]] ==
                                    static_cast<int>(CoralClass::kBleached);
            const bool predicted_pos = pred == static_cast<std::size_t>(CoralClass::kBleached);
            if (predicted_pos && actual_pos) ++confusion.tp;
            else if (predicted_pos && !actual_pos) ++confusion.fp;
            else if (!predicted_pos && actual_pos) ++confusion.fn;
            else ++confusion.tn;
        }
    }
    return metrics_from_confusion(confusion, std::move(model_name));
}

MetricsReport evaluate(const Network& network, const DatasetManifest& manifest,
                       const std::filesystem::path& root, const PipelineConfig& config,
                       std::string model_name) {
    if (manifest.entries.empty()) {
        throw ArgumentError("evaluate: empty dataset");
    }
    const LoadedDataset data = load_dataset(manifest, root, config);
    return evaluate_loaded(network, data, std::move(model_name));
}

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json degenerate = nlohmann::json::array();
    if (report.degenerate_precision) degenerate.push_back("precision");
    if (report.degenerate_recall) degenerate.push_back("recall");
    return nlohmann::json{
        {"model", report.model},
        {"accuracy", report.accuracy},
        {"precision", report.precision},
        {"recall", report.recall},
        {"confusion",
         {{"tp", report.confusion.tp},
          {"fp", report.confusion.fp},
          {"fn", report.confusion.fn},
          {"tn", report.confusion.tn}}},
        {"degenerate_flags", degenerate},
    };
}

std::string format_metric(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

} // namespace reefgrad
