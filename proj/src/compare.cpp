#include "reefgrad/compare.hpp"

#include <cstdio>

#include "reefgrad/builders.hpp"
#include "reefgrad/weights_io.hpp"

namespace reefgrad {

namespace {

struct RowSpec {
    std::string label;
    std::string model_key;  // weight_files key
    int resnet_depth;       // 0 for the imitation model
    bool sharpen;
};

const std::vector<RowSpec>& row_specs() {
    static const std::vector<RowSpec> specs = {
        {"ResNet101", "resnet101", 101, false},
        {"ResNet152", "resnet152", 152, false},
        {"ResNet50", "resnet50", 50, false},
        {"ResNet (Imitation)", "imitation", 0, false},
        {"ResNet (Imitation) + preprocessing", "imitation", 0, true},
    };
    return specs;
}

} // namespace

std::size_t CompareResult::succeeded() const {
    std::size_t n = 0;
    for (const auto& row : rows) {
        if (row.ok) ++n;
    }
    return n;
}

CompareResult run_comparison(const DatasetManifest& manifest, const std::filesystem::path& root,
                             const CompareOptions& options) {
    const SplitResult shared_split = split(manifest, options.split);

    CompareResult result;
    result.seed = options.train.seed;
    for (const auto& spec : row_specs()) {
        CompareRow row;
        row.label = spec.label;
        row.weights = "random-init";
        try {
            Network net;
            if (spec.resnet_depth == 0) {
                net = build_imitation_resnet(options.pipeline.input_resolution, 2,
                                             options.train.seed);
            } else {
                Network backbone = build_resnet_family(spec.resnet_depth, 2, options.train.seed,
                                                       /*include_classifier=*/false);
                net = attach_transfer_head(std::move(backbone), options.hidden_units, 2,
                                           options.freeze_backbone, options.train.seed + 1);
            }
            const auto weights_it = options.weight_files.find(spec.model_key);
            if (weights_it != options.weight_files.end()) {
                load_weights_file(net, weights_it->second);
                row.weights = weights_it->second.filename().string();
            }

            PipelineConfig pipeline = options.pipeline;
            pipeline.sharpen = spec.sharpen;
            train(net, shared_split.train, root, pipeline, options.train);
            row.report = evaluate(net, shared_split.validation, root, pipeline, spec.label);
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

nlohmann::json comparison_to_json(const CompareResult& result) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : result.rows) {
        if (row.ok) {
            nlohmann::json entry = report_to_json(row.report);
            entry["status"] = "ok";
            entry["weights"] = row.weights;
            rows.push_back(std::move(entry));
        } else {
            rows.push_back({{"model", row.label},
                            {"status", "failed"},
                            {"error", row.error},
                            {"weights", row.weights}});
        }
    }
    return nlohmann::json{{"seed", result.seed}, {"rows", std::move(rows)}};
}

std::string comparison_table(const CompareResult& result) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-40s %-9s %-10s %-7s\n", "Model", "Accuracy", "Precision",
                  "Recall");
    out += line;
    for (const auto& row : result.rows) {
        if (row.ok) {
            std::snprintf(line, sizeof(line), "%-40s %-9s %-10s %-7s\n", row.label.c_str(),
                          format_metric(row.report.accuracy).c_str(),
                          format_metric(row.report.precision).c_str(),
                          format_metric(row.report.recall).c_str());
        } else {
            std::snprintf(line, sizeof(line), "%-40s failed: %s\n", row.label.c_str(),
                          row.error.c_str());
        }
        out += line;
    }
    return out;
}

} // namespace reefgrad
