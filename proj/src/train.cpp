#include "reefgrad/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>

#include <json.hpp>

#include "reefgrad/optim.hpp"
#include "reefgrad/weights_io.hpp"

namespace reefgrad {

namespace fs = std::filesystem;

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::kSgd;
    if (name == "adam") return OptimizerKind::kAdam;
    throw ArgumentError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

const char* optimizer_name(OptimizerKind kind) {
    return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

TrainHistory train_loaded(Network& network, const LoadedDataset& data,
                          const TrainConfig& config) {
    if (data.images.empty()) {
        throw ArgumentError("train: empty dataset");
    }
    if (data.images.size() != data.labels.size()) {
        throw ArgumentError("train: image/label count mismatch");
    }
    if (config.batch_size == 0) {
        throw ArgumentError("train: batch_size must be positive");
    }
    if (!(config.learning_rate > 0.0f)) {
        throw ArgumentError("train: learning_rate must be positive");
    }

    std::unique_ptr<Optimizer> optimizer;
    if (config.optimizer == OptimizerKind::kSgd) {
        optimizer = std::make_unique<SgdOptimizer>(config.learning_rate);
    } else {
        optimizer = std::make_unique<AdamOptimizer>(config.learning_rate);
    }
    auto params = network.params();

    const std::size_t n = data.images.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937 rng(config.seed);

    TrainHistory history;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle_each_epoch || epoch == 0) {
            std::shuffle(order.begin(), order.end(), rng);
        }
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(start + config.batch_size, n);
            const std::vector<std::size_t> indices(order.begin() + start, order.begin() + end);
            const Tensor batch = stack_batch(data.images, indices);
            std::vector<int> labels(indices.size());
            for (std::size_t i = 0; i < indices.size(); ++i) {
                labels[i] = data.labels[indices[i]];
            }

            ForwardCache cache;
            const Tensor logits = network.forward(batch, Mode::kTrain, &cache);
            const auto ce = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(ce.loss)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                      ", batch " + std::to_string(batch_index + 1));
            }
            loss_sum += static_cast<double>(ce.loss) * static_cast<double>(indices.size());
            const std::size_t k = logits.dim(1);
            for (std::size_t i = 0; i < indices.size(); ++i) {
                const float* row = logits.data() + i * k;
                std::size_t pred = 0;
                for (std::size_t j = 1; j < k; ++j) {
                    if (row[j] > row[pred]) pred = j;
                }
                if (pred == static_cast<std::size_t>(labels[i])) ++correct;
            }

            const GradStore grads = network.backward(cache, ce.grad_logits);
            optimizer->step(params, grads);
        }
        history.epochs.push_back({loss_sum / static_cast<double>(n),
                                  static_cast<double>(correct) / static_cast<double>(n)});
    }
    return history;
}

TrainHistory train(Network& network, const DatasetManifest& manifest, const fs::path& root,
                   const PipelineConfig& pipeline, const TrainConfig& config) {
    if (manifest.entries.empty()) {
        throw ArgumentError("train: empty dataset");
    }
    const LoadedDataset data = load_dataset(manifest, root, pipeline);
    return train_loaded(network, data, config);
}

void checkpoint(const Network& network, const TrainHistory& history, const fs::path& path) {
    save_weights_file(network, path);
    nlohmann::json sidecar;
    sidecar["epochs_completed"] = history.size();
    auto entries = nlohmann::json::array();
    for (const auto& e : history.epochs) {
        entries.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
    }
    sidecar["history"] = std::move(entries);
    const fs::path sidecar_path = path.string() + ".json";
    std::ofstream out(sidecar_path);
    if (!out) {
        throw IoError("cannot open '" + sidecar_path.string() + "' for writing");
    }
    out << sidecar.dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing '" + sidecar_path.string() + "'");
    }
}

TrainHistory resume(const fs::path& path, Network& network) {
    load_weights_file(network, path);
    const fs::path sidecar_path = path.string() + ".json";
    std::ifstream in(sidecar_path);
    if (!in) {
        throw IoError("cannot open checkpoint sidecar '" + sidecar_path.string() + "'");
    }
    nlohmann::json sidecar;
    try {
        in >> sidecar;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint sidecar is not valid JSON: " + std::string(e.what()));
    }
    TrainHistory history;
    for (const auto& e : sidecar.at("history")) {
        history.epochs.push_back({e.at("loss").get<double>(), e.at("accuracy").get<double>()});
    }
    if (sidecar.at("epochs_completed").get<std::size_t>() != history.size()) {
        throw FormatError("checkpoint sidecar epochs_completed does not match history length");
    }
    return history;
}

} // namespace reefgrad
