#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reefgrad/dataset.hpp"
#include "reefgrad/network.hpp"

namespace reefgrad {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer(const std::string& name);
const char* optimizer_name(OptimizerKind kind);

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    float learning_rate = 1e-3f;
    OptimizerKind optimizer = OptimizerKind::kAdam;  // beta1 0.9, beta2 0.999, eps 1e-8
    std::uint32_t seed = 0;
    bool shuffle_each_epoch = true;
};

struct EpochStats {
    double loss = 0.0;      // mean training loss over the epoch's samples
    double accuracy = 0.0;  // argmax accuracy over the epoch's training batches
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    std::size_t size() const { return epochs.size(); }
};

/// Epochs x batches of forward/backward/step. The shuffle order is derived
/// from config.seed, so the whole trajectory is deterministic. A non-finite
/// loss raises DivergenceError naming the epoch and batch.
TrainHistory train(Network& network, const DatasetManifest& manifest,
                   const std::filesystem::path& root, const PipelineConfig& pipeline,
                   const TrainConfig& config);

/// Same loop over tensors already in memory.
TrainHistory train_loaded(Network& network, const LoadedDataset& data, const TrainConfig& config);

/// Writes the RNWT weight file at `path` and a JSON sidecar at `path + ".json"`
/// with {epochs_completed, history: [{loss, accuracy}]}.
void checkpoint(const Network& network, const TrainHistory& history,
                const std::filesystem::path& path);

/// Restores parameters (bitwise) and history into a caller-built network of
/// the same architecture.
TrainHistory resume(const std::filesystem::path& path, Network& network);

} // namespace reefgrad
