// trainer.hpp - stratified splits, Adam training and evaluation
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trustbench/checkpoint.hpp"
#include "trustbench/dataset.hpp"
#include "trustbench/graph.hpp"

namespace trustbench {

struct SplitPlan {
    double train_fraction = 0.75;
    std::uint64_t seed = 0;
};

struct DatasetSplit {
    DatasetView train;
    DatasetView test;
    std::size_t train_per_cell = 0;
    std::size_t test_per_cell = 0;
};

/// Per-(scheme, snr) cell split: every cell contributes floor(fraction * n)
/// frames to train and the rest to test. Throws InvalidFraction when either
/// side would be empty.
DatasetSplit split_dataset(const Dataset& data, const SplitPlan& plan);

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-7;
    int batch_size = 128;
    int epochs = 50;
    int patience = 5;
    double validation_fraction = 0.1;
    std::uint64_t seed = 1;
    std::string dataset_hash;

    void validate(std::size_t train_size) const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochRecord> history;
    int best_epoch = 0; // 0 when no epoch ran
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on batch-mean cross-entropy. Keeps the parameters of
/// the epoch with the lowest validation loss and stops after `patience`
/// epochs without improvement. Deterministic in (config.seed, data).
/// Throws TrainingDiverged when the loss becomes NaN.
TrainResult train(const ModelGraph& graph, const DatasetView& train_view, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});
TrainResult train(const ModelGraph& graph, Parameters init, const DatasetView& train_view, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Maps count frames (kFrameFloats floats each) to class predictions; -1
/// marks "no valid prediction".
using Predictor = std::function<std::vector<int>(std::span<const float> frames, int count)>;

/// Batched inference for a checkpoint; chunks run on the worker pool.
std::vector<int> predict(const ModelGraph& graph, const Parameters& params, const DatasetView& view);
Predictor make_predictor(const Checkpoint& ckpt);

struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{}; // [true][predicted]
    std::array<std::uint64_t, kNumClasses> invalid{};                         // no valid prediction

    void add(int truth, int predicted);
    std::uint64_t total() const;
    std::uint64_t correct() const;
    std::uint64_t row_total(int truth) const;
    double accuracy() const;
    double class_accuracy(int truth) const;
};

struct EvalResult {
    double accuracy = 0.0;
    std::map<double, double> per_snr_accuracy;
    std::map<double, std::size_t> per_snr_count;
    ConfusionMatrix confusion;
};

EvalResult evaluate_predictions(std::span<const int> predictions, const DatasetView& view);
EvalResult evaluate(const Predictor& predictor, const DatasetView& view);
EvalResult evaluate(const Checkpoint& ckpt, const DatasetView& view);

/// Copies the frames of a view into one contiguous buffer.
std::vector<float> gather_frames(const DatasetView& view, std::size_t first = 0, std::size_t count = SIZE_MAX);
std::vector<int> gather_labels(const DatasetView& view);

} // namespace trustbench
