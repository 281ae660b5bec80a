// robustness.hpp - accuracy as a function of SNR
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustbench/checkpoint.hpp"
#include "trustbench/dataset.hpp"
#include "trustbench/trainer.hpp"

namespace trustbench {

struct SnrPoint {
    double snr_db = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct SnrSweepResult {
    std::string model;
    std::vector<SnrPoint> points; // ascending SNR, one per grid level

    double overall_accuracy() const;
    std::vector<double> snr() const;
    std::vector<double> accuracy() const;
};

/// Every grid level of the dataset must be present in the view (MissingLevel
/// otherwise) and the grid must hold at least two levels.
SnrSweepResult sweep_from_predictions(std::span<const int> predictions, const DatasetView& test, std::string model);
SnrSweepResult snr_sweep(const Predictor& predictor, const DatasetView& test, std::string model);
SnrSweepResult snr_sweep(const Checkpoint& ckpt, const DatasetView& test);

/// Rank correlation with average ranks for ties. Returns NaN when either
/// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

/// Correlation of accuracy against SNR, restricted to [lo, hi] when given.
double snr_monotonicity(const SnrSweepResult& r, std::optional<double> lo = {}, std::optional<double> hi = {});

struct SweepComparison {
    std::vector<double> snr_db;
    std::vector<double> delta; // b - a
    double spearman_a = 0.0;
    double spearman_b = 0.0;
};

/// Both sweeps must share a grid (ValidationError otherwise).
SweepComparison compare_sweeps(const SnrSweepResult& a, const SnrSweepResult& b);

} // namespace trustbench
