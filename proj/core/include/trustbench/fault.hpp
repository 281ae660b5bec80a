// fault.hpp - single-bit parameter fault campaigns
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trustbench/checkpoint.hpp"
#include "trustbench/dataset.hpp"

namespace trustbench {

/// Value of v with IEEE-754 bit `bit` inverted (0 = mantissa LSB, 31 = sign).
/// Throws InvalidBit outside [0, 31].
float flip_bit(float v, int bit);

struct CampaignConfig {
    /// "all", "conv", "residual", "dense", a group name ("C2", "R3", ...) or
    /// a comma-separated list of those.
    std::string target = "all";
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    int bit_lo = 0; // inclusive bit range; narrowing it is a diagnostic mode
    int bit_hi = 31;
    /// Skip BatchNorm running statistics.
    bool trainable_only = false;
};

struct FaultTrial {
    std::size_t trial = 0;
    std::string group;
    std::string tensor;
    std::size_t index = 0; // flat index inside the tensor
    int bit = 0;
    float original = 0.0f;
    float flipped = 0.0f;
    double accuracy = 0.0;
};

struct CampaignResult {
    double baseline_accuracy = 0.0;
    std::size_t eval_frames = 0;
    std::size_t candidate_scalars = 0;
    std::vector<FaultTrial> trials;
};

/// Slot indices (into param_slots(graph)) a target selects. ConfigError when
/// it selects nothing.
std::vector<std::size_t> select_slots(const ModelGraph& graph, const std::string& target, bool trainable_only);

using TrialCallback = std::function<void(std::size_t done, std::size_t total)>;

/// Each trial flips one uniformly chosen bit of one uniformly chosen scalar in
/// the selected tensors, scores the eval frames and reverts. Trial t draws
/// from its own stream so results do not depend on the worker count. The
/// checkpoint is never modified.
CampaignResult run_campaign(const Checkpoint& ckpt, std::span<const float> frames, std::span<const int> labels,
                            const CampaignConfig& config, const TrialCallback& progress = {});
CampaignResult run_campaign(const Checkpoint& ckpt, const DatasetView& eval, const CampaignConfig& config,
                            const TrialCallback& progress = {});

enum class FaultOutcome { Benign, Degradation, Misclassification };
std::string_view to_string(FaultOutcome o);

/// accuracy < 0.5 is a misclassification; accuracy below baseline - delta a
/// degradation; anything else is benign.
FaultOutcome classify(double accuracy, double baseline, double delta = 0.01);

struct SensitivityCell {
    std::string group;
    int bit = 0;
    std::size_t trials = 0;
    double mean_accuracy = 0.0;
    std::size_t benign = 0;
    std::size_t degradation = 0;
    std::size_t misclassification = 0;
};

struct SensitivityReport {
    double baseline = 0.0;
    double delta = 0.01;
    std::vector<std::string> groups; // first-seen order
    std::vector<SensitivityCell> cells; // (group, bit) pairs that received trials
    std::size_t benign = 0;
    std::size_t degradation = 0;
    std::size_t misclassification = 0;
};

SensitivityReport classify_trials(std::span<const FaultTrial> trials, double baseline, double delta = 0.01);

} // namespace trustbench
