// adversarial.hpp - evasion attacks against a trained classifier
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trustbench/checkpoint.hpp"
#include "trustbench/dataset.hpp"
#include "trustbench/engine.hpp"

namespace trustbench {

enum class AttackKind { Identity, FGM, PGD, DeepFool, NewtonFool, CWL2, CWLinf, Zoo, HopSkipJump };
enum class Norm { L2, Linf };

std::string_view to_string(AttackKind k);
AttackKind parse_attack(std::string_view name); // ConfigError on unknown names
std::string_view to_string(Norm n);
Norm parse_norm(std::string_view name);

/// Budgeted attacks (FGM, PGD, CW-Linf) keep every perturbation inside eps;
/// the others look for the smallest perturbation and report its norm.
bool is_budgeted(AttackKind k);
/// Zoo and HopSkipJump only see model outputs, never gradients.
bool is_black_box(AttackKind k);

struct AttackConfig {
    AttackKind kind = AttackKind::FGM;
    Norm norm = Norm::Linf;
    double eps = 0.05;         // budget; a multiple of the batch RMS when eps_relative
    bool eps_relative = true;
    double step = 0.0;         // PGD step, 0 means eps / 4
    int iterations = 0;        // 0 picks the per-attack default
    double overshoot = 0.02;   // DeepFool
    double eta = 0.01;         // NewtonFool
    double confidence = 0.0;   // C&W and Zoo margin
    double learning_rate = 0.0; // C&W and Zoo, 0 picks the default
    double initial_const = 0.0; // C&W and Zoo, 0 picks the default
    int binary_search_steps = 5;
    int zoo_coordinates = 64;
    double zoo_h = 1e-3;
    int hsj_init_evals = 25;
    int hsj_max_evals = 100;
    int hsj_init_trials = 20;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
    int effective_iterations() const;
    double effective_learning_rate() const;
    double effective_initial_const() const;
};

/// White-box access to one model. Every backward pass increments
/// gradient_calls(). Not thread-safe.
class ModelContext {
public:
    ModelContext(const ModelGraph& graph, const Parameters& params);

    int input_size() const { return ex_.input_size(); }
    int classes() const { return ex_.classes(); }

    /// Logits (count x classes); the pass is kept for a following backward().
    std::span<const float> forward(std::span<const float> x, int count);
    std::span<const float> probabilities() const { return ex_.probabilities(); }
    /// Input gradient of sum(seed * logits) for the last forward().
    std::vector<float> backward(std::span<const float> logit_seed);

    std::vector<int> predict(std::span<const float> x, int count);
    /// Per-sample gradient of the cross-entropy w.r.t. the input.
    std::vector<float> loss_gradient(std::span<const float> x, std::span<const int> labels);

    std::uint64_t gradient_calls() const { return gradient_calls_; }

private:
    const Parameters& params_;
    Executor<float> ex_;
    std::uint64_t gradient_calls_ = 0;
};

/// Score-only view of a model: class probabilities and labels, counted per
/// queried sample. Offers no gradient channel.
class QueryOracle {
public:
    explicit QueryOracle(ModelContext& model) : model_(model) {}

    std::vector<float> scores(std::span<const float> x, int count);
    std::vector<int> labels(std::span<const float> x, int count);
    std::uint64_t queries() const { return queries_; }
    int input_size() const { return model_.input_size(); }
    int classes() const { return model_.classes(); }

private:
    ModelContext& model_;
    std::uint64_t queries_ = 0;
};

// Batch attacks on count samples of model.input_size() floats. `labels` are
// the true classes. All return adversarial inputs laid out like x.
std::vector<float> fgm(ModelContext& m, std::span<const float> x, std::span<const int> labels, double eps, Norm norm);
std::vector<float> pgd(ModelContext& m, std::span<const float> x, std::span<const int> labels, double eps, double step,
                       int iterations, Norm norm);
std::vector<float> deepfool(ModelContext& m, std::span<const float> x, int count, int iterations, double overshoot);
std::vector<float> newtonfool(ModelContext& m, std::span<const float> x, int count, int iterations, double eta);
std::vector<float> carlini_l2(ModelContext& m, std::span<const float> x, std::span<const int> labels,
                              const AttackConfig& cfg);
std::vector<float> carlini_linf(ModelContext& m, std::span<const float> x, std::span<const int> labels, double eps,
                                const AttackConfig& cfg);
/// Single-sample black-box attacks; rng drives coordinate and probe choices.
std::vector<float> zoo(QueryOracle& o, std::span<const float> x, int label, const AttackConfig& cfg, Rng& rng);
std::vector<float> hop_skip_jump(QueryOracle& o, std::span<const float> x, const AttackConfig& cfg, Rng& rng);

struct AttackSample {
    int label = 0;
    int clean_prediction = 0;
    int adversarial_prediction = 0;
    double l2 = 0.0;
    double linf = 0.0;
    std::uint64_t queries = 0;
    bool operator==(const AttackSample&) const = default;
};

struct AttackResult {
    AttackConfig config;
    double eps_absolute = 0.0;
    std::vector<AttackSample> samples;
    std::vector<float> adversarial; // samples x input size
    double clean_accuracy = 0.0;
    double aer = 0.0;
    std::uint64_t gradient_calls = 0;
    std::uint64_t queries = 0;

    double mean_l2() const;
    double mean_linf() const;
};

/// Fraction of samples whose prediction equals the true label.
double aer(std::span<const int> predictions, std::span<const int> labels);

/// Root mean square over every element of the batch.
double batch_rms(std::span<const float> x);

/// Runs the configured attack over the batch in fixed chunks spread over the
/// worker pool. Sample i draws randomness from (config.seed, i). Samples the
/// model already misclassifies are returned unperturbed.
AttackResult run_attack(const Checkpoint& ckpt, std::span<const float> frames, std::span<const int> labels,
                        const AttackConfig& config);
AttackResult run_attack(const Checkpoint& ckpt, const DatasetView& view, const AttackConfig& config);

} // namespace trustbench
