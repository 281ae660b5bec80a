// engine.hpp - forward and reverse-mode evaluation of a ModelGraph
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trustbench/graph.hpp"
#include "trustbench/rng.hpp"
#include "trustbench/tensor.hpp"

namespace trustbench {

enum class Mode { Train, Infer };

/// Evaluates a graph layer by layer, keeping every activation so a backward
/// pass (or a forward pass resumed mid-graph) can follow. Parameters are
/// passed per call and never modified. Scalar is the compute type; float is
/// the production instantiation, double backs the gradient checks.
///
/// Not thread-safe: give each worker its own executor.
template <typename Scalar>
class Executor {
public:
    explicit Executor(ModelGraph graph);

    const ModelGraph& graph() const { return graph_; }
    const std::vector<ParamSlot>& slots() const { return slots_; }
    const std::vector<Shape>& shapes() const { return shapes_; }
    int input_size() const { return static_cast<int>(element_count(graph_.input_shape)); }
    int classes() const { return graph_.num_classes; }
    int batch() const { return batch_; }

    /// input holds batch samples of input_size() floats each. Train mode
    /// uses batch statistics and needs rng for AlphaDropout.
    void forward(const Parameters& params, std::span<const float> input, int batch, Mode mode, Rng* rng = nullptr);

    /// Activation indices that must be supplied to resume at layer `start`.
    std::vector<int> resume_points(int start) const;
    /// Supplies activation `index` (batch x its shape) before forward_from.
    void set_activation(int index, std::span<const Scalar> values, int batch);
    void forward_from(const Parameters& params, int start, Mode mode, Rng* rng = nullptr);

    std::span<const Scalar> activation(int index) const { return acts_[index]; }
    std::span<const Scalar> logits() const { return acts_[graph_.layers.size() - 1]; }
    std::span<const Scalar> probabilities() const { return acts_.back(); }

    /// Batch-mean categorical cross-entropy of the last forward; grad_logits
    /// receives d(loss)/d(logits).
    double cross_entropy(std::span<const int> labels, std::vector<Scalar>& grad_logits) const;

    /// Reverse pass seeded with a gradient w.r.t. the logits (the Softmax input).
    void backward(const Parameters& params, std::span<const Scalar> grad_logits, bool want_param_grads,
                  bool want_input_grad);

    /// Gradients indexed like slots(); non-trainable slots stay zero.
    const std::vector<std::vector<Scalar>>& param_grads() const { return param_grads_; }
    std::span<const Scalar> input_grad() const { return grads_[0]; }

    /// BatchNorm statistics of the last train-mode forward (biased variance).
    struct BatchStats {
        std::vector<double> mean;
        std::vector<double> var;
        std::size_t count = 0;
    };
    const BatchStats& batch_stats(int layer) const { return state_[layer].stats; }
    std::span<const std::uint32_t> pool_argmax(int layer) const { return state_[layer].argmax; }

private:
    struct LayerState {
        BatchStats stats;
        std::vector<double> inv_std;
        std::vector<Scalar> xhat;
        std::vector<std::uint32_t> argmax;
        std::vector<std::uint8_t> mask;
        double dropout_scale = 1.0;
    };

    void bind(const Parameters& params);
    const Scalar* param(int layer, int k) const { return bound_[layer_slot_[layer] + k]; }
    void run_layer(int i, Mode mode, Rng* rng);
    void back_layer(int i, bool want_param_grads);

    ModelGraph graph_;
    std::vector<Shape> shapes_;       // activation shapes, index 0 = input
    std::vector<std::size_t> sizes_;  // per-sample element counts
    std::vector<ParamSlot> slots_;
    std::vector<int> layer_slot_;     // first slot of each layer, -1 if none
    std::vector<const Scalar*> bound_;
    std::vector<std::vector<Scalar>> converted_;
    int batch_ = 0;
    Mode mode_ = Mode::Infer;
    std::vector<std::vector<Scalar>> acts_;
    std::vector<std::vector<Scalar>> grads_;
    std::vector<std::vector<Scalar>> param_grads_;
    std::vector<LayerState> state_;
    std::vector<Scalar> scratch_;
    std::vector<Scalar> scratch2_;
};

extern template class Executor<float>;
extern template class Executor<double>;

/// Index of the largest finite-or-infinite entry; NaN entries are skipped
/// and an all-NaN row yields -1 (no valid prediction).
template <typename Scalar>
int argmax_row(std::span<const Scalar> row);

template <typename Scalar>
std::vector<int> predicted_classes(std::span<const Scalar> probabilities, int classes);

/// Class probabilities (batch x num_classes) for a [batch, input...] tensor.
Tensor forward(const ModelGraph& graph, const Parameters& params, const Tensor& batch, Mode mode,
               Rng* rng = nullptr);

struct BackwardResult {
    double loss = 0.0;
    Parameters grads; // same names and shapes as the parameters
    Tensor input_grad;
};

/// Cross-entropy loss and its gradients w.r.t. every parameter and the input.
BackwardResult backward(const ModelGraph& graph, const Parameters& params, const Tensor& batch,
                        std::span<const int> labels, Mode mode = Mode::Infer, Rng* rng = nullptr);

} // namespace trustbench
