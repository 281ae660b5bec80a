// models.hpp - the CNN and ResNet classifiers, parameter counting and init
#pragma once

#include <cstddef>
#include <cstdint>

#include "trustbench/graph.hpp"

namespace trustbench {

/// Conv kernel height of the CNN; the only integer that makes the layout
/// total 555,287 trainable parameters.
inline constexpr int kCnnKernel = 5;

/// Residual-stack width and kernel height of the ResNet. Picked by exhaustive
/// search over filters 16..48 and kernels {3, 5, 7} for the total closest to
/// 159,015 (no exact match exists); see models_test for the search.
struct ResNetConfig {
    int filters = 19;
    int kernel = 7;
    int stacks = 6;
    int units_per_stack = 2;
};

inline constexpr std::size_t kResNetReferenceParams = 159015;

/// Input 1024x2x1 -> 3x[Conv 5x1 + BN + ReLU + MaxPool 2x1] with 64/32/16
/// filters -> Flatten -> 2x[Dense 128 + SeLU + AlphaDropout] -> Dense 7 + Softmax.
/// Tensor groups C1..C3 (conv + its BN) and D1..D3.
ModelGraph build_cnn();

/// Six stacks of [1x1 projection conv, two residual units of
/// Conv-BN-ReLU-Conv-BN + skip, ReLU, MaxPool 2x1] followed by the CNN's
/// dense head. Groups: P1..P6 (projection convs), R1..R6 (residual units),
/// D1..D3.
ModelGraph build_resnet(const ResNetConfig& cfg = {});

/// Trainable scalars: conv/dense weights and biases plus BN gamma and beta.
std::size_t count_params(const ModelGraph& graph);

/// He-normal conv weights, LeCun-normal dense weights, zero biases, BN at
/// identity (gamma 1, beta 0, mean 0, var 1). Deterministic in seed.
Parameters init_params(const ModelGraph& graph, std::uint64_t seed);

} // namespace trustbench
