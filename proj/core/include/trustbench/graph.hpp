// graph.hpp - layer catalog, model graphs, shape inference and parameter sets
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trustbench/siggen.hpp"
#include "trustbench/tensor.hpp"

namespace trustbench {

enum class LayerKind {
    Conv2D,
    BatchNorm,
    ReLU,
    SeLU,
    MaxPool,
    Dense,
    Softmax,
    AlphaDropout,
    ResidualAdd,
    Flatten,
};

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::string id;
    // Fault-injection group this layer's tensors belong to ("C1", "R3", ...).
    std::string group;
    // Conv2D: "same" padding, stride 1, odd kernel dims.
    int kernel_h = 1;
    int kernel_w = 1;
    int filters = 0;
    // MaxPool: stride equals the window.
    int pool_h = 2;
    int pool_w = 1;
    int units = 0;     // Dense
    double rate = 0.0; // AlphaDropout
    // ResidualAdd: activation index added to the running activation; 0 is the graph input,
    // i+1 is the output of layer i.
    int skip_from = -1;

    static LayerSpec conv(std::string id, int filters, int kh, int kw, std::string group = {});
    static LayerSpec batch_norm(std::string id, std::string group = {});
    static LayerSpec dense(std::string id, int units, std::string group = {});
    static LayerSpec max_pool(std::string id, int ph, int pw);
    static LayerSpec alpha_dropout(std::string id, double rate);
    static LayerSpec residual_add(std::string id, int skip_from);
    static LayerSpec simple(LayerKind kind, std::string id);
};

struct ModelGraph {
    std::string name;
    Shape input_shape; // per sample, e.g. {1024, 2, 1}
    std::vector<LayerSpec> layers;
    int num_classes = kNumClasses;

    /// Activation index produced by layer i.
    static int output_of(int layer) { return layer + 1; }
};

/// Per-layer output shapes (per sample). Throws ShapeError naming the offending layer.
std::vector<Shape> infer_shapes(const ModelGraph& graph);

/// infer_shapes plus the graph-level invariants: unique ids, skip sources
/// that precede their add, a trailing Softmax with num_classes outputs.
void validate_graph(const ModelGraph& graph);

enum class ParamRole { Weight, Bias, Gamma, Beta, RunningMean, RunningVar };
std::string_view to_string(ParamRole role);

struct ParamSlot {
    std::string name; // "<layer id>.<role>"
    Shape shape;
    int layer = 0;
    ParamRole role = ParamRole::Weight;
    bool trainable = true;
};

/// Every tensor the graph's layers own, in layer order.
std::vector<ParamSlot> param_slots(const ModelGraph& graph);

/// Ordered name -> tensor map; iteration order is insertion order.
class Parameters {
public:
    using Entry = std::pair<std::string, Tensor>;

    void add(std::string name, Tensor t);
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    const Entry& entry(std::size_t i) const { return entries_[i]; }
    Entry& entry(std::size_t i) { return entries_[i]; }

    friend bool bit_equal(const Parameters& a, const Parameters& b);

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// All slots present and zero-filled.
Parameters zero_parameters(const ModelGraph& graph);

/// Throws IntegrityError when a slot is missing or has the wrong shape, or
/// when params holds tensors the graph does not own.
void check_parameters(const ModelGraph& graph, const Parameters& params);

} // namespace trustbench
