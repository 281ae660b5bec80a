#include "trustbench/graph.hpp"

#include <bit>
#include <cstring>
#include <set>

#include "graph_json.hpp"
#include "trustbench/error.hpp"

namespace trustbench {

std::string shape_string(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(s[i]);
    }
    return out;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data.size() == b.data.size() &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::SeLU, "SeLU"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::Dense, "Dense"},
    {LayerKind::Softmax, "Softmax"},
    {LayerKind::AlphaDropout, "AlphaDropout"},
    {LayerKind::ResidualAdd, "ResidualAdd"},
    {LayerKind::Flatten, "Flatten"},
};

[[noreturn]] void shape_error(const LayerSpec& l, const std::string& msg) {
    throw Error(ErrorCode::ShapeError, "layer '" + l.id + "' (" + std::string(to_string(l.kind)) + "): " + msg);
}

} // namespace

std::string_view to_string(LayerKind kind) {
    for (const auto& [k, n] : kKindNames)
        if (k == kind) return n;
    return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    return std::nullopt;
}

std::string_view to_string(ParamRole role) {
    switch (role) {
    case ParamRole::Weight: return "weight";
    case ParamRole::Bias: return "bias";
    case ParamRole::Gamma: return "gamma";
    case ParamRole::Beta: return "beta";
    case ParamRole::RunningMean: return "running_mean";
    case ParamRole::RunningVar: return "running_var";
    }
    return "?";
}

LayerSpec LayerSpec::conv(std::string id, int filters, int kh, int kw, std::string group) {
    LayerSpec l;
    l.kind = LayerKind::Conv2D;
    l.id = std::move(id);
    l.group = std::move(group);
    l.filters = filters;
    l.kernel_h = kh;
    l.kernel_w = kw;
    return l;
}

LayerSpec LayerSpec::batch_norm(std::string id, std::string group) {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm;
    l.id = std::move(id);
    l.group = std::move(group);
    return l;
}

LayerSpec LayerSpec::dense(std::string id, int units, std::string group) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.id = std::move(id);
    l.group = std::move(group);
    l.units = units;
    return l;
}

LayerSpec LayerSpec::max_pool(std::string id, int ph, int pw) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.id = std::move(id);
    l.pool_h = ph;
    l.pool_w = pw;
    return l;
}

LayerSpec LayerSpec::alpha_dropout(std::string id, double rate) {
    LayerSpec l;
    l.kind = LayerKind::AlphaDropout;
    l.id = std::move(id);
    l.rate = rate;
    return l;
}

LayerSpec LayerSpec::residual_add(std::string id, int skip_from) {
    LayerSpec l;
    l.kind = LayerKind::ResidualAdd;
    l.id = std::move(id);
    l.skip_from = skip_from;
    return l;
}

LayerSpec LayerSpec::simple(LayerKind kind, std::string id) {
    LayerSpec l;
    l.kind = kind;
    l.id = std::move(id);
    return l;
}

std::vector<Shape> infer_shapes(const ModelGraph& graph) {
    if (graph.input_shape.empty())
        throw Error(ErrorCode::ShapeError, "graph '" + graph.name + "' has no input shape");
    for (int d : graph.input_shape)
        if (d <= 0) throw Error(ErrorCode::ShapeError, "input shape has a non-positive dim");

    std::vector<Shape> acts{graph.input_shape};
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const auto& l = graph.layers[i];
        const Shape& in = acts.back();
        Shape out;
        switch (l.kind) {
        case LayerKind::Conv2D:
            if (in.size() != 3) shape_error(l, "expects HxWxC input, got " + shape_string(in));
            if (l.filters <= 0) shape_error(l, "filters must be positive");
            if (l.kernel_h <= 0 || l.kernel_w <= 0 || l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0)
                shape_error(l, "same padding needs odd positive kernel dims");
            out = {in[0], in[1], l.filters};
            break;
        case LayerKind::BatchNorm:
        case LayerKind::ReLU:
        case LayerKind::SeLU:
        case LayerKind::AlphaDropout:
        case LayerKind::Softmax:
            if (l.kind == LayerKind::AlphaDropout && !(l.rate >= 0.0 && l.rate < 1.0))
                shape_error(l, "dropout rate must lie in [0, 1)");
            if (l.kind == LayerKind::Softmax && in.size() != 1) shape_error(l, "expects a flat input");
            out = in;
            break;
        case LayerKind::MaxPool:
            if (in.size() != 3) shape_error(l, "expects HxWxC input, got " + shape_string(in));
            if (l.pool_h <= 0 || l.pool_w <= 0 || in[0] % l.pool_h != 0 || in[1] % l.pool_w != 0)
                shape_error(l, "pool " + std::to_string(l.pool_h) + "x" + std::to_string(l.pool_w) +
                                   " does not divide " + shape_string(in));
            out = {in[0] / l.pool_h, in[1] / l.pool_w, in[2]};
            break;
        case LayerKind::Dense:
            if (in.size() != 1) shape_error(l, "expects a flat input, got " + shape_string(in));
            if (l.units <= 0) shape_error(l, "units must be positive");
            out = {l.units};
            break;
        case LayerKind::Flatten:
            out = {static_cast<int>(element_count(in))};
            break;
        case LayerKind::ResidualAdd:
            if (l.skip_from < 0 || l.skip_from > static_cast<int>(i))
                shape_error(l, "skip source " + std::to_string(l.skip_from) + " does not precede the add");
            if (acts[l.skip_from] != in)
                shape_error(l, "operand shapes differ: " + shape_string(in) + " vs " + shape_string(acts[l.skip_from]));
            out = in;
            break;
        }
        acts.push_back(std::move(out));
    }
    acts.erase(acts.begin());
    return acts;
}

void validate_graph(const ModelGraph& graph) {
    const auto shapes = infer_shapes(graph);
    std::set<std::string> ids;
    for (const auto& l : graph.layers)
        if (l.id.empty() || !ids.insert(l.id).second)
            throw Error(ErrorCode::ShapeError, "layer ids must be unique and non-empty ('" + l.id + "')");
    if (graph.layers.empty() || graph.layers.back().kind != LayerKind::Softmax)
        throw Error(ErrorCode::ShapeError, "graph must end in Softmax");
    if (shapes.back() != Shape{graph.num_classes})
        throw Error(ErrorCode::ShapeError, "output shape " + shape_string(shapes.back()) + " is not " +
                                               std::to_string(graph.num_classes));
}

std::vector<ParamSlot> param_slots(const ModelGraph& graph) {
    const auto shapes = infer_shapes(graph);
    std::vector<ParamSlot> slots;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const auto& l = graph.layers[i];
        const Shape& in = i == 0 ? graph.input_shape : shapes[i - 1];
        const int li = static_cast<int>(i);
        auto add = [&](ParamRole role, Shape s, bool trainable) {
            slots.push_back({l.id + "." + std::string(to_string(role)), std::move(s), li, role, trainable});
        };
        switch (l.kind) {
        case LayerKind::Conv2D:
            add(ParamRole::Weight, {l.kernel_h, l.kernel_w, in[2], l.filters}, true);
            add(ParamRole::Bias, {l.filters}, true);
            break;
        case LayerKind::Dense:
            add(ParamRole::Weight, {in[0], l.units}, true);
            add(ParamRole::Bias, {l.units}, true);
            break;
        case LayerKind::BatchNorm: {
            const int c = in.back();
            add(ParamRole::Gamma, {c}, true);
            add(ParamRole::Beta, {c}, true);
            add(ParamRole::RunningMean, {c}, false);
            add(ParamRole::RunningVar, {c}, false);
            break;
        }
        default:
            break;
        }
    }
    return slots;
}

void Parameters::add(std::string name, Tensor t) {
    if (index_.count(name)) throw Error(ErrorCode::IntegrityError, "duplicate tensor '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
}

Tensor& Parameters::at(std::string_view name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::IntegrityError, "missing tensor '" + std::string(name) + "'");
    return entries_[it->second].second;
}

const Tensor& Parameters::at(std::string_view name) const {
    return const_cast<Parameters*>(this)->at(name);
}

bool Parameters::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t Parameters::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
}

bool bit_equal(const Parameters& a, const Parameters& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
        if (a.entries_[i].first != b.entries_[i].first || !bit_equal(a.entries_[i].second, b.entries_[i].second))
            return false;
    return true;
}

Parameters zero_parameters(const ModelGraph& graph) {
    Parameters p;
    for (auto& s : param_slots(graph)) p.add(s.name, Tensor(s.shape));
    return p;
}

void check_parameters(const ModelGraph& graph, const Parameters& params) {
    const auto slots = param_slots(graph);
    for (const auto& s : slots) {
        if (!params.contains(s.name)) throw Error(ErrorCode::IntegrityError, "missing tensor '" + s.name + "'");
        const auto& t = params.at(s.name);
        if (t.shape != s.shape || t.data.size() != element_count(s.shape))
            throw Error(ErrorCode::IntegrityError, "tensor '" + s.name + "' has shape " + shape_string(t.shape) +
                                                       ", graph implies " + shape_string(s.shape));
    }
    if (params.size() != slots.size())
        throw Error(ErrorCode::IntegrityError, "parameter set holds tensors the graph does not own");
}

namespace detail {

using nlohmann::json;

json graph_to_json(const ModelGraph& graph) {
    json layers = json::array();
    for (const auto& l : graph.layers) {
        json j = {{"kind", std::string(to_string(l.kind))}, {"id", l.id}};
        if (!l.group.empty()) j["group"] = l.group;
        switch (l.kind) {
        case LayerKind::Conv2D:
            j["filters"] = l.filters;
            j["kernel"] = {l.kernel_h, l.kernel_w};
            break;
        case LayerKind::MaxPool:
            j["pool"] = {l.pool_h, l.pool_w};
            break;
        case LayerKind::Dense:
            j["units"] = l.units;
            break;
        case LayerKind::AlphaDropout:
            j["rate"] = l.rate;
            break;
        case LayerKind::ResidualAdd:
            j["skip_from"] = l.skip_from;
            break;
        default:
            break;
        }
        layers.push_back(std::move(j));
    }
    return {{"name", graph.name}, {"input_shape", graph.input_shape}, {"num_classes", graph.num_classes}, {"layers", layers}};
}

ModelGraph graph_from_json(const json& j) {
    ModelGraph g;
    g.name = j.at("name").get<std::string>();
    g.input_shape = j.at("input_shape").get<Shape>();
    g.num_classes = j.at("num_classes").get<int>();
    for (const auto& lj : j.at("layers")) {
        LayerSpec l;
        const auto kind = parse_layer_kind(lj.at("kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::FormatError, "unknown layer kind " + lj.at("kind").dump());
        l.kind = *kind;
        l.id = lj.at("id").get<std::string>();
        l.group = lj.value("group", std::string{});
        switch (l.kind) {
        case LayerKind::Conv2D:
            l.filters = lj.at("filters").get<int>();
            l.kernel_h = lj.at("kernel").at(0).get<int>();
            l.kernel_w = lj.at("kernel").at(1).get<int>();
            break;
        case LayerKind::MaxPool:
            l.pool_h = lj.at("pool").at(0).get<int>();
            l.pool_w = lj.at("pool").at(1).get<int>();
            break;
        case LayerKind::Dense:
            l.units = lj.at("units").get<int>();
            break;
        case LayerKind::AlphaDropout:
            l.rate = lj.at("rate").get<double>();
            break;
        case LayerKind::ResidualAdd:
            l.skip_from = lj.at("skip_from").get<int>();
            break;
        default:
            break;
        }
        g.layers.push_back(std::move(l));
    }
    return g;
}

} // namespace detail

} // namespace trustbench
