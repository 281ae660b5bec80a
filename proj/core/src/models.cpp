#include "trustbench/models.hpp"

#include <cmath>
#include <string>

#include "trustbench/rng.hpp"

namespace trustbench {

namespace {

void dense_head(ModelGraph& g) {
    g.layers.push_back(LayerSpec::simple(LayerKind::Flatten, "flatten"));
    for (int d = 1; d <= 2; ++d) {
        const std::string id = "D" + std::to_string(d);
        g.layers.push_back(LayerSpec::dense(id, 128, id));
        g.layers.push_back(LayerSpec::simple(LayerKind::SeLU, id + "_selu"));
        g.layers.push_back(LayerSpec::alpha_dropout(id + "_drop", 0.1));
    }
    g.layers.push_back(LayerSpec::dense("D3", kNumClasses, "D3"));
    g.layers.push_back(LayerSpec::simple(LayerKind::Softmax, "softmax"));
}

} // namespace

ModelGraph build_cnn() {
    ModelGraph g;
    g.name = "cnn";
    g.input_shape = {kFrameLength, 2, 1};
    const int filters[] = {64, 32, 16};
    for (int c = 0; c < 3; ++c) {
        const std::string id = "C" + std::to_string(c + 1);
        g.layers.push_back(LayerSpec::conv(id, filters[c], kCnnKernel, 1, id));
        g.layers.push_back(LayerSpec::batch_norm(id + "_bn", id));
        g.layers.push_back(LayerSpec::simple(LayerKind::ReLU, id + "_relu"));
        g.layers.push_back(LayerSpec::max_pool(id + "_pool", 2, 1));
    }
    dense_head(g);
    return g;
}

ModelGraph build_resnet(const ResNetConfig& cfg) {
    ModelGraph g;
    g.name = "resnet";
    g.input_shape = {kFrameLength, 2, 1};
    auto last_act = [&] { return static_cast<int>(g.layers.size()); };
    for (int s = 1; s <= cfg.stacks; ++s) {
        const std::string stack = "S" + std::to_string(s);
        g.layers.push_back(LayerSpec::conv(stack + "_proj", cfg.filters, 1, 1, "P" + std::to_string(s)));
        const std::string group = "R" + std::to_string(s);
        for (int u = 1; u <= cfg.units_per_stack; ++u) {
            const std::string unit = stack + "U" + std::to_string(u);
            const int skip = last_act();
            g.layers.push_back(LayerSpec::conv(unit + "_conv1", cfg.filters, cfg.kernel, 1, group));
            g.layers.push_back(LayerSpec::batch_norm(unit + "_bn1", group));
            g.layers.push_back(LayerSpec::simple(LayerKind::ReLU, unit + "_relu1"));
            g.layers.push_back(LayerSpec::conv(unit + "_conv2", cfg.filters, cfg.kernel, 1, group));
            g.layers.push_back(LayerSpec::batch_norm(unit + "_bn2", group));
            g.layers.push_back(LayerSpec::residual_add(unit + "_add", skip));
            g.layers.push_back(LayerSpec::simple(LayerKind::ReLU, unit + "_relu2"));
        }
        g.layers.push_back(LayerSpec::max_pool(stack + "_pool", 2, 1));
    }
    dense_head(g);
    return g;
}

std::size_t count_params(const ModelGraph& graph) {
    if (graph.layers.empty()) return 0;
    std::size_t n = 0;
    for (const auto& s : param_slots(graph))
        if (s.trainable) n += element_count(s.shape);
    return n;
}

Parameters init_params(const ModelGraph& graph, std::uint64_t seed) {
    Parameters p;
    const auto slots = param_slots(graph);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& s = slots[i];
        Tensor t(s.shape);
        switch (s.role) {
        case ParamRole::Weight: {
            Rng rng = make_rng(seed, {i});
            const auto kind = graph.layers[s.layer].kind;
            // conv: fan_in = kh*kw*cin; dense: fan_in = rows
            const std::size_t fan_in = element_count(s.shape) / s.shape.back();
            const double stddev = std::sqrt((kind == LayerKind::Conv2D ? 2.0 : 1.0) / static_cast<double>(fan_in));
            for (auto& v : t.data) v = static_cast<float>(stddev * normal(rng));
            break;
        }
        case ParamRole::Gamma:
        case ParamRole::RunningVar:
            std::fill(t.data.begin(), t.data.end(), 1.0f);
            break;
        default:
            break;
        }
        p.add(s.name, std::move(t));
    }
    return p;
}

} // namespace trustbench
