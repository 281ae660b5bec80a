// Central finite-difference oracle for the engine's analytic gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "trustbench/engine.hpp"
#include "trustbench/graph.hpp"
#include "trustbench/rng.hpp"

namespace oracle {

using namespace trustbench;

struct GradCheckReport {
    std::size_t checked = 0;
    std::size_t kinks = 0; // coordinates where the loss is not smooth at the step scale
    double worst = 0.0;
    std::string worst_at;
};

inline constexpr double kStep = 1e-3;
inline constexpr double kFloor = 1e-6;

/// Parameters drawn around unit scale; BN running variance kept positive.
inline Parameters random_params(const ModelGraph& g, Rng& rng) {
    Parameters p;
    const auto shapes = infer_shapes(g);
    for (const auto& s : param_slots(g)) {
        Tensor t;
        t.shape = s.shape;
        t.data.resize(element_count(s.shape));
        double scale = 0.5;
        if (s.role == ParamRole::Weight) {
            const auto fan_in = element_count(s.shape) / s.shape.back();
            scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        }
        for (auto& v : t.data) {
            switch (s.role) {
            case ParamRole::Gamma: v = static_cast<float>(1.0 + 0.3 * normal(rng)); break;
            case ParamRole::RunningVar: v = static_cast<float>(0.5 + uniform01(rng)); break;
            default: v = static_cast<float>(scale * normal(rng));
            }
        }
        p.add(s.name, std::move(t));
    }
    return p;
}

class FiniteDifference {
public:
    FiniteDifference(const ModelGraph& g, Mode mode, std::uint64_t dropout_seed)
        : ex_(g), mode_(mode), dropout_seed_(dropout_seed) {}

    double loss(const Parameters& p, const std::vector<float>& x, int batch, const std::vector<int>& y) {
        Rng rng = make_rng(dropout_seed_, {1});
        ex_.forward(p, x, batch, mode_, &rng);
        std::vector<double> g;
        return ex_.cross_entropy(y, g);
    }

    // d loss / d v where v is a float the loss reads; returns false at a kink.
    template <typename Eval>
    bool derivative(float& v, Eval&& eval, double& out) {
        const float v0 = v;
        auto at = [&](double h, double& step) {
            const float up = static_cast<float>(v0 + h), dn = static_cast<float>(v0 - h);
            step = static_cast<double>(up) - dn;
            v = up;
            const double fu = eval();
            v = dn;
            const double fd = eval();
            v = v0;
            return (fu - fd) / step;
        };
        double s1 = 0.0, s2 = 0.0, s4 = 0.0, s8 = 0.0;
        const double d1 = at(kStep, s1);
        const double d2 = at(kStep / 2, s2);
        const double d4 = at(kStep / 4, s4);
        const double d8 = at(kStep / 8, s8);
        // Richardson combination of the two widest central differences
        out = (4.0 * d2 - d1) / 3.0;
        // On a smooth loss the truncation error is O(h^2), so successive
        // differences shrink by 4 when the step halves. A ReLU, SeLU or max
        // switch anywhere inside the widest stencil breaks that ratio for at
        // least one of the three halvings.
        const double tiny = 1e-11 + 1e-8 * std::abs(d1);
        auto smooth = [&](double wide, double narrow) {
            if (std::abs(wide) <= tiny && std::abs(narrow) <= tiny) return true;
            return std::abs(wide - 4.0 * narrow) <= 0.1 * std::abs(wide) + 4.0 * tiny;
        };
        return smooth(d1 - d2, d2 - d4) && smooth(d2 - d4, d4 - d8);
    }

private:
    Executor<double> ex_;
    Mode mode_;
    std::uint64_t dropout_seed_;
};

inline void record(GradCheckReport& r, double analytic, double numeric, const std::string& where) {
    ++r.checked;
    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
    if (err > r.worst) {
        r.worst = err;
        r.worst_at = where + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
}

/// Compares every parameter and input gradient of `backward` against central
/// differences with step kStep.
inline GradCheckReport check_gradients(const ModelGraph& g, Parameters params, std::vector<float> x, int batch,
                                       const std::vector<int>& y, Mode mode, std::uint64_t dropout_seed) {
    GradCheckReport r;
    Tensor xt;
    xt.shape = g.input_shape;
    xt.shape.insert(xt.shape.begin(), batch);
    xt.data = x;
    Rng rng = make_rng(dropout_seed, {1});
    const auto analytic = backward(g, params, xt, y, mode, &rng);

    FiniteDifference fd(g, mode, dropout_seed);
    for (std::size_t e = 0; e < params.size(); ++e) {
        auto& [name, t] = params.entry(e);
        const auto& ga = analytic.grads.at(name);
        const bool stats = name.ends_with(".running_mean") || name.ends_with(".running_var");
        if (stats && mode == Mode::Infer) continue;
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            double num = 0.0;
            if (!fd.derivative(t.data[i], [&] { return fd.loss(params, x, batch, y); }, num)) {
                ++r.kinks;
                continue;
            }
            // train mode never reads the running statistics
            if (stats) {
                record(r, 0.0, num, name);
                continue;
            }
            record(r, ga.data[i], num, name + "[" + std::to_string(i) + "]");
        }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        double num = 0.0;
        if (!fd.derivative(x[i], [&] { return fd.loss(params, x, batch, y); }, num)) {
            ++r.kinks;
            continue;
        }
        record(r, analytic.input_grad.data[i], num, "input[" + std::to_string(i) + "]");
    }
    return r;
}

/// Single-kind fixtures plus a composed one; every graph ends in Dense 7 + Softmax.
inline std::vector<std::pair<std::string, ModelGraph>> layer_fixtures() {
    std::vector<std::pair<std::string, ModelGraph>> out;
    auto graph = [](Shape in) {
        ModelGraph g;
        g.name = "fixture";
        g.input_shape = std::move(in);
        return g;
    };
    auto head = [](ModelGraph& g) {
        g.layers.push_back(LayerSpec::simple(LayerKind::Flatten, "flat"));
        g.layers.push_back(LayerSpec::dense("out", 7));
        g.layers.push_back(LayerSpec::simple(LayerKind::Softmax, "softmax"));
    };
    {
        auto g = graph({8, 2, 2});
        g.layers.push_back(LayerSpec::conv("conv", 3, 3, 3));
        head(g);
        out.emplace_back("conv3x3", g);
    }
    {
        auto g = graph({8, 2, 1});
        g.layers.push_back(LayerSpec::conv("conv", 4, 5, 1));
        head(g);
        out.emplace_back("conv5x1", g);
    }
    {
        auto g = graph({8, 2, 2});
        g.layers.push_back(LayerSpec::conv("conv", 3, 3, 1));
        g.layers.push_back(LayerSpec::batch_norm("bn"));
        head(g);
        out.emplace_back("batchnorm", g);
    }
    {
        auto g = graph({8, 2, 2});
        g.layers.push_back(LayerSpec::conv("conv", 3, 3, 1));
        g.layers.push_back(LayerSpec::simple(LayerKind::ReLU, "relu"));
        head(g);
        out.emplace_back("relu", g);
    }
    {
        auto g = graph({6, 2, 1});
        g.layers.push_back(LayerSpec::simple(LayerKind::Flatten, "flat0"));
        g.layers.push_back(LayerSpec::dense("fc", 6));
        g.layers.push_back(LayerSpec::simple(LayerKind::SeLU, "selu"));
        g.layers.push_back(LayerSpec::dense("out", 7));
        g.layers.push_back(LayerSpec::simple(LayerKind::Softmax, "softmax"));
        out.emplace_back("selu", g);
    }
    {
        auto g = graph({8, 2, 2});
        g.layers.push_back(LayerSpec::conv("conv", 3, 3, 1));
        g.layers.push_back(LayerSpec::max_pool("pool", 2, 1));
        g.layers.push_back(LayerSpec::max_pool("pool2", 2, 2));
        head(g);
        out.emplace_back("maxpool", g);
    }
    {
        auto g = graph({5, 2, 1});
        head(g);
        out.emplace_back("dense", g);
    }
    {
        auto g = graph({6, 2, 1});
        g.layers.push_back(LayerSpec::simple(LayerKind::Flatten, "flat0"));
        g.layers.push_back(LayerSpec::dense("fc", 8));
        g.layers.push_back(LayerSpec::simple(LayerKind::SeLU, "selu"));
        g.layers.push_back(LayerSpec::alpha_dropout("drop", 0.3));
        g.layers.push_back(LayerSpec::dense("out", 7));
        g.layers.push_back(LayerSpec::simple(LayerKind::Softmax, "softmax"));
        out.emplace_back("alphadropout", g);
    }
    {
        auto g = graph({8, 2, 2});
        g.layers.push_back(LayerSpec::conv("c1", 2, 3, 1));
        g.layers.push_back(LayerSpec::batch_norm("bn1"));
        g.layers.push_back(LayerSpec::simple(LayerKind::ReLU, "r1"));
        g.layers.push_back(LayerSpec::conv("c2", 2, 3, 1));
        g.layers.push_back(LayerSpec::residual_add("add", 0));
        g.layers.push_back(LayerSpec::simple(LayerKind::ReLU, "r2"));
        head(g);
        out.emplace_back("residual", g);
    }
    {
        auto g = graph({6, 2, 1});
        g.layers.push_back(LayerSpec::simple(LayerKind::Flatten, "flat0"));
        g.layers.push_back(LayerSpec::dense("fc", 5));
        g.layers.push_back(LayerSpec::batch_norm("bn"));
        g.layers.push_back(LayerSpec::dense("out", 7));
        g.layers.push_back(LayerSpec::simple(LayerKind::Softmax, "softmax"));
        out.emplace_back("flat_batchnorm", g);
    }
    return out;
}

/// A random conv/pool/residual stack followed by a dense head.
inline ModelGraph random_graph(Rng& rng) {
    ModelGraph g;
    g.name = "random";
    const int c0 = 1 + static_cast<int>(uniform_index(rng, 2));
    g.input_shape = {8, 2, c0};
    int channels = c0;
    const int blocks = 1 + static_cast<int>(uniform_index(rng, 2));
    for (int b = 0; b < blocks; ++b) {
        const std::string p = "b" + std::to_string(b);
        const int skip = static_cast<int>(g.layers.size());
        const bool residual = uniform01(rng) < 0.5;
        const int f = residual ? channels : 2 + static_cast<int>(uniform_index(rng, 2));
        const int k = uniform01(rng) < 0.5 ? 3 : 1;
        g.layers.push_back(LayerSpec::conv(p + "_conv", f, k, uniform01(rng) < 0.3 ? 3 : 1));
        if (uniform01(rng) < 0.7) g.layers.push_back(LayerSpec::batch_norm(p + "_bn"));
        if (residual) g.layers.push_back(LayerSpec::residual_add(p + "_add", skip));
        g.layers.push_back(LayerSpec::simple(uniform01(rng) < 0.5 ? LayerKind::ReLU : LayerKind::SeLU, p + "_act"));
        if (uniform01(rng) < 0.5) g.layers.push_back(LayerSpec::max_pool(p + "_pool", 2, 1));
        channels = f;
    }
    g.layers.push_back(LayerSpec::simple(LayerKind::Flatten, "flat"));
    g.layers.push_back(LayerSpec::dense("fc", 6));
    g.layers.push_back(LayerSpec::simple(LayerKind::SeLU, "fc_selu"));
    if (uniform01(rng) < 0.5) g.layers.push_back(LayerSpec::alpha_dropout("fc_drop", 0.2));
    g.layers.push_back(LayerSpec::dense("out", 7));
    g.layers.push_back(LayerSpec::simple(LayerKind::Softmax, "softmax"));
    return g;
}

/// Runs one fixture in both modes with a seeded batch.
inline GradCheckReport check_fixture(const ModelGraph& g, std::uint64_t seed, Mode mode) {
    Rng rng = make_rng(seed, {0xF1C5ULL});
    const Parameters p = random_params(g, rng);
    const int batch = 3;
    std::vector<float> x(batch * element_count(g.input_shape));
    for (auto& v : x) v = static_cast<float>(normal(rng));
    std::vector<int> y(batch);
    for (auto& v : y) v = static_cast<int>(uniform_index(rng, 7));
    return check_gradients(g, p, x, batch, y, mode, seed);
}

} // namespace oracle
