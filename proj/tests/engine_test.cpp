#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "trustbench/engine.hpp"
#include "trustbench/error.hpp"
#include "trustbench/models.hpp"

using namespace trustbench;

namespace {

Tensor random_batch(const ModelGraph& g, int n, std::uint64_t seed) {
    Rng rng = make_rng(seed, {0});
    Tensor t;
    t.shape = g.input_shape;
    t.shape.insert(t.shape.begin(), n);
    t.data.resize(element_count(t.shape));
    for (auto& v : t.data) v = static_cast<float>(normal(rng));
    return t;
}

ModelGraph dense_graph(int in, std::vector<LayerSpec> body) {
    ModelGraph g;
    g.name = "t";
    g.input_shape = {in};
    g.layers = std::move(body);
    g.layers.push_back(LayerSpec::simple(LayerKind::Softmax, "softmax"));
    return g;
}

} // namespace

TEST(Forward, ZeroInitialisedCnnIsUniform) {
    const auto g = build_cnn();
    const auto p = zero_parameters(g);
    auto x = random_batch(g, 3, 1);
    const auto out = forward(g, p, x, Mode::Infer);
    ASSERT_EQ(out.shape, (Shape{3, 7}));
    for (float v : out.data) EXPECT_NEAR(v, 1.0 / 7.0, 1e-7);
}

TEST(Forward, IdentityDenseReproducesInput) {
    auto g = dense_graph(7, {LayerSpec::dense("fc", 7)});
    Parameters p = zero_parameters(g);
    auto& w = p.at("fc.weight");
    for (int i = 0; i < 7; ++i) w.data[i * 7 + i] = 1.0f;
    Executor<float> ex(g);
    std::vector<float> x = {0.5f, -1.25f, 3.0f, 0.0f, 7.5f, -2.0f, 1e-3f};
    ex.forward(p, x, 1, Mode::Infer);
    const auto z = ex.logits();
    for (int i = 0; i < 7; ++i) EXPECT_EQ(z[i], x[i]);
}

TEST(Forward, RowsAreDistributionsAndInferIsBitwiseRepeatable) {
    Rng rng = make_rng(5, {});
    for (int trial = 0; trial < 5; ++trial) {
        const auto g = oracle::random_graph(rng);
        const auto p = oracle::random_params(g, rng);
        const auto x = random_batch(g, 4, trial);
        const auto a = forward(g, p, x, Mode::Infer);
        const auto b = forward(g, p, x, Mode::Infer);
        EXPECT_TRUE(bit_equal(a, b));
        for (int r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int k = 0; k < 7; ++k) {
                EXPECT_GE(a.data[r * 7 + k], 0.0f);
                s += a.data[r * 7 + k];
            }
            EXPECT_NEAR(s, 1.0, 1e-5);
        }
    }
}

TEST(Forward, ArgmaxInvariantToLogitShift) {
    auto g = dense_graph(5, {LayerSpec::dense("fc", 7)});
    Rng rng = make_rng(8, {});
    auto p = oracle::random_params(g, rng);
    const auto x = random_batch(g, 6, 2);
    const auto a = forward(g, p, x, Mode::Infer);
    for (auto& b : p.at("fc.bias").data) b += 3.5f;
    const auto b = forward(g, p, x, Mode::Infer);
    EXPECT_EQ(predicted_classes<float>(a.data, 7), predicted_classes<float>(b.data, 7));
}

TEST(Forward, ShapeErrorsNameTheLayer) {
    const auto g = build_cnn();
    const auto p = zero_parameters(g);
    Tensor bad;
    bad.shape = {1, 512, 2, 1};
    bad.data.resize(1024);
    try {
        forward(g, p, bad, Mode::Infer);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeError);
    }
    ModelGraph broken = g;
    broken.input_shape = {1023, 2, 1};
    try {
        infer_shapes(broken);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeError);
        EXPECT_NE(std::string(e.what()).find("C1_pool"), std::string::npos) << e.what();
    }
}

TEST(Forward, PoolAndFlattenShapes) {
    ModelGraph g;
    g.input_shape = {512, 2, 64};
    g.layers = {LayerSpec::max_pool("p", 2, 1)};
    EXPECT_EQ(infer_shapes(g).back(), (Shape{256, 2, 64}));
    g.input_shape = {128, 2, 16};
    g.layers = {LayerSpec::simple(LayerKind::Flatten, "f")};
    EXPECT_EQ(infer_shapes(g).back(), (Shape{4096}));
}

TEST(Forward, PointwiseActivations) {
    auto g = dense_graph(7, {LayerSpec::simple(LayerKind::SeLU, "selu")});
    Executor<double> ex(g);
    std::vector<float> x = {-3.0f, -0.5f, 0.0f, 0.25f, 2.0f, -1e-4f, 10.0f};
    ex.forward(Parameters{}, x, 1, Mode::Infer);
    const double lambda = 1.0507009873554805, alpha = 1.6732632423543772;
    for (int i = 0; i < 7; ++i) {
        const double v = x[i];
        const double expect = v > 0 ? lambda * v : lambda * alpha * (std::exp(v) - 1.0);
        EXPECT_NEAR(ex.activation(1)[i], expect, 1e-12);
    }
    auto r = dense_graph(7, {LayerSpec::simple(LayerKind::ReLU, "relu")});
    Executor<float> er(r);
    er.forward(Parameters{}, x, 1, Mode::Infer);
    for (int i = 0; i < 7; ++i) EXPECT_EQ(er.activation(1)[i], std::max(0.0f, x[i]));
}

TEST(Forward, BatchNormInferIsAffine) {
    ModelGraph g;
    g.input_shape = {4, 2, 3};
    g.layers = {LayerSpec::batch_norm("bn"), LayerSpec::simple(LayerKind::Flatten, "f"), LayerSpec::dense("d", 7),
                LayerSpec::simple(LayerKind::Softmax, "s")};
    Rng rng = make_rng(3, {});
    const auto p = oracle::random_params(g, rng);
    Executor<double> ex(g);
    const auto a = random_batch(g, 1, 10), b = random_batch(g, 1, 11);
    auto bn = [&](const std::vector<float>& x) {
        ex.forward(p, x, 1, Mode::Infer);
        const auto y = ex.activation(1);
        return std::vector<double>(y.begin(), y.end());
    };
    const double t = 0.25;
    std::vector<float> mix(a.data.size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = static_cast<float>(t * a.data[i] + (1 - t) * b.data[i]);
    const auto ya = bn(a.data), yb = bn(b.data), ym = bn(mix);
    for (std::size_t i = 0; i < ym.size(); ++i) EXPECT_NEAR(ym[i], t * ya[i] + (1 - t) * yb[i], 1e-6);
}

TEST(Forward, ResidualAddSumsOperands) {
    ModelGraph g;
    g.input_shape = {4, 2, 2};
    g.layers = {LayerSpec::conv("c", 2, 3, 1), LayerSpec::residual_add("add", 0),
                LayerSpec::simple(LayerKind::Flatten, "f"), LayerSpec::dense("d", 7),
                LayerSpec::simple(LayerKind::Softmax, "s")};
    Rng rng = make_rng(4, {});
    const auto p = oracle::random_params(g, rng);
    Executor<float> ex(g);
    const auto x = random_batch(g, 2, 12);
    ex.forward(p, x.data, 2, Mode::Infer);
    const auto branch = ex.activation(1), sum = ex.activation(2);
    for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_EQ(sum[i], branch[i] + x.data[i]);
}

TEST(Forward, TrainModeDropoutDependsOnlyOnTheStream) {
    const auto g = build_cnn();
    const auto p = init_params(g, 1);
    const auto x = random_batch(g, 2, 3);
    Rng r1 = make_rng(9, {}), r2 = make_rng(9, {}), r3 = make_rng(10, {});
    const auto a = forward(g, p, x, Mode::Train, &r1);
    const auto b = forward(g, p, x, Mode::Train, &r2);
    const auto c = forward(g, p, x, Mode::Train, &r3);
    EXPECT_TRUE(bit_equal(a, b));
    EXPECT_FALSE(bit_equal(a, c));
}

TEST(Loss, UniformOutputCostsLn7) {
    const auto g = build_cnn();
    const auto p = zero_parameters(g);
    const auto x = random_batch(g, 2, 4);
    const int labels[] = {0, 5};
    const auto r = backward(g, p, x, labels);
    EXPECT_NEAR(r.loss, std::log(7.0), 1e-12);
    EXPECT_NEAR(std::log(7.0), 1.9459, 1e-4);
}

TEST(Loss, BatchMeanReduction) {
    auto g = dense_graph(5, {LayerSpec::dense("fc", 7)});
    Rng rng = make_rng(6, {});
    const auto p = oracle::random_params(g, rng);
    const auto a = random_batch(g, 1, 20), b = random_batch(g, 1, 21);
    auto loss = [&](std::vector<const Tensor*> rows, std::vector<int> labels) {
        Tensor t;
        t.shape = {static_cast<int>(rows.size()), 5};
        for (auto* r : rows) t.data.insert(t.data.end(), r->data.begin(), r->data.end());
        return backward(g, p, t, labels).loss;
    };
    const double la = loss({&a}, {2}), lb = loss({&b}, {4});
    // [a, a, b] mean * 3 = 2 la + lb
    EXPECT_NEAR(3 * loss({&a, &a, &b}, {2, 2, 4}), 2 * la + lb, 1e-12);
}

TEST(Predict, NanRowsHaveNoPrediction) {
    const float row[] = {0.1f, NAN, 0.5f, 0.2f, NAN, 0.1f, 0.1f};
    EXPECT_EQ(argmax_row<float>(row), 2);
    const float nan_row[] = {NAN, NAN, NAN, NAN, NAN, NAN, NAN};
    EXPECT_EQ(argmax_row<float>(nan_row), -1);
}

TEST(Resume, ForwardFromMatchesFullForward) {
    const auto g = build_resnet({8, 3, 2, 2});
    const auto p = init_params(g, 3);
    const auto x = random_batch(g, 2, 5);
    Executor<float> full(g), part(g);
    full.forward(p, x.data, 2, Mode::Infer);
    for (int start : {0, 3, 5, 9}) {
        for (int idx : part.resume_points(start)) part.set_activation(idx, full.activation(idx), 2);
        part.forward_from(p, start, Mode::Infer);
        const auto a = full.probabilities(), b = part.probabilities();
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << "start " << start;
    }
}
