#include <gtest/gtest.h>

#include <cstdlib>

#include "trustbench/models.hpp"

using namespace trustbench;

TEST(Cnn, ParameterCount) { EXPECT_EQ(count_params(build_cnn()), 555287u); }

TEST(Cnn, KernelFollowsFromTheParameterCount) {
    // conv weights scale with the kernel element count k:
    //   (1*64 + 64*32 + 32*16) k = 2624 k; conv biases 112; BN gamma/beta 224;
    //   dense 4096*128+128 + 128*128+128 + 128*7+7 = 541,831.
    int solutions = 0, k_found = 0;
    for (int k = 1; k <= 64; ++k)
        if (2624 * k + 112 + 224 + 541831 == 555287) ++solutions, k_found = k;
    EXPECT_EQ(solutions, 1);
    EXPECT_EQ(k_found, 5);
    EXPECT_EQ(kCnnKernel * 1, k_found);
}

TEST(Cnn, ShapesMatchTheLayoutTable) {
    const auto g = build_cnn();
    const auto shapes = infer_shapes(g);
    auto out_of = [&](const std::string& id) {
        for (std::size_t i = 0; i < g.layers.size(); ++i)
            if (g.layers[i].id == id) return shapes[i];
        ADD_FAILURE() << "no layer " << id;
        return Shape{};
    };
    EXPECT_EQ(g.input_shape, (Shape{1024, 2, 1}));
    EXPECT_EQ(out_of("C1_relu"), (Shape{1024, 2, 64}));
    EXPECT_EQ(out_of("C1_pool"), (Shape{512, 2, 64}));
    EXPECT_EQ(out_of("C2_relu"), (Shape{512, 2, 32}));
    EXPECT_EQ(out_of("C2_pool"), (Shape{256, 2, 32}));
    EXPECT_EQ(out_of("C3_relu"), (Shape{256, 2, 16}));
    EXPECT_EQ(out_of("C3_pool"), (Shape{128, 2, 16}));
    EXPECT_EQ(out_of("D1_selu"), (Shape{128}));
    EXPECT_EQ(out_of("D2_selu"), (Shape{128}));
    EXPECT_EQ(out_of("softmax"), (Shape{7}));
    EXPECT_EQ(shapes.back(), (Shape{7}));
}

TEST(Cnn, LayerOrderAndGroups) {
    const auto g = build_cnn();
    std::vector<LayerKind> kinds;
    for (const auto& l : g.layers) kinds.push_back(l.kind);
    using K = LayerKind;
    const std::vector<K> expect = {K::Conv2D, K::BatchNorm, K::ReLU, K::MaxPool, K::Conv2D, K::BatchNorm, K::ReLU,
                                   K::MaxPool, K::Conv2D, K::BatchNorm, K::ReLU, K::MaxPool, K::Flatten, K::Dense,
                                   K::SeLU, K::AlphaDropout, K::Dense, K::SeLU, K::AlphaDropout, K::Dense, K::Softmax};
    EXPECT_EQ(kinds, expect);
    for (const auto& l : g.layers) {
        if (l.kind == K::Conv2D) {
            EXPECT_EQ(l.kernel_h, 5);
            EXPECT_EQ(l.kernel_w, 1);
        }
        if (l.kind == K::AlphaDropout) EXPECT_DOUBLE_EQ(l.rate, 0.1);
    }
    EXPECT_NO_THROW(validate_graph(g));
}

TEST(ResNet, TwelveSkipAdditionsWithEqualOperands) {
    const auto g = build_resnet();
    const auto shapes = infer_shapes(g);
    // activation k: 0 is the input, k >= 1 the output of layer k - 1
    std::vector<Shape> acts{g.input_shape};
    acts.insert(acts.end(), shapes.begin(), shapes.end());
    int adds = 0;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (g.layers[i].kind != LayerKind::ResidualAdd) continue;
        ++adds;
        EXPECT_LT(g.layers[i].skip_from, static_cast<int>(i));
        EXPECT_EQ(acts[g.layers[i].skip_from], acts[i]);
    }
    EXPECT_EQ(adds, 12);
    EXPECT_EQ(shapes.back(), (Shape{7}));
    EXPECT_NO_THROW(validate_graph(g));
}

TEST(ResNet, FrozenConfigurationIsTheSearchOptimum) {
    // exhaustive search over the declared space; the closest total wins,
    // ties broken by the smaller configuration
    long best_delta = -1;
    ResNetConfig best;
    for (int f = 16; f <= 48; ++f)
        for (int k : {3, 5, 7}) {
            ResNetConfig c;
            c.filters = f;
            c.kernel = k;
            const long delta = std::labs(static_cast<long>(count_params(build_resnet(c))) - 159015);
            if (best_delta < 0 || delta < best_delta) best_delta = delta, best = c;
        }
    const ResNetConfig frozen;
    EXPECT_EQ(best.filters, frozen.filters);
    EXPECT_EQ(best.kernel, frozen.kernel);
    EXPECT_EQ(count_params(build_resnet()), 159321u);
    EXPECT_EQ(count_params(build_resnet()) - kResNetReferenceParams, 306u);
    EXPECT_GT(best_delta, 0); // no configuration hits the published total
}

TEST(CountParams, Basics) {
    ModelGraph empty;
    EXPECT_EQ(count_params(empty), 0u);
    ModelGraph d;
    d.input_shape = {4096};
    d.layers = {LayerSpec::dense("fc", 128)};
    EXPECT_EQ(count_params(d), 524416u);
    ModelGraph bn;
    bn.input_shape = {8, 2, 16};
    bn.layers = {LayerSpec::batch_norm("bn")};
    EXPECT_EQ(count_params(bn), 32u); // gamma and beta only
}

TEST(InitParams, DeterministicAndWellFormed) {
    const auto g = build_cnn();
    const auto a = init_params(g, 42), b = init_params(g, 42), c = init_params(g, 43);
    EXPECT_TRUE(bit_equal(a, b));
    EXPECT_FALSE(bit_equal(a, c));
    EXPECT_NO_THROW(check_parameters(g, a));
    for (float v : a.at("C1_bn.gamma").data) EXPECT_EQ(v, 1.0f);
    for (float v : a.at("C1_bn.running_var").data) EXPECT_EQ(v, 1.0f);
    for (float v : a.at("D1.bias").data) EXPECT_EQ(v, 0.0f);
    // He-normal: variance 2 / fan_in for the first conv (fan_in 5)
    const auto& w = a.at("C1.weight").data;
    double s = 0.0;
    for (float v : w) s += static_cast<double>(v) * v;
    EXPECT_NEAR(s / w.size(), 2.0 / 5.0, 0.15);
}
