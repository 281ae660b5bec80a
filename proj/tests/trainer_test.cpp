#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "trustbench/error.hpp"
#include "trustbench/models.hpp"
#include "trustbench/trainer.hpp"

using namespace trustbench;

namespace {

ModelGraph toy_graph() {
    ModelGraph g;
    g.input_shape = {static_cast<int>(kFrameLength), 2, 1};
    g.layers = {LayerSpec::conv("c", 4, 5, 1),          LayerSpec::simple(LayerKind::ReLU, "r"),
                LayerSpec::max_pool("p1", 16, 1),         LayerSpec::max_pool("p2", 16, 1),
                LayerSpec::simple(LayerKind::Flatten, "f"), LayerSpec::dense("d", 7),
                LayerSpec::simple(LayerKind::Softmax, "s")};
    return g;
}

// 32 BPSK and 32 OOK frames at +30 dB.
struct Toy {
    Dataset data;
    DatasetView view;
};

const Toy& toy() {
    static const Toy t = [] {
        DatasetSpec spec;
        spec.snr_grid_db = {30.0};
        spec.frames_per_cell = 32;
        spec.master_seed = 7;
        Toy t{generate_dataset(spec), {}};
        t.view.data = &t.data;
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const auto s = t.data.scheme(i);
            if (s == ModulationScheme::BPSK || s == ModulationScheme::OOK) t.view.indices.push_back(i);
        }
        return t;
    }();
    return t;
}

TrainConfig toy_config() {
    TrainConfig c;
    c.batch_size = 8;
    c.epochs = 20;
    c.patience = 20;
    c.validation_fraction = 0.0;
    c.learning_rate = 3e-3;
    c.seed = 11;
    return c;
}

const Dataset& spec_only(int per_cell) {
    static std::map<int, Dataset> cache;
    auto& d = cache[per_cell];
    if (d.spec.snr_grid_db.empty()) {
        d.spec = DatasetSpec::full_scale();
        d.spec.frames_per_cell = per_cell;
    }
    return d;
}

} // namespace

TEST(Split, FullScaleArithmetic) {
    const auto& d = spec_only(4096);
    const auto s = split_dataset(d, {0.75, 3});
    EXPECT_EQ(s.train_per_cell, 3072u);
    EXPECT_EQ(s.test_per_cell, 1024u);
    EXPECT_EQ(s.train.size(), 3072u * d.spec.cells());
    EXPECT_EQ(s.test.size(), 1024u * d.spec.cells());
    std::vector<std::size_t> train_count(d.spec.cells()), test_count(d.spec.cells());
    std::vector<char> seen(d.spec.total_frames(), 0);
    for (auto i : s.train.indices) ++train_count[d.cell(i)], ++seen[i];
    for (auto i : s.test.indices) ++test_count[d.cell(i)], ++seen[i];
    for (std::size_t c = 0; c < d.spec.cells(); ++c) {
        EXPECT_EQ(train_count[c], 3072u);
        EXPECT_EQ(test_count[c], 1024u);
    }
    // disjoint and covering
    for (char v : seen) ASSERT_EQ(v, 1);
}

TEST(Split, DegenerateFractionsAreRejected) {
    const auto& d = spec_only(8);
    for (double f : {1.0, 0.0, -0.5, 1.5, 0.1, std::numeric_limits<double>::quiet_NaN()}) {
        try {
            split_dataset(d, {f, 1});
            ADD_FAILURE() << f;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidFraction) << f;
        }
    }
}

TEST(Split, SeedDeterminism) {
    const auto& d = spec_only(16);
    const auto a = split_dataset(d, {0.75, 5}), b = split_dataset(d, {0.75, 5}), c = split_dataset(d, {0.75, 6});
    EXPECT_EQ(a.train.indices, b.train.indices);
    EXPECT_EQ(a.test.indices, b.test.indices);
    EXPECT_NE(a.train.indices, c.train.indices);
}

TEST(Train, ToySetIsLearned) {
    const auto& t = toy();
    ASSERT_EQ(t.view.size(), 64u);
    // the classes differ in the mean of the in-phase rail (OOK symbols are
    // 0 or sqrt 2, BPSK symbols are +-1)
    for (auto i : t.view.indices) {
        const auto f = t.data.frame(i);
        double mean_i = 0.0;
        for (std::size_t k = 0; k < kFrameLength; ++k) mean_i += f[2 * k];
        mean_i /= kFrameLength;
        EXPECT_EQ(mean_i > 0.35, t.data.scheme(i) == ModulationScheme::OOK);
    }

    const auto r = train(toy_graph(), t.view, toy_config());
    ASSERT_FALSE(r.history.empty());
    ASSERT_LE(r.history.size(), 20u);
    bool perfect = false;
    for (const auto& e : r.history) perfect = perfect || e.train_accuracy == 1.0;
    EXPECT_TRUE(perfect);
    const auto ev = evaluate(r.checkpoint, t.view);
    EXPECT_EQ(ev.accuracy, 1.0);

    // three-epoch moving average of the training loss never rises
    std::vector<double> smooth;
    for (std::size_t e = 2; e < r.history.size(); ++e)
        smooth.push_back((r.history[e - 2].train_loss + r.history[e - 1].train_loss + r.history[e].train_loss) / 3);
    for (std::size_t e = 1; e < smooth.size(); ++e) EXPECT_LE(smooth[e], smooth[e - 1] + 1e-12) << "epoch " << e + 3;
}

TEST(Train, BitIdenticalReruns) {
    auto c = toy_config();
    c.epochs = 3;
    c.validation_fraction = 0.25;
    const auto a = train(toy_graph(), toy().view, c);
    const auto b = train(toy_graph(), toy().view, c);
    EXPECT_TRUE(bit_equal(a.checkpoint.params, b.checkpoint.params));
    EXPECT_EQ(checkpoint_hash(a.checkpoint), checkpoint_hash(b.checkpoint));
    c.seed = 12;
    const auto d = train(toy_graph(), toy().view, c);
    EXPECT_NE(checkpoint_hash(a.checkpoint), checkpoint_hash(d.checkpoint));
}

TEST(Train, ZeroEpochsReturnsTheInitialization) {
    auto c = toy_config();
    c.epochs = 0;
    const auto g = toy_graph();
    const auto r = train(g, toy().view, c);
    EXPECT_TRUE(bit_equal(r.checkpoint.params, init_params(g, c.seed)));
    EXPECT_TRUE(r.history.empty());
    EXPECT_EQ(r.best_epoch, 0);
}

TEST(Train, NaNLossIsReportedWithTheEpoch) {
    const auto g = toy_graph();
    auto p = init_params(g, 1);
    p.at("d.bias").data[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        train(g, p, toy().view, toy_config());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TrainingDiverged);
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
    }
}

TEST(Train, ConfigValidation) {
    const auto g = toy_graph();
    auto bad = [&](auto&& edit) {
        auto c = toy_config();
        edit(c);
        try {
            train(g, toy().view, c);
            ADD_FAILURE();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::ConfigError);
        }
    };
    bad([](TrainConfig& c) { c.batch_size = 65; });
    bad([](TrainConfig& c) { c.batch_size = 0; });
    bad([](TrainConfig& c) { c.learning_rate = 0; });
    bad([](TrainConfig& c) { c.beta1 = 1.0; });
    bad([](TrainConfig& c) { c.patience = 0; });
    bad([](TrainConfig& c) { c.epochs = -1; });
    // batch must fit after the validation hold-out: 64 - 2 * floor(0.5 * 32)
    bad([](TrainConfig& c) {
        c.validation_fraction = 0.5;
        c.batch_size = 33;
    });
}

TEST(Evaluate, OraclePredictorGivesADiagonal) {
    DatasetSpec spec;
    spec.snr_grid_db = {-4.0, 6.0, 16.0};
    spec.frames_per_cell = 5;
    const auto d = generate_dataset(spec);
    const auto view = DatasetView::all(d);
    // predictions are the labels, looked up by frame content
    std::map<std::vector<float>, int> lookup;
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto f = d.frame(i);
        lookup[{f.begin(), f.end()}] = d.labels[i];
    }
    Predictor oracle = [&](std::span<const float> x, int n) {
        std::vector<int> out(n);
        for (int i = 0; i < n; ++i)
            out[i] = lookup.at({x.begin() + i * kFrameFloats, x.begin() + (i + 1) * kFrameFloats});
        return out;
    };
    const auto r = evaluate(oracle, view);
    EXPECT_EQ(r.accuracy, 1.0);
    for (int a = 0; a < kNumClasses; ++a)
        for (int b = 0; b < kNumClasses; ++b) EXPECT_EQ(r.confusion.counts[a][b], a == b ? 15u : 0u);
    std::set<double> keys;
    for (const auto& [snr, acc] : r.per_snr_accuracy) {
        keys.insert(snr);
        EXPECT_EQ(acc, 1.0);
        EXPECT_EQ(r.per_snr_count.at(snr), 35u);
    }
    EXPECT_EQ(keys, (std::set<double>{-4.0, 6.0, 16.0}));
}

TEST(Evaluate, RandomPredictorSitsAtChance) {
    DatasetSpec spec;
    spec.snr_grid_db = {0.0, 10.0};
    spec.frames_per_cell = 150;
    const auto d = generate_dataset(spec);
    const auto view = DatasetView::all(d);
    std::mt19937 gen(99);
    std::uniform_int_distribution<int> pick(0, kNumClasses - 1);
    std::vector<int> pred(view.size());
    for (auto& p : pred) p = pick(gen);
    const auto r = evaluate_predictions(pred, view);
    const double p = 1.0 / kNumClasses, n = static_cast<double>(view.size());
    EXPECT_NEAR(r.accuracy, p, 3 * std::sqrt(p * (1 - p) / n));
    // rows add up to the per-class test counts
    for (int a = 0; a < kNumClasses; ++a) EXPECT_EQ(r.confusion.row_total(a), 300u);
    EXPECT_EQ(r.confusion.total(), view.size());
    std::uint64_t trace = 0;
    for (int a = 0; a < kNumClasses; ++a) trace += r.confusion.counts[a][a];
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / n);
}

TEST(Evaluate, InvalidPredictionsCountAsErrors) {
    DatasetSpec spec;
    spec.snr_grid_db = {0.0};
    spec.frames_per_cell = 2;
    const auto d = generate_dataset(spec);
    const auto view = DatasetView::all(d);
    std::vector<int> pred = gather_labels(view);
    pred[0] = -1;
    const auto r = evaluate_predictions(pred, view);
    EXPECT_DOUBLE_EQ(r.accuracy, 13.0 / 14.0);
    EXPECT_EQ(r.confusion.invalid[d.labels[0]], 1u);
    EXPECT_EQ(r.confusion.row_total(d.labels[0]), 2u);
    pred.pop_back();
    EXPECT_THROW(evaluate_predictions(pred, view), Error);
}
