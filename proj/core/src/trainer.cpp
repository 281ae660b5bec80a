#include "trustbench/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <string>

#include "trustbench/engine.hpp"
#include "trustbench/error.hpp"
#include "trustbench/models.hpp"
#include "trustbench/parallel.hpp"
#include "trustbench/rng.hpp"

namespace trustbench {

namespace {

constexpr std::size_t kPredictChunk = 8;

struct AdamState {
    std::vector<std::vector<double>> m, v;
    long step = 0;
};

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalStats loss_and_accuracy(Executor<float>& ex, const Parameters& params, const DatasetView& view) {
    EvalStats s;
    if (view.size() == 0) return s;
    std::vector<float> seed;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t first = 0; first < view.size(); first += kPredictChunk) {
        const std::size_t n = std::min(kPredictChunk, view.size() - first);
        const auto x = gather_frames(view, first, n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = view.data->labels[view[first + i]];
        ex.forward(params, x, static_cast<int>(n), Mode::Infer);
        loss_sum += ex.cross_entropy(y, seed) * n;
        const auto pred = predicted_classes(ex.probabilities(), ex.classes());
        for (std::size_t i = 0; i < n; ++i) correct += pred[i] == y[i];
    }
    s.loss = loss_sum / view.size();
    s.accuracy = static_cast<double>(correct) / view.size();
    return s;
}

// Stratified hold-out: floor(fraction * count) frames of every cell go to validation.
void hold_out(const DatasetView& in, double fraction, std::uint64_t seed, DatasetView& fit, DatasetView& val) {
    fit = {in.data, {}};
    val = {in.data, {}};
    std::map<std::size_t, std::vector<std::size_t>> by_cell;
    for (auto i : in.indices) by_cell[in.data->cell(i)].push_back(i);
    for (auto& [cell, idx] : by_cell) {
        Rng rng = make_rng(seed, {0x7A11ULL, cell});
        shuffle(idx.begin(), idx.end(), rng);
        const auto nval = static_cast<std::size_t>(std::floor(fraction * idx.size() + 1e-9));
        val.indices.insert(val.indices.end(), idx.begin(), idx.begin() + nval);
        fit.indices.insert(fit.indices.end(), idx.begin() + nval, idx.end());
    }
    std::sort(fit.indices.begin(), fit.indices.end());
    std::sort(val.indices.begin(), val.indices.end());
}

} // namespace

DatasetSplit split_dataset(const Dataset& data, const SplitPlan& plan) {
    const double f = plan.train_fraction;
    if (!(f > 0.0 && f < 1.0))
        throw Error(ErrorCode::InvalidFraction, "train fraction must lie in (0, 1), got " + std::to_string(f));
    const auto per_cell = static_cast<std::size_t>(data.spec.frames_per_cell);
    const auto ntrain = static_cast<std::size_t>(std::floor(f * per_cell + 1e-9));
    if (ntrain == 0 || ntrain == per_cell)
        throw Error(ErrorCode::InvalidFraction, "fraction " + std::to_string(f) + " leaves an empty side with " +
                                                    std::to_string(per_cell) + " frames per cell");
    DatasetSplit s{{&data, {}}, {&data, {}}, ntrain, per_cell - ntrain};
    for (std::size_t c = 0; c < data.spec.cells(); ++c) {
        std::vector<std::size_t> idx(per_cell);
        for (std::size_t k = 0; k < per_cell; ++k) idx[k] = c * per_cell + k;
        Rng rng = make_rng(plan.seed, {c});
        shuffle(idx.begin(), idx.end(), rng);
        std::sort(idx.begin(), idx.begin() + ntrain);
        std::sort(idx.begin() + ntrain, idx.end());
        s.train.indices.insert(s.train.indices.end(), idx.begin(), idx.begin() + ntrain);
        s.test.indices.insert(s.test.indices.end(), idx.begin() + ntrain, idx.end());
    }
    return s;
}

void TrainConfig::validate(std::size_t train_size) const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) fail("adam betas must lie in (0, 1)");
    if (!(adam_epsilon > 0.0)) fail("adam epsilon must be positive");
    if (batch_size < 1) fail("batch_size must be positive");
    if (epochs < 0) fail("epochs must be non-negative");
    if (patience < 1) fail("patience must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in [0, 1)");
    if (static_cast<std::size_t>(batch_size) > train_size)
        fail("batch_size " + std::to_string(batch_size) + " exceeds the training set (" + std::to_string(train_size) + ")");
}

TrainResult train(const ModelGraph& graph, const DatasetView& train_view, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    return train(graph, init_params(graph, config.seed), train_view, config, on_epoch);
}

TrainResult train(const ModelGraph& graph, Parameters params, const DatasetView& train_view, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    check_parameters(graph, params);
    DatasetView fit, val;
    hold_out(train_view, config.validation_fraction, config.seed, fit, val);
    config.validate(fit.size());

    TrainResult result;
    result.checkpoint.graph = graph;
    result.checkpoint.metadata.training_seed = config.seed;
    result.checkpoint.metadata.dataset_hash = config.dataset_hash;
    if (config.epochs == 0) {
        result.checkpoint.params = std::move(params);
        return result;
    }

    Executor<float> ex(graph);
    Executor<float> eval_ex(graph);
    const auto& slots = ex.slots();
    AdamState adam;
    for (const auto& s : slots) {
        adam.m.emplace_back(element_count(s.shape), 0.0);
        adam.v.emplace_back(element_count(s.shape), 0.0);
    }

    Parameters best = params;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<float> seed;
    std::vector<std::size_t> order = fit.indices;
    std::vector<int> labels;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng shuffle_rng = make_rng(config.seed, {0x5EEDULL, static_cast<std::uint64_t>(epoch)});
        order = fit.indices;
        shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t first = 0; first < order.size(); first += config.batch_size, ++batch_index) {
            const std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - first);
            DatasetView batch{fit.data, {order.begin() + first, order.begin() + first + n}};
            const auto x = gather_frames(batch);
            labels = gather_labels(batch);
            Rng drop_rng = make_rng(config.seed, {0xD809ULL, static_cast<std::uint64_t>(epoch), batch_index});
            ex.forward(params, x, static_cast<int>(n), Mode::Train, &drop_rng);
            const double loss = ex.cross_entropy(labels, seed);
            if (!std::isfinite(loss))
                throw Error(ErrorCode::TrainingDiverged, "non-finite loss in epoch " + std::to_string(epoch));
            loss_sum += loss * n;
            const auto pred = predicted_classes(ex.probabilities(), ex.classes());
            for (std::size_t i = 0; i < n; ++i) correct += pred[i] == labels[i];
            ex.backward(params, seed, true, false);

            ++adam.step;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
            for (std::size_t s = 0; s < slots.size(); ++s) {
                Tensor& t = params.at(slots[s].name);
                if (slots[s].trainable) {
                    const auto& g = ex.param_grads()[s];
                    auto& m = adam.m[s];
                    auto& v = adam.v[s];
                    for (std::size_t k = 0; k < t.data.size(); ++k) {
                        const double gk = g[k];
                        m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
                        v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
                        const double step = config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.adam_epsilon);
                        t.data[k] = static_cast<float>(t.data[k] - step);
                    }
                } else {
                    // running statistics: momentum update from the batch (unbiased variance)
                    const auto& st = ex.batch_stats(slots[s].layer);
                    const double mom = kBatchNormMomentum;
                    if (slots[s].role == ParamRole::RunningMean) {
                        for (std::size_t k = 0; k < t.data.size(); ++k)
                            t.data[k] = static_cast<float>(mom * t.data[k] + (1.0 - mom) * st.mean[k]);
                    } else {
                        const double unbias = st.count > 1 ? static_cast<double>(st.count) / (st.count - 1) : 1.0;
                        for (std::size_t k = 0; k < t.data.size(); ++k)
                            t.data[k] = static_cast<float>(mom * t.data[k] + (1.0 - mom) * st.var[k] * unbias);
                    }
                }
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / order.size();
        rec.train_accuracy = static_cast<double>(correct) / order.size();
        const auto vs = val.size() ? loss_and_accuracy(eval_ex, params, val) : EvalStats{rec.train_loss, rec.train_accuracy};
        rec.val_loss = vs.loss;
        rec.val_accuracy = vs.accuracy;
        if (!std::isfinite(rec.val_loss))
            throw Error(ErrorCode::TrainingDiverged, "non-finite validation loss in epoch " + std::to_string(epoch));
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            best = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    result.checkpoint.params = std::move(best);
    result.checkpoint.metadata.epochs = static_cast<int>(result.history.size());
    result.checkpoint.metadata.extra["best_epoch"] = std::to_string(result.best_epoch);
    return result;
}

std::vector<float> gather_frames(const DatasetView& view, std::size_t first, std::size_t count) {
    count = std::min(count, view.size() - first);
    std::vector<float> out(count * kFrameFloats);
    for (std::size_t i = 0; i < count; ++i) {
        const auto f = view.data->frame(view[first + i]);
        std::copy(f.begin(), f.end(), out.begin() + i * kFrameFloats);
    }
    return out;
}

std::vector<int> gather_labels(const DatasetView& view) {
    std::vector<int> out(view.size());
    for (std::size_t i = 0; i < view.size(); ++i) out[i] = view.data->labels[view[i]];
    return out;
}

std::vector<int> predict(const ModelGraph& graph, const Parameters& params, const DatasetView& view) {
    const std::size_t chunks = (view.size() + kPredictChunk - 1) / kPredictChunk;
    std::vector<int> out(view.size());
    std::vector<std::unique_ptr<Executor<float>>> pool(workers_for(chunks));
    parallel_for(chunks, [&](std::size_t c, int w) {
        if (!pool[w]) pool[w] = std::make_unique<Executor<float>>(graph);
        const std::size_t first = c * kPredictChunk;
        const std::size_t n = std::min(kPredictChunk, view.size() - first);
        const auto x = gather_frames(view, first, n);
        pool[w]->forward(params, x, static_cast<int>(n), Mode::Infer);
        const auto p = predicted_classes(pool[w]->probabilities(), pool[w]->classes());
        std::copy(p.begin(), p.end(), out.begin() + first);
    });
    return out;
}

Predictor make_predictor(const Checkpoint& ckpt) {
    auto graph = std::make_shared<ModelGraph>(ckpt.graph);
    auto params = std::make_shared<Parameters>(ckpt.params);
    return [graph, params](std::span<const float> frames, int count) {
        Executor<float> ex(*graph);
        std::vector<int> out;
        for (int first = 0; first < count; first += static_cast<int>(kPredictChunk)) {
            const int n = std::min<int>(kPredictChunk, count - first);
            ex.forward(*params, frames.subspan(first * kFrameFloats, n * kFrameFloats), n, Mode::Infer);
            const auto p = predicted_classes(ex.probabilities(), ex.classes());
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    };
}

void ConfusionMatrix::add(int truth, int predicted) {
    if (predicted < 0 || predicted >= kNumClasses)
        ++invalid[truth];
    else
        ++counts[truth][predicted];
}

std::uint64_t ConfusionMatrix::row_total(int truth) const {
    std::uint64_t n = invalid[truth];
    for (auto v : counts[truth]) n += v;
    return n;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (int t = 0; t < kNumClasses; ++t) n += row_total(t);
    return n;
}

std::uint64_t ConfusionMatrix::correct() const {
    std::uint64_t n = 0;
    for (int t = 0; t < kNumClasses; ++t) n += counts[t][t];
    return n;
}

double ConfusionMatrix::accuracy() const {
    const auto t = total();
    return t ? static_cast<double>(correct()) / t : 0.0;
}

double ConfusionMatrix::class_accuracy(int truth) const {
    const auto t = row_total(truth);
    return t ? static_cast<double>(counts[truth][truth]) / t : 0.0;
}

EvalResult evaluate_predictions(std::span<const int> predictions, const DatasetView& view) {
    if (predictions.size() != view.size())
        throw Error(ErrorCode::ValidationError, "prediction count does not match the view");
    EvalResult r;
    std::map<double, std::size_t> correct;
    for (std::size_t i = 0; i < view.size(); ++i) {
        const std::size_t idx = view[i];
        const int truth = view.data->labels[idx];
        const double snr = view.data->spec.snr_grid_db[view.data->level(idx)];
        r.confusion.add(truth, predictions[i]);
        ++r.per_snr_count[snr];
        correct[snr] += predictions[i] == truth;
    }
    for (const auto& [snr, n] : r.per_snr_count) r.per_snr_accuracy[snr] = static_cast<double>(correct[snr]) / n;
    r.accuracy = r.confusion.accuracy();
    return r;
}

EvalResult evaluate(const Predictor& predictor, const DatasetView& view) {
    const auto frames = gather_frames(view);
    const auto pred = predictor(frames, static_cast<int>(view.size()));
    return evaluate_predictions(pred, view);
}

EvalResult evaluate(const Checkpoint& ckpt, const DatasetView& view) {
    return evaluate_predictions(predict(ckpt.graph, ckpt.params, view), view);
}

} // namespace trustbench
