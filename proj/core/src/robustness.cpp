#include "trustbench/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "trustbench/error.hpp"

namespace trustbench {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return v[x] < v[y]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

std::string db_string(double db) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g dB", db);
    return buf;
}

} // namespace

double SnrSweepResult::overall_accuracy() const {
    double correct = 0.0;
    std::size_t n = 0;
    for (const auto& p : points) {
        correct += p.accuracy * p.count;
        n += p.count;
    }
    return n ? correct / n : 0.0;
}

std::vector<double> SnrSweepResult::snr() const {
    std::vector<double> out;
    for (const auto& p : points) out.push_back(p.snr_db);
    return out;
}

std::vector<double> SnrSweepResult::accuracy() const {
    std::vector<double> out;
    for (const auto& p : points) out.push_back(p.accuracy);
    return out;
}

SnrSweepResult sweep_from_predictions(std::span<const int> predictions, const DatasetView& test, std::string model) {
    const auto& grid = test.data->spec.snr_grid_db;
    if (grid.size() < 2) throw Error(ErrorCode::ValidationError, "an SNR sweep needs at least two levels");
    const auto eval = evaluate_predictions(predictions, test);
    SnrSweepResult r;
    r.model = std::move(model);
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    for (double db : sorted) {
        const auto it = eval.per_snr_count.find(db);
        if (it == eval.per_snr_count.end() || it->second == 0)
            throw Error(ErrorCode::MissingLevel, "no test frames at " + db_string(db));
        r.points.push_back({db, eval.per_snr_accuracy.at(db), it->second});
    }
    return r;
}

SnrSweepResult snr_sweep(const Predictor& predictor, const DatasetView& test, std::string model) {
    const auto frames = gather_frames(test);
    return sweep_from_predictions(predictor(frames, static_cast<int>(test.size())), test, std::move(model));
}

SnrSweepResult snr_sweep(const Checkpoint& ckpt, const DatasetView& test) {
    return sweep_from_predictions(predict(ckpt.graph, ckpt.params, test), test, ckpt.graph.name);
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::ValidationError, "spearman: length mismatch");
    if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

double snr_monotonicity(const SnrSweepResult& r, std::optional<double> lo, std::optional<double> hi) {
    std::vector<double> x, y;
    for (const auto& p : r.points) {
        if (lo && p.snr_db < *lo) continue;
        if (hi && p.snr_db > *hi) continue;
        x.push_back(p.snr_db);
        y.push_back(p.accuracy);
    }
    return spearman(x, y);
}

SweepComparison compare_sweeps(const SnrSweepResult& a, const SnrSweepResult& b) {
    if (a.snr() != b.snr()) throw Error(ErrorCode::ValidationError, "sweeps use different SNR grids");
    SweepComparison c;
    c.snr_db = a.snr();
    for (std::size_t i = 0; i < a.points.size(); ++i) c.delta.push_back(b.points[i].accuracy - a.points[i].accuracy);
    c.spearman_a = snr_monotonicity(a);
    c.spearman_b = snr_monotonicity(b);
    return c;
}

} // namespace trustbench
