#include "trustbench/fault.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>

#include "trustbench/engine.hpp"
#include "trustbench/error.hpp"
#include "trustbench/parallel.hpp"
#include "trustbench/rng.hpp"
#include "trustbench/trainer.hpp"

namespace trustbench {

namespace {

constexpr int kChunk = 8;

bool matches_category(const std::string& group, const std::string& token) {
    if (token == "all") return true;
    if (token == "conv") return !group.empty() && (group[0] == 'C' || group[0] == 'P');
    if (token == "residual") return !group.empty() && group[0] == 'R';
    if (token == "dense") return !group.empty() && group[0] == 'D';
    return group == token;
}

} // namespace

float flip_bit(float v, int bit) {
    if (bit < 0 || bit > 31) throw Error(ErrorCode::InvalidBit, "bit position " + std::to_string(bit) + " outside [0, 31]");
    return std::bit_cast<float>(std::bit_cast<std::uint32_t>(v) ^ (std::uint32_t{1} << bit));
}

std::vector<std::size_t> select_slots(const ModelGraph& graph, const std::string& target, bool trainable_only) {
    const auto slots = param_slots(graph);
    std::vector<std::string> tokens;
    std::stringstream ss(target);
    for (std::string t; std::getline(ss, t, ',');)
        if (!t.empty()) tokens.push_back(t);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (trainable_only && !slots[i].trainable) continue;
        const auto& group = graph.layers[slots[i].layer].group;
        if (std::any_of(tokens.begin(), tokens.end(), [&](const auto& t) { return matches_category(group, t); }))
            out.push_back(i);
    }
    if (out.empty()) {
        std::string groups;
        std::set<std::string> seen;
        for (const auto& l : graph.layers)
            if (!l.group.empty() && seen.insert(l.group).second) groups += (groups.empty() ? "" : ", ") + l.group;
        throw Error(ErrorCode::ConfigError,
                    "target '" + target + "' selects no parameter tensor; groups: " + groups +
                        "; categories: all, conv, residual, dense");
    }
    return out;
}

CampaignResult run_campaign(const Checkpoint& ckpt, const DatasetView& eval, const CampaignConfig& config,
                            const TrialCallback& progress) {
    const auto frames = gather_frames(eval);
    const auto labels = gather_labels(eval);
    return run_campaign(ckpt, frames, labels, config, progress);
}

CampaignResult run_campaign(const Checkpoint& ckpt, std::span<const float> frames, std::span<const int> labels,
                            const CampaignConfig& config, const TrialCallback& progress) {
    if (config.trials == 0) throw Error(ErrorCode::InvalidTrialCount, "a campaign needs at least one trial");
    if (labels.empty()) throw Error(ErrorCode::EmptyEvalSet, "the evaluation subset is empty");
    if (config.bit_lo < 0 || config.bit_hi > 31 || config.bit_lo > config.bit_hi)
        throw Error(ErrorCode::InvalidBit, "bit range [" + std::to_string(config.bit_lo) + ", " +
                                               std::to_string(config.bit_hi) + "] is not inside [0, 31]");

    const ModelGraph& graph = ckpt.graph;
    const auto slots = param_slots(graph);
    const auto selected = select_slots(graph, config.target, config.trainable_only);
    const int in_size = static_cast<int>(element_count(graph.input_shape));
    if (frames.size() != labels.size() * static_cast<std::size_t>(in_size))
        throw Error(ErrorCode::ShapeError, "frame buffer does not match the label count");

    std::vector<std::size_t> prefix{0};
    for (auto s : selected) prefix.push_back(prefix.back() + element_count(slots[s].shape));

    CampaignResult result;
    result.eval_frames = labels.size();
    result.candidate_scalars = prefix.back();
    result.trials.resize(config.trials);

    // Trial plan: trial t depends only on (seed, t).
    std::vector<std::size_t> trial_slot(config.trials);
    std::map<int, std::vector<std::size_t>> by_layer;
    const std::uint64_t span = static_cast<std::uint64_t>(config.bit_hi - config.bit_lo + 1);
    for (std::size_t t = 0; t < config.trials; ++t) {
        Rng rng = make_rng(config.seed, {t});
        const std::uint64_t flat = uniform_index(rng, prefix.back());
        const int bit = config.bit_lo + static_cast<int>(uniform_index(rng, span));
        const auto k = static_cast<std::size_t>(std::upper_bound(prefix.begin(), prefix.end(), flat) - prefix.begin()) - 1;
        const ParamSlot& slot = slots[selected[k]];
        FaultTrial& tr = result.trials[t];
        tr.trial = t;
        tr.group = graph.layers[slot.layer].group;
        tr.tensor = slot.name;
        tr.index = flat - prefix[k];
        tr.bit = bit;
        tr.original = ckpt.params.at(slot.name).data[tr.index];
        tr.flipped = flip_bit(tr.original, bit);
        trial_slot[t] = selected[k];
        by_layer[slot.layer].push_back(t);
    }

    const std::size_t n = labels.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    auto chunk_size = [&](std::size_t c) { return static_cast<int>(std::min<std::size_t>(kChunk, n - c * kChunk)); };

    // Baseline.
    {
        Executor<float> ex(graph);
        std::size_t correct = 0;
        for (std::size_t c = 0; c < chunks; ++c) {
            const int b = chunk_size(c);
            ex.forward(ckpt.params, frames.subspan(c * kChunk * in_size, static_cast<std::size_t>(b) * in_size), b,
                       Mode::Infer);
            const auto p = predicted_classes(ex.probabilities(), ex.classes());
            for (int i = 0; i < b; ++i) correct += p[i] == labels[c * kChunk + i];
        }
        result.baseline_accuracy = static_cast<double>(correct) / n;
    }

    const int workers = workers_for(config.trials);
    std::vector<std::unique_ptr<Executor<float>>> exec(workers);
    std::vector<std::unique_ptr<Parameters>> copies(workers);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mu;

    for (const auto& [layer, trial_ids] : by_layer) {
        // Activations entering `layer` are fault-free; cache them once per chunk.
        Executor<float> base(graph);
        const auto points = base.resume_points(layer);
        std::vector<std::vector<std::vector<float>>> cache(chunks);
        for (std::size_t c = 0; c < chunks; ++c) {
            const int b = chunk_size(c);
            base.forward(ckpt.params, frames.subspan(c * kChunk * in_size, static_cast<std::size_t>(b) * in_size), b,
                         Mode::Infer);
            for (int p : points) {
                const auto a = base.activation(p);
                cache[c].emplace_back(a.begin(), a.end());
            }
        }

        parallel_for(trial_ids.size(), [&](std::size_t j, int w) {
            if (!exec[w]) {
                exec[w] = std::make_unique<Executor<float>>(graph);
                copies[w] = std::make_unique<Parameters>(ckpt.params);
            }
            FaultTrial& tr = result.trials[trial_ids[j]];
            float& target = copies[w]->at(slots[trial_slot[trial_ids[j]]].name).data[tr.index];
            target = tr.flipped;
            std::size_t correct = 0;
            for (std::size_t c = 0; c < chunks; ++c) {
                const int b = chunk_size(c);
                for (std::size_t q = 0; q < points.size(); ++q) exec[w]->set_activation(points[q], cache[c][q], b);
                exec[w]->forward_from(*copies[w], layer, Mode::Infer);
                const auto p = predicted_classes(exec[w]->probabilities(), exec[w]->classes());
                for (int i = 0; i < b; ++i) correct += p[i] == labels[c * kChunk + i];
            }
            target = tr.original;
            tr.accuracy = static_cast<double>(correct) / n;
            const auto d = ++done;
            if (progress) {
                std::lock_guard lock(progress_mu);
                progress(d, config.trials);
            }
        });
    }
    return result;
}

std::string_view to_string(FaultOutcome o) {
    switch (o) {
    case FaultOutcome::Benign: return "benign";
    case FaultOutcome::Degradation: return "degradation";
    case FaultOutcome::Misclassification: return "misclassification";
    }
    return "?";
}

FaultOutcome classify(double accuracy, double baseline, double delta) {
    if (accuracy < 0.5) return FaultOutcome::Misclassification;
    if (accuracy < baseline - delta) return FaultOutcome::Degradation;
    return FaultOutcome::Benign;
}

SensitivityReport classify_trials(std::span<const FaultTrial> trials, double baseline, double delta) {
    SensitivityReport r;
    r.baseline = baseline;
    r.delta = delta;
    std::map<std::pair<std::size_t, int>, SensitivityCell> cells;
    for (const auto& t : trials) {
        auto it = std::find(r.groups.begin(), r.groups.end(), t.group);
        const auto g = static_cast<std::size_t>(it - r.groups.begin());
        if (it == r.groups.end()) r.groups.push_back(t.group);
        auto& c = cells[{g, t.bit}];
        c.group = t.group;
        c.bit = t.bit;
        ++c.trials;
        c.mean_accuracy += t.accuracy;
        switch (classify(t.accuracy, baseline, delta)) {
        case FaultOutcome::Benign: ++c.benign, ++r.benign; break;
        case FaultOutcome::Degradation: ++c.degradation, ++r.degradation; break;
        case FaultOutcome::Misclassification: ++c.misclassification, ++r.misclassification; break;
        }
    }
    for (auto& [key, c] : cells) {
        c.mean_accuracy /= static_cast<double>(c.trials);
        r.cells.push_back(c);
    }
    return r;
}

} // namespace trustbench
