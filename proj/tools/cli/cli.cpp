#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "manifest.hpp"
#include "svg.hpp"
#include "trustbench/adversarial.hpp"
#include "trustbench/checkpoint.hpp"
#include "trustbench/dataset.hpp"
#include "trustbench/error.hpp"
#include "trustbench/fault.hpp"
#include "trustbench/hash.hpp"
#include "trustbench/models.hpp"
#include "trustbench/robustness.hpp"
#include "trustbench/trainer.hpp"

namespace trustbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- helpers

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    const auto text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ValidationError, path.string() + " is not valid JSON: " + e.what());
    }
}

// Copies the keys of j into the fields named in `fields`; any other key is
// rejected so that typos do not silently fall back to defaults.
template <class Fields>
void apply_json(const json& j, const std::string& what, Fields&& fields) {
    if (!j.is_object()) throw Error(ErrorCode::ValidationError, what + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (!fields(key, value)) throw Error(ErrorCode::ValidationError, what + ": unknown key '" + key + "'");
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ValidationError, what + ": bad value for '" + key + "': " + e.what());
        }
    }
}

fs::path with_suffix(const fs::path& out, const std::string& suffix) {
    auto p = out;
    p.replace_extension();
    p += suffix;
    return p;
}

std::vector<std::string> class_names() {
    std::vector<std::string> out;
    for (auto s : kAllSchemes) out.emplace_back(scheme_name(s));
    return out;
}

std::vector<double> parse_levels(const std::string& text) {
    // "first:last:step" or a comma list
    if (text.find(':') != std::string::npos) {
        std::vector<double> v;
        std::stringstream ss(text);
        for (std::string t; std::getline(ss, t, ':');) v.push_back(parse_number(t));
        if (v.size() != 3) throw Error(ErrorCode::ValidationError, "levels range must be first:last:step");
        return DatasetSpec::snr_range(v[0], v[1], v[2]);
    }
    std::vector<double> v;
    std::stringstream ss(text);
    for (std::string t; std::getline(ss, t, ',');)
        if (!t.empty()) v.push_back(parse_number(t));
    return v;
}

std::pair<int, int> parse_bit_range(const std::string& text) {
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos) {
            const int b = std::stoi(text);
            return {b, b};
        }
        return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::ValidationError, "bit range must be lo:hi, got '" + text + "'");
    }
}

// Frames a command works on: a split side, an SNR floor and an optional
// evenly spaced cap.
struct Selection {
    std::string subset = "test";
    double train_fraction = 0.75;
    std::uint64_t split_seed = 0;
    std::optional<double> min_snr;
    std::size_t max_frames = 0;

    void add_options(CLI::App* app, std::optional<double> default_min_snr, std::size_t default_max) {
        min_snr = default_min_snr;
        max_frames = default_max;
        app->add_option("--subset", subset, "frames to use: test (held-out split) or all")
            ->check(CLI::IsMember({"test", "all"}))
            ->capture_default_str();
        app->add_option("--train-fraction", train_fraction, "split fraction used at training time")
            ->capture_default_str();
        app->add_option("--split-seed", split_seed, "split seed used at training time")->capture_default_str();
        app->add_option("--min-snr", min_snr, "keep frames at or above this SNR (dB)");
        app->add_option("--max-frames", max_frames, "evenly spaced cap on the frame count, 0 keeps all")
            ->capture_default_str();
    }

    DatasetView apply(const Dataset& d) const {
        DatasetView v = subset == "all" ? DatasetView::all(d) : split_dataset(d, {train_fraction, split_seed}).test;
        if (min_snr) v = v.filter_snr(*min_snr);
        if (max_frames && v.size() > max_frames) {
            DatasetView c{v.data, {}};
            for (std::size_t i = 0; i < max_frames; ++i) c.indices.push_back(v[i * v.size() / max_frames]);
            v = std::move(c);
        }
        return v;
    }

    json to_json() const {
        return {{"subset", subset},
                {"train_fraction", train_fraction},
                {"split_seed", split_seed},
                {"min_snr_db", min_snr ? json(*min_snr) : json(nullptr)},
                {"max_frames", max_frames}};
    }
};

struct Context {
    std::vector<std::string> argv;
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;

    void log(const std::string& line) const {
        if (!quiet) err << line << '\n';
    }
};

json eval_json(const EvalResult& r, std::size_t frames) {
    json per_snr = json::array();
    for (const auto& [snr, acc] : r.per_snr_accuracy)
        per_snr.push_back({{"snr_db", snr}, {"accuracy", acc}, {"n", r.per_snr_count.at(snr)}});
    json counts = json::array(), per_class = json::object();
    const auto names = class_names();
    for (int t = 0; t < kNumClasses; ++t) {
        counts.push_back(r.confusion.counts[t]);
        per_class[names[t]] = r.confusion.class_accuracy(t);
    }
    return {{"frames", frames},
            {"accuracy", r.accuracy},
            {"per_snr", per_snr},
            {"class_accuracy", per_class},
            {"confusion", {{"labels", names}, {"counts", counts}, {"invalid", r.confusion.invalid}}}};
}

// ---------------------------------------------------------------- gen

struct GenOptions {
    std::string levels;
    int frames_per_cell = 4096;
    std::uint64_t seed = DatasetSpec::full_scale().master_seed;
    int sps = 8;
    double rolloff = 0.35;
    int span = 10;
    std::string config;
    std::string out;
};

int cmd_gen(const GenOptions& o, const Context& ctx) {
    DatasetSpec spec = DatasetSpec::full_scale(o.seed);
    if (!o.config.empty()) {
        apply_json(read_json(o.config), o.config, [&](const std::string& k, const json& v) {
            if (k == "snr_grid_db") spec.snr_grid_db = v.get<std::vector<double>>();
            else if (k == "frames_per_cell") spec.frames_per_cell = v.get<int>();
            else if (k == "sps") spec.sps = v.get<int>();
            else if (k == "rrc_rolloff") spec.rrc_rolloff = v.get<double>();
            else if (k == "rrc_span_symbols") spec.rrc_span_symbols = v.get<int>();
            else if (k == "master_seed") spec.master_seed = v.get<std::uint64_t>();
            else return false;
            return true;
        });
    }
    // explicit flags win over the config file
    if (!o.levels.empty()) spec.snr_grid_db = parse_levels(o.levels);
    if (o.frames_per_cell != 4096 || o.config.empty()) spec.frames_per_cell = o.frames_per_cell;
    if (o.sps != 8) spec.sps = o.sps;
    if (o.rolloff != 0.35) spec.rrc_rolloff = o.rolloff;
    if (o.span != 10) spec.rrc_span_symbols = o.span;
    spec.validate();

    RunManifest m("gen", ctx.argv);
    m.config() = {{"snr_grid_db", spec.snr_grid_db},      {"frames_per_cell", spec.frames_per_cell},
                  {"sps", spec.sps},                      {"rrc_rolloff", spec.rrc_rolloff},
                  {"rrc_span_symbols", spec.rrc_span_symbols}, {"master_seed", spec.master_seed}};
    if (!o.config.empty()) m.add_input(o.config);
    ctx.log("generating " + std::to_string(spec.total_frames()) + " frames (" + std::to_string(spec.levels()) +
            " levels x " + std::to_string(spec.frames_per_cell) + " per cell)");
    const auto hash = write_dataset(spec, fs::path(o.out));
    m.add_output(o.out);
    m.write(manifest_path_for(o.out));
    ctx.out << o.out << " sha256 " << hash << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    std::string model;
    std::string data;
    std::string config;
    std::string out;
    std::string history;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
};

ModelGraph model_by_name(const std::string& name) {
    if (name == "cnn") return build_cnn();
    if (name == "resnet") return build_resnet();
    throw Error(ErrorCode::ValidationError, "unknown model '" + name + "', expected cnn or resnet");
}

int cmd_train(const TrainOptions& o, const Context& ctx) {
    TrainConfig tc;
    SplitPlan plan;
    if (!o.config.empty()) {
        apply_json(read_json(o.config), o.config, [&](const std::string& k, const json& v) {
            if (k == "learning_rate") tc.learning_rate = v.get<double>();
            else if (k == "beta1") tc.beta1 = v.get<double>();
            else if (k == "beta2") tc.beta2 = v.get<double>();
            else if (k == "adam_epsilon") tc.adam_epsilon = v.get<double>();
            else if (k == "batch_size") tc.batch_size = v.get<int>();
            else if (k == "epochs") tc.epochs = v.get<int>();
            else if (k == "patience") tc.patience = v.get<int>();
            else if (k == "validation_fraction") tc.validation_fraction = v.get<double>();
            else if (k == "seed") tc.seed = v.get<std::uint64_t>();
            else if (k == "train_fraction") plan.train_fraction = v.get<double>();
            else if (k == "split_seed") plan.seed = v.get<std::uint64_t>();
            else return false;
            return true;
        });
    }
    if (o.epochs) tc.epochs = *o.epochs;
    if (o.seed) tc.seed = *o.seed;
    const ModelGraph graph = model_by_name(o.model);

    RunManifest m("train", ctx.argv);
    m.add_input(o.data);
    if (!o.config.empty()) m.add_input(o.config);
    const Dataset data = read_dataset(o.data);
    tc.dataset_hash = sha256_file(o.data);
    const auto split = split_dataset(data, plan);
    m.config() = {{"model", o.model},
                  {"learning_rate", tc.learning_rate},
                  {"beta1", tc.beta1},
                  {"beta2", tc.beta2},
                  {"adam_epsilon", tc.adam_epsilon},
                  {"batch_size", tc.batch_size},
                  {"epochs", tc.epochs},
                  {"patience", tc.patience},
                  {"validation_fraction", tc.validation_fraction},
                  {"seed", tc.seed},
                  {"train_fraction", plan.train_fraction},
                  {"split_seed", plan.seed},
                  {"train_frames", split.train.size()}};
    ctx.log("training " + o.model + " (" + std::to_string(count_params(graph)) + " parameters) on " +
            std::to_string(split.train.size()) + " frames");

    const auto result = train(graph, split.train, tc, [&](const EpochRecord& e) {
        std::ostringstream line;
        line << "epoch " << e.epoch << " train_loss " << format_number(e.train_loss) << " train_acc "
             << format_number(e.train_accuracy) << " val_loss " << format_number(e.val_loss) << " val_acc "
             << format_number(e.val_accuracy);
        ctx.log(line.str());
    });
    auto ckpt = result.checkpoint;
    ckpt.metadata.extra["model"] = o.model;
    save_checkpoint(ckpt, o.out);

    CsvWriter csv({"epoch", "train_loss", "train_acc", "val_loss", "val_acc"});
    for (const auto& e : result.history)
        csv.cell(e.epoch).cell(e.train_loss).cell(e.train_accuracy).cell(e.val_loss).cell(e.val_accuracy).end_row();
    const fs::path history = o.history.empty() ? with_suffix(o.out, ".history.csv") : fs::path(o.history);
    write_text(history, csv.text());

    m.config()["best_epoch"] = result.best_epoch;
    m.add_output(o.out);
    m.add_output(history);
    m.write(manifest_path_for(o.out));
    ctx.out << o.out << " best_epoch " << result.best_epoch << " of " << result.history.size() << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- eval / sweep

struct EvalOptions {
    std::string ckpt;
    std::string data;
    std::string out;
    Selection sel;
};

int cmd_eval(const EvalOptions& o, const Context& ctx) {
    RunManifest m("eval", ctx.argv);
    m.add_input(o.ckpt);
    m.add_input(o.data);
    const auto ckpt = load_checkpoint(o.ckpt);
    const Dataset data = read_dataset(o.data);
    const auto view = o.sel.apply(data);
    if (view.size() == 0) throw Error(ErrorCode::EmptyEvalSet, "the selection holds no frames");
    m.config() = o.sel.to_json();
    const auto r = evaluate(ckpt, view);
    write_text(o.out, eval_json(r, view.size()).dump(2) + "\n");
    m.add_output(o.out);
    m.write(manifest_path_for(o.out));
    ctx.out << "accuracy " << format_number(r.accuracy) << " over " << view.size() << " frames\n";
    return kSuccess;
}

struct SweepOptions {
    std::string ckpt;
    std::string data;
    std::string out;
    Selection sel;
};

int cmd_sweep(const SweepOptions& o, const Context& ctx) {
    RunManifest m("sweep", ctx.argv);
    m.add_input(o.ckpt);
    m.add_input(o.data);
    const auto ckpt = load_checkpoint(o.ckpt);
    const Dataset data = read_dataset(o.data);
    const auto view = o.sel.apply(data);
    m.config() = o.sel.to_json();
    const auto r = snr_sweep(ckpt, view);
    CsvWriter csv({"snr_db", "accuracy", "n"});
    for (const auto& p : r.points) csv.cell(p.snr_db).cell(p.accuracy).cell(static_cast<std::uint64_t>(p.count)).end_row();
    write_text(o.out, csv.text());
    m.config()["spearman"] = snr_monotonicity(r);
    m.add_output(o.out);
    m.write(manifest_path_for(o.out));
    ctx.out << "levels " << r.points.size() << " overall " << format_number(r.overall_accuracy()) << " spearman "
            << format_number(snr_monotonicity(r)) << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- inject

struct InjectOptions {
    std::string ckpt;
    std::string data;
    std::string layer = "all";
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    std::string bits = "0:31";
    bool trainable_only = false;
    double delta = 0.01;
    std::string out;
    std::string report;
    Selection sel;
};

int cmd_inject(const InjectOptions& o, const Context& ctx) {
    RunManifest m("inject", ctx.argv);
    m.add_input(o.ckpt);
    m.add_input(o.data);
    const auto ckpt = load_checkpoint(o.ckpt);
    const Dataset data = read_dataset(o.data);
    const auto view = o.sel.apply(data);
    CampaignConfig cc;
    cc.target = o.layer;
    cc.trials = o.trials;
    cc.seed = o.seed;
    std::tie(cc.bit_lo, cc.bit_hi) = parse_bit_range(o.bits);
    cc.trainable_only = o.trainable_only;
    m.config() = o.sel.to_json();
    m.config().update({{"layer", cc.target},
                       {"trials", cc.trials},
                       {"seed", cc.seed},
                       {"bit_lo", cc.bit_lo},
                       {"bit_hi", cc.bit_hi},
                       {"trainable_only", cc.trainable_only},
                       {"delta", o.delta},
                       {"eval_frames", view.size()}});
    const auto before = checkpoint_hash(ckpt);
    std::size_t last = 0;
    const auto r = run_campaign(ckpt, view, cc, [&](std::size_t done, std::size_t total) {
        if (done * 10 / total != last) {
            last = done * 10 / total;
            ctx.log("trials " + std::to_string(done) + "/" + std::to_string(total));
        }
    });
    if (checkpoint_hash(ckpt) != before) throw Error(ErrorCode::IntegrityError, "checkpoint changed during the campaign");

    CsvWriter csv({"trial", "layer", "tensor", "index", "bit", "orig_hex", "flipped_hex", "accuracy"});
    for (const auto& t : r.trials)
        csv.cell(static_cast<std::uint64_t>(t.trial))
            .cell(t.group)
            .cell(t.tensor)
            .cell(static_cast<std::uint64_t>(t.index))
            .cell(t.bit)
            .cell(format_bits(t.original))
            .cell(format_bits(t.flipped))
            .cell(t.accuracy)
            .end_row();
    write_text(o.out, csv.text());

    const auto rep = classify_trials(r.trials, r.baseline_accuracy, o.delta);
    CsvWriter sens({"layer", "bit", "trials", "mean_accuracy", "benign", "degradation", "misclassification", "baseline"});
    for (const auto& c : rep.cells)
        sens.cell(c.group)
            .cell(c.bit)
            .cell(static_cast<std::uint64_t>(c.trials))
            .cell(c.mean_accuracy)
            .cell(static_cast<std::uint64_t>(c.benign))
            .cell(static_cast<std::uint64_t>(c.degradation))
            .cell(static_cast<std::uint64_t>(c.misclassification))
            .cell(rep.baseline)
            .end_row();
    const fs::path report = o.report.empty() ? with_suffix(o.out, ".sensitivity.csv") : fs::path(o.report);
    write_text(report, sens.text());

    m.config()["baseline_accuracy"] = r.baseline_accuracy;
    m.config()["checkpoint_sha256"] = before;
    m.add_output(o.out);
    m.add_output(report);
    m.write(manifest_path_for(o.out));
    ctx.out << "baseline " << format_number(r.baseline_accuracy) << " misclassification " << rep.misclassification
            << " degradation " << rep.degradation << " benign " << rep.benign << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- attack

struct AttackOptions {
    std::string ckpt;
    std::string data;
    std::string attack;
    std::optional<double> eps;
    bool eps_absolute = false;
    std::optional<std::string> norm;
    std::optional<int> iters;
    std::optional<double> step;
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    Selection sel;
};

json attack_config_json(const AttackConfig& c) {
    return {{"attack", std::string(to_string(c.kind))},
            {"norm", std::string(to_string(c.norm))},
            {"eps", c.eps},
            {"eps_relative", c.eps_relative},
            {"step", c.step},
            {"iterations", c.effective_iterations()},
            {"overshoot", c.overshoot},
            {"eta", c.eta},
            {"confidence", c.confidence},
            {"learning_rate", c.effective_learning_rate()},
            {"initial_const", c.effective_initial_const()},
            {"binary_search_steps", c.binary_search_steps},
            {"zoo_coordinates", c.zoo_coordinates},
            {"zoo_h", c.zoo_h},
            {"hsj_init_evals", c.hsj_init_evals},
            {"hsj_max_evals", c.hsj_max_evals},
            {"hsj_init_trials", c.hsj_init_trials},
            {"seed", c.seed}};
}

int cmd_attack(const AttackOptions& o, const Context& ctx) {
    AttackConfig ac;
    ac.kind = parse_attack(o.attack);
    if (!o.config.empty()) {
        apply_json(read_json(o.config), o.config, [&](const std::string& k, const json& v) {
            if (k == "norm") ac.norm = parse_norm(v.get<std::string>());
            else if (k == "eps") ac.eps = v.get<double>();
            else if (k == "eps_relative") ac.eps_relative = v.get<bool>();
            else if (k == "step") ac.step = v.get<double>();
            else if (k == "iterations") ac.iterations = v.get<int>();
            else if (k == "overshoot") ac.overshoot = v.get<double>();
            else if (k == "eta") ac.eta = v.get<double>();
            else if (k == "confidence") ac.confidence = v.get<double>();
            else if (k == "learning_rate") ac.learning_rate = v.get<double>();
            else if (k == "initial_const") ac.initial_const = v.get<double>();
            else if (k == "binary_search_steps") ac.binary_search_steps = v.get<int>();
            else if (k == "zoo_coordinates") ac.zoo_coordinates = v.get<int>();
            else if (k == "zoo_h") ac.zoo_h = v.get<double>();
            else if (k == "hsj_init_evals") ac.hsj_init_evals = v.get<int>();
            else if (k == "hsj_max_evals") ac.hsj_max_evals = v.get<int>();
            else if (k == "hsj_init_trials") ac.hsj_init_trials = v.get<int>();
            else if (k == "seed") ac.seed = v.get<std::uint64_t>();
            else return false;
            return true;
        });
    }
    if (o.eps) ac.eps = *o.eps;
    if (o.eps_absolute) ac.eps_relative = false;
    if (o.norm) ac.norm = parse_norm(*o.norm);
    if (o.iters) ac.iterations = *o.iters;
    if (o.step) ac.step = *o.step;
    if (o.seed) ac.seed = *o.seed;
    ac.validate();

    RunManifest m("attack", ctx.argv);
    m.add_input(o.ckpt);
    m.add_input(o.data);
    if (!o.config.empty()) m.add_input(o.config);
    const auto ckpt = load_checkpoint(o.ckpt);
    const Dataset data = read_dataset(o.data);
    const auto view = o.sel.apply(data);
    m.config() = attack_config_json(ac);
    m.config()["selection"] = o.sel.to_json();
    ctx.log("attacking " + std::to_string(view.size()) + " frames with " + std::string(to_string(ac.kind)));
    const auto r = run_attack(ckpt, view, ac);

    json samples = json::array();
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const auto& s = r.samples[i];
        samples.push_back({{"frame", view[i]},
                           {"snr_db", data.spec.snr_grid_db[data.level(view[i])]},
                           {"label", s.label},
                           {"clean_prediction", s.clean_prediction},
                           {"adversarial_prediction", s.adversarial_prediction},
                           {"l2", s.l2},
                           {"linf", s.linf},
                           {"queries", s.queries}});
    }
    const json result = {{"config", attack_config_json(ac)},
                         {"selection", o.sel.to_json()},
                         {"eps_absolute", r.eps_absolute},
                         {"samples_attacked", r.samples.size()},
                         {"clean_accuracy", r.clean_accuracy},
                         {"aer", r.aer},
                         {"mean_l2", r.mean_l2()},
                         {"mean_linf", r.mean_linf()},
                         {"gradient_calls", r.gradient_calls},
                         {"queries", r.queries},
                         {"samples", samples}};
    write_text(o.out, result.dump(2) + "\n");
    m.add_output(o.out);
    m.write(manifest_path_for(o.out));
    ctx.out << to_string(ac.kind) << " aer " << format_number(r.aer) << " clean " << format_number(r.clean_accuracy)
            << " eps " << format_number(r.eps_absolute) << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- report

struct ReportOptions {
    std::vector<std::string> evals;
    std::vector<std::string> sweeps;
    std::vector<std::string> sensitivity;
    std::vector<std::string> attacks;
    std::string out_dir;
};

// Published AER (as a fraction) for the CNN and ResNet under each attack, shown next to
// measured values. Upstream attack settings are unknown, so these are a
// qualitative anchor only.
struct ReferenceAer {
    const char* attack;
    double cnn;
    double resnet;
};
constexpr ReferenceAer kReferenceAer[] = {
    {"fgm", 0.1883, 0.2212},        {"pgd", 0.0611, 0.0560},   {"newtonfool", 0.2684, 0.2850},
    {"deepfool", 0.2607, 0.1543},   {"hopskipjump", 0.1492, 0.0804}, {"zoo", 0.2657, 0.1925},
    {"cw-l2", 0.539, 0.5925},       {"cw-linf", 0.2157, 0.1457},
};

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

SnrSweepResult read_sweep(const std::string& path) {
    const auto table = parse_csv(read_text(path));
    if (table.header.empty() || table.rows.empty())
        throw Error(ErrorCode::ValidationError, "sweep file " + path + " holds no levels");
    const auto cs = table.column("snr_db"), ca = table.column("accuracy"), cn = table.column("n");
    SnrSweepResult r;
    r.model = stem_of(path);
    for (const auto& row : table.rows) {
        SnrPoint p{parse_number(row[cs]), parse_number(row[ca]), static_cast<std::size_t>(parse_number(row[cn]))};
        if (!(p.accuracy >= 0.0 && p.accuracy <= 1.0))
            throw Error(ErrorCode::ValidationError, "sweep file " + path + " has an accuracy outside [0, 1]");
        r.points.push_back(p);
    }
    return r;
}

int cmd_report(const ReportOptions& o, const Context& ctx) {
    if (o.evals.empty() && o.sweeps.empty() && o.sensitivity.empty() && o.attacks.empty())
        throw Error(ErrorCode::ValidationError, "report needs at least one input (--eval, --sweep, --sensitivity, --attack)");
    RunManifest m("report", ctx.argv);
    const fs::path dir(o.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());
    json summary = json::object();
    std::vector<fs::path> outputs;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        outputs.push_back(dir / name);
    };

    for (const auto& path : o.evals) {
        m.add_input(path);
        const auto j = read_json(path);
        try {
            const auto counts = j.at("confusion").at("counts").get<std::vector<std::vector<std::uint64_t>>>();
            const auto labels = j.at("confusion").at("labels").get<std::vector<std::string>>();
            emit("confusion_" + stem_of(path) + ".svg",
                 confusion_svg(counts, labels, "Confusion matrix: " + stem_of(path)));
            summary["eval"][stem_of(path)] = {{"accuracy", j.at("accuracy")}, {"class_accuracy", j.at("class_accuracy")}};
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ValidationError, path + " is not an eval result: " + e.what());
        }
    }

    if (!o.sweeps.empty()) {
        std::vector<SnrSweepResult> sweeps;
        std::vector<Series> series;
        for (const auto& path : o.sweeps) {
            m.add_input(path);
            sweeps.push_back(read_sweep(path));
            series.push_back({sweeps.back().model, sweeps.back().snr(), sweeps.back().accuracy()});
            summary["sweep"][sweeps.back().model] = {{"overall_accuracy", sweeps.back().overall_accuracy()},
                                                     {"spearman", snr_monotonicity(sweeps.back())}};
        }
        emit("snr_accuracy.svg", line_chart_svg(series, "Accuracy against SNR", "SNR (dB)", "accuracy"));
        if (sweeps.size() >= 2) {
            const auto c = compare_sweeps(sweeps[0], sweeps[1]);
            CsvWriter csv({"snr_db", "accuracy_" + sweeps[0].model, "accuracy_" + sweeps[1].model, "delta"});
            for (std::size_t i = 0; i < c.snr_db.size(); ++i)
                csv.cell(c.snr_db[i]).cell(sweeps[0].points[i].accuracy).cell(sweeps[1].points[i].accuracy).cell(c.delta[i]).end_row();
            emit("sweep_comparison.csv", csv.text());
        }
    }

    for (const auto& path : o.sensitivity) {
        m.add_input(path);
        const auto table = parse_csv(read_text(path));
        if (table.rows.empty()) throw Error(ErrorCode::ValidationError, "sensitivity file " + path + " is empty");
        const auto cl = table.column("layer"), cb = table.column("bit"), ca = table.column("mean_accuracy");
        std::vector<std::string> layers;
        std::map<std::string, std::vector<double>> grid;
        for (const auto& row : table.rows) {
            if (!grid.count(row[cl])) {
                layers.push_back(row[cl]);
                grid[row[cl]].assign(32, std::nan(""));
            }
            const double bit = parse_number(row[cb]);
            if (!(bit >= 0 && bit <= 31 && bit == std::floor(bit)))
                throw Error(ErrorCode::ValidationError, "sensitivity file " + path + " has a bit outside [0, 31]");
            grid[row[cl]][static_cast<int>(bit)] = parse_number(row[ca]);
        }
        std::vector<std::vector<double>> values;
        for (const auto& l : layers) values.push_back(grid[l]);
        std::vector<std::string> bits;
        for (int b = 0; b < 32; ++b) bits.push_back(std::to_string(b));
        emit("sensitivity_" + stem_of(path) + ".svg",
             heatmap_svg(values, layers, bits, "Mean accuracy after a single bit flip: " + stem_of(path),
                         "bit position (0 = mantissa LSB, 23-30 exponent, 31 sign)"));
    }

    if (!o.attacks.empty()) {
        CsvWriter csv({"attack", "source", "aer", "clean_accuracy", "eps_absolute", "reference_aer_cnn",
                       "reference_aer_resnet"});
        for (const auto& path : o.attacks) {
            m.add_input(path);
            const auto j = read_json(path);
            try {
                const auto name = j.at("config").at("attack").get<std::string>();
                csv.cell(name).cell(stem_of(path)).cell(j.at("aer").get<double>()).cell(j.at("clean_accuracy").get<double>())
                    .cell(j.at("eps_absolute").get<double>());
                const auto* ref = std::find_if(std::begin(kReferenceAer), std::end(kReferenceAer),
                                               [&](const ReferenceAer& r) { return name == r.attack; });
                if (ref != std::end(kReferenceAer))
                    csv.cell(ref->cnn).cell(ref->resnet);
                else
                    csv.cell("").cell("");
                csv.end_row();
                summary["attack"][stem_of(path)] = {{"attack", name}, {"aer", j.at("aer")}};
            } catch (const json::exception& e) {
                throw Error(ErrorCode::ValidationError, path + " is not an attack result: " + e.what());
            }
        }
        emit("aer.csv", csv.text());
    }

    emit("summary.json", summary.dump(2) + "\n");
    for (const auto& p : outputs) m.add_output(p);
    m.write(dir / "report.manifest.json");
    for (const auto& p : outputs) ctx.out << p.generic_string() << '\n';
    return kSuccess;
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
    case ErrorCode::IoError:
    case ErrorCode::FormatError: return kIoError;
    default: return kValidationError;
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Trustworthiness benchmarks for I/Q modulation classifiers", "trustbench"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version());
    Context ctx{std::vector<std::string>(argv + 1, argv + argc), out, err};
    app.add_flag("-q,--quiet", ctx.quiet, "suppress progress output");

    GenOptions gen;
    auto* g = app.add_subcommand("gen", "synthesise a labelled I/Q dataset");
    g->add_option("--levels", gen.levels, "SNR grid in dB: first:last:step or a comma list (default -20:30:2)");
    g->add_option("--frames-per-cell", gen.frames_per_cell, "frames per (scheme, SNR) cell")->capture_default_str();
    g->add_option("--seed", gen.seed, "master seed")->capture_default_str();
    g->add_option("--sps", gen.sps, "samples per symbol")->capture_default_str();
    g->add_option("--rolloff", gen.rolloff, "RRC roll-off")->capture_default_str();
    g->add_option("--span", gen.span, "RRC span in symbols")->capture_default_str();
    g->add_option("--config", gen.config, "JSON dataset spec");
    g->add_option("--out", gen.out, "output .thzd file")->required();

    TrainOptions tr;
    auto* t = app.add_subcommand("train", "train a classifier on the training split");
    t->add_option("--model", tr.model, "cnn or resnet")->required()->check(CLI::IsMember({"cnn", "resnet"}));
    t->add_option("--data", tr.data, "dataset file")->required();
    t->add_option("--config", tr.config, "JSON training config");
    t->add_option("--epochs", tr.epochs, "override the epoch count");
    t->add_option("--seed", tr.seed, "override the training seed");
    t->add_option("--history", tr.history, "history CSV (default <out>.history.csv)");
    t->add_option("--out", tr.out, "output checkpoint")->required();

    EvalOptions ev;
    auto* e = app.add_subcommand("eval", "accuracy, per-SNR accuracy and confusion matrix");
    e->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
    e->add_option("--data", ev.data, "dataset file")->required();
    e->add_option("--out", ev.out, "output JSON")->required();
    ev.sel.add_options(e, std::nullopt, 0);

    SweepOptions sw;
    auto* s = app.add_subcommand("sweep", "accuracy at every SNR level as CSV");
    s->add_option("--ckpt", sw.ckpt, "checkpoint")->required();
    s->add_option("--data", sw.data, "dataset file")->required();
    s->add_option("--out", sw.out, "output CSV")->required();
    sw.sel.add_options(s, std::nullopt, 0);

    InjectOptions in;
    auto* i = app.add_subcommand("inject", "single-bit fault campaign over checkpoint parameters");
    i->add_option("--ckpt", in.ckpt, "checkpoint")->required();
    i->add_option("--data", in.data, "dataset file")->required();
    i->add_option("--layer", in.layer, "all, conv, residual, dense, a group (C1, R3, D2, ...) or a comma list")
        ->capture_default_str();
    i->add_option("--trials", in.trials, "number of trials")->capture_default_str();
    i->add_option("--seed", in.seed, "campaign seed")->capture_default_str();
    i->add_option("--bits", in.bits, "bit range lo:hi")->capture_default_str();
    i->add_flag("--trainable-only", in.trainable_only, "skip BatchNorm running statistics");
    i->add_option("--delta", in.delta, "degradation threshold below baseline")->capture_default_str();
    i->add_option("--report", in.report, "sensitivity CSV (default <out>.sensitivity.csv)");
    i->add_option("--out", in.out, "trials CSV")->required();
    in.sel.add_options(i, 10.0, 0);

    AttackOptions at;
    auto* a = app.add_subcommand("attack", "adversarial examples and AER");
    a->add_option("--ckpt", at.ckpt, "checkpoint")->required();
    a->add_option("--data", at.data, "dataset file")->required();
    a->add_option("--attack", at.attack, "identity, fgm, pgd, deepfool, newtonfool, cw-l2, cw-linf, zoo, hopskipjump")
        ->required();
    a->add_option("--eps", at.eps, "budget, relative to the batch RMS unless --eps-absolute");
    a->add_flag("--eps-absolute", at.eps_absolute, "treat --eps as an absolute norm");
    a->add_option("--norm", at.norm, "linf or l2");
    a->add_option("--iters", at.iters, "iteration cap");
    a->add_option("--step", at.step, "PGD step (default eps/4)");
    a->add_option("--seed", at.seed, "seed for black-box attacks");
    a->add_option("--config", at.config, "JSON attack config");
    a->add_option("--out", at.out, "output JSON")->required();
    at.sel.add_options(a, 10.0, 512);

    ReportOptions rp;
    auto* r = app.add_subcommand("report", "render SVG charts and CSV tables from result files");
    r->add_option("--eval", rp.evals, "eval JSON (repeatable)");
    r->add_option("--sweep", rp.sweeps, "sweep CSV (repeatable)");
    r->add_option("--sensitivity", rp.sensitivity, "sensitivity CSV from inject (repeatable)");
    r->add_option("--attack", rp.attacks, "attack result JSON (repeatable)");
    r->add_option("--out-dir", rp.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::CallForVersion&) {
        out << tool_version() << '\n';
        return kSuccess;
    } catch (const CLI::ParseError& pe) {
        err << "error: " << pe.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        err << failing->help();
        return kValidationError;
    }

    try {
        if (g->parsed()) return cmd_gen(gen, ctx);
        if (t->parsed()) return cmd_train(tr, ctx);
        if (e->parsed()) return cmd_eval(ev, ctx);
        if (s->parsed()) return cmd_sweep(sw, ctx);
        if (i->parsed()) return cmd_inject(in, ctx);
        if (a->parsed()) return cmd_attack(at, ctx);
        if (r->parsed()) return cmd_report(rp, ctx);
    } catch (const Error& ex) {
        err << "error: " << ex.what() << '\n';
        return exit_code_for(ex);
    } catch (const fs::filesystem_error& ex) {
        err << "error: " << ex.what() << '\n';
        return kIoError;
    } catch (const std::invalid_argument& ex) {
        err << "error: " << ex.what() << '\n';
        return kValidationError;
    }
    return kValidationError;
}

} // namespace trustbench::cli
