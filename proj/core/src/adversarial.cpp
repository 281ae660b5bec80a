#include "trustbench/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "trustbench/error.hpp"
#include "trustbench/parallel.hpp"
#include "trustbench/rng.hpp"
#include "trustbench/trainer.hpp"

namespace trustbench {

namespace {

constexpr int kAttackChunk = 32;
// Rounding headroom when adding a perturbation to a float frame.
constexpr double kSlack = 5e-7;
constexpr double kAdamB1 = 0.9;
constexpr double kAdamB2 = 0.999;
constexpr double kAdamEps = 1e-8;

double norm2(const float* v, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(v[i]) * v[i];
    return std::sqrt(s);
}

double dist2(const float* a, const float* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double t = static_cast<double>(a[i]) - b[i];
        s += t * t;
    }
    return std::sqrt(s);
}

double dist_inf(const float* a, const float* b, std::size_t d) {
    double m = 0.0;
    for (std::size_t i = 0; i < d; ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

// Clips delta into the L-inf ball and writes x0 + delta, nudging any element
// whose rounding lands outside the budget back towards x0.
void project_linf(const float* x0, float* delta, float* adv, std::size_t d, double eps) {
    const float e = static_cast<float>(eps);
    for (std::size_t i = 0; i < d; ++i) {
        delta[i] = std::clamp(delta[i], -e, e);
        float a = x0[i] + delta[i];
        while (std::abs(static_cast<double>(a) - x0[i]) > eps + kSlack) a = std::nextafter(a, x0[i]);
        adv[i] = a;
    }
}

void project_l2(const float* x0, float* delta, float* adv, std::size_t d, double eps) {
    const double n = norm2(delta, d);
    if (n > eps) {
        const double s = n > 0 ? eps / n : 0.0;
        for (std::size_t i = 0; i < d; ++i) delta[i] = static_cast<float>(delta[i] * s);
    }
    for (int pass = 0;; ++pass) {
        for (std::size_t i = 0; i < d; ++i) adv[i] = x0[i] + delta[i];
        const double r = dist2(adv, x0, d);
        if (r <= eps + kSlack || pass == 40) break;
        const double s = eps / r * (1.0 - 1e-6 * std::ldexp(1.0, pass));
        for (std::size_t i = 0; i < d; ++i) delta[i] = static_cast<float>(delta[i] * s);
    }
}

void project(Norm norm, const float* x0, float* delta, float* adv, std::size_t d, double eps) {
    if (norm == Norm::Linf)
        project_linf(x0, delta, adv, d, eps);
    else
        project_l2(x0, delta, adv, d, eps);
}

int row_argmax(std::span<const float> z, int s, int c) { return argmax_row<float>(z.subspan(s * c, c)); }

// Largest logit other than `label`.
int runner_up(std::span<const float> z, int s, int c, int label) {
    int best = -1;
    for (int k = 0; k < c; ++k)
        if (k != label && (best < 0 || z[s * c + k] > z[s * c + best])) best = k;
    return best;
}

struct Adam {
    std::vector<double> m, v;
    long t = 0;
    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
    void reset() {
        std::fill(m.begin(), m.end(), 0.0);
        std::fill(v.begin(), v.end(), 0.0);
        t = 0;
    }
};

// One Adam step on a single row of variables.
void adam_step(Adam& a, float* var, const double* grad, std::size_t d, double lr) {
    ++a.t;
    const double c1 = 1.0 - std::pow(kAdamB1, static_cast<double>(a.t));
    const double c2 = 1.0 - std::pow(kAdamB2, static_cast<double>(a.t));
    for (std::size_t i = 0; i < d; ++i) {
        a.m[i] = kAdamB1 * a.m[i] + (1.0 - kAdamB1) * grad[i];
        a.v[i] = kAdamB2 * a.v[i] + (1.0 - kAdamB2) * grad[i] * grad[i];
        var[i] = static_cast<float>(var[i] - lr * (a.m[i] / c1) / (std::sqrt(a.v[i] / c2) + kAdamEps));
    }
}

// Rows of x selected by idx, packed.
std::vector<float> gather_rows(std::span<const float> x, const std::vector<int>& idx, std::size_t d) {
    std::vector<float> out(idx.size() * d);
    for (std::size_t j = 0; j < idx.size(); ++j) std::copy_n(x.begin() + idx[j] * d, d, out.begin() + j * d);
    return out;
}

} // namespace

std::string_view to_string(AttackKind k) {
    switch (k) {
    case AttackKind::Identity: return "identity";
    case AttackKind::FGM: return "fgm";
    case AttackKind::PGD: return "pgd";
    case AttackKind::DeepFool: return "deepfool";
    case AttackKind::NewtonFool: return "newtonfool";
    case AttackKind::CWL2: return "cw-l2";
    case AttackKind::CWLinf: return "cw-linf";
    case AttackKind::Zoo: return "zoo";
    case AttackKind::HopSkipJump: return "hopskipjump";
    }
    return "?";
}

AttackKind parse_attack(std::string_view name) {
    for (auto k : {AttackKind::Identity, AttackKind::FGM, AttackKind::PGD, AttackKind::DeepFool, AttackKind::NewtonFool,
                   AttackKind::CWL2, AttackKind::CWLinf, AttackKind::Zoo, AttackKind::HopSkipJump})
        if (to_string(k) == name) return k;
    throw Error(ErrorCode::ConfigError, "unknown attack '" + std::string(name) + "'");
}

std::string_view to_string(Norm n) { return n == Norm::L2 ? "l2" : "linf"; }

Norm parse_norm(std::string_view name) {
    if (name == "l2") return Norm::L2;
    if (name == "linf") return Norm::Linf;
    throw Error(ErrorCode::ConfigError, "unknown norm '" + std::string(name) + "' (expected l2 or linf)");
}

bool is_budgeted(AttackKind k) { return k == AttackKind::FGM || k == AttackKind::PGD || k == AttackKind::CWLinf; }
bool is_black_box(AttackKind k) { return k == AttackKind::Zoo || k == AttackKind::HopSkipJump; }

void AttackConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
    if (!std::isfinite(eps) || eps < 0.0) fail("eps must be a finite non-negative number");
    if (!std::isfinite(step) || step < 0.0) fail("step must be non-negative");
    if (iterations < 0) fail("iterations must be non-negative");
    if (!std::isfinite(overshoot) || overshoot < 0.0) fail("overshoot must be non-negative");
    if (!(eta > 0.0)) fail("eta must be positive");
    if (!std::isfinite(confidence) || confidence < 0.0) fail("confidence must be non-negative");
    if (learning_rate < 0.0 || initial_const < 0.0) fail("learning_rate and initial_const must be non-negative");
    if (binary_search_steps < 1) fail("binary_search_steps must be positive");
    if (zoo_coordinates < 1) fail("zoo_coordinates must be positive");
    if (!(zoo_h > 0.0)) fail("zoo_h must be positive");
    if (hsj_init_evals < 1 || hsj_max_evals < hsj_init_evals) fail("need 1 <= hsj_init_evals <= hsj_max_evals");
    if (hsj_init_trials < 1) fail("hsj_init_trials must be positive");
}

int AttackConfig::effective_iterations() const {
    if (iterations > 0) return iterations;
    switch (kind) {
    case AttackKind::DeepFool: return 50;
    case AttackKind::NewtonFool: return 100;
    case AttackKind::Zoo: return 10;
    case AttackKind::HopSkipJump: return 10;
    default: return 10;
    }
}

double AttackConfig::effective_learning_rate() const { return learning_rate > 0.0 ? learning_rate : 0.01; }

double AttackConfig::effective_initial_const() const {
    if (initial_const > 0.0) return initial_const;
    return kind == AttackKind::CWL2 ? 0.01 : 1.0;
}

// ---- model access -------------------------------------------------------

ModelContext::ModelContext(const ModelGraph& graph, const Parameters& params) : params_(params), ex_(graph) {}

std::span<const float> ModelContext::forward(std::span<const float> x, int count) {
    ex_.forward(params_, x, count, Mode::Infer);
    return ex_.logits();
}

std::vector<float> ModelContext::backward(std::span<const float> logit_seed) {
    ++gradient_calls_;
    ex_.backward(params_, logit_seed, false, true);
    const auto g = ex_.input_grad();
    return {g.begin(), g.end()};
}

std::vector<int> ModelContext::predict(std::span<const float> x, int count) {
    ex_.forward(params_, x, count, Mode::Infer);
    return predicted_classes(ex_.probabilities(), ex_.classes());
}

std::vector<float> ModelContext::loss_gradient(std::span<const float> x, std::span<const int> labels) {
    const int n = static_cast<int>(labels.size());
    forward(x, n);
    std::vector<float> seed;
    ex_.cross_entropy(labels, seed);
    for (auto& s : seed) s *= static_cast<float>(n); // undo the batch mean
    return backward(seed);
}

std::vector<float> QueryOracle::scores(std::span<const float> x, int count) {
    queries_ += static_cast<std::uint64_t>(count);
    model_.forward(x, count);
    const auto p = model_.probabilities();
    return {p.begin(), p.end()};
}

std::vector<int> QueryOracle::labels(std::span<const float> x, int count) {
    const auto p = scores(x, count);
    return predicted_classes<float>(p, classes());
}

// ---- white-box attacks --------------------------------------------------

std::vector<float> fgm(ModelContext& m, std::span<const float> x, std::span<const int> labels, double eps, Norm norm) {
    const std::size_t d = m.input_size();
    const auto g = m.loss_gradient(x, labels);
    std::vector<float> adv(x.size()), delta(d);
    const float e = static_cast<float>(eps);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const float* gs = g.data() + s * d;
        if (norm == Norm::Linf) {
            for (std::size_t i = 0; i < d; ++i) delta[i] = gs[i] > 0 ? e : (gs[i] < 0 ? -e : 0.0f);
        } else {
            const double gn = norm2(gs, d);
            for (std::size_t i = 0; i < d; ++i) delta[i] = gn > 0 ? static_cast<float>(eps * gs[i] / gn) : 0.0f;
        }
        project(norm, x.data() + s * d, delta.data(), adv.data() + s * d, d, eps);
    }
    return adv;
}

std::vector<float> pgd(ModelContext& m, std::span<const float> x, std::span<const int> labels, double eps, double step,
                       int iterations, Norm norm) {
    const std::size_t d = m.input_size();
    std::vector<float> adv(x.begin(), x.end());
    std::vector<float> delta(x.size(), 0.0f);
    const float a = static_cast<float>(step);
    for (int it = 0; it < iterations; ++it) {
        const auto g = m.loss_gradient(adv, labels);
        for (std::size_t s = 0; s < labels.size(); ++s) {
            const float* gs = g.data() + s * d;
            float* ds = delta.data() + s * d;
            if (norm == Norm::Linf) {
                for (std::size_t i = 0; i < d; ++i) ds[i] += gs[i] > 0 ? a : (gs[i] < 0 ? -a : 0.0f);
            } else {
                const double gn = norm2(gs, d);
                if (gn > 0)
                    for (std::size_t i = 0; i < d; ++i) ds[i] += static_cast<float>(step * gs[i] / gn);
            }
            project(norm, x.data() + s * d, ds, adv.data() + s * d, d, eps);
        }
    }
    return adv;
}

std::vector<float> deepfool(ModelContext& m, std::span<const float> x, int count, int iterations, double overshoot) {
    const std::size_t d = m.input_size();
    const int c = m.classes();
    std::vector<float> adv(x.begin(), x.end());
    const auto z0 = m.forward(x, count);
    std::vector<int> origin(count);
    for (int s = 0; s < count; ++s) origin[s] = row_argmax(z0, s, c);
    std::vector<double> r_tot(x.size(), 0.0);
    std::vector<int> active;
    for (int s = 0; s < count; ++s)
        if (origin[s] >= 0) active.push_back(s);
    std::vector<char> fooled(count, 0);

    std::vector<std::vector<float>> jac(c);
    for (int it = 0; it <= iterations && !active.empty(); ++it) {
        const auto xa = gather_rows(adv, active, d);
        const int na = static_cast<int>(active.size());
        const auto zs = m.forward(xa, na);
        const std::vector<float> z(zs.begin(), zs.end());
        std::vector<int> still;
        for (int j = 0; j < na; ++j) {
            if (row_argmax(z, j, c) != origin[active[j]])
                fooled[active[j]] = 1;
            else
                still.push_back(j);
        }
        if (still.empty() || it == iterations) break;
        for (int k = 0; k < c; ++k) {
            std::vector<float> seed(static_cast<std::size_t>(na) * c, 0.0f);
            for (int j = 0; j < na; ++j) seed[j * c + k] = 1.0f;
            jac[k] = m.backward(seed);
        }
        std::vector<int> next;
        for (int j : still) {
            const int s = active[j];
            const int k0 = origin[s];
            const float* g0 = jac[k0].data() + j * d;
            int best = -1;
            double best_val = std::numeric_limits<double>::infinity(), best_f = 0.0, best_wn = 0.0;
            for (int k = 0; k < c; ++k) {
                if (k == k0) continue;
                const float* gk = jac[k].data() + j * d;
                double wn = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double w = static_cast<double>(gk[i]) - g0[i];
                    wn += w * w;
                }
                wn = std::sqrt(wn);
                if (wn == 0.0) continue;
                const double f = static_cast<double>(z[j * c + k]) - z[j * c + k0];
                const double val = std::abs(f) / wn;
                if (val < best_val) best_val = val, best = k, best_f = f, best_wn = wn;
            }
            if (best < 0) continue; // flat: give up on this sample
            const float* gl = jac[best].data() + j * d;
            const double scale = (std::abs(best_f) + 1e-4) / (best_wn * best_wn);
            for (std::size_t i = 0; i < d; ++i) {
                r_tot[s * d + i] += scale * (static_cast<double>(gl[i]) - g0[i]);
                adv[s * d + i] = static_cast<float>(x[s * d + i] + (1.0 + overshoot) * r_tot[s * d + i]);
            }
            next.push_back(s);
        }
        active = std::move(next);
    }
    for (int s = 0; s < count; ++s)
        if (!fooled[s]) std::copy_n(x.begin() + s * d, d, adv.begin() + s * d);
    return adv;
}

std::vector<float> newtonfool(ModelContext& m, std::span<const float> x, int count, int iterations, double eta) {
    const std::size_t d = m.input_size();
    const int c = m.classes();
    std::vector<float> adv(x.begin(), x.end());
    const auto z0 = m.forward(x, count);
    std::vector<int> origin(count);
    std::vector<int> active;
    std::vector<double> x0_norm(count);
    for (int s = 0; s < count; ++s) {
        origin[s] = row_argmax(z0, s, c);
        x0_norm[s] = norm2(x.data() + s * d, d);
        if (origin[s] >= 0) active.push_back(s);
    }
    std::vector<char> fooled(count, 0);
    for (int it = 0; it <= iterations && !active.empty(); ++it) {
        const auto xa = gather_rows(adv, active, d);
        const int na = static_cast<int>(active.size());
        const auto zs = m.forward(xa, na);
        const auto ps = m.probabilities();
        const std::vector<float> p(ps.begin(), ps.end());
        std::vector<float> seed(static_cast<std::size_t>(na) * c, 0.0f);
        std::vector<int> still;
        for (int j = 0; j < na; ++j) {
            const int k0 = origin[active[j]];
            if (row_argmax(zs, j, c) != k0) {
                fooled[active[j]] = 1;
                continue;
            }
            still.push_back(j);
            // d p_k0 / d z_k = p_k0 (delta_k,k0 - p_k)
            for (int k = 0; k < c; ++k) seed[j * c + k] = p[j * c + k0] * ((k == k0 ? 1.0f : 0.0f) - p[j * c + k]);
        }
        if (still.empty() || it == iterations) break;
        const auto g = m.backward(seed);
        std::vector<int> next;
        for (int j : still) {
            const int s = active[j];
            const float* gs = g.data() + j * d;
            const double gn = norm2(gs, d);
            if (gn == 0.0) continue;
            const double score = p[j * c + origin[s]];
            const double theta = std::min(eta * x0_norm[s] * gn, score - 1.0 / c);
            const double scale = theta / (gn * gn);
            for (std::size_t i = 0; i < d; ++i) adv[s * d + i] = static_cast<float>(adv[s * d + i] - scale * gs[i]);
            next.push_back(s);
        }
        active = std::move(next);
    }
    for (int s = 0; s < count; ++s)
        if (!fooled[s]) std::copy_n(x.begin() + s * d, d, adv.begin() + s * d);
    return adv;
}

std::vector<float> carlini_l2(ModelContext& m, std::span<const float> x, std::span<const int> labels,
                              const AttackConfig& cfg) {
    const std::size_t d = m.input_size();
    const int c = m.classes();
    const int n = static_cast<int>(labels.size());
    const double lr = cfg.effective_learning_rate();
    const int iters = cfg.effective_iterations();
    std::vector<double> cst(n, cfg.effective_initial_const()), lower(n, 0.0), upper(n, 1e10);
    std::vector<double> best_l2(n, std::numeric_limits<double>::infinity());
    std::vector<float> best(x.begin(), x.end());
    std::vector<float> delta(x.size()), xa(x.size());
    std::vector<Adam> adam(n, Adam(d));
    std::vector<double> grad(d);

    for (int step = 0; step < cfg.binary_search_steps; ++step) {
        std::fill(delta.begin(), delta.end(), 0.0f);
        for (auto& a : adam) a.reset();
        std::vector<char> success(n, 0);
        for (int it = 0; it <= iters; ++it) {
            for (std::size_t i = 0; i < x.size(); ++i) xa[i] = x[i] + delta[i];
            const auto zs = m.forward(xa, n);
            std::vector<float> seed(static_cast<std::size_t>(n) * c, 0.0f);
            bool any = false;
            for (int s = 0; s < n; ++s) {
                const int y = labels[s];
                const int pred = row_argmax(zs, s, c);
                if (pred >= 0 && pred != y) {
                    success[s] = 1;
                    const double l2 = dist2(xa.data() + s * d, x.data() + s * d, d);
                    if (l2 < best_l2[s]) {
                        best_l2[s] = l2;
                        std::copy_n(xa.begin() + s * d, d, best.begin() + s * d);
                    }
                }
                const int j = runner_up(zs, s, c, y);
                if (zs[s * c + y] - zs[s * c + j] + cfg.confidence > 0.0) {
                    seed[s * c + y] = static_cast<float>(cst[s]);
                    seed[s * c + j] = static_cast<float>(-cst[s]);
                    any = true;
                }
            }
            if (it == iters) break;
            const auto g = any ? m.backward(seed) : std::vector<float>(x.size(), 0.0f);
            for (int s = 0; s < n; ++s) {
                for (std::size_t i = 0; i < d; ++i) grad[i] = 2.0 * delta[s * d + i] + g[s * d + i];
                adam_step(adam[s], delta.data() + s * d, grad.data(), d, lr);
            }
        }
        for (int s = 0; s < n; ++s) {
            if (success[s]) {
                upper[s] = std::min(upper[s], cst[s]);
                cst[s] = 0.5 * (lower[s] + upper[s]);
            } else {
                lower[s] = std::max(lower[s], cst[s]);
                cst[s] = upper[s] < 1e9 ? 0.5 * (lower[s] + upper[s]) : cst[s] * 10.0;
            }
        }
    }
    return best;
}

std::vector<float> carlini_linf(ModelContext& m, std::span<const float> x, std::span<const int> labels, double eps,
                                const AttackConfig& cfg) {
    const std::size_t d = m.input_size();
    const int c = m.classes();
    const int n = static_cast<int>(labels.size());
    const double lr = cfg.effective_learning_rate();
    const int iters = cfg.effective_iterations();
    std::vector<double> cst(n, cfg.effective_initial_const()), tau(n, eps);
    std::vector<double> best_linf(n, std::numeric_limits<double>::infinity());
    std::vector<float> best(x.begin(), x.end());
    std::vector<float> delta(x.size(), 0.0f), xa(x.begin(), x.end());
    std::vector<Adam> adam(n, Adam(d));
    std::vector<double> grad(d);

    // Penalty on |delta_i| above tau with a hard clip at eps; every success
    // tightens tau, every failure raises the constant.
    for (int round = 0; round < cfg.binary_search_steps; ++round) {
        for (auto& a : adam) a.reset();
        std::vector<char> found(n, 0);
        for (int it = 0; it <= iters; ++it) {
            const auto zs = m.forward(xa, n);
            std::vector<float> seed(static_cast<std::size_t>(n) * c, 0.0f);
            bool any = false;
            for (int s = 0; s < n; ++s) {
                const int y = labels[s];
                const int pred = row_argmax(zs, s, c);
                if (pred >= 0 && pred != y) {
                    found[s] = 1;
                    const double li = dist_inf(xa.data() + s * d, x.data() + s * d, d);
                    if (li < best_linf[s]) {
                        best_linf[s] = li;
                        std::copy_n(xa.begin() + s * d, d, best.begin() + s * d);
                    }
                }
                const int j = runner_up(zs, s, c, y);
                if (zs[s * c + y] - zs[s * c + j] + cfg.confidence > 0.0) {
                    seed[s * c + y] = static_cast<float>(cst[s]);
                    seed[s * c + j] = static_cast<float>(-cst[s]);
                    any = true;
                }
            }
            if (it == iters) break;
            const auto g = any ? m.backward(seed) : std::vector<float>(x.size(), 0.0f);
            for (int s = 0; s < n; ++s) {
                float* ds = delta.data() + s * d;
                for (std::size_t i = 0; i < d; ++i) {
                    const double over = std::abs(ds[i]) > tau[s] ? (ds[i] > 0 ? 1.0 : -1.0) : 0.0;
                    grad[i] = g[s * d + i] + over;
                }
                adam_step(adam[s], ds, grad.data(), d, lr);
                project_linf(x.data() + s * d, ds, xa.data() + s * d, d, eps);
            }
        }
        for (int s = 0; s < n; ++s) {
            if (found[s])
                tau[s] = 0.9 * std::min(tau[s], best_linf[s]);
            else
                cst[s] *= 2.0;
        }
    }
    return best;
}

// ---- black-box attacks --------------------------------------------------

std::vector<float> zoo(QueryOracle& o, std::span<const float> x, int label, const AttackConfig& cfg, Rng& rng) {
    const std::size_t d = o.input_size();
    const int c = o.classes();
    const double h = cfg.zoo_h;
    const double cst = cfg.effective_initial_const();
    const double lr = cfg.effective_learning_rate();
    std::vector<float> delta(d, 0.0f), probe;
    std::vector<double> m(d, 0.0), v(d, 0.0);
    std::vector<long> t(d, 0);
    std::vector<std::size_t> coords(d);
    std::iota(coords.begin(), coords.end(), 0);
    const std::size_t k = std::min<std::size_t>(cfg.zoo_coordinates, d);

    auto margin = [&](const float* p) {
        const double py = std::log(std::max(static_cast<double>(p[label]), 1e-30));
        double other = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j)
            if (j != label) other = std::max(other, std::log(std::max(static_cast<double>(p[j]), 1e-30)));
        return std::max(py - other, -cfg.confidence);
    };
    auto current = [&] {
        std::vector<float> a(d);
        for (std::size_t i = 0; i < d; ++i) a[i] = x[i] + delta[i];
        return a;
    };

    if (o.labels(x, 1)[0] != label) return {x.begin(), x.end()};
    for (int it = 0; it < cfg.effective_iterations(); ++it) {
        // partial Fisher-Yates: the first k entries become a uniform sample
        for (std::size_t j = 0; j < k; ++j) std::swap(coords[j], coords[j + uniform_index(rng, d - j)]);
        const auto base = current();
        probe.resize(2 * k * d);
        for (std::size_t j = 0; j < k; ++j) {
            std::copy(base.begin(), base.end(), probe.begin() + 2 * j * d);
            std::copy(base.begin(), base.end(), probe.begin() + (2 * j + 1) * d);
            probe[2 * j * d + coords[j]] = static_cast<float>(base[coords[j]] + h);
            probe[(2 * j + 1) * d + coords[j]] = static_cast<float>(base[coords[j]] - h);
        }
        const auto p = o.scores(probe, static_cast<int>(2 * k));
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t i = coords[j];
            const double g = 2.0 * delta[i] + cst * (margin(&p[2 * j * c]) - margin(&p[(2 * j + 1) * c])) / (2.0 * h);
            ++t[i];
            m[i] = kAdamB1 * m[i] + (1.0 - kAdamB1) * g;
            v[i] = kAdamB2 * v[i] + (1.0 - kAdamB2) * g * g;
            const double mh = m[i] / (1.0 - std::pow(kAdamB1, static_cast<double>(t[i])));
            const double vh = v[i] / (1.0 - std::pow(kAdamB2, static_cast<double>(t[i])));
            delta[i] = static_cast<float>(delta[i] - lr * mh / (std::sqrt(vh) + kAdamEps));
        }
        const auto a = current();
        if (o.labels(a, 1)[0] != label) return a;
    }
    return {x.begin(), x.end()};
}

std::vector<float> hop_skip_jump(QueryOracle& o, std::span<const float> x, const AttackConfig& cfg, Rng& rng) {
    const std::size_t d = o.input_size();
    const int origin = o.labels(x, 1)[0];
    if (origin < 0) return {x.begin(), x.end()};
    auto adversarial = [&](std::span<const float> v, int count) {
        const auto l = o.labels(v, count);
        std::vector<char> out(count);
        for (int i = 0; i < count; ++i) out[i] = l[i] != origin;
        return out;
    };
    const double rms = norm2(x.data(), d) / std::sqrt(static_cast<double>(d));
    const double theta = 1.0 / (static_cast<double>(d) * std::sqrt(static_cast<double>(d)));

    // Random start far enough away to change the label.
    std::vector<float> xt(d);
    bool started = false;
    for (int trial = 0; trial < cfg.hsj_init_trials && !started; ++trial) {
        const double scale = std::max(rms, 1e-3) * 0.5 * std::pow(1.5, trial);
        for (std::size_t i = 0; i < d; ++i) xt[i] = static_cast<float>(x[i] + scale * normal(rng));
        started = adversarial(xt, 1)[0];
    }
    if (!started) return {x.begin(), x.end()};

    // Pull a point towards x while it stays adversarial.
    auto boundary = [&](std::vector<float>& adv) {
        double lo = 0.0, hi = 1.0;
        std::vector<float> mid(d);
        while (hi - lo > theta) {
            const double a = 0.5 * (lo + hi);
            for (std::size_t i = 0; i < d; ++i) mid[i] = static_cast<float>((1.0 - a) * x[i] + a * adv[i]);
            if (adversarial(mid, 1)[0])
                hi = a;
            else
                lo = a;
        }
        for (std::size_t i = 0; i < d; ++i) adv[i] = static_cast<float>((1.0 - hi) * x[i] + hi * adv[i]);
    };
    boundary(xt);
    double dist = dist2(xt.data(), x.data(), d);

    std::vector<float> probes, u, cand(d);
    std::vector<double> dir(d);
    for (int t = 1; t <= cfg.effective_iterations(); ++t) {
        const double delta = std::sqrt(static_cast<double>(d)) * theta * dist;
        const int evals = std::min(cfg.hsj_max_evals, static_cast<int>(cfg.hsj_init_evals * std::sqrt(static_cast<double>(t))));
        probes.resize(static_cast<std::size_t>(evals) * d);
        u.resize(probes.size());
        for (int b = 0; b < evals; ++b) {
            double nn = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                u[b * d + i] = static_cast<float>(normal(rng));
                nn += static_cast<double>(u[b * d + i]) * u[b * d + i];
            }
            nn = std::sqrt(nn);
            for (std::size_t i = 0; i < d; ++i) {
                u[b * d + i] = static_cast<float>(u[b * d + i] / nn);
                probes[b * d + i] = static_cast<float>(xt[i] + delta * u[b * d + i]);
            }
        }
        const auto phi = adversarial(probes, evals);
        double mean = 0.0;
        for (auto f : phi) mean += f ? 1.0 : -1.0;
        mean /= evals;
        const double baseline = std::abs(mean) == 1.0 ? 0.0 : mean;
        std::fill(dir.begin(), dir.end(), 0.0);
        for (int b = 0; b < evals; ++b) {
            const double w = (phi[b] ? 1.0 : -1.0) - baseline;
            for (std::size_t i = 0; i < d; ++i) dir[i] += w * u[b * d + i];
        }
        double dn = 0.0;
        for (double v : dir) dn += v * v;
        dn = std::sqrt(dn);
        if (dn == 0.0) break;

        double xi = dist / std::sqrt(static_cast<double>(t));
        bool moved = false;
        for (int halving = 0; halving < 15; ++halving, xi *= 0.5) {
            for (std::size_t i = 0; i < d; ++i) cand[i] = static_cast<float>(xt[i] + xi * dir[i] / dn);
            if (adversarial(cand, 1)[0]) {
                moved = true;
                break;
            }
        }
        if (moved) xt = cand;
        boundary(xt);
        dist = dist2(xt.data(), x.data(), d);
    }
    return xt;
}

// ---- driver -------------------------------------------------------------

double AttackResult::mean_l2() const {
    double s = 0.0;
    for (const auto& r : samples) s += r.l2;
    return samples.empty() ? 0.0 : s / samples.size();
}

double AttackResult::mean_linf() const {
    double s = 0.0;
    for (const auto& r : samples) s += r.linf;
    return samples.empty() ? 0.0 : s / samples.size();
}

double aer(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) throw Error(ErrorCode::ValidationError, "aer: length mismatch");
    if (labels.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
    return static_cast<double>(hit) / labels.size();
}

double batch_rms(std::span<const float> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (float v : x) s += static_cast<double>(v) * v;
    return std::sqrt(s / x.size());
}

AttackResult run_attack(const Checkpoint& ckpt, const DatasetView& view, const AttackConfig& config) {
    const auto frames = gather_frames(view);
    const auto labels = gather_labels(view);
    return run_attack(ckpt, frames, labels, config);
}

AttackResult run_attack(const Checkpoint& ckpt, std::span<const float> frames, std::span<const int> labels,
                        const AttackConfig& config) {
    config.validate();
    const std::size_t d = element_count(ckpt.graph.input_shape);
    const std::size_t n = labels.size();
    if (n == 0) throw Error(ErrorCode::EmptyEvalSet, "no samples to attack");
    if (frames.size() != n * d) throw Error(ErrorCode::ShapeError, "frame buffer does not match the label count");

    AttackResult r;
    r.config = config;
    r.eps_absolute = config.eps_relative ? config.eps * batch_rms(frames) : config.eps;
    r.samples.resize(n);
    r.adversarial.resize(n * d);

    const std::size_t chunks = (n + kAttackChunk - 1) / kAttackChunk;
    const int workers = workers_for(chunks);
    std::vector<std::unique_ptr<ModelContext>> ctx(workers);
    const double step = config.step > 0.0 ? config.step : r.eps_absolute / 4.0;

    parallel_for(chunks, [&](std::size_t ci, int w) {
        if (!ctx[w]) ctx[w] = std::make_unique<ModelContext>(ckpt.graph, ckpt.params);
        ModelContext& m = *ctx[w];
        const std::size_t first = ci * kAttackChunk;
        const int b = static_cast<int>(std::min<std::size_t>(kAttackChunk, n - first));
        const auto x = frames.subspan(first * d, b * d);
        const auto y = labels.subspan(first, b);
        const auto clean = m.predict(x, b);

        // Samples the model already gets wrong pass through unchanged; only
        // the correctly classified ones are attacked, compacted into a batch.
        std::vector<int> live;
        for (int s = 0; s < b; ++s)
            if (clean[s] == y[s]) live.push_back(s);
        const int nl = static_cast<int>(live.size());
        std::vector<float> xl(nl * d);
        std::vector<int> yl(nl);
        for (int k = 0; k < nl; ++k) {
            std::copy_n(x.begin() + live[k] * d, d, xl.begin() + k * d);
            yl[k] = y[live[k]];
        }

        std::vector<float> adv_live;
        if (nl > 0) {
            switch (config.kind) {
            case AttackKind::Identity: adv_live = xl; break;
            case AttackKind::FGM: adv_live = fgm(m, xl, yl, r.eps_absolute, config.norm); break;
            case AttackKind::PGD:
                adv_live = pgd(m, xl, yl, r.eps_absolute, step, config.effective_iterations(), config.norm);
                break;
            case AttackKind::DeepFool:
                adv_live = deepfool(m, xl, nl, config.effective_iterations(), config.overshoot);
                break;
            case AttackKind::NewtonFool: adv_live = newtonfool(m, xl, nl, config.effective_iterations(), config.eta); break;
            case AttackKind::CWL2: adv_live = carlini_l2(m, xl, yl, config); break;
            case AttackKind::CWLinf: adv_live = carlini_linf(m, xl, yl, r.eps_absolute, config); break;
            case AttackKind::Zoo:
            case AttackKind::HopSkipJump: {
                adv_live.resize(xl.size());
                for (int k = 0; k < nl; ++k) {
                    QueryOracle oracle(m);
                    Rng rng = make_rng(config.seed, {first + live[k]});
                    const auto xs = std::span<const float>(xl).subspan(k * d, d);
                    const auto a = config.kind == AttackKind::Zoo ? zoo(oracle, xs, yl[k], config, rng)
                                                                   : hop_skip_jump(oracle, xs, config, rng);
                    std::copy(a.begin(), a.end(), adv_live.begin() + k * d);
                    r.samples[first + live[k]].queries = oracle.queries();
                }
                break;
            }
            }
        }
        std::vector<float> adv(x.begin(), x.end());
        for (int k = 0; k < nl; ++k) std::copy_n(adv_live.begin() + k * d, d, adv.begin() + live[k] * d);
        const auto pred = m.predict(adv, b);
        for (int s = 0; s < b; ++s) {
            AttackSample& rec = r.samples[first + s];
            rec.label = y[s];
            rec.clean_prediction = clean[s];
            rec.adversarial_prediction = pred[s];
            rec.l2 = dist2(adv.data() + s * d, x.data() + s * d, d);
            rec.linf = dist_inf(adv.data() + s * d, x.data() + s * d, d);
        }
        std::copy(adv.begin(), adv.end(), r.adversarial.begin() + first * d);
    });

    std::vector<int> clean(n), adv(n);
    for (std::size_t i = 0; i < n; ++i) {
        clean[i] = r.samples[i].clean_prediction;
        adv[i] = r.samples[i].adversarial_prediction;
        r.queries += r.samples[i].queries;
    }
    r.clean_accuracy = aer(clean, labels);
    r.aer = aer(adv, labels);
    for (const auto& c : ctx)
        if (c) r.gradient_calls += c->gradient_calls();
    return r;
}

} // namespace trustbench
