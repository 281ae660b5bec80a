#include "trustbench/engine.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "trustbench/error.hpp"

namespace trustbench {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using CMatMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using RowVecMap = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>;

// im2col buffers are capped near this many elements; conv GEMMs run per chunk of samples.
constexpr std::size_t kColBudget = std::size_t{1} << 18;

struct ConvGeom {
    int h, w, cin, cout, kh, kw;
    int ph() const { return (kh - 1) / 2; }
    int pw() const { return (kw - 1) / 2; }
    int k() const { return kh * kw * cin; }
    std::size_t rows_per_sample() const { return static_cast<std::size_t>(h) * w; }
    int chunk_samples() const {
        return static_cast<int>(std::max<std::size_t>(1, kColBudget / (rows_per_sample() * k())));
    }
};

template <typename S>
void im2col(const S* x, int count, const ConvGeom& g, S* col) {
    const int k = g.k();
    for (int n = 0; n < count; ++n) {
        const S* xs = x + static_cast<std::size_t>(n) * g.h * g.w * g.cin;
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                S* row = col + ((static_cast<std::size_t>(n) * g.h + h) * g.w + w) * k;
                for (int dh = 0; dh < g.kh; ++dh) {
                    const int hh = h + dh - g.ph();
                    for (int dw = 0; dw < g.kw; ++dw) {
                        const int ww = w + dw - g.pw();
                        S* dst = row + (dh * g.kw + dw) * g.cin;
                        if (hh < 0 || hh >= g.h || ww < 0 || ww >= g.w)
                            std::fill(dst, dst + g.cin, S(0));
                        else
                            std::copy_n(xs + (static_cast<std::size_t>(hh) * g.w + ww) * g.cin, g.cin, dst);
                    }
                }
            }
    }
}

template <typename S>
void col2im_add(const S* col, int count, const ConvGeom& g, S* dx) {
    const int k = g.k();
    for (int n = 0; n < count; ++n) {
        S* xs = dx + static_cast<std::size_t>(n) * g.h * g.w * g.cin;
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                const S* row = col + ((static_cast<std::size_t>(n) * g.h + h) * g.w + w) * k;
                for (int dh = 0; dh < g.kh; ++dh) {
                    const int hh = h + dh - g.ph();
                    if (hh < 0 || hh >= g.h) continue;
                    for (int dw = 0; dw < g.kw; ++dw) {
                        const int ww = w + dw - g.pw();
                        if (ww < 0 || ww >= g.w) continue;
                        const S* src = row + (dh * g.kw + dw) * g.cin;
                        S* dst = xs + (static_cast<std::size_t>(hh) * g.w + ww) * g.cin;
                        for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
                    }
                }
            }
    }
}

// Row-by-row so the summation order does not depend on buffer alignment
// (Eigen's vectorised colwise().sum() does).
template <typename S>
void add_column_sums(const CMatMap<S>& m, S* out) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[c] += m(r, c);
}

double alpha_dropout_prime() { return -kSeluLambda * kSeluAlpha; }

} // namespace

template <typename Scalar>
Executor<Scalar>::Executor(ModelGraph graph) : graph_(std::move(graph)) {
    validate_graph(graph_);
    shapes_ = infer_shapes(graph_);
    shapes_.insert(shapes_.begin(), graph_.input_shape);
    for (const auto& s : shapes_) sizes_.push_back(element_count(s));
    slots_ = param_slots(graph_);
    layer_slot_.assign(graph_.layers.size(), -1);
    for (std::size_t s = 0; s < slots_.size(); ++s)
        if (layer_slot_[slots_[s].layer] < 0) layer_slot_[slots_[s].layer] = static_cast<int>(s);
    bound_.resize(slots_.size());
    acts_.resize(shapes_.size());
    grads_.resize(shapes_.size());
    state_.resize(graph_.layers.size());
    param_grads_.resize(slots_.size());
    for (std::size_t s = 0; s < slots_.size(); ++s) param_grads_[s].assign(element_count(slots_[s].shape), Scalar(0));
}

template <typename Scalar>
void Executor<Scalar>::bind(const Parameters& params) {
    if constexpr (!std::is_same_v<Scalar, float>) converted_.resize(slots_.size());
    for (std::size_t s = 0; s < slots_.size(); ++s) {
        const Tensor& t = params.at(slots_[s].name);
        if (t.shape != slots_[s].shape)
            throw Error(ErrorCode::ShapeError, "layer '" + graph_.layers[slots_[s].layer].id + "': tensor '" +
                                                   slots_[s].name + "' has shape " + shape_string(t.shape) +
                                                   ", expected " + shape_string(slots_[s].shape));
        if constexpr (std::is_same_v<Scalar, float>) {
            bound_[s] = t.data.data();
        } else {
            converted_[s].assign(t.data.begin(), t.data.end());
            bound_[s] = converted_[s].data();
        }
    }
}

template <typename Scalar>
void Executor<Scalar>::forward(const Parameters& params, std::span<const float> input, int batch, Mode mode, Rng* rng) {
    if (batch <= 0) throw Error(ErrorCode::ShapeError, "batch must be positive");
    if (input.size() != static_cast<std::size_t>(batch) * sizes_[0])
        throw Error(ErrorCode::ShapeError, "layer 'input': expected " + std::to_string(batch) + "x" +
                                               shape_string(graph_.input_shape) + " (" +
                                               std::to_string(batch * sizes_[0]) + " values), got " +
                                               std::to_string(input.size()));
    batch_ = batch;
    acts_[0].assign(input.begin(), input.end());
    forward_from(params, 0, mode, rng);
}

template <typename Scalar>
std::vector<int> Executor<Scalar>::resume_points(int start) const {
    std::vector<int> pts{start};
    for (std::size_t j = start; j < graph_.layers.size(); ++j) {
        const int s = graph_.layers[j].skip_from;
        if (graph_.layers[j].kind == LayerKind::ResidualAdd && s < start &&
            std::find(pts.begin(), pts.end(), s) == pts.end())
            pts.push_back(s);
    }
    return pts;
}

template <typename Scalar>
void Executor<Scalar>::set_activation(int index, std::span<const Scalar> values, int batch) {
    if (values.size() != static_cast<std::size_t>(batch) * sizes_[index])
        throw Error(ErrorCode::ShapeError, "activation " + std::to_string(index) + " has the wrong size");
    batch_ = batch;
    acts_[index].assign(values.begin(), values.end());
}

template <typename Scalar>
void Executor<Scalar>::forward_from(const Parameters& params, int start, Mode mode, Rng* rng) {
    bind(params);
    mode_ = mode;
    for (int p : resume_points(start))
        if (acts_[p].size() != static_cast<std::size_t>(batch_) * sizes_[p])
            throw Error(ErrorCode::ShapeError, "resume at layer " + std::to_string(start) + " lacks activation " +
                                                   std::to_string(p));
    for (std::size_t i = start; i < graph_.layers.size(); ++i) run_layer(static_cast<int>(i), mode, rng);
}

template <typename Scalar>
void Executor<Scalar>::run_layer(int i, Mode mode, Rng* rng) {
    const LayerSpec& l = graph_.layers[i];
    const Shape& in_shape = shapes_[i];
    const Shape& out_shape = shapes_[i + 1];
    const std::vector<Scalar>& x = acts_[i];
    std::vector<Scalar>& y = acts_[i + 1];
    const std::size_t n_out = static_cast<std::size_t>(batch_) * sizes_[i + 1];
    y.resize(n_out);
    LayerState& st = state_[i];

    switch (l.kind) {
    case LayerKind::Conv2D: {
        const ConvGeom g{in_shape[0], in_shape[1], in_shape[2], l.filters, l.kernel_h, l.kernel_w};
        const int chunk = g.chunk_samples();
        CMatMap<Scalar> wm(param(i, 0), g.k(), g.cout);
        RowVecMap<Scalar> bias(param(i, 1), g.cout);
        scratch_.resize(static_cast<std::size_t>(std::min(chunk, batch_)) * g.rows_per_sample() * g.k());
        for (int n0 = 0; n0 < batch_; n0 += chunk) {
            const int cnt = std::min(chunk, batch_ - n0);
            const std::size_t rows = cnt * g.rows_per_sample();
            im2col(x.data() + n0 * sizes_[i], cnt, g, scratch_.data());
            CMatMap<Scalar> col(scratch_.data(), rows, g.k());
            MatMap<Scalar> out(y.data() + n0 * sizes_[i + 1], rows, g.cout);
            out.noalias() = col * wm;
            out.rowwise() += bias;
        }
        break;
    }
    case LayerKind::Dense: {
        const int din = in_shape[0];
        CMatMap<Scalar> xm(x.data(), batch_, din);
        CMatMap<Scalar> wm(param(i, 0), din, l.units);
        RowVecMap<Scalar> bias(param(i, 1), l.units);
        MatMap<Scalar> out(y.data(), batch_, l.units);
        out.noalias() = xm * wm;
        out.rowwise() += bias;
        break;
    }
    case LayerKind::BatchNorm: {
        const int c = in_shape.back();
        const std::size_t rows = n_out / c;
        const Scalar* gamma = param(i, 0);
        const Scalar* beta = param(i, 1);
        st.inv_std.resize(c);
        if (mode == Mode::Train) {
            auto& mean = st.stats.mean;
            auto& var = st.stats.var;
            mean.assign(c, 0.0);
            var.assign(c, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
                for (int ch = 0; ch < c; ++ch) mean[ch] += x[r * c + ch];
            for (int ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r)
                for (int ch = 0; ch < c; ++ch) {
                    const double d = x[r * c + ch] - mean[ch];
                    var[ch] += d * d;
                }
            for (int ch = 0; ch < c; ++ch) {
                var[ch] /= static_cast<double>(rows);
                st.inv_std[ch] = 1.0 / std::sqrt(var[ch] + kBatchNormEpsilon);
            }
            st.stats.count = rows;
            st.xhat.resize(n_out);
            std::vector<Scalar> m(c), is(c);
            for (int ch = 0; ch < c; ++ch) {
                m[ch] = static_cast<Scalar>(mean[ch]);
                is[ch] = static_cast<Scalar>(st.inv_std[ch]);
            }
            for (std::size_t r = 0; r < rows; ++r)
                for (int ch = 0; ch < c; ++ch) {
                    const std::size_t k = r * c + ch;
                    const Scalar xh = (x[k] - m[ch]) * is[ch];
                    st.xhat[k] = xh;
                    y[k] = gamma[ch] * xh + beta[ch];
                }
        } else {
            const Scalar* rmean = param(i, 2);
            const Scalar* rvar = param(i, 3);
            std::vector<Scalar> scale(c), shift(c);
            for (int ch = 0; ch < c; ++ch) {
                st.inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(rvar[ch]) + kBatchNormEpsilon);
                const double s = static_cast<double>(gamma[ch]) * st.inv_std[ch];
                scale[ch] = static_cast<Scalar>(s);
                shift[ch] = static_cast<Scalar>(static_cast<double>(beta[ch]) - s * static_cast<double>(rmean[ch]));
            }
            for (std::size_t r = 0; r < rows; ++r)
                for (int ch = 0; ch < c; ++ch) y[r * c + ch] = x[r * c + ch] * scale[ch] + shift[ch];
        }
        break;
    }
    case LayerKind::ReLU:
        for (std::size_t k = 0; k < n_out; ++k) y[k] = x[k] < Scalar(0) ? Scalar(0) : x[k];
        break;
    case LayerKind::SeLU: {
        const Scalar lam = static_cast<Scalar>(kSeluLambda);
        const Scalar la = static_cast<Scalar>(kSeluLambda * kSeluAlpha);
        for (std::size_t k = 0; k < n_out; ++k) y[k] = x[k] > Scalar(0) ? lam * x[k] : la * std::expm1(x[k]);
        break;
    }
    case LayerKind::AlphaDropout: {
        if (mode == Mode::Infer || l.rate == 0.0) {
            std::copy(x.begin(), x.end(), y.begin());
            st.mask.clear();
            st.dropout_scale = 1.0;
            break;
        }
        if (!rng) throw Error(ErrorCode::ConfigError, "layer '" + l.id + "': train-mode dropout needs an rng stream");
        const double p = l.rate, q = 1.0 - p, ap = alpha_dropout_prime();
        const double a = 1.0 / std::sqrt(q * (1.0 + p * ap * ap));
        const double b = -a * p * ap;
        st.dropout_scale = a;
        st.mask.resize(n_out);
        const Scalar dropped = static_cast<Scalar>(a * ap + b);
        const Scalar sa = static_cast<Scalar>(a), sb = static_cast<Scalar>(b);
        for (std::size_t k = 0; k < n_out; ++k) {
            const bool keep = uniform01(*rng) < q;
            st.mask[k] = keep;
            y[k] = keep ? sa * x[k] + sb : dropped;
        }
        break;
    }
    case LayerKind::MaxPool: {
        const int h = in_shape[0], w = in_shape[1], c = in_shape[2];
        const int ho = out_shape[0], wo = out_shape[1];
        st.argmax.resize(n_out);
        for (int n = 0; n < batch_; ++n) {
            const std::size_t in_base = static_cast<std::size_t>(n) * h * w * c;
            const std::size_t out_base = static_cast<std::size_t>(n) * ho * wo * c;
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) {
                    const std::size_t o = out_base + (static_cast<std::size_t>(oh) * wo + ow) * c;
                    Scalar* yo = y.data() + o;
                    std::uint32_t* ao = st.argmax.data() + o;
                    for (int dh = 0; dh < l.pool_h; ++dh)
                        for (int dw = 0; dw < l.pool_w; ++dw) {
                            const std::size_t k =
                                in_base + (static_cast<std::size_t>(oh * l.pool_h + dh) * w + ow * l.pool_w + dw) * c;
                            const Scalar* xk = x.data() + k;
                            if (dh == 0 && dw == 0) {
                                for (int ch = 0; ch < c; ++ch) {
                                    yo[ch] = xk[ch];
                                    ao[ch] = static_cast<std::uint32_t>(k + ch);
                                }
                                continue;
                            }
                            // NaN wins so corrupted values propagate
                            for (int ch = 0; ch < c; ++ch) {
                                const bool take = !std::isnan(yo[ch]) && (std::isnan(xk[ch]) || xk[ch] > yo[ch]);
                                yo[ch] = take ? xk[ch] : yo[ch];
                                ao[ch] = take ? static_cast<std::uint32_t>(k + ch) : ao[ch];
                            }
                        }
                }
        }
        break;
    }
    case LayerKind::Flatten:
        std::copy(x.begin(), x.end(), y.begin());
        break;
    case LayerKind::ResidualAdd: {
        const auto& s = acts_[l.skip_from];
        for (std::size_t k = 0; k < n_out; ++k) y[k] = x[k] + s[k];
        break;
    }
    case LayerKind::Softmax: {
        const int c = out_shape[0];
        for (int n = 0; n < batch_; ++n) {
            const Scalar* z = x.data() + static_cast<std::size_t>(n) * c;
            Scalar* p = y.data() + static_cast<std::size_t>(n) * c;
            double m = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < c; ++k) m = std::max(m, static_cast<double>(z[k]));
            double sum = 0.0;
            std::vector<double> e(c);
            for (int k = 0; k < c; ++k) {
                e[k] = std::exp(static_cast<double>(z[k]) - m);
                sum += e[k];
            }
            for (int k = 0; k < c; ++k) p[k] = static_cast<Scalar>(e[k] / sum);
        }
        break;
    }
    }
}

template <typename Scalar>
double Executor<Scalar>::cross_entropy(std::span<const int> labels, std::vector<Scalar>& grad_logits) const {
    const int c = classes();
    if (labels.size() != static_cast<std::size_t>(batch_))
        throw Error(ErrorCode::ShapeError, "label count " + std::to_string(labels.size()) + " != batch " +
                                               std::to_string(batch_));
    const auto z = logits();
    grad_logits.assign(static_cast<std::size_t>(batch_) * c, Scalar(0));
    double loss = 0.0;
    for (int n = 0; n < batch_; ++n) {
        const int y = labels[n];
        if (y < 0 || y >= c) throw Error(ErrorCode::ShapeError, "label out of range");
        const Scalar* zn = z.data() + static_cast<std::size_t>(n) * c;
        double m = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < c; ++k) m = std::max(m, static_cast<double>(zn[k]));
        double sum = 0.0;
        for (int k = 0; k < c; ++k) sum += std::exp(static_cast<double>(zn[k]) - m);
        const double lse = m + std::log(sum);
        loss += lse - static_cast<double>(zn[y]);
        for (int k = 0; k < c; ++k) {
            const double p = std::exp(static_cast<double>(zn[k]) - lse);
            grad_logits[static_cast<std::size_t>(n) * c + k] = static_cast<Scalar>((p - (k == y ? 1.0 : 0.0)) / batch_);
        }
    }
    return loss / batch_;
}

template <typename Scalar>
void Executor<Scalar>::backward(const Parameters& params, std::span<const Scalar> grad_logits, bool want_param_grads,
                                bool want_input_grad) {
    bind(params);
    const int last = static_cast<int>(graph_.layers.size()) - 1; // Softmax
    if (grad_logits.size() != static_cast<std::size_t>(batch_) * sizes_[last])
        throw Error(ErrorCode::ShapeError, "gradient seed does not match the logits");
    for (std::size_t a = 0; a < grads_.size(); ++a) {
        if (a == 0 && !want_input_grad) {
            grads_[a].clear();
            continue;
        }
        grads_[a].assign(static_cast<std::size_t>(batch_) * sizes_[a], Scalar(0));
    }
    std::copy(grad_logits.begin(), grad_logits.end(), grads_[last].begin());
    if (want_param_grads)
        for (auto& g : param_grads_) std::fill(g.begin(), g.end(), Scalar(0));
    for (int i = last - 1; i >= 0; --i) back_layer(i, want_param_grads);
}

template <typename Scalar>
void Executor<Scalar>::back_layer(int i, bool want_param_grads) {
    const LayerSpec& l = graph_.layers[i];
    const Shape& in_shape = shapes_[i];
    const Shape& out_shape = shapes_[i + 1];
    const std::vector<Scalar>& x = acts_[i];
    const std::vector<Scalar>& dy = grads_[i + 1];
    std::vector<Scalar>& dx = grads_[i];
    const bool need_dx = !dx.empty();
    const std::size_t n_out = static_cast<std::size_t>(batch_) * sizes_[i + 1];
    LayerState& st = state_[i];
    const int slot = layer_slot_[i];

    switch (l.kind) {
    case LayerKind::Conv2D: {
        const ConvGeom g{in_shape[0], in_shape[1], in_shape[2], l.filters, l.kernel_h, l.kernel_w};
        const int chunk = g.chunk_samples();
        CMatMap<Scalar> wm(param(i, 0), g.k(), g.cout);
        const std::size_t cap = static_cast<std::size_t>(std::min(chunk, batch_)) * g.rows_per_sample() * g.k();
        scratch_.resize(cap);
        if (need_dx) scratch2_.resize(cap);
        for (int n0 = 0; n0 < batch_; n0 += chunk) {
            const int cnt = std::min(chunk, batch_ - n0);
            const std::size_t rows = cnt * g.rows_per_sample();
            CMatMap<Scalar> dym(dy.data() + n0 * sizes_[i + 1], rows, g.cout);
            if (want_param_grads) {
                im2col(x.data() + n0 * sizes_[i], cnt, g, scratch_.data());
                CMatMap<Scalar> col(scratch_.data(), rows, g.k());
                MatMap<Scalar> dw(param_grads_[slot].data(), g.k(), g.cout);
                dw.noalias() += col.transpose() * dym;
                add_column_sums(dym, param_grads_[slot + 1].data());
            }
            if (need_dx) {
                MatMap<Scalar> dcol(scratch2_.data(), rows, g.k());
                dcol.noalias() = dym * wm.transpose();
                col2im_add(scratch2_.data(), cnt, g, dx.data() + n0 * sizes_[i]);
            }
        }
        break;
    }
    case LayerKind::Dense: {
        const int din = in_shape[0];
        CMatMap<Scalar> dym(dy.data(), batch_, l.units);
        if (want_param_grads) {
            CMatMap<Scalar> xm(x.data(), batch_, din);
            MatMap<Scalar> dw(param_grads_[slot].data(), din, l.units);
            dw.noalias() += xm.transpose() * dym;
            add_column_sums(dym, param_grads_[slot + 1].data());
        }
        if (need_dx) {
            CMatMap<Scalar> wm(param(i, 0), din, l.units);
            MatMap<Scalar> dxm(dx.data(), batch_, din);
            dxm.noalias() += dym * wm.transpose();
        }
        break;
    }
    case LayerKind::BatchNorm: {
        const int c = in_shape.back();
        const std::size_t rows = n_out / c;
        const Scalar* gamma = param(i, 0);
        std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
        if (mode_ == Mode::Train) {
            for (std::size_t r = 0; r < rows; ++r)
                for (int ch = 0; ch < c; ++ch) {
                    const std::size_t k = r * c + ch;
                    dbeta[ch] += dy[k];
                    dgamma[ch] += static_cast<double>(dy[k]) * st.xhat[k];
                }
            if (need_dx) {
                std::vector<Scalar> coef(c), mb(c), mg(c);
                const double m = static_cast<double>(rows);
                for (int ch = 0; ch < c; ++ch) {
                    coef[ch] = static_cast<Scalar>(gamma[ch] * st.inv_std[ch]);
                    mb[ch] = static_cast<Scalar>(dbeta[ch] / m);
                    mg[ch] = static_cast<Scalar>(dgamma[ch] / m);
                }
                for (std::size_t r = 0; r < rows; ++r)
                    for (int ch = 0; ch < c; ++ch) {
                        const std::size_t k = r * c + ch;
                        dx[k] += coef[ch] * (dy[k] - mb[ch] - st.xhat[k] * mg[ch]);
                    }
            }
        } else {
            const Scalar* rmean = param(i, 2);
            for (std::size_t r = 0; r < rows; ++r)
                for (int ch = 0; ch < c; ++ch) {
                    const std::size_t k = r * c + ch;
                    dbeta[ch] += dy[k];
                    dgamma[ch] += static_cast<double>(dy[k]) * (static_cast<double>(x[k]) - rmean[ch]) * st.inv_std[ch];
                }
            if (need_dx) {
                std::vector<Scalar> coef(c);
                for (int ch = 0; ch < c; ++ch) coef[ch] = static_cast<Scalar>(gamma[ch] * st.inv_std[ch]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (int ch = 0; ch < c; ++ch) dx[r * c + ch] += coef[ch] * dy[r * c + ch];
            }
        }
        if (want_param_grads)
            for (int ch = 0; ch < c; ++ch) {
                param_grads_[slot][ch] += static_cast<Scalar>(dgamma[ch]);
                param_grads_[slot + 1][ch] += static_cast<Scalar>(dbeta[ch]);
            }
        break;
    }
    case LayerKind::ReLU:
        if (need_dx)
            for (std::size_t k = 0; k < n_out; ++k)
                dx[k] += x[k] > Scalar(0) ? dy[k] : Scalar(0);
        break;
    case LayerKind::SeLU:
        if (need_dx) {
            const Scalar lam = static_cast<Scalar>(kSeluLambda);
            const Scalar la = static_cast<Scalar>(kSeluLambda * kSeluAlpha);
            for (std::size_t k = 0; k < n_out; ++k) dx[k] += dy[k] * (x[k] > Scalar(0) ? lam : la * std::exp(x[k]));
        }
        break;
    case LayerKind::AlphaDropout:
        if (need_dx) {
            if (st.mask.empty()) {
                for (std::size_t k = 0; k < n_out; ++k) dx[k] += dy[k];
            } else {
                const Scalar a = static_cast<Scalar>(st.dropout_scale);
                for (std::size_t k = 0; k < n_out; ++k)
                    if (st.mask[k]) dx[k] += a * dy[k];
            }
        }
        break;
    case LayerKind::MaxPool:
        if (need_dx)
            for (std::size_t o = 0; o < n_out; ++o) dx[st.argmax[o]] += dy[o];
        break;
    case LayerKind::Flatten:
        if (need_dx)
            for (std::size_t k = 0; k < n_out; ++k) dx[k] += dy[k];
        break;
    case LayerKind::ResidualAdd: {
        if (need_dx)
            for (std::size_t k = 0; k < n_out; ++k) dx[k] += dy[k];
        auto& ds = grads_[l.skip_from];
        if (!ds.empty())
            for (std::size_t k = 0; k < n_out; ++k) ds[k] += dy[k];
        break;
    }
    case LayerKind::Softmax: {
        // only reached for a Softmax that is not the final layer
        const int c = out_shape[0];
        const auto& p = acts_[i + 1];
        if (need_dx)
            for (int n = 0; n < batch_; ++n) {
                double dot = 0.0;
                for (int k = 0; k < c; ++k) dot += static_cast<double>(dy[n * c + k]) * p[n * c + k];
                for (int k = 0; k < c; ++k) dx[n * c + k] += static_cast<Scalar>(p[n * c + k] * (dy[n * c + k] - dot));
            }
        break;
    }
    }
}

template class Executor<float>;
template class Executor<double>;

template <typename Scalar>
int argmax_row(std::span<const Scalar> row) {
    int best = -1;
    for (std::size_t k = 0; k < row.size(); ++k) {
        if (std::isnan(row[k])) continue;
        if (best < 0 || row[k] > row[best]) best = static_cast<int>(k);
    }
    return best;
}

template <typename Scalar>
std::vector<int> predicted_classes(std::span<const Scalar> probabilities, int classes) {
    const std::size_t n = probabilities.size() / classes;
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = argmax_row(probabilities.subspan(i * classes, classes));
    return out;
}

template int argmax_row<float>(std::span<const float>);
template int argmax_row<double>(std::span<const double>);
template std::vector<int> predicted_classes<float>(std::span<const float>, int);
template std::vector<int> predicted_classes<double>(std::span<const double>, int);

namespace {

int batch_of(const ModelGraph& graph, const Tensor& batch) {
    Shape expected = graph.input_shape;
    if (batch.shape.size() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), batch.shape.begin() + 1))
        throw Error(ErrorCode::ShapeError, "layer 'input': batch shape " + shape_string(batch.shape) +
                                               " does not match Nx" + shape_string(expected));
    return batch.shape[0];
}

} // namespace

Tensor forward(const ModelGraph& graph, const Parameters& params, const Tensor& batch, Mode mode, Rng* rng) {
    const int n = batch_of(graph, batch);
    Executor<float> ex(graph);
    ex.forward(params, batch.data, n, mode, rng);
    const auto p = ex.probabilities();
    return Tensor({n, graph.num_classes}, std::vector<float>(p.begin(), p.end()));
}

BackwardResult backward(const ModelGraph& graph, const Parameters& params, const Tensor& batch,
                        std::span<const int> labels, Mode mode, Rng* rng) {
    const int n = batch_of(graph, batch);
    Executor<double> ex(graph);
    ex.forward(params, batch.data, n, mode, rng);
    std::vector<double> seed;
    BackwardResult r;
    r.loss = ex.cross_entropy(labels, seed);
    ex.backward(params, seed, true, true);
    for (std::size_t s = 0; s < ex.slots().size(); ++s) {
        const auto& g = ex.param_grads()[s];
        r.grads.add(ex.slots()[s].name, Tensor(ex.slots()[s].shape, std::vector<float>(g.begin(), g.end())));
    }
    const auto gi = ex.input_grad();
    r.input_grad = Tensor(batch.shape, std::vector<float>(gi.begin(), gi.end()));
    return r;
}

} // namespace trustbench
