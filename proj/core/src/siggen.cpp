#include "trustbench/siggen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "trustbench/error.hpp"

namespace trustbench {

namespace {

constexpr std::uint32_t gray(std::uint32_t v) { return v ^ (v >> 1); }

// Gray-coded PAM levels {-(M-1), ..., M-1}; level index p carries gray(p).
std::vector<double> gray_pam(int bits) {
    const std::uint32_t m = 1u << bits;
    std::vector<double> by_label(m);
    for (std::uint32_t p = 0; p < m; ++p) by_label[gray(p)] = 2.0 * p - (m - 1.0);
    return by_label;
}

Constellation normalized(ModulationScheme s, std::vector<Complex> pts) {
    double e = 0.0;
    for (const auto& p : pts) e += std::norm(p);
    e /= static_cast<double>(pts.size());
    const double g = 1.0 / std::sqrt(e);
    for (auto& p : pts) p *= g;
    Constellation c{s, std::move(pts), {}};
    c.bit_labels.resize(c.points.size());
    for (std::uint32_t v = 0; v < c.bit_labels.size(); ++v) c.bit_labels[v] = v;
    return c;
}

Constellation build(ModulationScheme s) {
    using std::numbers::pi;
    std::vector<Complex> pts;
    switch (s) {
    case ModulationScheme::BPSK:
        pts = {{1.0, 0.0}, {-1.0, 0.0}};
        break;
    case ModulationScheme::QPSK:
        // first bit -> I sign, second bit -> Q sign
        for (std::uint32_t v = 0; v < 4; ++v)
            pts.emplace_back((v & 2) ? -1.0 : 1.0, (v & 1) ? -1.0 : 1.0);
        break;
    case ModulationScheme::PSK8: {
        pts.resize(8);
        for (std::uint32_t p = 0; p < 8; ++p) pts[gray(p)] = std::polar(1.0, 2.0 * pi * p / 8.0);
        break;
    }
    case ModulationScheme::QAM16:
    case ModulationScheme::QAM64: {
        const int half = bits_per_symbol(s) / 2;
        const auto pam = gray_pam(half);
        const std::uint32_t m = 1u << half;
        pts.resize(m * m);
        for (std::uint32_t hi = 0; hi < m; ++hi)
            for (std::uint32_t lo = 0; lo < m; ++lo) pts[(hi << half) | lo] = {pam[hi], pam[lo]};
        break;
    }
    case ModulationScheme::APSK8: {
        // first bit selects the ring, remaining two are Gray QPSK on that ring;
        // the inner ring is rotated 45 degrees against the outer one
        pts.resize(8);
        for (std::uint32_t ring = 0; ring < 2; ++ring) {
            const double r = ring ? kApskRingRatio : 1.0;
            const double offset = ring ? 0.0 : pi / 4.0;
            for (std::uint32_t p = 0; p < 4; ++p)
                pts[(ring << 2) | gray(p)] = std::polar(r, offset + 2.0 * pi * p / 4.0);
        }
        break;
    }
    case ModulationScheme::OOK:
        pts = {{0.0, 0.0}, {1.0, 0.0}};
        break;
    }
    return normalized(s, std::move(pts));
}

} // namespace

int bits_per_symbol(ModulationScheme scheme) {
    switch (scheme) {
    case ModulationScheme::BPSK: return 1;
    case ModulationScheme::QPSK: return 2;
    case ModulationScheme::PSK8: return 3;
    case ModulationScheme::QAM16: return 4;
    case ModulationScheme::QAM64: return 6;
    case ModulationScheme::APSK8: return 3;
    case ModulationScheme::OOK: return 1;
    }
    return 0;
}

std::string_view scheme_name(ModulationScheme scheme) {
    switch (scheme) {
    case ModulationScheme::BPSK: return "BPSK";
    case ModulationScheme::QPSK: return "QPSK";
    case ModulationScheme::PSK8: return "8PSK";
    case ModulationScheme::QAM16: return "QAM16";
    case ModulationScheme::QAM64: return "QAM64";
    case ModulationScheme::APSK8: return "8APSK";
    case ModulationScheme::OOK: return "OOK";
    }
    return "?";
}

std::optional<ModulationScheme> parse_scheme(std::string_view name) {
    for (auto s : kAllSchemes)
        if (scheme_name(s) == name) return s;
    return std::nullopt;
}

double Constellation::mean_energy() const {
    double e = 0.0;
    for (const auto& p : points) e += std::norm(p);
    return e / static_cast<double>(points.size());
}

std::size_t Constellation::nearest(Complex z) const {
    std::size_t best = 0;
    double best_d = std::norm(z - points[0]);
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double d = std::norm(z - points[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

const Constellation& constellation(ModulationScheme scheme) {
    static const std::array<Constellation, kNumClasses> table = [] {
        std::array<Constellation, kNumClasses> t;
        for (auto s : kAllSchemes) t[code(s)] = build(s);
        return t;
    }();
    return table[code(scheme)];
}

std::vector<Complex> modulate(std::span<const std::uint8_t> bits, const Constellation& c) {
    const int k = c.bits_per_symbol();
    if (bits.size() % k != 0)
        throw Error(ErrorCode::InvalidBitLength,
                    std::to_string(bits.size()) + " bits is not a multiple of " + std::to_string(k));
    std::vector<Complex> out;
    out.reserve(bits.size() / k);
    for (std::size_t i = 0; i < bits.size(); i += k) {
        std::uint32_t v = 0;
        for (int j = 0; j < k; ++j) v = (v << 1) | (bits[i + j] & 1u);
        out.push_back(c.points[v]);
    }
    return out;
}

std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps) {
    using std::numbers::pi;
    if (!(rolloff > 0.0 && rolloff <= 1.0))
        throw Error(ErrorCode::InvalidRolloff, "rolloff must lie in (0, 1], got " + std::to_string(rolloff));
    if (sps < 2 || span_symbols < 1)
        throw Error(ErrorCode::InvalidSpec, "rrc needs sps >= 2 and span >= 1");

    const int n = span_symbols * sps + 1;
    const double b = rolloff;
    std::vector<double> h(n);
    for (int i = 0; i < n; ++i) {
        // symmetric index so both halves are computed from |t|
        const int k = std::abs(2 * i - (n - 1));
        const double t = static_cast<double>(k) / (2.0 * sps);
        double v;
        if (k == 0) {
            v = 1.0 - b + 4.0 * b / pi;
        } else if (std::abs(4.0 * b * t - 1.0) < 1e-12) {
            v = b / std::sqrt(2.0) *
                ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
        } else {
            v = (std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b))) /
                (pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t)));
        }
        h[i] = v;
    }
    double e = 0.0;
    for (double v : h) e += v * v;
    const double g = 1.0 / std::sqrt(e);
    for (double& v : h) v *= g;
    return h;
}

std::vector<Complex> shape_and_frame(std::span<const Complex> symbols, std::span<const double> taps, int sps) {
    if (sps < 1 || kFrameLength % sps != 0)
        throw Error(ErrorCode::InvalidSpec, "frame length must be divisible by sps");
    const std::size_t expected = kFrameLength / sps;
    if (symbols.size() != expected)
        throw Error(ErrorCode::SymbolCountMismatch,
                    "expected " + std::to_string(expected) + " symbols, got " + std::to_string(symbols.size()));
    if (taps.empty() || taps.size() % 2 == 0)
        throw Error(ErrorCode::InvalidSpec, "taps must have odd length");

    const long delay = static_cast<long>(taps.size() - 1) / 2;
    std::vector<Complex> out(kFrameLength);
    // out[n] = sum_k s_k h[n - k*sps + delay]
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const long center = static_cast<long>(k) * sps;
        const long lo = std::max(0L, center - delay);
        const long hi = std::min<long>(kFrameLength - 1, center + delay);
        for (long n = lo; n <= hi; ++n) out[n] += symbols[k] * taps[n - center + delay];
    }
    double p = 0.0;
    for (const auto& z : out) p += std::norm(z);
    p /= kFrameLength;
    if (p > 0.0) {
        const double g = 1.0 / std::sqrt(p);
        for (auto& z : out) z *= g;
    }
    return out;
}

void apply_awgn(std::span<Complex> frame, double snr_db, Rng& rng, double signal_power) {
    if (std::isinf(snr_db) && snr_db > 0) return;
    const double variance = signal_power / std::pow(10.0, snr_db / 10.0);
    const double sigma = std::sqrt(variance / 2.0);
    for (auto& z : frame) {
        double a, b;
        normal_pair(rng, a, b);
        z += Complex(sigma * a, sigma * b);
    }
}

} // namespace trustbench
