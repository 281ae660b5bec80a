// siggen.hpp - constellation mapping, RRC pulse shaping and AWGN for I/Q frames
#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "trustbench/rng.hpp"

namespace trustbench {

using Complex = std::complex<double>;

// Label codes are the enumerator values and are part of the file formats.
enum class ModulationScheme : std::uint8_t {
    BPSK = 0,
    QPSK = 1,
    PSK8 = 2,
    QAM16 = 3,
    QAM64 = 4,
    APSK8 = 5,
    OOK = 6,
};

inline constexpr int kNumClasses = 7;
inline constexpr std::array<ModulationScheme, kNumClasses> kAllSchemes = {
    ModulationScheme::BPSK,  ModulationScheme::QPSK,  ModulationScheme::PSK8, ModulationScheme::QAM16,
    ModulationScheme::QAM64, ModulationScheme::APSK8, ModulationScheme::OOK,
};

/// Samples per frame (complex); a frame is stored as kFrameLength x 2 reals.
inline constexpr int kFrameLength = 1024;

/// Passing this as snr_db disables noise.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Outer/inner ring radius ratio of the 4+4 APSK constellation.
inline constexpr double kApskRingRatio = 2.0;

int bits_per_symbol(ModulationScheme scheme);
std::string_view scheme_name(ModulationScheme scheme);
std::optional<ModulationScheme> parse_scheme(std::string_view name);
inline int code(ModulationScheme s) { return static_cast<int>(s); }

struct Constellation {
    ModulationScheme scheme;
    // points[v] carries the bit pattern v (MSB first), i.e. bit_labels[v] == v.
    std::vector<Complex> points;
    std::vector<std::uint32_t> bit_labels;

    int bits_per_symbol() const { return trustbench::bits_per_symbol(scheme); }
    double mean_energy() const;
    std::size_t nearest(Complex z) const;
};

/// Unit-average-energy Gray-mapped constellation (PSK/QAM); fixed maps for BPSK/OOK/APSK.
const Constellation& constellation(ModulationScheme scheme);

/// Maps bits (each 0 or 1, MSB first per symbol) to constellation points.
std::vector<Complex> modulate(std::span<const std::uint8_t> bits, const Constellation& c);

/// Root-raised-cosine taps, span_symbols*sps+1 long, normalized to unit energy.
std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps);

/// Upsamples by sps, filters with taps, crops the group delay so symbol k
/// peaks at sample k*sps, and scales to unit mean power. Expects exactly
/// kFrameLength/sps symbols.
std::vector<Complex> shape_and_frame(std::span<const Complex> symbols, std::span<const double> taps, int sps);

/// Adds circular complex Gaussian noise of total variance signal_power/10^(snr_db/10).
/// snr_db == kNoNoise leaves the frame untouched.
void apply_awgn(std::span<Complex> frame, double snr_db, Rng& rng, double signal_power = 1.0);

} // namespace trustbench
