// dataset.hpp - labeled I/Q frame sets and the THZD1 container format
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trustbench/siggen.hpp"

namespace trustbench {

/// Floats per stored frame (kFrameLength rows of I, Q).
inline constexpr std::size_t kFrameFloats = 2 * kFrameLength;

struct DatasetSpec {
    std::vector<double> snr_grid_db;
    int frames_per_cell = 1;
    int sps = 8;
    double rrc_rolloff = 0.35;
    int rrc_span_symbols = 10;
    std::uint64_t master_seed = 0;

    /// 26 levels -20..+30 dB step 2, 4096 frames per (scheme, level) cell.
    static DatasetSpec full_scale(std::uint64_t seed = 20230601);
    static std::vector<double> snr_range(double first, double last, double step);

    void validate() const;
    std::size_t levels() const { return snr_grid_db.size(); }
    std::size_t cells() const { return kNumClasses * levels(); }
    std::size_t total_frames() const { return cells() * static_cast<std::size_t>(frames_per_cell); }
    /// Position of frame (scheme, level, k) in storage order.
    std::size_t frame_position(ModulationScheme s, std::size_t level, std::size_t k) const {
        return (code(s) * levels() + level) * frames_per_cell + k;
    }
};

struct IQFrame {
    std::vector<float> samples; // kFrameLength x 2, row-major (I, Q)
    ModulationScheme scheme;
    double snr_db;
    std::uint32_t frame_index;
};

/// Pure frame generator: frame (scheme, level, k) depends only on the spec
/// and those three keys.
class FrameSynthesizer {
public:
    explicit FrameSynthesizer(DatasetSpec spec);

    struct Draw {
        std::vector<std::uint8_t> bits;
        std::vector<Complex> symbols;
        std::vector<Complex> clean; // shaped, unit power, before noise
        std::vector<Complex> noisy;
    };

    Draw draw(ModulationScheme s, std::size_t level, std::uint32_t k) const;
    IQFrame frame(ModulationScheme s, std::size_t level, std::uint32_t k) const;
    void frame_into(ModulationScheme s, std::size_t level, std::uint32_t k, std::span<float> out) const;

    const DatasetSpec& spec() const { return spec_; }
    const std::vector<double>& taps() const { return taps_; }

private:
    DatasetSpec spec_;
    std::vector<double> taps_;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<float> samples; // size() * kFrameFloats
    std::vector<std::uint8_t> labels;
    std::vector<float> snr_db;

    std::size_t size() const { return labels.size(); }
    std::span<const float> frame(std::size_t i) const {
        return {samples.data() + i * kFrameFloats, kFrameFloats};
    }
    std::size_t cell(std::size_t i) const { return i / spec.frames_per_cell; }
    std::size_t level(std::size_t i) const { return cell(i) % spec.levels(); }
    ModulationScheme scheme(std::size_t i) const { return static_cast<ModulationScheme>(labels[i]); }
};

/// A subset of a dataset addressed by frame positions.
struct DatasetView {
    const Dataset* data = nullptr;
    std::vector<std::size_t> indices;

    std::size_t size() const { return indices.size(); }
    std::size_t operator[](std::size_t i) const { return indices[i]; }
    static DatasetView all(const Dataset& d);
    /// Frames whose SNR is >= min_snr_db.
    DatasetView filter_snr(double min_snr_db) const;
    /// Up to per_class frames of every class, taken in view order.
    DatasetView per_class(std::size_t per_class) const;
};

Dataset generate_dataset(const DatasetSpec& spec);

using ByteSink = std::function<void(std::span<const std::byte>)>;

/// Streams the container for spec, generating frames chunk by chunk.
void write_dataset(const DatasetSpec& spec, const ByteSink& sink);
/// Writes to path and returns the SHA-256 of the written bytes.
std::string write_dataset(const DatasetSpec& spec, const std::filesystem::path& path);
void write_dataset(const Dataset& data, const ByteSink& sink);
std::string write_dataset(const Dataset& data, const std::filesystem::path& path);
/// SHA-256 of the serialized container.
std::string dataset_hash(const Dataset& data);

Dataset read_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);

} // namespace trustbench
