#include "trustbench/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <stdexcept>

#include <json.hpp>

#include "trustbench/error.hpp"
#include "trustbench/hash.hpp"
#include "trustbench/parallel.hpp"

namespace trustbench {

using nlohmann::json;

namespace {

constexpr char kMagic[5] = {'T', 'H', 'Z', 'D', '1'};
constexpr int kFormatVersion = 1;
constexpr std::size_t kChunkFrames = 256;
constexpr std::size_t kLabelRecord = 5;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

void floats_to_le(std::span<const float> in, std::vector<std::byte>& out) {
    const std::size_t base = out.size();
    out.resize(base + 4 * in.size());
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data() + base, in.data(), 4 * in.size());
    } else {
        for (std::size_t i = 0; i < in.size(); ++i) {
            const auto u = std::bit_cast<std::uint32_t>(in[i]);
            for (int b = 0; b < 4; ++b) out[base + 4 * i + b] = static_cast<std::byte>((u >> (8 * b)) & 0xFF);
        }
    }
}

void le_to_floats(const unsigned char* p, std::size_t n, float* out) {
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out, p, 4 * n);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    }
}

json header_json(const DatasetSpec& spec) {
    json schemes = json::array();
    for (auto s : kAllSchemes)
        schemes.push_back({{"name", std::string(scheme_name(s))}, {"code", code(s)}, {"bits_per_symbol", bits_per_symbol(s)}});
    json grid = json::array();
    for (double v : spec.snr_grid_db) {
        if (std::isinf(v))
            grid.push_back(v > 0 ? "inf" : "-inf"); // noiseless level; JSON has no infinities
        else
            grid.push_back(v);
    }
    return {
        {"format", "THZD"},
        {"version", kFormatVersion},
        {"spec",
         {{"snr_grid_db", grid},
          {"frames_per_cell", spec.frames_per_cell},
          {"sps", spec.sps},
          {"rrc_rolloff", spec.rrc_rolloff},
          {"rrc_span_symbols", spec.rrc_span_symbols},
          {"master_seed", spec.master_seed}}},
        {"schemes", schemes},
        {"layout",
         {{"frame_count", spec.total_frames()},
          {"frame_shape", {kFrameLength, 2}},
          {"sample_type", "binary32-le"},
          {"frame_order", "scheme,snr,index"},
          {"label_record", "u8 scheme code, binary32-le snr_db"}}},
        {"metadata",
         {{"nyquist_bandwidth_hz", 880e6},
          {"oversampling_factor", spec.sps},
          {"snr_definition", "frame mean signal power over total complex noise variance per sample"},
          {"pulse", "root-raised-cosine"},
          {"channel", "AWGN"}}},
    };
}

DatasetSpec spec_from_json(const json& h) {
    DatasetSpec spec;
    const auto& s = h.at("spec");
    for (const auto& v : s.at("snr_grid_db")) {
        if (v.is_string()) {
            const auto t = v.get<std::string>();
            if (t != "inf" && t != "-inf") throw std::invalid_argument("bad snr level '" + t + "'");
            spec.snr_grid_db.push_back(t == "inf" ? kNoNoise : -kNoNoise);
        } else {
            spec.snr_grid_db.push_back(v.get<double>());
        }
    }
    spec.frames_per_cell = s.at("frames_per_cell").get<int>();
    spec.sps = s.at("sps").get<int>();
    spec.rrc_rolloff = s.at("rrc_rolloff").get<double>();
    spec.rrc_span_symbols = s.at("rrc_span_symbols").get<int>();
    spec.master_seed = s.at("master_seed").get<std::uint64_t>();
    return spec;
}

std::vector<std::byte> preamble(const DatasetSpec& spec) {
    const std::string text = header_json(spec).dump();
    std::vector<std::byte> out;
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    for (char c : text) out.push_back(static_cast<std::byte>(c));
    return out;
}

std::vector<std::byte> label_block(const DatasetSpec& spec) {
    std::vector<std::byte> out;
    out.reserve(spec.total_frames() * kLabelRecord);
    for (auto s : kAllSchemes)
        for (std::size_t l = 0; l < spec.levels(); ++l) {
            const auto snr = std::bit_cast<std::uint32_t>(static_cast<float>(spec.snr_grid_db[l]));
            for (int k = 0; k < spec.frames_per_cell; ++k) {
                out.push_back(static_cast<std::byte>(code(s)));
                for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::byte>((snr >> (8 * b)) & 0xFF));
            }
        }
    return out;
}

ByteSink file_sink(std::ofstream& out, Sha256& hash, const std::filesystem::path& path) {
    return [&out, &hash, path](std::span<const std::byte> bytes) {
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
        hash.update(bytes);
    };
}

} // namespace

DatasetSpec DatasetSpec::full_scale(std::uint64_t seed) {
    DatasetSpec s;
    s.snr_grid_db = snr_range(-20.0, 30.0, 2.0);
    s.frames_per_cell = 4096;
    s.master_seed = seed;
    return s;
}

std::vector<double> DatasetSpec::snr_range(double first, double last, double step) {
    std::vector<double> out;
    const int n = static_cast<int>(std::floor((last - first) / step + 1e-9)) + 1;
    for (int i = 0; i < n; ++i) out.push_back(first + step * i);
    return out;
}

void DatasetSpec::validate() const {
    if (snr_grid_db.empty()) throw Error(ErrorCode::InvalidSpec, "snr grid is empty");
    for (std::size_t i = 0; i < snr_grid_db.size(); ++i) {
        if (std::isnan(snr_grid_db[i])) throw Error(ErrorCode::InvalidSpec, "snr grid contains NaN");
        if (i > 0 && !(snr_grid_db[i] > snr_grid_db[i - 1]))
            throw Error(ErrorCode::InvalidSpec, "snr grid must be strictly increasing");
    }
    if (frames_per_cell < 1) throw Error(ErrorCode::InvalidSpec, "frames_per_cell must be positive");
    if (sps < 2 || kFrameLength % sps != 0)
        throw Error(ErrorCode::InvalidSpec, "sps must be >= 2 and divide " + std::to_string(kFrameLength));
    if (!(rrc_rolloff > 0.0 && rrc_rolloff <= 1.0))
        throw Error(ErrorCode::InvalidRolloff, "rolloff must lie in (0, 1]");
    if (rrc_span_symbols < 1) throw Error(ErrorCode::InvalidSpec, "rrc span must be positive");
}

FrameSynthesizer::FrameSynthesizer(DatasetSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    taps_ = rrc_taps(spec_.rrc_rolloff, spec_.rrc_span_symbols, spec_.sps);
}

FrameSynthesizer::Draw FrameSynthesizer::draw(ModulationScheme s, std::size_t level, std::uint32_t k) const {
    Rng rng = make_rng(spec_.master_seed, {static_cast<std::uint64_t>(code(s)), level, k});
    const auto& c = constellation(s);
    const std::size_t nsym = kFrameLength / spec_.sps;
    Draw d;
    d.bits.resize(nsym * c.bits_per_symbol());
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < d.bits.size(); ++i) {
        if (i % 64 == 0) word = rng();
        d.bits[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1u);
    }
    d.symbols = modulate(d.bits, c);
    d.clean = shape_and_frame(d.symbols, taps_, spec_.sps);
    d.noisy = d.clean;
    apply_awgn(d.noisy, spec_.snr_grid_db.at(level), rng);
    return d;
}

void FrameSynthesizer::frame_into(ModulationScheme s, std::size_t level, std::uint32_t k, std::span<float> out) const {
    const auto d = draw(s, level, k);
    for (int n = 0; n < kFrameLength; ++n) {
        out[2 * n] = static_cast<float>(d.noisy[n].real());
        out[2 * n + 1] = static_cast<float>(d.noisy[n].imag());
    }
}

IQFrame FrameSynthesizer::frame(ModulationScheme s, std::size_t level, std::uint32_t k) const {
    IQFrame f{std::vector<float>(kFrameFloats), s, spec_.snr_grid_db.at(level), k};
    frame_into(s, level, k, f.samples);
    return f;
}

DatasetView DatasetView::all(const Dataset& d) {
    DatasetView v{&d, std::vector<std::size_t>(d.size())};
    for (std::size_t i = 0; i < d.size(); ++i) v.indices[i] = i;
    return v;
}

DatasetView DatasetView::filter_snr(double min_snr_db) const {
    DatasetView v{data, {}};
    for (auto i : indices)
        if (data->spec.snr_grid_db[data->level(i)] >= min_snr_db) v.indices.push_back(i);
    return v;
}

DatasetView DatasetView::per_class(std::size_t per_class) const {
    DatasetView v{data, {}};
    std::array<std::size_t, kNumClasses> taken{};
    for (auto i : indices) {
        auto& t = taken[data->labels[i]];
        if (t < per_class) {
            ++t;
            v.indices.push_back(i);
        }
    }
    return v;
}

Dataset generate_dataset(const DatasetSpec& spec) {
    FrameSynthesizer synth(spec);
    Dataset d;
    d.spec = spec;
    const std::size_t n = spec.total_frames();
    d.samples.resize(n * kFrameFloats);
    d.labels.resize(n);
    d.snr_db.resize(n);
    const std::size_t per_scheme = spec.levels() * spec.frames_per_cell;
    parallel_for(n, [&](std::size_t i, int) {
        const auto s = static_cast<ModulationScheme>(i / per_scheme);
        const std::size_t level = (i / spec.frames_per_cell) % spec.levels();
        const auto k = static_cast<std::uint32_t>(i % spec.frames_per_cell);
        synth.frame_into(s, level, k, {d.samples.data() + i * kFrameFloats, kFrameFloats});
        d.labels[i] = static_cast<std::uint8_t>(code(s));
        d.snr_db[i] = static_cast<float>(spec.snr_grid_db[level]);
    });
    return d;
}

void write_dataset(const DatasetSpec& spec, const ByteSink& sink) {
    FrameSynthesizer synth(spec);
    sink(preamble(spec));
    const std::size_t n = spec.total_frames();
    const std::size_t per_scheme = spec.levels() * spec.frames_per_cell;
    std::vector<float> chunk(kChunkFrames * kFrameFloats);
    std::vector<std::byte> bytes;
    for (std::size_t first = 0; first < n; first += kChunkFrames) {
        const std::size_t count = std::min(kChunkFrames, n - first);
        parallel_for(count, [&](std::size_t j, int) {
            const std::size_t i = first + j;
            const auto s = static_cast<ModulationScheme>(i / per_scheme);
            const std::size_t level = (i / spec.frames_per_cell) % spec.levels();
            synth.frame_into(s, level, static_cast<std::uint32_t>(i % spec.frames_per_cell),
                             {chunk.data() + j * kFrameFloats, kFrameFloats});
        });
        bytes.clear();
        floats_to_le({chunk.data(), count * kFrameFloats}, bytes);
        sink(bytes);
    }
    sink(label_block(spec));
}

void write_dataset(const Dataset& data, const ByteSink& sink) {
    data.spec.validate();
    if (data.size() != data.spec.total_frames() || data.samples.size() != data.size() * kFrameFloats)
        throw Error(ErrorCode::IntegrityError, "dataset arrays do not match its spec");
    sink(preamble(data.spec));
    std::vector<std::byte> bytes;
    for (std::size_t first = 0; first < data.size(); first += kChunkFrames) {
        const std::size_t count = std::min(kChunkFrames, data.size() - first);
        bytes.clear();
        floats_to_le({data.samples.data() + first * kFrameFloats, count * kFrameFloats}, bytes);
        sink(bytes);
    }
    sink(label_block(data.spec));
}

std::string write_dataset(const DatasetSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    Sha256 hash;
    write_dataset(spec, file_sink(out, hash, path));
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
    return hash.hex_digest();
}

std::string write_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    Sha256 hash;
    write_dataset(data, file_sink(out, hash, path));
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
    return hash.hex_digest();
}

std::string dataset_hash(const Dataset& data) {
    Sha256 hash;
    write_dataset(data, [&](std::span<const std::byte> b) { hash.update(b); });
    return hash.hex_digest();
}

Dataset read_dataset(std::istream& in) {
    std::uint64_t offset = 0;
    auto read_exact = [&](void* dst, std::size_t n, const char* what) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got != n) throw FormatError(offset + got, std::string("truncated ") + what);
        offset += n;
    };

    char magic[5];
    read_exact(magic, 5, "magic");
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic)))
        throw FormatError(0, "bad magic, expected THZD1");
    unsigned char len_bytes[4];
    read_exact(len_bytes, 4, "header length");
    const std::uint32_t header_len = get_u32(len_bytes);
    std::string text(header_len, '\0');
    const std::uint64_t header_at = offset;
    read_exact(text.data(), header_len, "header");

    Dataset d;
    try {
        const json h = json::parse(text);
        if (h.at("format") != "THZD" || h.at("version").get<int>() != kFormatVersion)
            throw FormatError(header_at, "unsupported header format/version");
        d.spec = spec_from_json(h);
        d.spec.validate();
        if (h.at("layout").at("frame_count").get<std::size_t>() != d.spec.total_frames())
            throw FormatError(header_at, "frame_count disagrees with spec");
    } catch (const json::exception& e) {
        throw FormatError(header_at, std::string("invalid header: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::FormatError) throw;
        throw FormatError(header_at, e.what());
    }

    const std::size_t n = d.spec.total_frames();
    d.samples.resize(n * kFrameFloats);
    std::vector<unsigned char> buf(kChunkFrames * kFrameFloats * 4);
    for (std::size_t first = 0; first < n; first += kChunkFrames) {
        const std::size_t count = std::min(kChunkFrames, n - first);
        read_exact(buf.data(), count * kFrameFloats * 4, "frame block");
        le_to_floats(buf.data(), count * kFrameFloats, d.samples.data() + first * kFrameFloats);
    }

    const std::uint64_t labels_at = offset;
    std::vector<unsigned char> labels(n * kLabelRecord);
    read_exact(labels.data(), labels.size(), "label block");
    d.labels.resize(n);
    d.snr_db.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.labels[i] = labels[i * kLabelRecord];
        d.snr_db[i] = std::bit_cast<float>(get_u32(&labels[i * kLabelRecord + 1]));
        const auto expected_scheme = i / (d.spec.levels() * d.spec.frames_per_cell);
        const float expected_snr = static_cast<float>(d.spec.snr_grid_db[d.level(i)]);
        if (d.labels[i] != expected_scheme || std::bit_cast<std::uint32_t>(d.snr_db[i]) != std::bit_cast<std::uint32_t>(expected_snr))
            throw FormatError(labels_at + i * kLabelRecord, "label record disagrees with frame order");
    }
    return d;
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return read_dataset(in);
}

} // namespace trustbench
