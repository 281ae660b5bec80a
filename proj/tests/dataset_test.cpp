#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "trustbench/dataset.hpp"
#include "trustbench/error.hpp"
#include "trustbench/hash.hpp"

using namespace trustbench;
namespace fs = std::filesystem;

namespace {

DatasetSpec small_spec(std::uint64_t seed = 11) {
    DatasetSpec s;
    s.snr_grid_db = {-10.0, 0.0, 10.0};
    s.frames_per_cell = 4;
    s.master_seed = seed;
    return s;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("trustbench_dataset_" + name); }

struct ThreadEnv {
    explicit ThreadEnv(const char* v) { setenv("TRUSTBENCH_THREADS", v, 1); }
    ~ThreadEnv() { unsetenv("TRUSTBENCH_THREADS"); }
};

} // namespace

TEST(DatasetSpec, FullScaleArithmetic) {
    const auto s = DatasetSpec::full_scale();
    ASSERT_EQ(s.levels(), 26u);
    EXPECT_EQ(s.snr_grid_db.front(), -20.0);
    EXPECT_EQ(s.snr_grid_db.back(), 30.0);
    EXPECT_EQ(s.total_frames(), 745472u);
}

TEST(DatasetSpec, SingleCellPerScheme) {
    DatasetSpec s;
    s.snr_grid_db = {0.0};
    s.frames_per_cell = 1;
    const auto d = generate_dataset(s);
    EXPECT_EQ(d.size(), 7u);
    for (int i = 0; i < 7; ++i) EXPECT_EQ(d.labels[i], i);
}

TEST(DatasetSpec, ValidationRejectsBadSpecs) {
    auto s = small_spec();
    s.snr_grid_db = {0.0, 0.0};
    EXPECT_THROW(s.validate(), Error);
    s = small_spec();
    s.sps = 3;
    EXPECT_THROW(s.validate(), Error);
    s = small_spec();
    s.frames_per_cell = 0;
    EXPECT_THROW(s.validate(), Error);
}

TEST(Dataset, BalancedAndLabelled) {
    const auto d = generate_dataset(small_spec());
    ASSERT_EQ(d.size(), 7u * 3 * 4);
    std::map<std::pair<int, float>, int> cells;
    for (std::size_t i = 0; i < d.size(); ++i) {
        ++cells[{d.labels[i], d.snr_db[i]}];
        EXPECT_EQ(d.snr_db[i], static_cast<float>(d.spec.snr_grid_db[d.level(i)]));
        EXPECT_EQ(d.labels[i], d.cell(i) / 3);
    }
    EXPECT_EQ(cells.size(), 21u);
    for (const auto& [k, n] : cells) EXPECT_EQ(n, 4);
    for (float v : d.samples) ASSERT_TRUE(std::isfinite(v));
}

TEST(Dataset, FramesArePureFunctionsOfTheirKeys) {
    const auto spec = small_spec();
    const auto d = generate_dataset(spec);
    FrameSynthesizer synth(spec);
    std::vector<float> out(kFrameFloats);
    // any order, any single frame
    for (std::size_t level : {2u, 0u, 1u})
        for (std::uint32_t k : {3u, 0u}) {
            synth.frame_into(ModulationScheme::QAM16, level, k, out);
            const auto stored = d.frame(spec.frame_position(ModulationScheme::QAM16, level, k));
            EXPECT_TRUE(std::equal(out.begin(), out.end(), stored.begin()));
        }
}

TEST(Dataset, ThreadCountDoesNotChangeBytes) {
    std::string h1, h4;
    {
        ThreadEnv env("1");
        h1 = dataset_hash(generate_dataset(small_spec()));
    }
    {
        ThreadEnv env("4");
        h4 = dataset_hash(generate_dataset(small_spec()));
    }
    EXPECT_EQ(h1, h4);
    EXPECT_NE(h1, dataset_hash(generate_dataset(small_spec(12))));
}

TEST(Dataset, NoiselessPowerCalibration) {
    auto spec = small_spec();
    spec.snr_grid_db = {kNoNoise};
    spec.frames_per_cell = 8;
    const auto d = generate_dataset(spec);
    for (std::size_t i = 0; i < d.size(); ++i) {
        double p = 0.0;
        for (float v : d.frame(i)) p += static_cast<double>(v) * v;
        EXPECT_NEAR(p / kFrameLength, 1.0, 1e-3);
    }
}

TEST(Dataset, MeasuredSnrWithinTolerance) {
    DatasetSpec spec;
    spec.snr_grid_db = {-4.0, 6.0};
    FrameSynthesizer synth(spec);
    for (std::size_t level = 0; level < 2; ++level) {
        double ps = 0.0, pn = 0.0;
        for (std::uint32_t k = 0; k < 100; ++k) { // 1.02e5 samples
            const auto d = synth.draw(ModulationScheme::PSK8, level, k);
            for (std::size_t i = 0; i < d.clean.size(); ++i) {
                ps += std::norm(d.clean[i]);
                pn += std::norm(d.noisy[i] - d.clean[i]);
            }
        }
        EXPECT_NEAR(10 * std::log10(ps / pn), spec.snr_grid_db[level], 0.2);
    }
}

TEST(DatasetFile, RoundTripAndStreamingWriterAgree) {
    const auto spec = small_spec();
    const auto d = generate_dataset(spec);
    const auto p1 = temp_path("a.thzd"), p2 = temp_path("b.thzd");
    const auto h1 = write_dataset(d, p1);
    const auto h2 = write_dataset(spec, p2);
    EXPECT_EQ(h1, h2);
    EXPECT_EQ(h1, sha256_file(p1));
    EXPECT_EQ(h1, dataset_hash(d));
    const auto back = read_dataset(p1);
    EXPECT_EQ(back.samples, d.samples);
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.snr_db, d.snr_db);
    EXPECT_EQ(back.spec.snr_grid_db, spec.snr_grid_db);
    EXPECT_EQ(back.spec.master_seed, spec.master_seed);
    EXPECT_EQ(dataset_hash(back), h1);
    fs::remove(p1);
    fs::remove(p2);
}

TEST(DatasetFile, HeaderLayout) {
    std::string bytes;
    write_dataset(small_spec(), [&](std::span<const std::byte> b) {
        bytes.append(reinterpret_cast<const char*>(b.data()), b.size());
    });
    ASSERT_GT(bytes.size(), 9u);
    EXPECT_EQ(bytes.substr(0, 5), "THZD1");
    const auto* u = reinterpret_cast<const unsigned char*>(bytes.data() + 5);
    const std::uint32_t hlen = u[0] | (u[1] << 8) | (u[2] << 16) | (static_cast<std::uint32_t>(u[3]) << 24);
    const std::size_t n = 7 * 3 * 4;
    EXPECT_EQ(bytes.size(), 9 + hlen + n * kFrameFloats * 4 + n * 5);
    const std::string header = bytes.substr(9, hlen);
    EXPECT_NE(header.find("\"format\":\"THZD\""), std::string::npos);
    EXPECT_NE(header.find("8PSK"), std::string::npos);
}

TEST(DatasetFile, CorruptionIsReportedWithOffset) {
    std::string bytes;
    write_dataset(small_spec(), [&](std::span<const std::byte> b) {
        bytes.append(reinterpret_cast<const char*>(b.data()), b.size());
    });
    {
        std::istringstream in(bytes.substr(0, bytes.size() - 3));
        try {
            read_dataset(in);
            FAIL() << "truncated file accepted";
        } catch (const FormatError& e) {
            EXPECT_EQ(e.code(), ErrorCode::FormatError);
            EXPECT_GT(e.offset(), 9u);
        }
    }
    {
        auto bad = bytes;
        bad[0] = 'X';
        std::istringstream in(bad);
        try {
            read_dataset(in);
            FAIL() << "bad magic accepted";
        } catch (const FormatError& e) {
            EXPECT_EQ(e.offset(), 0u);
        }
    }
    {
        auto bad = bytes;
        bad[bad.size() - 5] = 9; // label code out of range in the last record
        std::istringstream in(bad);
        EXPECT_THROW(read_dataset(in), FormatError);
    }
}

TEST(DatasetFile, UnwritablePathIsIoError) {
    try {
        write_dataset(small_spec(), fs::path("/nonexistent-dir/x/y.thzd"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IoError);
        EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/x/y.thzd"), std::string::npos);
    }
}

TEST(DatasetView, FiltersAndPerClass) {
    const auto d = generate_dataset(small_spec());
    const auto all = DatasetView::all(d);
    EXPECT_EQ(all.size(), d.size());
    const auto hi = all.filter_snr(10.0);
    EXPECT_EQ(hi.size(), 7u * 4);
    for (auto i : hi.indices) EXPECT_EQ(d.snr_db[i], 10.0f);
    const auto two = all.per_class(2);
    EXPECT_EQ(two.size(), 14u);
}
