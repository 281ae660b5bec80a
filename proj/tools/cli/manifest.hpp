// manifest.hpp - per-run record of inputs, configuration and outputs
#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace trustbench::cli {

struct FileDigest {
    std::string path;
    std::string sha256;
    std::uintmax_t bytes = 0;
};

/// Everything except wall_clock_seconds and started_utc is a function of
/// the inputs and the configuration.
class RunManifest {
public:
    RunManifest(std::string command, std::vector<std::string> argv);

    nlohmann::json& config() { return config_; }
    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
    const std::vector<FileDigest>& outputs() const { return outputs_; }

    nlohmann::json to_json() const;
    /// Stops the clock and writes the manifest as pretty JSON.
    void write(const std::filesystem::path& path);

private:
    std::string command_;
    std::vector<std::string> argv_;
    nlohmann::json config_ = nlohmann::json::object();
    std::vector<FileDigest> inputs_;
    std::vector<FileDigest> outputs_;
    std::string started_utc_;
    std::chrono::steady_clock::time_point start_;
    double wall_clock_seconds_ = 0.0;
};

/// Conventional manifest location for a run whose main output is `out`.
std::filesystem::path manifest_path_for(const std::filesystem::path& out);

std::string tool_version();

} // namespace trustbench::cli
