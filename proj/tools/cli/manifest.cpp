#include "manifest.hpp"

#include <ctime>
#include <fstream>

#include "trustbench/error.hpp"
#include "trustbench/hash.hpp"

#ifndef TRUSTBENCH_VERSION
#define TRUSTBENCH_VERSION "0.0.0"
#endif

namespace trustbench::cli {

namespace {

FileDigest digest(const std::filesystem::path& p) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(p, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot stat " + p.string());
    return {p.generic_string(), sha256_file(p), size};
}

nlohmann::json files_json(const std::vector<FileDigest>& files) {
    auto arr = nlohmann::json::array();
    for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    return arr;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

std::string tool_version() { return TRUSTBENCH_VERSION; }

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), started_utc_(utc_now()),
      start_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const std::filesystem::path& path) { inputs_.push_back(digest(path)); }
void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(digest(path)); }

nlohmann::json RunManifest::to_json() const {
    return {{"command", command_},
            {"argv", argv_},
            {"version", tool_version()},
            {"config", config_},
            {"inputs", files_json(inputs_)},
            {"outputs", files_json(outputs_)},
            {"started_utc", started_utc_},
            {"wall_clock_seconds", wall_clock_seconds_}};
}

void RunManifest::write(const std::filesystem::path& path) {
    wall_clock_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    out << to_json().dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::filesystem::path manifest_path_for(const std::filesystem::path& out) {
    auto p = out;
    p += ".manifest.json";
    return p;
}

} // namespace trustbench::cli
