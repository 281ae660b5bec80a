#include "trustbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "graph_json.hpp"
#include "trustbench/error.hpp"
#include "trustbench/hash.hpp"

namespace trustbench {

using nlohmann::json;

namespace {

constexpr char kMagic[5] = {'T', 'H', 'Z', 'M', '1'};
constexpr int kVersion = 1;
constexpr std::size_t kPreamble = 9;

std::uint32_t read_u32(std::span<const std::byte> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::to_integer<unsigned>(b[at + i])) << (8 * i);
    return v;
}

void append_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

json metadata_json(const CheckpointMetadata& m) {
    json extra = json::object();
    for (const auto& [k, v] : m.extra) extra[k] = v;
    return {{"training_seed", m.training_seed}, {"epochs", m.epochs}, {"dataset_hash", m.dataset_hash}, {"extra", extra}};
}

CheckpointMetadata metadata_from(const json& j) {
    CheckpointMetadata m;
    m.training_seed = j.at("training_seed").get<std::uint64_t>();
    m.epochs = j.at("epochs").get<int>();
    m.dataset_hash = j.at("dataset_hash").get<std::string>();
    for (const auto& [k, v] : j.at("extra").items()) m.extra[k] = v.get<std::string>();
    return m;
}

} // namespace

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt) {
    check_parameters(ckpt.graph, ckpt.params);
    json dir = json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : ckpt.params) {
        dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.size()}});
        offset += 4 * t.size();
    }
    const json header = {{"format", "THZM"},
                         {"version", kVersion},
                         {"graph", detail::graph_to_json(ckpt.graph)},
                         {"tensors", dir},
                         {"payload_bytes", offset},
                         {"metadata", metadata_json(ckpt.metadata)}};
    const std::string text = header.dump();

    std::vector<std::byte> out;
    out.reserve(kPreamble + text.size() + offset);
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    append_u32(out, static_cast<std::uint32_t>(text.size()));
    for (char c : text) out.push_back(static_cast<std::byte>(c));
    for (const auto& [name, t] : ckpt.params)
        for (float v : t.data) append_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Checkpoint parse_checkpoint(std::span<const std::byte> bytes) {
    if (bytes.size() < kPreamble) throw FormatError(bytes.size(), "truncated preamble");
    for (int i = 0; i < 5; ++i)
        if (bytes[i] != static_cast<std::byte>(kMagic[i])) throw FormatError(i, "bad magic, expected THZM1");
    const std::uint32_t header_len = read_u32(bytes, 5);
    if (bytes.size() < kPreamble + header_len) throw FormatError(bytes.size(), "truncated header");

    Checkpoint ck;
    json header;
    std::size_t payload_bytes = 0;
    try {
        header = json::parse(std::string_view(reinterpret_cast<const char*>(bytes.data() + kPreamble), header_len));
        if (header.at("format") != "THZM" || header.at("version").get<int>() != kVersion)
            throw FormatError(kPreamble, "unsupported format/version");
        ck.graph = detail::graph_from_json(header.at("graph"));
        ck.metadata = metadata_from(header.at("metadata"));
        payload_bytes = header.at("payload_bytes").get<std::size_t>();
    } catch (const json::exception& e) {
        throw FormatError(kPreamble, std::string("invalid header: ") + e.what());
    }

    try {
        validate_graph(ck.graph);
    } catch (const Error& e) {
        throw Error(ErrorCode::IntegrityError, std::string("embedded graph is invalid: ") + e.what());
    }

    const std::size_t base = kPreamble + header_len;
    std::size_t expected_offset = 0;
    for (const auto& e : header.at("tensors")) {
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        const auto offset = e.at("offset").get<std::size_t>();
        const auto count = e.at("count").get<std::size_t>();
        if (count != element_count(shape) || offset != expected_offset)
            throw FormatError(kPreamble, "tensor directory entry '" + name + "' is inconsistent");
        if (base + offset + 4 * count > bytes.size())
            throw FormatError(bytes.size(), "payload of '" + name + "' is truncated");
        Tensor t(shape);
        for (std::size_t i = 0; i < count; ++i) t.data[i] = std::bit_cast<float>(read_u32(bytes, base + offset + 4 * i));
        ck.params.add(name, std::move(t));
        expected_offset = offset + 4 * count;
    }
    if (expected_offset != payload_bytes) throw FormatError(kPreamble, "payload size disagrees with directory");
    if (base + payload_bytes != bytes.size()) throw FormatError(base + payload_bytes, "trailing bytes after payload");

    try {
        check_parameters(ck.graph, ck.params);
    } catch (const Error& e) {
        throw Error(ErrorCode::IntegrityError, e.what());
    }
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(std::as_bytes(std::span(raw)));
}

std::string checkpoint_hash(const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    return sha256_hex(bytes);
}

} // namespace trustbench
