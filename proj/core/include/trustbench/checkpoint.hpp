// checkpoint.hpp - THZM1 checkpoint container (graph + binary32 parameters)
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trustbench/graph.hpp"

namespace trustbench {

struct CheckpointMetadata {
    std::uint64_t training_seed = 0;
    int epochs = 0;
    std::string dataset_hash;
    std::map<std::string, std::string> extra;

    bool operator==(const CheckpointMetadata&) const = default;
};

struct Checkpoint {
    ModelGraph graph;
    Parameters params;
    CheckpointMetadata metadata;
};

/// Serialized bytes: "THZM1", u32-le header length, JSON header (graph,
/// tensor directory with name/shape/offset, metadata), raw binary32-le
/// payloads. Every bit pattern, NaN payloads included, is kept as stored.
std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 of the serialized checkpoint.
std::string checkpoint_hash(const Checkpoint& ckpt);

} // namespace trustbench
