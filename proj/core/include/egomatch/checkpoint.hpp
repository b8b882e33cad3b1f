#ifndef EGOMATCH_CHECKPOINT_HPP
#define EGOMATCH_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "egomatch/networks.hpp"

namespace egomatch {

/// Free-form string metadata stored next to the spec (training options etc.).
using CheckpointMeta = std::map<std::string, std::string>;

struct Checkpoint {
    EmbeddingNet net;
    CheckpointMeta meta;
};

/// Canonical JSON text for a spec (keys sorted, no whitespace).
std::string spec_to_json(const NetworkSpec& spec);
/// Throws SpecError on malformed or inconsistent specs.
NetworkSpec spec_from_json(std::string_view text);

/// "EGM1", u32 LE header length, JSON header (spec, meta, parameter
/// group/name/shape in storage order), then every parameter as LE float64.
std::vector<std::uint8_t> encode_checkpoint(const EmbeddingNet& net, const CheckpointMeta& meta = {});
/// Throws DataError if the bytes are truncated, padded, or disagree with the spec.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet& net, const CheckpointMeta& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace egomatch

#endif  // EGOMATCH_CHECKPOINT_HPP
