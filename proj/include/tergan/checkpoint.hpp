#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "tergan/trainer.hpp"

namespace tergan {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Single-file container: magic, format version, JSON header (network spec,
/// stage, counters, rng, tensor index), raw little-endian blobs, CRC-32.
/// Written to a temporary file and renamed into place.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Restores every parameter, buffer, optimizer moment, counter and the rng.
/// Throws ConfigError for a format version or network spec mismatch and
/// IntegrityError for a truncated or corrupted file. Nothing is returned on
/// failure, so a caller never observes a partially loaded state.
TrainState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<NetworkSpec>& expected_spec = std::nullopt);

}  // namespace tergan
