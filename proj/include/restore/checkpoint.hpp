#pragma once

#include <filesystem>

#include "restore/model.hpp"

namespace restore {

constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): magic "RSTRCKPT", u32 version, u32 config length,
/// config text, u32 parameter count, then per parameter u32 name length,
/// name, u32 rank, rank x u32 dims, f32 payload. A CRC-32 of every preceding
/// byte closes the file.
void save_checkpoint(const std::filesystem::path& path, Model& m);

/// Rebuilds the model from the embedded config and fills every parameter.
/// Throws on bad magic, version, checksum, or any name/shape mismatch.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace restore
