#pragma once

#include <filesystem>

#include "lumina/nets.hpp"

namespace lumina {

/// Checkpoint layout:
///   bytes 0-3   magic "LUMN"
///   bytes 4-7   format version, little-endian u32 (currently 1)
///   text manifest, one "path dtype shape" line per tensor (dtype f32,
///     shape like 32x3x3x3), terminated by one blank line
///   concatenated little-endian float32 arrays in manifest order
/// Save emits tensors in architecture-table order, so identical parameters
/// give byte-identical files. Round-trip is bit-exact for float parameters.
void checkpoint_save(const ModelParams<float>& params,
                     const std::filesystem::path& path);

/// Loads and validates against the architecture table: unknown or missing
/// paths, duplicates, and shape mismatches are shape-kind errors naming the
/// path; bad magic, unsupported version, malformed manifest lines, and short
/// or oversized payloads get their own CheckpointError kinds.
ModelParams<float> checkpoint_load(const std::filesystem::path& path);

}  // namespace lumina
