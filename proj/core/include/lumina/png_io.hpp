#pragma once

#include <filesystem>

#include "lumina/image.hpp"

namespace lumina {

/// Decodes a PNG to an RGB image in [0,1] (values are v/255 of the 8-bit
/// samples). Grayscale, palette, 16-bit and alpha variants are normalized to
/// 8-bit RGB on the way in. Throws DataError on unreadable files.
Image read_png(const std::filesystem::path& path);

/// Encodes 8-bit RGB: each sample is round(clamp(v, 0, 1) * 255).
/// Deterministic: identical images produce identical bytes.
void write_png(const Image& img, const std::filesystem::path& path);

}  // namespace lumina
