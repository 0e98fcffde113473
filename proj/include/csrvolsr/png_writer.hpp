#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "csrvolsr/volume.hpp"

namespace csrvolsr {

/// 8-bit grayscale PNG, row-major.
void write_png_gray(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> pixels);

/// Axial, sagittal and coronal centre slices side by side, intensities
/// mapped linearly from [0, max] to [0, 255].
void write_triptych_png(const std::filesystem::path& path, const Volume& volume);

}  // namespace csrvolsr
