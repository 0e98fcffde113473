#pragma once

#include <filesystem>
#include <vector>

#include "csrvolsr/nifti.hpp"
#include "csrvolsr/volume.hpp"

namespace csrvolsr {

inline constexpr double kB0Floor = 1e-8;

/// b1000 / mean(b0s) voxelwise, zero where the mean b0 is at or below the
/// floor, clipped to [0, kDwiClipMax].
Volume normalize_dwi(const Volume& b1000, const std::vector<Volume>& b0s);

/// Divides by the 99th percentile (linear interpolation between order
/// statistics) of the nonzero voxels and clips to [0, 1].
Volume normalize_t1(const Volume& t1);

/// Channel-concatenates a normalized DWI with a normalized T1, resampling
/// the T1 trilinearly onto the DWI lattice when the shapes differ.
MultiChannelVolume pair_anatomical(const Volume& dwi, const Volume& t1);

/// Loads one subject from disk. A 4D DWI file is read as [b1000, b0, b0, ...]
/// and normalized; a 3D DWI file is taken as already normalized. The T1 file
/// is always percentile-normalized.
MultiChannelVolume load_subject(const std::filesystem::path& dwi_path,
                                const std::filesystem::path& t1_path);

/// Loads a prepared two-frame 4D image (DWI, T1) as written by save_multichannel.
MultiChannelVolume load_multichannel(const std::filesystem::path& path);

}  // namespace csrvolsr
