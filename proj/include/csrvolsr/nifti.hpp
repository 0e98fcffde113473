#pragma once

#include <filesystem>
#include <vector>

#include "csrvolsr/volume.hpp"

namespace csrvolsr {

/// Reads a NIfTI-1 single-file image (.nii or .nii.gz) with 3 or 4
/// dimensions. 4D files yield one Volume per frame along the fourth axis.
/// Spacing comes from pixdim[1..3]; scl_slope/scl_inter are applied.
/// Throws MissingFile, MalformedHeader or NonFiniteData.
std::vector<Volume> load_volumes(const std::filesystem::path& path,
                                 Modality modality = Modality::dwi_b1000);

/// Like load_volumes but requires exactly one 3D frame.
Volume load_volume(const std::filesystem::path& path, Modality modality = Modality::dwi_b1000);

/// Writes little-endian float32 NIfTI-1; gzip-compressed when the path ends
/// in ".gz". Several frames of equal shape are written as one 4D image.
void save_volumes(const std::filesystem::path& path, const std::vector<Volume>& frames);
void save_volume(const std::filesystem::path& path, const Volume& volume);

/// A two-channel volume is stored as a 4D image with two frames.
void save_multichannel(const std::filesystem::path& path, const MultiChannelVolume& volume);

}  // namespace csrvolsr
