#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csrvolsr/volume.hpp"

namespace csrvolsr {

/// Synthetic two-channel subject: a band-limited random field pushed through
/// a sigmoidal tissue map inside an ellipsoidal head mask. The T1 channel is
/// a different monotone map of the same field plus an independent component.
struct PhantomOptions {
  Shape3 shape = Shape3::cube(48);
  int components = 32;
  double min_freq = 0.02;  // cycles per voxel
  double max_freq = 0.12;
  double sharpness = 6.0;
  double head_fraction = 0.46;  // ellipsoid semi-axis / edge length
};

MultiChannelVolume make_phantom(const PhantomOptions& opt, std::uint64_t seed);

/// Writes <dir>/dwi.nii.gz (normalised, 3D) and <dir>/t1.nii.gz.
void write_phantom_subject(const std::filesystem::path& dir, const MultiChannelVolume& subject);

/// `count` subjects named sub-000, sub-001, ... under root; returns their ids.
std::vector<std::string> write_phantom_dataset(const std::filesystem::path& root, int count,
                                               const PhantomOptions& opt, std::uint64_t seed);

}  // namespace csrvolsr
