#pragma once

#include <span>
#include <vector>

#include "csrvolsr/volume.hpp"

namespace csrvolsr {

inline constexpr int kFeatureChannels = 128;

/// Normalized coordinate of voxel k on an axis of length n under the
/// align-corners convention: -1 + 2k/(n-1), exact at both ends; 0 for n = 1.
double axis_coord(int k, int n);

/// Dense lattice of normalized coordinates, rows in (x, y, z) lexicographic
/// order, three components per row.
struct CoordGrid {
  Shape3 target_shape;
  std::vector<double> coords;

  std::size_t size() const { return coords.size() / 3; }
  std::span<const double> row(std::size_t m) const { return {coords.data() + 3 * m, 3}; }
};

CoordGrid make_coord_grid(Shape3 shape);

/// Identity: LR and HR lattices share normalized coordinates under
/// align-corners, so an HR query addresses the LR feature volume directly.
CoordGrid hr_to_lr_coords(const CoordGrid& hr_grid, Shape3 lr_shape, Shape3 hr_shape);

/// Per-voxel latent vectors, channel-last: features[v * 128 + c].
template <typename T>
struct FeatureVolume {
  Shape3 source_shape;
  std::vector<T> features;

  FeatureVolume() = default;
  explicit FeatureVolume(Shape3 s) : source_shape(s), features(s.voxels() * kFeatureChannels, T(0)) {}

  std::span<const T> at(std::size_t voxel) const {
    return {features.data() + voxel * kFeatureChannels, kFeatureChannels};
  }
};

/// Trilinear interpolation of `fv` at each coordinate row (coords holds
/// M x 3 values in [-1, 1]). `out` receives M x 128 values. Coordinates
/// outside [-1, 1] raise CoordOutOfRange.
template <typename T>
void sample_features(const FeatureVolume<T>& fv, std::span<const double> coords, std::span<T> out);

template <typename T>
std::vector<T> sample_features(const FeatureVolume<T>& fv, const CoordGrid& grid);

/// Adjoint of sample_features: scatters `grad_out` (M x 128) into
/// `grad_features` (V x 128), accumulating.
template <typename T>
void sample_features_backward(Shape3 source_shape, std::span<const double> coords, std::span<const T> grad_out,
                              std::span<T> grad_features);

}  // namespace csrvolsr
