#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "csrvolsr/model.hpp"
#include "csrvolsr/volume.hpp"

namespace csrvolsr {

struct SRRequest {
  MultiChannelVolume lr;
  double scale = 0.0;
  /// Overrides `scale` when set.
  std::optional<Shape3> target_shape;
  int tile_size = 40;
  int tile_overlap = 8;
  std::size_t query_chunk = 65536;
};

/// round(s * shape) per axis, or the explicit target. InvalidScale for s <= 1
/// without a target.
Shape3 output_shape(const SRRequest& req);

/// Tile starts along one axis: stride tile - overlap, final tile end-aligned.
/// A single tile when n <= tile.
std::vector<int> tile_starts(int n, int tile, int overlap);

struct TilePlacement {
  std::array<int, 3> start{};
  Shape3 size;
};

/// LR tiles covering `shape`, x-major order (the accumulation order).
std::vector<TilePlacement> tile_and_stitch(Shape3 shape, int tile, int overlap);

/// Blend weights of every tile along one axis at each of the `out_len` HR
/// positions: raised-cosine ramps over interior overlaps, normalised so the
/// weights at each position sum to one. Result is [tile][j].
std::vector<std::vector<double>> axis_blend_weights(int n, int out_len, int tile, int overlap);

/// Encode each LR tile, decode the HR voxels falling inside it, blend, clip
/// to [0, 2]. Spacing becomes lr spacing / s.
Volume super_resolve(const SRRequest& req, const Model<float>& model);

/// Whole-volume encode and decode without tiling (reference path).
Volume super_resolve_untiled(const SRRequest& req, const Model<float>& model);

/// Separable tricubic (Keys a = -0.5, align corners) to round(s * shape).
Volume baseline_resample(const Volume& lr_dwi, double scale);
Volume baseline_resample(const Volume& lr_dwi, Shape3 target);

}  // namespace csrvolsr
