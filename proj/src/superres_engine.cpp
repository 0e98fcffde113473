#include "csrvolsr/superres_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "csrvolsr/coord_field.hpp"
#include "csrvolsr/error.hpp"
#include "csrvolsr/patch_pipeline.hpp"
#include "csrvolsr/resample.hpp"

namespace csrvolsr {

namespace {

std::array<double, 3> scaled_spacing(const std::array<double, 3>& sp, Shape3 from, Shape3 to,
                                     std::optional<double> scale) {
  std::array<double, 3> out{};
  for (int a = 0; a < 3; ++a)
    out[a] = scale ? sp[a] / *scale : sp[a] * static_cast<double>(from[a]) / static_cast<double>(to[a]);
  return out;
}

void check_tiling(Shape3 shape, int tile, int overlap) {
  if (tile < 1) throw Error(ErrorKind::InvalidConfig, "tile_size must be at least 1");
  if (overlap < 0 || overlap >= tile) throw Error(ErrorKind::InvalidConfig, "tile_overlap must lie in [0, tile_size)");
  for (int a = 0; a < 3; ++a)
    if (shape[a] > tile && overlap < 1)
      throw Error(ErrorKind::InvalidConfig, "tile_overlap must be at least 1 when a volume needs several tiles");
}

double ramp(double d, double r) {
  const double t = std::min(1.0, (d + 0.5) / (r + 0.5));
  const double s = std::sin(0.5 * std::numbers::pi * t);
  return s * s;
}

/// Tile-local normalised coordinate of HR index j; the global lattice
/// coordinate when the tile spans the axis.
double local_coord(int j, int out_len, int n, int start, int len) {
  if (len == n) return axis_coord(j, out_len);
  if (len <= 1) return 0.0;
  const double p = align_corners_position(j, out_len, n);
  return std::clamp(-1.0 + 2.0 * (p - start) / static_cast<double>(len - 1), -1.0, 1.0);
}

}  // namespace

Shape3 output_shape(const SRRequest& req) {
  if (req.target_shape) {
    const Shape3 t = *req.target_shape;
    if (t.x < 1 || t.y < 1 || t.z < 1) throw Error(ErrorKind::InvalidScale, "target shape must be positive");
    return t;
  }
  if (!(req.scale > 1.0) || !std::isfinite(req.scale))
    throw Error(ErrorKind::InvalidScale, "scale must exceed 1 (got " + std::to_string(req.scale) + ")");
  const Shape3 s = req.lr.shape;
  return {scaled_extent(s.x, req.scale), scaled_extent(s.y, req.scale), scaled_extent(s.z, req.scale)};
}

std::vector<int> tile_starts(int n, int tile, int overlap) {
  if (n <= tile) return {0};
  const int stride = tile - overlap;
  std::vector<int> starts;
  for (int a = 0; a + tile < n; a += stride) starts.push_back(a);
  starts.push_back(n - tile);
  return starts;
}

std::vector<TilePlacement> tile_and_stitch(Shape3 shape, int tile, int overlap) {
  check_tiling(shape, tile, overlap);
  const auto sx = tile_starts(shape.x, tile, overlap);
  const auto sy = tile_starts(shape.y, tile, overlap);
  const auto sz = tile_starts(shape.z, tile, overlap);
  const Shape3 size{std::min(tile, shape.x), std::min(tile, shape.y), std::min(tile, shape.z)};
  std::vector<TilePlacement> out;
  for (int a : sx)
    for (int b : sy)
      for (int c : sz) out.push_back({{a, b, c}, size});
  return out;
}

std::vector<std::vector<double>> axis_blend_weights(int n, int out_len, int tile, int overlap) {
  const auto starts = tile_starts(n, tile, overlap);
  const int len = std::min(tile, n);
  const std::size_t nt = starts.size();
  std::vector<std::vector<double>> w(nt, std::vector<double>(static_cast<std::size_t>(out_len), 0.0));
  for (int j = 0; j < out_len; ++j) {
    const double p = align_corners_position(j, out_len, n);
    double total = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const double a = starts[t];
      const double b = a + len - 1;
      if (p < a || p > b) continue;
      double v = 1.0;
      if (t > 0) {
        const double r = (starts[t - 1] + len - 1) - a;
        if (p - a < r) v *= ramp(p - a, r);
      }
      if (t + 1 < nt) {
        const double r = b - starts[t + 1];
        if (b - p < r) v *= ramp(b - p, r);
      }
      w[t][static_cast<std::size_t>(j)] = v;
      total += v;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::PreconditionViolated, "HR position not covered by any tile");
    for (std::size_t t = 0; t < nt; ++t) w[t][static_cast<std::size_t>(j)] /= total;
  }
  return w;
}

Volume super_resolve(const SRRequest& req, const Model<float>& model) {
  const Shape3 in = req.lr.shape;
  const Shape3 out = output_shape(req);
  check_tiling(in, req.tile_size, req.tile_overlap);
  if (req.lr.data.size() != 2 * in.voxels()) throw Error(ErrorKind::ShapeMismatch, "LR volume must have two channels");
  if (!all_finite(req.lr.data)) throw Error(ErrorKind::NonFiniteInput, "LR volume has non-finite values");

  std::array<std::vector<std::vector<double>>, 3> w;
  std::array<std::vector<int>, 3> starts;
  for (int a = 0; a < 3; ++a) {
    w[a] = axis_blend_weights(in[a], out[a], req.tile_size, req.tile_overlap);
    starts[a] = tile_starts(in[a], req.tile_size, req.tile_overlap);
  }
  const Shape3 tsize{std::min(req.tile_size, in.x), std::min(req.tile_size, in.y), std::min(req.tile_size, in.z)};

  std::vector<double> acc(out.voxels(), 0.0);
  std::vector<float> tile_lr(2 * tsize.voxels());
  for (std::size_t tx = 0; tx < starts[0].size(); ++tx)
    for (std::size_t ty = 0; ty < starts[1].size(); ++ty)
      for (std::size_t tz = 0; tz < starts[2].size(); ++tz) {
        const std::array<std::size_t, 3> t{tx, ty, tz};
        const std::array<int, 3> origin{starts[0][tx], starts[1][ty], starts[2][tz]};
        for (int c = 0; c < 2; ++c) {
          const auto part = crop(req.lr.channel(c), in, origin, tsize);
          std::copy(part.begin(), part.end(), tile_lr.begin() + static_cast<std::ptrdiff_t>(c * tsize.voxels()));
        }
        const auto input = encoder_input<float>(tile_lr, tsize, model.config);
        const auto fv = encode<float>(input, tsize, model.encoder);

        // HR index range with nonzero weight, and its local coordinates, per axis.
        std::array<int, 3> lo{}, hi{};
        std::array<std::vector<double>, 3> lc;
        for (int a = 0; a < 3; ++a) {
          const auto& wa = w[a][t[a]];
          lo[a] = 0;
          while (lo[a] < out[a] && wa[static_cast<std::size_t>(lo[a])] == 0.0) ++lo[a];
          hi[a] = out[a];
          while (hi[a] > lo[a] && wa[static_cast<std::size_t>(hi[a] - 1)] == 0.0) --hi[a];
          for (int j = lo[a]; j < hi[a]; ++j) lc[a].push_back(local_coord(j, out[a], in[a], origin[a], tsize[a]));
        }
        std::vector<double> coords;
        coords.reserve(3 * static_cast<std::size_t>(hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]));
        for (int i = lo[0]; i < hi[0]; ++i)
          for (int j = lo[1]; j < hi[1]; ++j)
            for (int k = lo[2]; k < hi[2]; ++k) {
              coords.push_back(lc[0][static_cast<std::size_t>(i - lo[0])]);
              coords.push_back(lc[1][static_cast<std::size_t>(j - lo[1])]);
              coords.push_back(lc[2][static_cast<std::size_t>(k - lo[2])]);
            }
        const auto vals = query<float>(model, fv, coords, req.query_chunk);
        std::size_t m = 0;
        for (int i = lo[0]; i < hi[0]; ++i) {
          const double wi = w[0][tx][static_cast<std::size_t>(i)];
          for (int j = lo[1]; j < hi[1]; ++j) {
            const double wij = wi * w[1][ty][static_cast<std::size_t>(j)];
            for (int k = lo[2]; k < hi[2]; ++k, ++m)
              acc[out.index(i, j, k)] += wij * w[2][tz][static_cast<std::size_t>(k)] * static_cast<double>(vals[m]);
          }
        }
      }

  Volume result(out, scaled_spacing(req.lr.spacing_mm, in, out, req.target_shape ? std::nullopt : std::optional(req.scale)),
                Modality::normalized_dwi, Normalization::b0_ratio);
  for (std::size_t i = 0; i < acc.size(); ++i)
    result.data[i] = std::clamp(static_cast<float>(acc[i]), 0.0f, kDwiClipMax);
  return result;
}

Volume super_resolve_untiled(const SRRequest& req, const Model<float>& model) {
  const Shape3 in = req.lr.shape;
  const Shape3 out = output_shape(req);
  const auto input = encoder_input<float>(req.lr.data, in, model.config);
  const auto fv = encode<float>(input, in, model.encoder);
  const CoordGrid grid = make_coord_grid(out);
  const auto vals = query<float>(model, fv, grid.coords, req.query_chunk);
  Volume result(out, scaled_spacing(req.lr.spacing_mm, in, out, req.target_shape ? std::nullopt : std::optional(req.scale)),
                Modality::normalized_dwi, Normalization::b0_ratio);
  for (std::size_t i = 0; i < vals.size(); ++i) result.data[i] = std::clamp(vals[i], 0.0f, kDwiClipMax);
  return result;
}

Volume baseline_resample(const Volume& lr_dwi, double scale) {
  if (!(scale > 0.0)) throw Error(ErrorKind::InvalidScale, "scale must be positive");
  const Shape3 s = lr_dwi.shape;
  const Shape3 target{scaled_extent(s.x, scale), scaled_extent(s.y, scale), scaled_extent(s.z, scale)};
  Volume v = baseline_resample(lr_dwi, target);
  v.spacing_mm = scaled_spacing(lr_dwi.spacing_mm, s, target, scale);
  return v;
}

Volume baseline_resample(const Volume& lr_dwi, Shape3 target) {
  Volume v(target, scaled_spacing(lr_dwi.spacing_mm, lr_dwi.shape, target, std::nullopt), lr_dwi.modality,
           lr_dwi.normalization);
  v.data = resample_tricubic(lr_dwi.data, lr_dwi.shape, target);
  return v;
}

}  // namespace csrvolsr
