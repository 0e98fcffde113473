#include "csrvolsr/coord_field.hpp"

#include <cmath>

#include "csrvolsr/error.hpp"

namespace csrvolsr {
namespace {

struct AxisWeight {
  int i0;
  int i1;
  double w0;
  double w1;
};

AxisWeight axis_weight(double c, int n) {
  if (!(c >= -1.0 && c <= 1.0)) {
    throw Error(ErrorKind::CoordOutOfRange, "coordinate " + std::to_string(c) + " outside [-1, 1]");
  }
  if (n == 1) return {0, 0, 1.0, 0.0};
  double p = (c + 1.0) * 0.5 * static_cast<double>(n - 1);
  const double nearest = std::round(p);
  if (std::fabs(p - nearest) < 1e-9) p = nearest;
  int i0 = static_cast<int>(std::floor(p));
  if (i0 > n - 2) i0 = n - 2;
  if (i0 < 0) i0 = 0;
  const double f = p - i0;
  return {i0, i0 + 1, 1.0 - f, f};
}

struct Corners {
  std::size_t index[8];
  double weight[8];
};

Corners corners_for(const double* c, Shape3 s) {
  const AxisWeight ax = axis_weight(c[0], s.x);
  const AxisWeight ay = axis_weight(c[1], s.y);
  const AxisWeight az = axis_weight(c[2], s.z);
  Corners out{};
  int n = 0;
  for (int a = 0; a < 2; ++a) {
    const int i = a ? ax.i1 : ax.i0;
    const double wx = a ? ax.w1 : ax.w0;
    for (int b = 0; b < 2; ++b) {
      const int j = b ? ay.i1 : ay.i0;
      const double wy = b ? ay.w1 : ay.w0;
      for (int d = 0; d < 2; ++d) {
        const int k = d ? az.i1 : az.i0;
        const double wz = d ? az.w1 : az.w0;
        out.index[n] = s.index(i, j, k);
        out.weight[n] = wx * wy * wz;
        ++n;
      }
    }
  }
  return out;
}

}  // namespace

double axis_coord(int k, int n) {
  if (n <= 1) return 0.0;
  if (k == 0) return -1.0;
  if (k == n - 1) return 1.0;
  return -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n - 1);
}

CoordGrid make_coord_grid(Shape3 shape) {
  CoordGrid g;
  g.target_shape = shape;
  g.coords.resize(3 * shape.voxels());
  std::size_t m = 0;
  for (int i = 0; i < shape.x; ++i) {
    const double cx = axis_coord(i, shape.x);
    for (int j = 0; j < shape.y; ++j) {
      const double cy = axis_coord(j, shape.y);
      for (int k = 0; k < shape.z; ++k) {
        g.coords[m++] = cx;
        g.coords[m++] = cy;
        g.coords[m++] = axis_coord(k, shape.z);
      }
    }
  }
  return g;
}

CoordGrid hr_to_lr_coords(const CoordGrid& hr_grid, Shape3, Shape3) { return hr_grid; }

template <typename T>
void sample_features(const FeatureVolume<T>& fv, std::span<const double> coords, std::span<T> out) {
  const std::size_t rows = coords.size() / 3;
  if (out.size() != rows * kFeatureChannels) {
    throw Error(ErrorKind::ShapeMismatch, "output buffer must hold M x 128 values");
  }
  for (std::size_t m = 0; m < rows; ++m) {
    const Corners c = corners_for(coords.data() + 3 * m, fv.source_shape);
    T* dst = out.data() + m * kFeatureChannels;
    for (int ch = 0; ch < kFeatureChannels; ++ch) dst[ch] = T(0);
    for (int n = 0; n < 8; ++n) {
      const T w = static_cast<T>(c.weight[n]);
      if (w == T(0)) continue;
      const T* src = fv.features.data() + c.index[n] * kFeatureChannels;
      for (int ch = 0; ch < kFeatureChannels; ++ch) dst[ch] += w * src[ch];
    }
  }
}

template <typename T>
std::vector<T> sample_features(const FeatureVolume<T>& fv, const CoordGrid& grid) {
  std::vector<T> out(grid.size() * kFeatureChannels);
  sample_features<T>(fv, grid.coords, out);
  return out;
}

template <typename T>
void sample_features_backward(Shape3 source_shape, std::span<const double> coords, std::span<const T> grad_out,
                              std::span<T> grad_features) {
  const std::size_t rows = coords.size() / 3;
  for (std::size_t m = 0; m < rows; ++m) {
    const Corners c = corners_for(coords.data() + 3 * m, source_shape);
    const T* g = grad_out.data() + m * kFeatureChannels;
    for (int n = 0; n < 8; ++n) {
      const T w = static_cast<T>(c.weight[n]);
      if (w == T(0)) continue;
      T* dst = grad_features.data() + c.index[n] * kFeatureChannels;
      for (int ch = 0; ch < kFeatureChannels; ++ch) dst[ch] += w * g[ch];
    }
  }
}

template void sample_features<float>(const FeatureVolume<float>&, std::span<const double>, std::span<float>);
template void sample_features<double>(const FeatureVolume<double>&, std::span<const double>, std::span<double>);
template std::vector<float> sample_features<float>(const FeatureVolume<float>&, const CoordGrid&);
template std::vector<double> sample_features<double>(const FeatureVolume<double>&, const CoordGrid&);
template void sample_features_backward<float>(Shape3, std::span<const double>, std::span<const float>,
                                              std::span<float>);
template void sample_features_backward<double>(Shape3, std::span<const double>, std::span<const double>,
                                               std::span<double>);

}  // namespace csrvolsr
