#include "csrvolsr/conv3d.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

namespace csrvolsr {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

constexpr std::size_t kChunkVoxels = 8192;

int planes_per_chunk(Shape3 s) {
  const std::size_t plane = static_cast<std::size_t>(s.y) * s.z;
  return static_cast<int>(std::max<std::size_t>(1, kChunkVoxels / std::max<std::size_t>(plane, 1)));
}

// Gathers the k^3 neighbourhood of x-planes [x0, x1) into a
// (cin * k^3) x ((x1 - x0) * y * z) column matrix.
template <typename T>
void im2col(const T* in, Shape3 s, int cin, int k, int x0, int x1, T* col) {
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(s.y) * s.z;
  const std::size_t vox = s.voxels();
  const std::size_t cols = static_cast<std::size_t>(x1 - x0) * plane;
  std::size_t row = 0;
  for (int ci = 0; ci < cin; ++ci) {
    const T* src = in + static_cast<std::size_t>(ci) * vox;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -r; dz <= r; ++dz, ++row) {
          T* dst = col + row * cols;
          for (int x = x0; x < x1; ++x) {
            const int xs = x + dx;
            for (int y = 0; y < s.y; ++y) {
              T* d = dst + static_cast<std::size_t>(x - x0) * plane + static_cast<std::size_t>(y) * s.z;
              const int ys = y + dy;
              if (xs < 0 || xs >= s.x || ys < 0 || ys >= s.y) {
                std::fill(d, d + s.z, T(0));
                continue;
              }
              const T* srow = src + s.index(xs, ys, 0);
              const int z_lo = std::max(0, -dz);
              const int z_hi = std::min(s.z, s.z - dz);
              for (int z = 0; z < z_lo; ++z) d[z] = T(0);
              for (int z = z_lo; z < z_hi; ++z) d[z] = srow[z + dz];
              for (int z = std::max(z_hi, z_lo); z < s.z; ++z) d[z] = T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, Shape3 s, int cin, int k, int x0, int x1, T* grad_in) {
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(s.y) * s.z;
  const std::size_t vox = s.voxels();
  const std::size_t cols = static_cast<std::size_t>(x1 - x0) * plane;
  std::size_t row = 0;
  for (int ci = 0; ci < cin; ++ci) {
    T* dst = grad_in + static_cast<std::size_t>(ci) * vox;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -r; dz <= r; ++dz, ++row) {
          const T* src = col + row * cols;
          for (int x = x0; x < x1; ++x) {
            const int xs = x + dx;
            if (xs < 0 || xs >= s.x) continue;
            for (int y = 0; y < s.y; ++y) {
              const int ys = y + dy;
              if (ys < 0 || ys >= s.y) continue;
              const T* c = src + static_cast<std::size_t>(x - x0) * plane + static_cast<std::size_t>(y) * s.z;
              T* drow = dst + s.index(xs, ys, 0);
              const int z_lo = std::max(0, -dz);
              const int z_hi = std::min(s.z, s.z - dz);
              for (int z = z_lo; z < z_hi; ++z) drow[z + dz] += c[z];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv3d_forward(const T* in, Shape3 s, const T* weight, const T* bias, ConvGeometry g, T* out) {
  const std::size_t vox = s.voxels();
  const std::size_t plane = static_cast<std::size_t>(s.y) * s.z;
  const int taps = g.kernel * g.kernel * g.kernel;
  const Eigen::Index rows = static_cast<Eigen::Index>(g.in_channels) * taps;
  Eigen::Map<const RowMat<T>> w(weight, g.out_channels, rows);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias, g.out_channels);
  const int step = planes_per_chunk(s);
  std::vector<T> col;
  for (int x0 = 0; x0 < s.x; x0 += step) {
    const int x1 = std::min(s.x, x0 + step);
    const auto cols = static_cast<Eigen::Index>(static_cast<std::size_t>(x1 - x0) * plane);
    StridedMap<T> y(out + static_cast<std::size_t>(x0) * plane, g.out_channels, cols,
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(vox)));
    if (g.kernel == 1) {
      ConstStridedMap<T> xin(in + static_cast<std::size_t>(x0) * plane, g.in_channels, cols,
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(vox)));
      y.noalias() = w * xin;
    } else {
      col.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
      im2col(in, s, g.in_channels, g.kernel, x0, x1, col.data());
      Eigen::Map<const RowMat<T>> c(col.data(), rows, cols);
      y.noalias() = w * c;
    }
    y.colwise() += b;
  }
}

template <typename T>
void conv3d_backward(const T* in, Shape3 s, const T* weight, ConvGeometry g, const T* grad_out, T* grad_weight,
                     T* grad_bias, T* grad_in) {
  const std::size_t vox = s.voxels();
  const std::size_t plane = static_cast<std::size_t>(s.y) * s.z;
  const int taps = g.kernel * g.kernel * g.kernel;
  const Eigen::Index rows = static_cast<Eigen::Index>(g.in_channels) * taps;
  Eigen::Map<const RowMat<T>> w(weight, g.out_channels, rows);
  Eigen::Map<RowMat<T>> dw(grad_weight, g.out_channels, rows);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grad_bias, g.out_channels);
  const int step = planes_per_chunk(s);
  std::vector<T> col;
  std::vector<T> dcol;
  for (int x0 = 0; x0 < s.x; x0 += step) {
    const int x1 = std::min(s.x, x0 + step);
    const auto cols = static_cast<Eigen::Index>(static_cast<std::size_t>(x1 - x0) * plane);
    ConstStridedMap<T> dy(grad_out + static_cast<std::size_t>(x0) * plane, g.out_channels, cols,
                          Eigen::OuterStride<>(static_cast<Eigen::Index>(vox)));
    // Fixed-order sum; see linear_back in the decoder.
    for (int o = 0; o < g.out_channels; ++o) {
      T acc = T(0);
      for (Eigen::Index j = 0; j < cols; ++j) acc += dy(o, j);
      db[o] += acc;
    }
    if (g.kernel == 1) {
      ConstStridedMap<T> xin(in + static_cast<std::size_t>(x0) * plane, g.in_channels, cols,
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(vox)));
      dw.noalias() += dy * xin.transpose();
      if (grad_in) {
        StridedMap<T> dx(grad_in + static_cast<std::size_t>(x0) * plane, g.in_channels, cols,
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(vox)));
        dx.noalias() += w.transpose() * dy;
      }
    } else {
      col.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
      im2col(in, s, g.in_channels, g.kernel, x0, x1, col.data());
      Eigen::Map<const RowMat<T>> c(col.data(), rows, cols);
      dw.noalias() += dy * c.transpose();
      if (grad_in) {
        dcol.resize(col.size());
        Eigen::Map<RowMat<T>> dc(dcol.data(), rows, cols);
        dc.noalias() = w.transpose() * dy;
        col2im_add(dcol.data(), s, g.in_channels, g.kernel, x0, x1, grad_in);
      }
    }
  }
}

template void conv3d_forward<float>(const float*, Shape3, const float*, const float*, ConvGeometry, float*);
template void conv3d_forward<double>(const double*, Shape3, const double*, const double*, ConvGeometry, double*);
template void conv3d_backward<float>(const float*, Shape3, const float*, ConvGeometry, const float*, float*, float*,
                                     float*);
template void conv3d_backward<double>(const double*, Shape3, const double*, ConvGeometry, const double*, double*,
                                      double*, double*);

}  // namespace csrvolsr
