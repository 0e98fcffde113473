#pragma once

#include "csrvolsr/volume.hpp"

namespace csrvolsr {

/// Zero-padded, stride-1 3D convolution with an odd cubic kernel; spatial
/// shape is preserved. Tensors are channel-major (C, x, y, z); weights are
/// (out, in, k, k, k).
struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel * kernel;
  }
};

template <typename T>
void conv3d_forward(const T* in, Shape3 shape, const T* weight, const T* bias, ConvGeometry g, T* out);

/// Accumulates into grad_weight, grad_bias and (when non-null) grad_in.
template <typename T>
void conv3d_backward(const T* in, Shape3 shape, const T* weight, ConvGeometry g, const T* grad_out,
                     T* grad_weight, T* grad_bias, T* grad_in);

}  // namespace csrvolsr
