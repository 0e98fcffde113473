#pragma once

#include <span>
#include <vector>

#include "csrvolsr/volume.hpp"

namespace csrvolsr {

/// Keys cubic convolution kernel with a = -0.5.
double keys_kernel(double x);

/// Continuous source position of output sample j under the align-corners
/// convention: first and last samples land on the first and last source
/// voxel centers. A length-1 output samples the source center.
double align_corners_position(int j, int out_len, int in_len);

/// Separable tricubic (Keys, a = -0.5) resampling under align-corners.
/// Out-of-range taps use Keys' boundary extrapolation (3f0 - 3f1 + f2), so
/// constants, linears and quadratics are reproduced up to the boundary.
std::vector<float> resample_tricubic(std::span<const float> src, Shape3 from, Shape3 to);

/// Separable trilinear resampling under align-corners.
std::vector<float> resample_trilinear(std::span<const float> src, Shape3 from, Shape3 to);

}  // namespace csrvolsr
