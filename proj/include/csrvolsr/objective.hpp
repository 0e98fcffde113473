#pragma once

#include <complex>
#include <span>
#include <vector>

#include "csrvolsr/volume.hpp"

namespace csrvolsr {

inline constexpr double kDefaultLambdaK = 0.01;

struct LossReport {
  double l_r = 0.0;
  double l_k = 0.0;
  double lambda_k = kDefaultLambdaK;
  double l_f = 0.0;
};

/// Unnormalized forward DFT, X[k] = sum_x x[n] exp(-2 pi i k.n / N), in the
/// same C-order layout as the source field.
struct FrequencySpectrum {
  Shape3 shape;
  std::vector<std::complex<double>> bins;
};

template <typename T>
FrequencySpectrum forward_dft(std::span<const T> field, Shape3 shape);

/// Mean absolute difference over all elements.
template <typename T>
double recon_loss(std::span<const T> pred, std::span<const T> target);

/// pred/target hold B consecutive patches of `patch_shape`. Per patch: mean
/// over frequency bins of |DFT(pred) - DFT(target)| (complex modulus); the
/// result is the mean over patches.
template <typename T>
double freq_loss(std::span<const T> pred, std::span<const T> target, Shape3 patch_shape);

/// l_f = l_r + lambda_k * l_k.
template <typename T>
LossReport total_loss(std::span<const T> pred, std::span<const T> target, Shape3 patch_shape,
                      double lambda_k = kDefaultLambdaK);

/// Both loss terms of a single patch, optionally with their gradients with
/// respect to pred (each sized like the patch).
struct PatchLoss {
  double mean_abs = 0.0;
  double mean_spectral = 0.0;
  std::vector<double> grad_abs;
  std::vector<double> grad_spectral;
};

template <typename T>
PatchLoss patch_loss(std::span<const T> pred, std::span<const T> target, Shape3 shape, bool with_grad,
                     bool with_spectral = true);

}  // namespace csrvolsr
