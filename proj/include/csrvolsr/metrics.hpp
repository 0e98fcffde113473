#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csrvolsr/model.hpp"
#include "csrvolsr/patch_pipeline.hpp"
#include "csrvolsr/volume.hpp"

namespace csrvolsr {

/// PSNR in dB; zero error is flagged rather than encoded as a float.
struct Psnr {
  double db = 0.0;
  bool identical = false;  // INF_IDENTICAL

  double value() const;  // +inf when identical
};

/// 10 log10(peak^2 / MSE), optionally over mask != 0 voxels only.
Psnr psnr(std::span<const float> pred, std::span<const float> gt, double peak = 1.0,
          std::span<const std::uint8_t> mask = {});
Psnr psnr(const Volume& pred, const Volume& gt, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Mean local SSIM over every fully contained window position (Gaussian
/// window). With a mask, only positions whose centre lies in the mask count.
double ssim3d(std::span<const float> pred, std::span<const float> gt, Shape3 shape, const SsimOptions& opt = {},
              std::span<const std::uint8_t> mask = {});
double ssim3d(const Volume& pred, const Volume& gt, const SsimOptions& opt = {});

/// Normalised 1D Gaussian of length `window`.
std::vector<double> gaussian_window(int window, double sigma);

struct MetricCell {
  std::string method;
  double scale = 0.0;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  bool psnr_identical = false;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  int n = 0;
};

struct MetricsReport {
  std::vector<double> scales;
  std::vector<MetricCell> cells;  // method-major: baseline row then model row

  const MetricCell& cell(const std::string& method, double scale) const;
  std::string csv() const;
  std::string table() const;
};

inline constexpr const char* kBaselineMethod = "Tricubic";
inline constexpr const char* kModelMethod = "Model";

struct EvalOptions {
  std::vector<double> scales{2.0, 3.0, 4.0, 2.4};
  double peak = 1.0;
  bool mask = true;
  int tile_size = 40;
  int tile_overlap = 8;
  std::size_t query_chunk = 65536;
};

/// Mean and sample standard deviation (n - 1; 0 for a single value).
std::pair<double, double> mean_std(std::span<const double> values);

/// Per subject and scale: crop the HR volume to s * floor(n / s) per axis,
/// degrade it with the training degradation, reconstruct with the model and
/// with tricubic interpolation, and score both against the HR crop.
MetricsReport evaluate(const Model<float>& model, const std::vector<MultiChannelVolume>& subjects,
                       const EvalOptions& opt = {});
MetricsReport evaluate(const Model<float>& model, const DatasetManifest& manifest, const EvalOptions& opt = {});

}  // namespace csrvolsr
