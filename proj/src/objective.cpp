#include "csrvolsr/objective.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <new>
#include <mutex>

#include "csrvolsr/error.hpp"

namespace csrvolsr {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// The transform runs in an fftw_malloc buffer: FFTW picks codelets by array
// alignment, so planning on arbitrary vector storage would make the rounding
// (and hence training) depend on where the allocator placed the data.
void dft3(std::vector<std::complex<double>>& data, Shape3 s, int sign) {
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * data.size()));
  if (buf == nullptr) throw std::bad_alloc();
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_3d(s.x, s.y, s.z, buf, buf, sign, FFTW_ESTIMATE);
  }
  std::memcpy(buf, data.data(), sizeof(fftw_complex) * data.size());
  fftw_execute(plan);
  std::memcpy(data.data(), buf, sizeof(fftw_complex) * data.size());
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
  fftw_free(buf);
}

template <typename T>
void require_same(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                "prediction has " + std::to_string(a.size()) + " values, target " + std::to_string(b.size()));
  }
}

}  // namespace

template <typename T>
FrequencySpectrum forward_dft(std::span<const T> field, Shape3 shape) {
  if (field.size() != shape.voxels()) throw Error(ErrorKind::ShapeMismatch, "field does not match shape");
  FrequencySpectrum spec{shape, std::vector<std::complex<double>>(field.begin(), field.end())};
  dft3(spec.bins, shape, FFTW_FORWARD);
  return spec;
}

template <typename T>
double recon_loss(std::span<const T> pred, std::span<const T> target) {
  require_same(pred, target);
  if (pred.empty()) throw Error(ErrorKind::ShapeMismatch, "empty prediction");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::fabs(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
  }
  return sum / static_cast<double>(pred.size());
}

template <typename T>
PatchLoss patch_loss(std::span<const T> pred, std::span<const T> target, Shape3 shape, bool with_grad,
                     bool with_spectral) {
  require_same(pred, target);
  const std::size_t n = shape.voxels();
  if (pred.size() != n) throw Error(ErrorKind::ShapeMismatch, "patch does not match shape " + to_string(shape));
  PatchLoss out;
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<std::complex<double>> diff(n);
  double abs_sum = 0.0;
  if (with_grad) out.grad_abs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    abs_sum += std::fabs(d);
    diff[i] = d;
    if (with_grad) out.grad_abs[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
  }
  out.mean_abs = abs_sum * inv_n;
  if (!with_spectral) return out;

  // DFT is linear: DFT(pred) - DFT(target) = DFT(pred - target).
  dft3(diff, shape, FFTW_FORWARD);
  double spec_sum = 0.0;
  for (auto& d : diff) {
    const double mag = std::abs(d);
    spec_sum += mag;
    if (with_grad) d = mag > 0.0 ? d / mag : std::complex<double>(0.0, 0.0);
  }
  out.mean_spectral = spec_sum * inv_n;
  if (with_grad) {
    dft3(diff, shape, FFTW_BACKWARD);
    out.grad_spectral.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.grad_spectral[i] = diff[i].real() * inv_n;
  }
  return out;
}

template <typename T>
double freq_loss(std::span<const T> pred, std::span<const T> target, Shape3 patch_shape) {
  require_same(pred, target);
  const std::size_t n = patch_shape.voxels();
  if (n == 0 || pred.size() % n != 0 || pred.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "buffer is not a whole number of " + to_string(patch_shape) + " patches");
  }
  const std::size_t batch = pred.size() / n;
  double sum = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    sum += patch_loss<T>(pred.subspan(b * n, n), target.subspan(b * n, n), patch_shape, false).mean_spectral;
  }
  return sum / static_cast<double>(batch);
}

template <typename T>
LossReport total_loss(std::span<const T> pred, std::span<const T> target, Shape3 patch_shape, double lambda_k) {
  LossReport r;
  r.lambda_k = lambda_k;
  r.l_r = recon_loss(pred, target);
  r.l_k = freq_loss(pred, target, patch_shape);
  r.l_f = r.l_r + lambda_k * r.l_k;
  return r;
}

template FrequencySpectrum forward_dft<float>(std::span<const float>, Shape3);
template FrequencySpectrum forward_dft<double>(std::span<const double>, Shape3);
template double recon_loss<float>(std::span<const float>, std::span<const float>);
template double recon_loss<double>(std::span<const double>, std::span<const double>);
template double freq_loss<float>(std::span<const float>, std::span<const float>, Shape3);
template double freq_loss<double>(std::span<const double>, std::span<const double>, Shape3);
template LossReport total_loss<float>(std::span<const float>, std::span<const float>, Shape3, double);
template LossReport total_loss<double>(std::span<const double>, std::span<const double>, Shape3, double);
template PatchLoss patch_loss<float>(std::span<const float>, std::span<const float>, Shape3, bool, bool);
template PatchLoss patch_loss<double>(std::span<const double>, std::span<const double>, Shape3, bool, bool);

}  // namespace csrvolsr
