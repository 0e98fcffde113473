#include "csrvolsr/volume_io.hpp"

#include <algorithm>
#include <cmath>

#include "csrvolsr/error.hpp"
#include "csrvolsr/resample.hpp"

namespace csrvolsr {

Volume normalize_dwi(const Volume& b1000, const std::vector<Volume>& b0s) {
  if (b0s.empty()) throw Error(ErrorKind::EmptyB0List, "at least one b0 volume is required");
  for (const auto& b0 : b0s) {
    if (!(b0.shape == b1000.shape)) {
      throw Error(ErrorKind::ShapeMismatch,
                  "b0 shape " + to_string(b0.shape) + " differs from b1000 " + to_string(b1000.shape));
    }
  }
  Volume out(b1000.shape, b1000.spacing_mm, Modality::normalized_dwi, Normalization::b0_ratio);
  const double inv_count = 1.0 / static_cast<double>(b0s.size());
  for (std::size_t v = 0; v < out.data.size(); ++v) {
    double sum = 0.0;
    for (const auto& b0 : b0s) sum += b0.data[v];
    const double mean_b0 = sum * inv_count;
    if (mean_b0 <= kB0Floor) {
      out.data[v] = 0.0f;
      continue;
    }
    const double ratio = b1000.data[v] / std::max(mean_b0, kB0Floor);
    out.data[v] = static_cast<float>(std::clamp(ratio, 0.0, static_cast<double>(kDwiClipMax)));
  }
  return out;
}

Volume normalize_t1(const Volume& t1) {
  std::vector<float> nonzero;
  nonzero.reserve(t1.data.size());
  for (float v : t1.data) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteData, "T1 contains NaN/Inf");
    if (v < 0.0f) throw Error(ErrorKind::PreconditionViolated, "T1 intensities must be nonnegative");
    if (v > 0.0f) nonzero.push_back(v);
  }
  if (nonzero.empty()) throw Error(ErrorKind::AllZeroVolume, "T1 volume has no nonzero voxel");
  std::sort(nonzero.begin(), nonzero.end());
  const double rank = 0.99 * static_cast<double>(nonzero.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, nonzero.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  const double p99 = nonzero[lo] + frac * (static_cast<double>(nonzero[hi]) - nonzero[lo]);

  Volume out(t1.shape, t1.spacing_mm, Modality::t1w, Normalization::percentile_unit);
  for (std::size_t v = 0; v < out.data.size(); ++v) {
    out.data[v] = static_cast<float>(std::clamp(t1.data[v] / p99, 0.0, 1.0));
  }
  return out;
}

MultiChannelVolume pair_anatomical(const Volume& dwi, const Volume& t1) {
  if (dwi.modality != Modality::normalized_dwi) {
    throw Error(ErrorKind::PreconditionViolated,
                std::string("DWI channel must be NORMALIZED_DWI, got ") + to_string(dwi.modality));
  }
  if (t1.modality != Modality::t1w || t1.normalization != Normalization::percentile_unit) {
    throw Error(ErrorKind::PreconditionViolated, "T1 channel must be percentile-normalized T1W");
  }
  MultiChannelVolume out(dwi.shape, dwi.spacing_mm);
  std::copy(dwi.data.begin(), dwi.data.end(), out.channel(0).begin());
  if (t1.shape == dwi.shape) {
    std::copy(t1.data.begin(), t1.data.end(), out.channel(1).begin());
    return out;
  }
  // Co-registration is assumed; only the field-of-view proportions are checked.
  std::array<double, 3> ratio{};
  for (int a = 0; a < 3; ++a) {
    ratio[a] = (t1.shape[a] * t1.spacing_mm[a]) / (dwi.shape[a] * dwi.spacing_mm[a]);
  }
  const auto [mn, mx] = std::minmax_element(ratio.begin(), ratio.end());
  if (*mx / *mn > 1.10) {
    throw Error(ErrorKind::SpacingMismatch, "T1 and DWI fields of view differ by more than 10% in proportion");
  }
  auto resampled = resample_trilinear(t1.data, t1.shape, dwi.shape);
  std::copy(resampled.begin(), resampled.end(), out.channel(1).begin());
  return out;
}

MultiChannelVolume load_subject(const std::filesystem::path& dwi_path,
                                const std::filesystem::path& t1_path) {
  auto frames = load_volumes(dwi_path, Modality::dwi_b1000);
  Volume dwi;
  if (frames.size() == 1) {
    dwi = std::move(frames.front());
    dwi.modality = Modality::normalized_dwi;
    dwi.normalization = Normalization::b0_ratio;
    for (float& v : dwi.data) v = std::clamp(v, 0.0f, kDwiClipMax);
  } else {
    std::vector<Volume> b0s(std::make_move_iterator(frames.begin() + 1),
                            std::make_move_iterator(frames.end()));
    dwi = normalize_dwi(frames.front(), b0s);
  }
  const Volume t1 = normalize_t1(load_volume(t1_path, Modality::t1w));
  return pair_anatomical(dwi, t1);
}

MultiChannelVolume load_multichannel(const std::filesystem::path& path) {
  auto frames = load_volumes(path);
  if (frames.size() != MultiChannelVolume::kChannels) {
    throw Error(ErrorKind::MalformedHeader, "expected a two-frame (DWI, T1) image: " + path.string());
  }
  MultiChannelVolume out(frames[0].shape, frames[0].spacing_mm);
  for (int c = 0; c < MultiChannelVolume::kChannels; ++c) {
    std::copy(frames[c].data.begin(), frames[c].data.end(), out.channel(c).begin());
  }
  return out;
}

}  // namespace csrvolsr
