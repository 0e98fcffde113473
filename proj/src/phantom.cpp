#include "csrvolsr/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "csrvolsr/nifti.hpp"
#include "csrvolsr/rng.hpp"

namespace csrvolsr {

namespace {

struct Wave {
  double kx, ky, kz, phase;
};

std::vector<Wave> draw_waves(Rng& rng, const PhantomOptions& opt) {
  std::vector<Wave> w;
  for (int c = 0; c < opt.components; ++c) {
    double x = rng.normal(), y = rng.normal(), z = rng.normal();
    const double len = std::sqrt(x * x + y * y + z * z) + 1e-12;
    const double f = 2.0 * std::numbers::pi * rng.uniform(opt.min_freq, opt.max_freq) / len;
    w.push_back({x * f, y * f, z * f, rng.uniform(0.0, 2.0 * std::numbers::pi)});
  }
  return w;
}

double field(const std::vector<Wave>& waves, double x, double y, double z) {
  double v = 0.0;
  for (const auto& w : waves) v += std::cos(w.kx * x + w.ky * y + w.kz * z + w.phase);
  return v * std::sqrt(2.0 / static_cast<double>(waves.size()));
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

MultiChannelVolume make_phantom(const PhantomOptions& opt, std::uint64_t seed) {
  Rng rng(seed);
  const auto tissue = draw_waves(rng, opt);
  const auto extra = draw_waves(rng, opt);
  const Shape3 s = opt.shape;
  MultiChannelVolume vol(s, {1.25, 1.25, 1.25});
  auto dwi = vol.channel(0);
  auto t1 = vol.channel(1);
  std::array<double, 3> axes{};
  for (int a = 0; a < 3; ++a) axes[a] = opt.head_fraction * s[a] * (0.9 + 0.2 * rng.uniform());
  for (int i = 0; i < s.x; ++i)
    for (int j = 0; j < s.y; ++j)
      for (int k = 0; k < s.z; ++k) {
        const double dx = (i - 0.5 * (s.x - 1)) / axes[0];
        const double dy = (j - 0.5 * (s.y - 1)) / axes[1];
        const double dz = (k - 0.5 * (s.z - 1)) / axes[2];
        if (dx * dx + dy * dy + dz * dz > 1.0) continue;
        const double f = field(tissue, i, j, k);
        const double g = field(extra, i, j, k);
        const std::size_t p = s.index(i, j, k);
        dwi[p] = static_cast<float>(0.15 + 0.7 * sigmoid(opt.sharpness * f));
        t1[p] = static_cast<float>(0.25 + 0.55 * sigmoid(-opt.sharpness * f) + 0.15 * sigmoid(2.0 * g));
      }
  return vol;
}

void write_phantom_subject(const std::filesystem::path& dir, const MultiChannelVolume& subject) {
  std::filesystem::create_directories(dir);
  Volume dwi(subject.shape, subject.spacing_mm, Modality::normalized_dwi, Normalization::b0_ratio);
  Volume t1(subject.shape, subject.spacing_mm, Modality::t1w, Normalization::raw);
  const auto c0 = subject.channel(0), c1 = subject.channel(1);
  std::copy(c0.begin(), c0.end(), dwi.data.begin());
  std::copy(c1.begin(), c1.end(), t1.data.begin());
  save_volume(dir / "dwi.nii.gz", dwi);
  save_volume(dir / "t1.nii.gz", t1);
}

std::vector<std::string> write_phantom_dataset(const std::filesystem::path& root, int count,
                                               const PhantomOptions& opt, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (int n = 0; n < count; ++n) {
    char name[32];
    std::snprintf(name, sizeof name, "sub-%03d", n);
    write_phantom_subject(root / name, make_phantom(opt, derive_seed(seed, "phantom", static_cast<std::uint64_t>(n))));
    ids.emplace_back(name);
  }
  return ids;
}

}  // namespace csrvolsr
