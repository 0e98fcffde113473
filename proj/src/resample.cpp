#include "csrvolsr/resample.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace csrvolsr {
namespace {

struct Tap {
  int index;
  double weight;
};

using AxisTaps = std::vector<std::vector<Tap>>;

void add_tap(std::vector<Tap>& taps, int index, double weight) {
  for (auto& t : taps) {
    if (t.index == index) {
      t.weight += weight;
      return;
    }
  }
  taps.push_back({index, weight});
}

// Expresses source sample `i` (possibly one step outside [0, n)) as a
// combination of in-range samples.
void add_extended(std::vector<Tap>& taps, int i, int n, double w) {
  if (i >= 0 && i < n) {
    add_tap(taps, i, w);
  } else if (n == 1) {
    add_tap(taps, 0, w);
  } else if (n == 2) {
    // Linear extrapolation.
    if (i < 0) {
      add_tap(taps, 0, 2.0 * w);
      add_tap(taps, 1, -w);
    } else {
      add_tap(taps, 1, 2.0 * w);
      add_tap(taps, 0, -w);
    }
  } else if (i < 0) {
    add_tap(taps, 0, 3.0 * w);
    add_tap(taps, 1, -3.0 * w);
    add_tap(taps, 2, w);
  } else {
    add_tap(taps, n - 1, 3.0 * w);
    add_tap(taps, n - 2, -3.0 * w);
    add_tap(taps, n - 3, w);
  }
}

AxisTaps cubic_taps(int in_len, int out_len) {
  AxisTaps taps(static_cast<std::size_t>(out_len));
  for (int j = 0; j < out_len; ++j) {
    auto& t = taps[static_cast<std::size_t>(j)];
    if (in_len == 1) {
      t.push_back({0, 1.0});
      continue;
    }
    const double p = align_corners_position(j, out_len, in_len);
    const int i0 = std::min(static_cast<int>(std::floor(p)), in_len - 2);
    const double f = p - i0;
    for (int o = -1; o <= 2; ++o) {
      const double w = keys_kernel(f - o);
      if (w != 0.0) add_extended(t, i0 + o, in_len, w);
    }
    std::sort(t.begin(), t.end(), [](const Tap& a, const Tap& b) { return a.index < b.index; });
  }
  return taps;
}

AxisTaps linear_taps(int in_len, int out_len) {
  AxisTaps taps(static_cast<std::size_t>(out_len));
  for (int j = 0; j < out_len; ++j) {
    auto& t = taps[static_cast<std::size_t>(j)];
    if (in_len == 1) {
      t.push_back({0, 1.0});
      continue;
    }
    const double p = align_corners_position(j, out_len, in_len);
    const int i0 = std::min(static_cast<int>(std::floor(p)), in_len - 2);
    const double f = p - i0;
    t.push_back({i0, 1.0 - f});
    if (f != 0.0) t.push_back({i0 + 1, f});
  }
  return taps;
}

// Applies per-axis taps as three 1D passes (z, then y, then x) in double.
std::vector<float> separable(std::span<const float> src, Shape3 from, Shape3 to,
                             const std::function<AxisTaps(int, int)>& make_taps) {
  const AxisTaps tx = make_taps(from.x, to.x);
  const AxisTaps ty = make_taps(from.y, to.y);
  const AxisTaps tz = make_taps(from.z, to.z);

  const Shape3 s1{from.x, from.y, to.z};
  std::vector<double> a(s1.voxels());
  for (int i = 0; i < from.x; ++i) {
    for (int j = 0; j < from.y; ++j) {
      const float* row = src.data() + from.index(i, j, 0);
      double* out = a.data() + s1.index(i, j, 0);
      for (int k = 0; k < to.z; ++k) {
        double acc = 0.0;
        for (const Tap& t : tz[static_cast<std::size_t>(k)]) acc += t.weight * row[t.index];
        out[k] = acc;
      }
    }
  }
  const Shape3 s2{from.x, to.y, to.z};
  std::vector<double> b(s2.voxels());
  for (int i = 0; i < from.x; ++i) {
    for (int j = 0; j < to.y; ++j) {
      double* out = b.data() + s2.index(i, j, 0);
      for (const Tap& t : ty[static_cast<std::size_t>(j)]) {
        const double* in = a.data() + s1.index(i, t.index, 0);
        for (int k = 0; k < to.z; ++k) out[k] += t.weight * in[k];
      }
    }
  }
  std::vector<float> result(to.voxels());
  std::vector<double> acc(static_cast<std::size_t>(to.z));
  for (int i = 0; i < to.x; ++i) {
    for (int j = 0; j < to.y; ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const Tap& t : tx[static_cast<std::size_t>(i)]) {
        const double* in = b.data() + s2.index(t.index, j, 0);
        for (int k = 0; k < to.z; ++k) acc[static_cast<std::size_t>(k)] += t.weight * in[k];
      }
      float* out = result.data() + to.index(i, j, 0);
      for (int k = 0; k < to.z; ++k) out[k] = static_cast<float>(acc[static_cast<std::size_t>(k)]);
    }
  }
  return result;
}

}  // namespace

double keys_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::fabs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

double align_corners_position(int j, int out_len, int in_len) {
  if (out_len <= 1) return 0.5 * (in_len - 1);
  if (j == out_len - 1) return static_cast<double>(in_len - 1);
  return static_cast<double>(j) * static_cast<double>(in_len - 1) / static_cast<double>(out_len - 1);
}

std::vector<float> resample_tricubic(std::span<const float> src, Shape3 from, Shape3 to) {
  return separable(src, from, to, cubic_taps);
}

std::vector<float> resample_trilinear(std::span<const float> src, Shape3 from, Shape3 to) {
  return separable(src, from, to, linear_taps);
}

}  // namespace csrvolsr
