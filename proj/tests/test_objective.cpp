#include "oracles.hpp"
#include "support.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "csrvolsr/error.hpp"
#include "csrvolsr/objective.hpp"

using namespace csrvolsr;
using cd = std::complex<double>;


TEST_CASE("recon_loss") {
  const std::vector<double> a = {0.0, 1.0}, b = {1.0, 3.0};
  CHECK(recon_loss<double>(a, b) == 1.5);
  CHECK(recon_loss<double>(a, a) == 0.0);
  const auto x = testing::random_values(64, 1);
  std::vector<double> y(x);
  for (auto& v : y) v += 0.5;
  CHECK(recon_loss<double>(y, x) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_WITH_AS(recon_loss<double>(a, x), doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("forward_dft against the brute-force oracle") {
  for (Shape3 s : {Shape3{4, 4, 4}, Shape3{3, 5, 2}, Shape3{1, 1, 7}}) {
    const auto f = testing::random_values(s.voxels(), 2);
    const auto got = forward_dft<double>(f, s);
    const auto want = oracle::dft(f, s);
    REQUIRE(got.bins.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.bins[i] - want[i]) < 1e-9);

    // Hermitian symmetry of a real input.
    for (int a = 0; a < s.x; ++a)
      for (int b = 0; b < s.y; ++b)
        for (int c = 0; c < s.z; ++c) {
          const cd k = got.bins[s.index(a, b, c)];
          const cd m = got.bins[s.index((s.x - a) % s.x, (s.y - b) % s.y, (s.z - c) % s.z)];
          CHECK(std::abs(k - std::conj(m)) < 1e-5);
        }
  }
  const std::vector<float> ff = testing::random_floats(27, 3);
  CHECK(forward_dft<float>(ff, Shape3::cube(3)).bins.size() == 27);
}

TEST_CASE("freq_loss: oracle, offsets, batches, shift sensitivity") {
  const Shape3 s = Shape3::cube(4);
  const auto p = testing::random_values(s.voxels(), 4);
  const auto t = testing::random_values(s.voxels(), 5);
  CHECK(freq_loss<double>(p, t, s) == doctest::Approx(oracle::freq_loss(p, t, s)).epsilon(1e-10));
  CHECK(freq_loss<double>(p, p, s) == 0.0);

  std::vector<double> off(t);
  for (auto& v : off) v += 0.3;
  CHECK(freq_loss<double>(off, t, s) == doctest::Approx(0.3).epsilon(1e-12));
  const auto r = total_loss<double>(off, t, s);
  CHECK(r.lambda_k == 0.01);
  CHECK(r.l_r == doctest::Approx(0.3));
  CHECK(r.l_k == doctest::Approx(0.3));
  CHECK(r.l_f == doctest::Approx(1.01 * 0.3));
  CHECK(r.l_f == r.l_r + r.lambda_k * r.l_k);
  const auto z = total_loss<double>(off, t, s, 0.0);
  CHECK(z.l_f == z.l_r);
  const auto same = total_loss<double>(t, t, s);
  CHECK(same.l_r == 0.0);
  CHECK(same.l_k == 0.0);
  CHECK(same.l_f == 0.0);

  // A pure complex exponential difference of amplitude a lands in one bin.
  const Shape3 e{4, 4, 4};
  std::vector<double> wave(e.voxels());
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y)
      for (int zz = 0; zz < 4; ++zz) wave[e.index(x, y, zz)] = 0.7 * std::cos(2.0 * std::numbers::pi * x / 4.0);
  std::vector<double> zero(e.voxels(), 0.0);
  CHECK(freq_loss<double>(wave, zero, e) == doctest::Approx(oracle::freq_loss(wave, zero, e)).epsilon(1e-10));
  CHECK(freq_loss<double>(wave, zero, e) == doctest::Approx(2 * 0.35 * 64 / 64.0));

  // Batch mean over patches.
  std::vector<double> pb(p), tb(t);
  pb.insert(pb.end(), off.begin(), off.end());
  tb.insert(tb.end(), t.begin(), t.end());
  CHECK(freq_loss<double>(pb, tb, s) == doctest::Approx(0.5 * (oracle::freq_loss(p, t, s) + 0.3)));
  CHECK_THROWS_WITH_AS(freq_loss<double>(pb, t, s), doctest::Contains("ShapeMismatch"), Error);

  // Circular shift of pred alone changes the loss.
  std::vector<double> shifted(p.size());
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y)
      for (int zz = 0; zz < 4; ++zz) shifted[s.index((x + 1) % 4, y, zz)] = p[s.index(x, y, zz)];
  CHECK(freq_loss<double>(shifted, t, s) != doctest::Approx(freq_loss<double>(p, t, s)));
  CHECK(freq_loss<double>(p, t, s) > 0.0);
}

TEST_CASE("patch_loss gradients match central differences") {
  const Shape3 s{4, 4, 4};
  const auto p = testing::random_values(s.voxels(), 6);
  const auto t = testing::random_values(s.voxels(), 7);
  const auto pl = patch_loss<double>(p, t, s, true);
  CHECK(pl.mean_abs == doctest::Approx(recon_loss<double>(p, t)));
  CHECK(pl.mean_spectral == doctest::Approx(freq_loss<double>(p, t, s)));
  const double h = 1e-6;
  double worst_abs = 0.0, worst_spec = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto up = p, down = p;
    up[i] += h;
    down[i] -= h;
    const double na = (recon_loss<double>(up, t) - recon_loss<double>(down, t)) / (2 * h);
    const double ns = (freq_loss<double>(up, t, s) - freq_loss<double>(down, t, s)) / (2 * h);
    worst_abs = std::max(worst_abs, std::abs(na - pl.grad_abs[i]) / std::max(std::abs(na), 1e-12));
    worst_spec = std::max(worst_spec, std::abs(ns - pl.grad_spectral[i]) / std::max(std::abs(ns), 1e-12));
  }
  CHECK(worst_abs < 1e-4);
  CHECK(worst_spec < 1e-4);

  const auto ns = patch_loss<double>(p, t, s, true, false);
  CHECK(ns.mean_spectral == 0.0);
  CHECK(ns.grad_abs == pl.grad_abs);
}
