#include "oracles.hpp"
#include "support.hpp"

#include <cmath>

#include "csrvolsr/error.hpp"
#include "csrvolsr/metrics.hpp"
#include "csrvolsr/phantom.hpp"

using namespace csrvolsr;


TEST_CASE("psnr closed forms") {
  const auto gt = testing::random_floats(1000, 1);
  std::vector<float> a(gt), b(gt), h(gt);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    a[i] = static_cast<float>(double(gt[i]) + 0.1);
    b[i] = static_cast<float>(double(gt[i]) + 0.01);
  }
  CHECK(std::abs(psnr(a, gt).db - 20.0) < 1e-5);
  CHECK(std::abs(psnr(b, gt).db - 40.0) < 1e-4);
  CHECK(psnr(gt, gt).identical);
  CHECK(std::isinf(psnr(gt, gt).value()));
  CHECK_FALSE(psnr(a, gt).identical);
  CHECK(std::abs(psnr(a, gt, 2.0).db - 20.0 - 20.0 * std::log10(2.0)) < 1e-5);

  // Exactly representable offsets give the closed form to 1e-6 dB.
  std::vector<float> zero(64, 0.0f), tenth(64, 0.1f), hund(64, 0.01f);
  CHECK(std::abs(psnr(tenth, zero).db - 10.0 * std::log10(1.0 / (double(0.1f) * double(0.1f)))) < 1e-9);
  CHECK(std::abs(psnr(tenth, zero).db - 20.0) < 1e-6);
  CHECK(std::abs(psnr(hund, zero).db - 40.0) < 1e-6);

  // Halving a constant error adds 20 log10 2.
  std::vector<float> e1(64, 0.25f), e2(64, 0.125f);
  CHECK(psnr(e2, zero).db - psnr(e1, zero).db == doctest::Approx(6.0206).epsilon(1e-5));

  std::vector<std::uint8_t> mask(1000, 0);
  mask[3] = 1;
  std::vector<float> m(gt);
  m[500] += 0.5f;
  CHECK(psnr(m, gt, 1.0, mask).identical);
  CHECK_THROWS_WITH_AS(psnr(zero, gt), doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("ssim3d against the direct windowed oracle") {
  const Shape3 s{14, 13, 12};
  const auto x = testing::random_floats(s.voxels(), 2);
  auto y = testing::random_floats(s.voxels(), 3);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.6f * x[i] + 0.4f * y[i];

  CHECK(ssim3d(x, x, s) == 1.0);
  CHECK(std::abs(ssim3d(x, y, s) - oracle::ssim(x, y, s, 11, 1.5)) < 1e-5);
  CHECK(ssim3d(x, y, s) == ssim3d(y, x, s));
  SsimOptions o;
  o.window = 5;
  o.sigma = 1.0;
  CHECK(std::abs(ssim3d(x, y, s, o) - oracle::ssim(x, y, s, 5, 1.0)) < 1e-5);

  std::vector<std::uint8_t> mask(s.voxels(), 0);
  for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1;
  CHECK(std::abs(ssim3d(x, y, s, {}, mask) - oracle::ssim(x, y, s, 11, 1.5, &mask)) < 1e-5);

  // Inverted structure on a zero-mean field.
  const auto z = testing::random_floats(s.voxels(), 4, -0.5, 0.5);
  std::vector<float> inv(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) inv[i] = 0.3f - z[i];
  CHECK(ssim3d(inv, z, s) < 1.0);
  CHECK(std::abs(ssim3d(inv, z, s) - oracle::ssim(inv, z, s, 11, 1.5)) < 1e-5);

  // Monotone in noise level.
  double prev = 1.0;
  for (double sd : {0.01, 0.05, 0.2}) {
    auto n = testing::random_values(s.voxels(), 5, -1.0, 1.0);
    std::vector<float> noisy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = static_cast<float>(x[i] + sd * n[i]);
    const double v = ssim3d(noisy, x, s);
    CHECK(v < prev);
    CHECK(v >= -1.0);
    prev = v;
  }
  CHECK_THROWS_WITH_AS(ssim3d(x, x, Shape3{14, 13, 12}, SsimOptions{13, 1.5}), doctest::Contains("VolumeTooSmall"),
                       Error);

  const auto g = gaussian_window(11, 1.5);
  double sum = 0.0;
  for (double v : g) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(g[5] > g[4]);
  CHECK(g[0] == doctest::Approx(g[10]));
}

TEST_CASE("mean_std") {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  const auto [m, sd] = mean_std(v);
  CHECK(m == 2.5);
  CHECK(sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  const std::vector<double> one = {7.0};
  CHECK(mean_std(one).second == 0.0);
}

TEST_CASE("evaluate: layout, identical cells, empty split") {
  ModelConfig mc;
  mc.encoder = {1, 1, 4, 4, 2};
  mc.decoder = {8, 16, 4};
  auto model = init_model<float>(mc, 3);

  PhantomOptions po;
  po.shape = Shape3::cube(24);
  std::vector<MultiChannelVolume> subjects = {make_phantom(po, 1), make_phantom(po, 2)};
  EvalOptions opt;
  const auto rep = evaluate(model, subjects, opt);
  CHECK(rep.scales == std::vector<double>{2.0, 3.0, 4.0, 2.4});
  REQUIRE(rep.cells.size() == 8);
  CHECK(rep.cells[0].method == kBaselineMethod);
  CHECK(rep.cells[4].method == kModelMethod);
  const auto& c = rep.cell(kBaselineMethod, 2.4);
  CHECK(c.n == 2);
  CHECK(c.ssim_mean <= 1.0);
  CHECK(std::isfinite(c.psnr_mean));
  CHECK(rep.csv().starts_with("method,scale,psnr_mean,psnr_std,ssim_mean,ssim_std,n\n"));
  CHECK(rep.table().find("2.4x") != std::string::npos);
  CHECK(rep.table().find("Tricubic") != std::string::npos);

  // A constant subject reproduced exactly by a constant-output decoder.
  auto flat = model;
  auto& w8 = flat.decoder.tensors["decoder.fc8.weight"].data;
  std::fill(w8.begin(), w8.end(), 0.0f);
  flat.decoder.tensors["decoder.fc8.bias"].data[0] = 0.5f;
  MultiChannelVolume k(Shape3::cube(20), {1.25, 1.25, 1.25});
  std::fill(k.data.begin(), k.data.end(), 0.5f);
  EvalOptions two;
  two.scales = {2.0};
  const auto id = evaluate(flat, {k}, two);
  CHECK(id.cell(kModelMethod, 2.0).psnr_identical);
  CHECK(id.cell(kModelMethod, 2.0).ssim_mean == 1.0);
  CHECK(id.csv().find("Model,2,INF,INF") != std::string::npos);

  CHECK_THROWS_WITH_AS(evaluate(model, std::vector<MultiChannelVolume>{}, opt), doctest::Contains("EmptySplit"),
                       Error);
  DatasetManifest no_test;
  no_test.entries.push_back({"a", "a.nii", "b.nii", Split::train, 1, ""});
  CHECK_THROWS_WITH_AS(evaluate(model, no_test, opt), doctest::Contains("EmptySplit"), Error);
}
