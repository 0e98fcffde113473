#include "oracles.hpp"
#include "support.hpp"

#include <cmath>

#include "csrvolsr/coord_field.hpp"
#include "csrvolsr/error.hpp"

using namespace csrvolsr;

namespace {

FeatureVolume<double> random_fv(Shape3 s, std::uint64_t seed) {
  FeatureVolume<double> fv(s);
  fv.features = testing::random_values(fv.features.size(), seed);
  return fv;
}

}  // namespace

TEST_CASE("make_coord_grid") {
  const auto g = make_coord_grid({3, 1, 1});
  REQUIRE(g.size() == 3);
  CHECK(g.row(0)[0] == -1.0);
  CHECK(g.row(1)[0] == 0.0);
  CHECK(g.row(2)[0] == 1.0);
  CHECK(g.row(1)[1] == 0.0);

  const auto e = make_coord_grid({2, 2, 2});
  CHECK(e.size() == 8);
  for (double c : e.coords) CHECK(std::abs(c) == 1.0);

  CHECK(make_coord_grid({5, 1, 1}).row(1)[0] == -0.5);

  const auto big = make_coord_grid({7, 11, 13});
  for (int a = 0; a < 3; ++a) {
    CHECK(big.row(0)[a] == -1.0);
    CHECK(big.row(big.size() - 1)[a] == 1.0);
  }
  // Lexicographic (x, y, z) with z fastest.
  CHECK(big.row(1)[2] == axis_coord(1, 13));
  CHECK(big.row(13)[1] == axis_coord(1, 11));
  // Negation symmetry per axis.
  for (int k = 0; k < 13; ++k) CHECK(axis_coord(k, 13) == doctest::Approx(-axis_coord(12 - k, 13)));
}

TEST_CASE("hr_to_lr_coords is the identity") {
  const auto hr = make_coord_grid({20, 20, 20});
  const auto lr = hr_to_lr_coords(hr, {10, 10, 10}, {20, 20, 20});
  CHECK(lr.coords == hr.coords);
  CHECK(lr.row(0)[0] == axis_coord(0, 10));
}

TEST_CASE("sample_features: nodes, midpoints and the trilinear oracle") {
  const Shape3 s{6, 6, 6};
  const auto fv = random_fv(s, 1);

  std::vector<double> q = {axis_coord(2, 6), axis_coord(3, 6), axis_coord(5, 6)};
  std::vector<double> out(kFeatureChannels);
  sample_features<double>(fv, q, out);
  for (int c = 0; c < kFeatureChannels; ++c) CHECK(out[static_cast<std::size_t>(c)] == fv.at(s.index(2, 3, 5))[static_cast<std::size_t>(c)]);

  q = {0.5 * (axis_coord(1, 6) + axis_coord(2, 6)), axis_coord(4, 6), axis_coord(0, 6)};
  sample_features<double>(fv, q, out);
  for (int c = 0; c < kFeatureChannels; ++c) {
    const double mean = 0.5 * (fv.at(s.index(1, 4, 0))[static_cast<std::size_t>(c)] + fv.at(s.index(2, 4, 0))[static_cast<std::size_t>(c)]);
    CHECK(out[static_cast<std::size_t>(c)] == doctest::Approx(mean).epsilon(1e-12));
  }

  const auto coords = testing::random_values(200 * 3, 2);
  std::vector<double> all(200 * kFeatureChannels);
  sample_features<double>(fv, coords, all);
  double err = 0.0;
  for (std::size_t m = 0; m < 200; ++m) {
    const auto want = oracle::trilinear(fv, coords[3 * m], coords[3 * m + 1], coords[3 * m + 2]);
    for (int c = 0; c < kFeatureChannels; ++c)
      err = std::max(err, std::abs(all[m * kFeatureChannels + static_cast<std::size_t>(c)] - want[static_cast<std::size_t>(c)]));
  }
  CHECK(err < 1e-6);
}

TEST_CASE("sample_features: linearity, constants, singleton axes, range") {
  const Shape3 s{4, 1, 5};
  const auto f = random_fv(s, 3);
  const auto g = random_fv(s, 4);
  FeatureVolume<double> h(s);
  for (std::size_t i = 0; i < h.features.size(); ++i) h.features[i] = 2.0 * f.features[i] - 0.5 * g.features[i];
  const auto coords = testing::random_values(30, 5);
  std::vector<double> a(10 * kFeatureChannels), b(a.size()), c(a.size());
  sample_features<double>(f, coords, a);
  sample_features<double>(g, coords, b);
  sample_features<double>(h, coords, c);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(c[i] == doctest::Approx(2.0 * a[i] - 0.5 * b[i]));

  FeatureVolume<float> k(s);
  std::fill(k.features.begin(), k.features.end(), 0.3f);
  std::vector<float> kc(10 * kFeatureChannels);
  sample_features<float>(k, coords, kc);
  for (float v : kc) CHECK(std::abs(v - 0.3f) < 1e-6);

  std::vector<double> bad = {0.0, 1.0000001, 0.0};
  std::vector<double> one(kFeatureChannels);
  CHECK_THROWS_WITH_AS(sample_features<double>(f, bad, one), doctest::Contains("CoordOutOfRange"), Error);
}

TEST_CASE("sample_features_backward is the adjoint") {
  const Shape3 s{5, 3, 4};
  const auto fv = random_fv(s, 6);
  const auto coords = testing::random_values(40 * 3, 7);
  const auto upstream = testing::random_values(40 * kFeatureChannels, 8);
  std::vector<double> fwd(upstream.size());
  sample_features<double>(fv, coords, fwd);
  std::vector<double> grad(fv.features.size(), 0.0);
  sample_features_backward<double>(s, coords, upstream, grad);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < fwd.size(); ++i) lhs += fwd[i] * upstream[i];
  for (std::size_t i = 0; i < grad.size(); ++i) rhs += grad[i] * fv.features[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}
