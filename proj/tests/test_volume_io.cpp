#include "support.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "csrvolsr/error.hpp"
#include "csrvolsr/nifti.hpp"
#include "csrvolsr/volume_io.hpp"

using namespace csrvolsr;
using testing::TempDir;

namespace {

Volume filled(Shape3 s, float v, Modality m = Modality::dwi_b1000) {
  Volume out(s, {1.25, 1.25, 1.25}, m, Normalization::raw);
  std::fill(out.data.begin(), out.data.end(), v);
  return out;
}

// Hand-rolled NIfTI-1 writer used as an independent reference: x-fastest
// voxel order, arbitrary datatype and byte order.
template <typename V>
void write_raw_nifti(const std::filesystem::path& p, Shape3 s, const std::vector<V>& xfast, short datatype,
                     float slope, float inter, bool big_endian) {
  std::vector<char> hdr(352, 0);
  auto put = [&](std::size_t off, auto value) {
    auto bytes = std::bit_cast<std::array<char, sizeof value>>(value);
    if (big_endian) std::reverse(bytes.begin(), bytes.end());
    std::memcpy(hdr.data() + off, bytes.data(), bytes.size());
  };
  put(0, std::int32_t{348});
  const short dims[8] = {3, static_cast<short>(s.x), static_cast<short>(s.y), static_cast<short>(s.z), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(40 + 2 * i, dims[i]);
  put(70, datatype);
  put(72, static_cast<short>(8 * sizeof(V)));
  const float pix[8] = {1.0f, 1.5f, 2.0f, 2.5f, 0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) put(76 + 4 * i, pix[i]);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(hdr.data() + 344, "n+1\0", 4);
  std::ofstream out(p, std::ios::binary);
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (V v : xfast) {
    auto bytes = std::bit_cast<std::array<char, sizeof(V)>>(v);
    if (big_endian) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

double percentile_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("save/load round trip keeps data and spacing") {
  TempDir dir("nifti");
  Volume v({5, 6, 7}, {1.25, 1.5, 2.0}, Modality::t1w, Normalization::raw);
  const auto vals = testing::random_floats(v.data.size(), 3, -5.0, 5.0);
  v.data = vals;
  for (const char* name : {"a.nii", "a.nii.gz"}) {
    save_volume(dir / name, v);
    const Volume back = load_volume(dir / name, Modality::t1w);
    CHECK(back.shape == v.shape);
    CHECK(back.spacing_mm == v.spacing_mm);
    CHECK(testing::same_bits(back.data, v.data));
  }
}

TEST_CASE("4D files split along the fourth axis") {
  TempDir dir("nifti4d");
  std::vector<Volume> frames;
  for (int f = 0; f < 19; ++f) frames.push_back(filled({4, 4, 4}, static_cast<float>(f)));
  save_volumes(dir / "d.nii.gz", frames);
  const auto back = load_volumes(dir / "d.nii.gz");
  REQUIRE(back.size() == 19);
  for (int f = 0; f < 19; ++f) CHECK(back[f].data[17] == static_cast<float>(f));
  CHECK_THROWS_AS(load_volume(dir / "d.nii.gz"), Error);
}

TEST_CASE("foreign datatypes, byte order and scaling") {
  TempDir dir("nifti_raw");
  const Shape3 s{3, 4, 2};
  std::vector<std::int16_t> xfast(s.voxels());
  for (std::size_t i = 0; i < xfast.size(); ++i) xfast[i] = static_cast<std::int16_t>(i * 7 - 20);
  for (bool be : {false, true}) {
    const auto p = dir / (be ? "be.nii" : "le.nii");
    write_raw_nifti(p, s, xfast, 4, 2.0f, 1.0f, be);
    const Volume v = load_volume(p);
    CHECK(v.shape == s);
    CHECK(v.spacing_mm[0] == 1.5);
    CHECK(v.spacing_mm[2] == 2.5);
    for (int i = 0; i < s.x; ++i)
      for (int j = 0; j < s.y; ++j)
        for (int k = 0; k < s.z; ++k) {
          const std::size_t file_index = static_cast<std::size_t>(i + s.x * (j + s.y * k));
          CHECK(v.at(i, j, k) == 2.0f * xfast[file_index] + 1.0f);
        }
  }
}

TEST_CASE("load errors") {
  TempDir dir("nifti_err");
  CHECK_THROWS_WITH_AS(load_volume(dir / "nope.nii"), doctest::Contains("MissingFile"), Error);
  {
    std::ofstream(dir / "junk.nii") << "definitely not an image";
  }
  CHECK_THROWS_WITH_AS(load_volume(dir / "junk.nii"), doctest::Contains("MalformedHeader"), Error);
  std::vector<float> xfast(8, 1.0f);
  xfast[5] = std::nanf("");
  write_raw_nifti(dir / "nan.nii", {2, 2, 2}, xfast, 16, 0.0f, 0.0f, false);
  CHECK_THROWS_WITH_AS(load_volume(dir / "nan.nii"), doctest::Contains("NonFiniteData"), Error);
}

TEST_CASE("normalize_dwi") {
  const Shape3 s{3, 3, 3};
  SUBCASE("constant ratio") {
    const Volume out = normalize_dwi(filled(s, 2.0f), {filled(s, 4.0f, Modality::b0), filled(s, 4.0f, Modality::b0)});
    CHECK(out.modality == Modality::normalized_dwi);
    for (float v : out.data) CHECK(v == 0.5f);
  }
  SUBCASE("eighteen identical b0 volumes divide by that volume") {
    Volume b0 = filled(s, 1.0f, Modality::b0);
    b0.data = testing::random_floats(s.voxels(), 8, 1.0, 3.0);
    Volume b1000 = filled(s, 0.0f);
    b1000.data = testing::random_floats(s.voxels(), 9, 0.0, 1.0);
    const Volume out = normalize_dwi(b1000, std::vector<Volume>(18, b0));
    for (std::size_t i = 0; i < out.data.size(); ++i)
      CHECK(out.data[i] == doctest::Approx(b1000.data[i] / b0.data[i]).epsilon(1e-6));
  }
  SUBCASE("dead b0 voxel gives zero") {
    Volume b0 = filled(s, 1.0f, Modality::b0);
    b0.data[4] = 0.0f;
    const Volume out = normalize_dwi(filled(s, 5.0f), {b0});
    CHECK(out.data[4] == 0.0f);
    CHECK(out.data[0] == kDwiClipMax);  // 5 / 1 clipped
  }
  SUBCASE("numerator scale equivariance where unclipped") {
    Volume b1000 = filled(s, 0.0f);
    b1000.data = testing::random_floats(s.voxels(), 10, 0.0, 0.5);
    const Volume b0 = filled(s, 1.0f, Modality::b0);
    const Volume a = normalize_dwi(b1000, {b0});
    for (auto& v : b1000.data) v *= 3.0f;
    const Volume b = normalize_dwi(b1000, {b0});
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == doctest::Approx(3.0 * a.data[i]));
  }
  CHECK_THROWS_WITH_AS(normalize_dwi(filled(s, 1.0f), {}), doctest::Contains("EmptyB0List"), Error);
  CHECK_THROWS_WITH_AS(normalize_dwi(filled(s, 1.0f), {filled({2, 2, 2}, 1.0f)}), doctest::Contains("ShapeMismatch"),
                       Error);
}

TEST_CASE("normalize_t1") {
  CHECK(normalize_t1(filled({4, 4, 4}, 7.0f, Modality::t1w)).data[10] == 1.0f);

  // 101 values: p99 lands exactly on the 100th order statistic (200).
  Volume v = filled({101, 1, 1}, 200.0f, Modality::t1w);
  v.data[0] = 100.0f;
  v.data[100] = 400.0f;
  const Volume n = normalize_t1(v);
  CHECK(n.normalization == Normalization::percentile_unit);
  CHECK(n.data[0] == doctest::Approx(0.5));
  CHECK(n.data[100] == 1.0f);

  Volume r = filled({6, 6, 6}, 0.0f, Modality::t1w);
  r.data = testing::random_floats(r.data.size(), 12, 0.0, 50.0);
  for (std::size_t i = 0; i < r.data.size(); i += 5) r.data[i] = 0.0f;
  std::vector<double> nz;
  for (float x : r.data)
    if (x != 0.0f) nz.push_back(x);
  const double p99 = percentile_oracle(nz, 0.99);
  const Volume rn = normalize_t1(r);
  for (std::size_t i = 0; i < r.data.size(); ++i)
    CHECK(rn.data[i] == doctest::Approx(std::min(1.0, r.data[i] / p99)).epsilon(1e-6));

  CHECK_THROWS_WITH_AS(normalize_t1(filled({3, 3, 3}, 0.0f, Modality::t1w)), doctest::Contains("AllZeroVolume"), Error);
}

TEST_CASE("pair_anatomical") {
  Volume dwi = filled({8, 8, 8}, 0.0f, Modality::normalized_dwi);
  dwi.data = testing::random_floats(dwi.data.size(), 4);
  Volume t1 = normalize_t1(filled({8, 8, 8}, 3.0f, Modality::t1w));

  const auto pair = pair_anatomical(dwi, t1);
  CHECK(pair.shape == dwi.shape);
  CHECK(std::equal(dwi.data.begin(), dwi.data.end(), pair.channel(0).begin()));
  CHECK(pair.channel(1)[0] == 1.0f);

  Volume big = filled({16, 16, 16}, 2.0f, Modality::t1w);
  big.spacing_mm = {0.625, 0.625, 0.625};
  const auto resampled = pair_anatomical(dwi, normalize_t1(big));
  CHECK(resampled.shape == dwi.shape);
  CHECK(resampled.channel(1)[100] == doctest::Approx(1.0));

  Volume stretched = filled({16, 16, 8}, 2.0f, Modality::t1w);
  CHECK_THROWS_WITH_AS(pair_anatomical(dwi, normalize_t1(stretched)), doctest::Contains("SpacingMismatch"), Error);

  Volume raw = dwi;
  raw.modality = Modality::dwi_b1000;
  CHECK_THROWS_AS(pair_anatomical(raw, t1), Error);
}

TEST_CASE("load_subject normalizes a stacked b1000/b0 file") {
  TempDir dir("subject");
  const Shape3 s{6, 6, 6};
  save_volumes(dir / "dwi.nii.gz", {filled(s, 1.0f), filled(s, 4.0f), filled(s, 4.0f)});
  save_volume(dir / "t1.nii.gz", filled(s, 9.0f, Modality::t1w));
  const auto subj = load_subject(dir / "dwi.nii.gz", dir / "t1.nii.gz");
  CHECK(subj.channel(0)[5] == 0.25f);
  CHECK(subj.channel(1)[5] == 1.0f);

  const auto path = dir / "pair.nii.gz";
  save_multichannel(path, subj);
  const auto back = load_multichannel(path);
  CHECK(testing::same_bits(back.data, subj.data));
}
