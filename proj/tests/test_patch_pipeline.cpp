#include "support.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "csrvolsr/error.hpp"
#include "csrvolsr/nifti.hpp"
#include "csrvolsr/patch_pipeline.hpp"
#include "csrvolsr/phantom.hpp"
#include "csrvolsr/resample.hpp"

using namespace csrvolsr;
using testing::TempDir;

namespace {

MultiChannelVolume phantom64() {
  PhantomOptions o;
  o.shape = Shape3::cube(64);
  return make_phantom(o, 21);
}

int nonzero_in_box(const MultiChannelVolume& v, std::array<int, 3> c, int size) {
  int n = 0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      for (int k = 0; k < size; ++k) n += v.channel(0)[v.shape.index(c[0] + i, c[1] + j, c[2] + k)] != 0.0f;
  return n;
}

}  // namespace

TEST_CASE("extract_patches: count, size, foreground rule, provenance") {
  const auto vol = phantom64();
  Rng rng(3);
  const auto patches = extract_patches(vol, 9, 40, rng);
  REQUIRE(patches.size() == 9);
  std::set<std::array<int, 3>> corners;
  for (const auto& p : patches) {
    CHECK(p.size == 40);
    CHECK(p.data.size() == 2u * 40 * 40 * 40);
    for (int a = 0; a < 3; ++a) CHECK((p.corner[a] >= 0 && p.corner[a] + 40 <= 64));
    CHECK(nonzero_in_box(vol, p.corner, 40) >= 6400);
    const auto c1 = crop(vol.channel(1), vol.shape, p.corner, Shape3::cube(40));
    CHECK(std::equal(c1.begin(), c1.end(), p.data.begin() + 64000));
    corners.insert(p.corner);
  }
  CHECK(corners.size() == 9);

  Rng again(3);
  const auto twin = extract_patches(vol, 9, 40, again);
  for (std::size_t i = 0; i < 9; ++i) CHECK(twin[i].corner == patches[i].corner);
}

TEST_CASE("extract_patches errors") {
  Rng rng(1);
  MultiChannelVolume zeros(Shape3::cube(42), {1, 1, 1});
  CHECK_THROWS_WITH_AS(extract_patches(zeros, 9, 40, rng), doctest::Contains("NoForeground"), Error);
  MultiChannelVolume small({39, 50, 50}, {1, 1, 1});
  CHECK_THROWS_WITH_AS(extract_patches(small, 9, 40, rng), doctest::Contains("VolumeTooSmall"), Error);
}

TEST_CASE("sample_scale is U(2,3)") {
  Rng rng(99);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double s = sample_scale(rng);
    REQUIRE(s >= 2.0);
    REQUIRE(s <= 3.0);
    sum += s;
  }
  CHECK(std::abs(sum / n - 2.5) < 0.01);
  Rng a(4), b(4);
  for (int i = 0; i < 10; ++i) CHECK(sample_scale(a) == sample_scale(b));
}

TEST_CASE("make_training_pair shapes and degradation") {
  const auto vol = phantom64();
  Rng rng(8);
  const auto patch = extract_patches(vol, 1, 40, rng).front();
  for (auto [s, L] : {std::pair{2.0, 20}, {3.0, 30}, {2.4, 24}, {2.45, 25}, {2.549, 25}}) {
    const auto pair = make_training_pair(patch, s);
    CHECK(pair.hr_shape == Shape3::cube(L));
    CHECK(pair.lr_shape == Shape3::cube(10));
    CHECK(pair.lr.size() == 2000);
    CHECK(pair.hr.size() == static_cast<std::size_t>(L * L * L));

    const int off = (40 - L) / 2;
    const auto hr_oracle = crop(std::span<const float>(patch.data.data(), 64000), Shape3::cube(40), {off, off, off},
                                Shape3::cube(L));
    CHECK(testing::same_bits(pair.hr, hr_oracle));

    const auto lr_dwi = resample_tricubic(pair.hr, pair.hr_shape, pair.lr_shape);
    CHECK(std::equal(lr_dwi.begin(), lr_dwi.end(), pair.lr.begin()));

    const auto again = make_training_pair(patch, s);
    CHECK(testing::same_bits(again.lr, pair.lr));
  }
  CHECK_THROWS_WITH_AS(make_training_pair(patch, 3.5), doctest::Contains("ScaleOutOfRange"), Error);
  CHECK_THROWS_WITH_AS(make_training_pair(patch, 1.9), doctest::Contains("ScaleOutOfRange"), Error);
  CHECK_NOTHROW(make_training_pair(patch, 4.0, std::nullopt));
}

TEST_CASE("integer-scale round trip on band-limited data") {
  // Upsample a smooth 10^3 patch by tricubic, then degrade it back.
  const Shape3 ls = Shape3::cube(10);
  std::vector<float> lr(ls.voxels());
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k)
        lr[ls.index(i, j, k)] = static_cast<float>(0.5 + 0.2 * std::sin(0.3 * i) * std::cos(0.25 * j + 0.1 * k));
  for (int s : {2, 3}) {
    const int L = 10 * s;
    SourcePatch p;
    p.size = L;
    const auto hr = resample_tricubic(lr, ls, Shape3::cube(L));
    p.data = hr;
    p.data.insert(p.data.end(), hr.begin(), hr.end());
    const auto pair = make_training_pair(p, s, std::nullopt);
    double sse = 0.0;
    for (std::size_t i = 0; i < lr.size(); ++i) sse += std::pow(pair.lr[i] - lr[i], 2);
    CHECK(std::sqrt(sse / lr.size()) < 1e-3);
  }
}

TEST_CASE("build_manifest splits subjects deterministically") {
  TempDir root("manifest");
  Volume v(Shape3::cube(2), {1, 1, 1}, Modality::normalized_dwi, Normalization::b0_ratio);
  for (int n = 0; n < 5; ++n) {
    const auto d = root / ("s" + std::to_string(n));
    std::filesystem::create_directories(d);
    save_volume(d / "dwi.nii.gz", v);
    save_volume(d / (n == 4 ? "t1.nii" : "t1.nii.gz"), v);
  }
  std::filesystem::create_directories(root / "not_a_subject");

  const auto m = build_manifest(root.path(), {1, 1, 1}, 7);
  CHECK(m.count(Split::train) == 1);
  CHECK(m.count(Split::val) == 1);
  CHECK(m.count(Split::test) == 1);
  std::set<std::string> ids;
  for (const auto& e : m.entries) ids.insert(e.subject_id);
  CHECK(ids.size() == 3);
  const auto m2 = build_manifest(root.path(), {1, 1, 1}, 7);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m.entries[i].subject_id == m2.entries[i].subject_id);

  const auto all = build_manifest(root.path(), {3, 1, 1}, 7);
  CHECK(all.entries.size() == 5);
  CHECK_THROWS_WITH_AS(build_manifest(root.path(), {70, 10, 20}, 7), doctest::Contains("InsufficientSubjects"), Error);

  const auto path = root / "manifest.tsv";
  write_manifest(path, all);
  const auto back = read_manifest(path);
  REQUIRE(back.entries.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back.entries[i].subject_id == all.entries[i].subject_id);
    CHECK(back.entries[i].split == all.entries[i].split);
    CHECK(std::filesystem::equivalent(back.entries[i].dwi_path, all.entries[i].dwi_path));
  }
}

TEST_CASE("read_manifest validation") {
  TempDir dir("manifest_bad");
  {
    std::ofstream(dir / "rel.tsv") << "# comment\nA\tsub/dwi.nii\tsub/t1.nii\ttrain\n";
  }
  const auto m = read_manifest(dir / "rel.tsv");
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].dwi_path == dir.path() / "sub/dwi.nii");
  CHECK(m.entries[0].line == 2);
  {
    std::ofstream(dir / "dup.tsv") << "A\ta\tb\ttrain\nA\tc\td\tval\n";
    std::ofstream(dir / "split.tsv") << "A\ta\tb\ttraining\n";
    std::ofstream(dir / "fields.tsv") << "A\ta\ttrain\n";
  }
  CHECK_THROWS_WITH_AS(read_manifest(dir / "dup.tsv"), doctest::Contains("duplicate"), Error);
  CHECK_THROWS_WITH_AS(read_manifest(dir / "split.tsv"), doctest::Contains("bad split"), Error);
  CHECK_THROWS_WITH_AS(read_manifest(dir / "fields.tsv"), doctest::Contains("line 1"), Error);
}

TEST_CASE("patch cache round trip") {
  TempDir dir("cache");
  const auto vol = phantom64();
  Rng rng(5);
  PatchCacheFile c;
  c.subject_id = "sub-x";
  c.seed = 1234;
  c.patches = extract_patches(vol, 3, 40, rng);
  write_patch_cache(dir / "x.patches", c);
  const auto back = read_patch_cache(dir / "x.patches");
  CHECK(back.subject_id == "sub-x");
  CHECK(back.seed == 1234);
  REQUIRE(back.patches.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.patches[i].corner == c.patches[i].corner);
    CHECK(testing::same_bits(back.patches[i].data, c.patches[i].data));
  }
  CHECK_THROWS_AS(read_patch_cache(dir / "missing.patches"), Error);
}
