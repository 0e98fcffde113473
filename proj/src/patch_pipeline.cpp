#include "csrvolsr/patch_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "csrvolsr/error.hpp"
#include "csrvolsr/resample.hpp"

namespace csrvolsr {
namespace {

constexpr char kCacheMagic[8] = {'C', 'S', 'R', 'P', 'T', 'C', 'H', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorKind::Io, "truncated patch cache");
  return v;
}

std::filesystem::path find_image(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  return {};
}

}  // namespace

int scaled_extent(int lr_extent, double s) {
  return static_cast<int>(std::floor(static_cast<double>(lr_extent) * s + 0.5));
}

std::vector<SourcePatch> extract_patches(const MultiChannelVolume& vol, int count, int size, Rng& rng) {
  const Shape3 s = vol.shape;
  if (count < 1 || size < 1) throw Error(ErrorKind::PreconditionViolated, "count and size must be positive");
  if (s.x < size || s.y < size || s.z < size) {
    throw Error(ErrorKind::VolumeTooSmall,
                "volume " + to_string(s) + " smaller than patch size " + std::to_string(size));
  }
  // Summed-area table of the DWI nonzero indicator.
  const Shape3 t{s.x + 1, s.y + 1, s.z + 1};
  std::vector<std::int32_t> sat(t.voxels(), 0);
  const auto dwi = vol.channel(0);
  for (int i = 1; i <= s.x; ++i) {
    for (int j = 1; j <= s.y; ++j) {
      for (int k = 1; k <= s.z; ++k) {
        const std::int32_t nz = dwi[s.index(i - 1, j - 1, k - 1)] != 0.0f ? 1 : 0;
        sat[t.index(i, j, k)] = nz + sat[t.index(i - 1, j, k)] + sat[t.index(i, j - 1, k)] +
                                sat[t.index(i, j, k - 1)] - sat[t.index(i - 1, j - 1, k)] -
                                sat[t.index(i - 1, j, k - 1)] - sat[t.index(i, j - 1, k - 1)] +
                                sat[t.index(i - 1, j - 1, k - 1)];
      }
    }
  }
  const auto box = [&](int i, int j, int k) {
    const int a = i + size, b = j + size, c = k + size;
    return sat[t.index(a, b, c)] - sat[t.index(i, b, c)] - sat[t.index(a, j, c)] - sat[t.index(a, b, k)] +
           sat[t.index(i, j, c)] + sat[t.index(i, b, k)] + sat[t.index(a, j, k)] - sat[t.index(i, j, k)];
  };
  const double needed = kForegroundFraction * static_cast<double>(size) * size * size;
  std::vector<std::array<int, 3>> valid;
  for (int i = 0; i + size <= s.x; ++i) {
    for (int j = 0; j + size <= s.y; ++j) {
      for (int k = 0; k + size <= s.z; ++k) {
        if (box(i, j, k) >= needed) valid.push_back({i, j, k});
      }
    }
  }
  if (valid.empty()) throw Error(ErrorKind::NoForeground, "no patch position has enough nonzero DWI voxels");

  std::vector<std::array<int, 3>> corners;
  if (valid.size() >= static_cast<std::size_t>(count)) {
    // Partial Fisher-Yates: distinct corners.
    for (int n = 0; n < count; ++n) {
      const auto pick = n + rng.uniform_index(valid.size() - static_cast<std::size_t>(n));
      std::swap(valid[static_cast<std::size_t>(n)], valid[pick]);
      corners.push_back(valid[static_cast<std::size_t>(n)]);
    }
  } else {
    for (int n = 0; n < count; ++n) corners.push_back(valid[rng.uniform_index(valid.size())]);
  }

  std::vector<SourcePatch> patches;
  const Shape3 ps = Shape3::cube(size);
  for (const auto& c : corners) {
    SourcePatch p;
    p.corner = c;
    p.size = size;
    p.data.reserve(MultiChannelVolume::kChannels * ps.voxels());
    for (int ch = 0; ch < MultiChannelVolume::kChannels; ++ch) {
      auto block = crop(vol.channel(ch), s, c, ps);
      p.data.insert(p.data.end(), block.begin(), block.end());
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

double sample_scale(Rng& rng, ScaleRange range) { return rng.uniform(range.lo, range.hi); }

MultiChannelPatchPair make_training_pair(const SourcePatch& patch, double s, std::optional<ScaleRange> enforce,
                                         int lr_size) {
  const Shape3 ps = Shape3::cube(patch.size);
  if (patch.data.size() != MultiChannelVolume::kChannels * ps.voxels()) {
    throw Error(ErrorKind::ShapeMismatch, "source patch must hold two channels of size^3");
  }
  if (enforce && (s < enforce->lo || s > enforce->hi)) {
    throw Error(ErrorKind::ScaleOutOfRange, "scale " + std::to_string(s) + " outside the training range");
  }
  if (!(s > 0.0)) throw Error(ErrorKind::ScaleOutOfRange, "scale must be positive");
  const int L = scaled_extent(lr_size, s);
  if (L > patch.size || L < 1) {
    throw Error(ErrorKind::ScaleOutOfRange,
                "HR extent " + std::to_string(L) + " does not fit in a " + std::to_string(patch.size) + " patch");
  }
  const int off = (patch.size - L) / 2;
  const Shape3 hs = Shape3::cube(L);
  const Shape3 ls = Shape3::cube(lr_size);

  MultiChannelPatchPair pair;
  pair.scale = s;
  pair.corner = patch.corner;
  pair.hr_shape = hs;
  pair.lr_shape = ls;
  pair.lr.reserve(MultiChannelVolume::kChannels * ls.voxels());
  for (int ch = 0; ch < MultiChannelVolume::kChannels; ++ch) {
    std::span<const float> channel(patch.data.data() + ch * ps.voxels(), ps.voxels());
    auto hr = crop(channel, ps, {off, off, off}, hs);
    auto lr = resample_tricubic(hr, hs, ls);
    pair.lr.insert(pair.lr.end(), lr.begin(), lr.end());
    if (ch == 0) pair.hr = std::move(hr);
  }
  return pair;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw Error(ErrorKind::InvalidConfig, "unknown split '" + text + "'");
}

std::vector<ManifestEntry> DatasetManifest::subset(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(e);
  }
  return out;
}

DatasetManifest build_manifest(const std::filesystem::path& root, SplitCounts counts, std::uint64_t seed) {
  if (!std::filesystem::is_directory(root)) throw Error(ErrorKind::MissingFile, root.string());
  std::vector<ManifestEntry> subjects;
  std::vector<std::filesystem::path> dirs;
  for (const auto& d : std::filesystem::directory_iterator(root)) {
    if (d.is_directory()) dirs.push_back(d.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    auto dwi = find_image(d, "dwi");
    auto t1 = find_image(d, "t1");
    if (dwi.empty() || t1.empty()) continue;
    ManifestEntry e;
    e.subject_id = d.filename().string();
    e.dwi_path = dwi;
    e.t1_path = t1;
    subjects.push_back(std::move(e));
  }
  const std::size_t needed = static_cast<std::size_t>(counts.train + counts.val + counts.test);
  if (counts.train < 0 || counts.val < 0 || counts.test < 0 || subjects.size() < needed) {
    throw Error(ErrorKind::InsufficientSubjects, "found " + std::to_string(subjects.size()) +
                                                     " subjects, need " + std::to_string(needed));
  }
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = subjects.size(); i > 1; --i) {
    std::swap(subjects[i - 1], subjects[rng.uniform_index(i)]);
  }
  DatasetManifest m;
  m.seed = seed;
  for (std::size_t i = 0; i < needed; ++i) {
    auto e = subjects[i];
    e.split = i < static_cast<std::size_t>(counts.train)
                  ? Split::train
                  : (i < static_cast<std::size_t>(counts.train + counts.val) ? Split::val : Split::test);
    m.entries.push_back(std::move(e));
  }
  std::stable_sort(m.entries.begin(), m.entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return static_cast<int>(a.split) < static_cast<int>(b.split);
  });
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  const auto base = path.parent_path();
  DatasetManifest m;
  std::set<std::string> ids;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 4 || fields[0].empty()) {
      throw Error(ErrorKind::InvalidConfig,
                  "manifest line " + std::to_string(number) + " needs 4 tab-separated fields: " + line);
    }
    ManifestEntry e;
    e.subject_id = fields[0];
    const auto resolve = [&](const std::string& p) {
      std::filesystem::path q(p);
      return (q.is_relative() && !p.empty()) ? base / q : q;
    };
    e.dwi_path = resolve(fields[1]);
    e.t1_path = resolve(fields[2]);
    try {
      e.split = parse_split(fields[3]);
    } catch (const Error&) {
      throw Error(ErrorKind::InvalidConfig, "manifest line " + std::to_string(number) + ": bad split: " + line);
    }
    e.line = number;
    e.raw = line;
    if (!ids.insert(e.subject_id).second) {
      throw Error(ErrorKind::InvalidConfig, "manifest line " + std::to_string(number) +
                                                ": duplicate subject '" + e.subject_id + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    out << e.subject_id << '\t' << e.dwi_path.string() << '\t' << e.t1_path.string() << '\t'
        << to_string(e.split) << '\n';
  }
}

void write_patch_cache(const std::filesystem::path& path, const PatchCacheFile& cache) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
    out.write(kCacheMagic, sizeof kCacheMagic);
    write_pod<std::uint32_t>(out, 1);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cache.subject_id.size()));
    out.write(cache.subject_id.data(), static_cast<std::streamsize>(cache.subject_id.size()));
    write_pod<std::uint64_t>(out, cache.seed);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cache.patches.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cache.channels));
    const int size = cache.patches.empty() ? 0 : cache.patches.front().size;
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(size));
    for (const auto& p : cache.patches) {
      if (p.size != size) throw Error(ErrorKind::ShapeMismatch, "patches in one cache file differ in size");
      for (int c : p.corner) write_pod<std::int32_t>(out, c);
    }
    for (const auto& p : cache.patches) {
      out.write(reinterpret_cast<const char*>(p.data.data()),
                static_cast<std::streamsize>(p.data.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorKind::Io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

PatchCacheFile read_patch_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) {
    throw Error(ErrorKind::Io, "not a patch cache file: " + path.string());
  }
  if (read_pod<std::uint32_t>(in) != 1) throw Error(ErrorKind::Io, "unsupported patch cache version");
  PatchCacheFile cache;
  cache.subject_id.resize(read_pod<std::uint32_t>(in));
  in.read(cache.subject_id.data(), static_cast<std::streamsize>(cache.subject_id.size()));
  cache.seed = read_pod<std::uint64_t>(in);
  const auto count = read_pod<std::uint32_t>(in);
  cache.channels = static_cast<int>(read_pod<std::uint32_t>(in));
  const auto size = static_cast<int>(read_pod<std::uint32_t>(in));
  cache.patches.resize(count);
  for (auto& p : cache.patches) {
    p.size = size;
    for (int& c : p.corner) c = read_pod<std::int32_t>(in);
  }
  const std::size_t n = static_cast<std::size_t>(cache.channels) * Shape3::cube(size).voxels();
  for (auto& p : cache.patches) {
    p.data.resize(n);
    in.read(reinterpret_cast<char*>(p.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw Error(ErrorKind::Io, "truncated patch cache: " + path.string());
  }
  return cache;
}

}  // namespace csrvolsr
