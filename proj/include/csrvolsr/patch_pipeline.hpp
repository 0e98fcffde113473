#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csrvolsr/rng.hpp"
#include "csrvolsr/volume.hpp"

namespace csrvolsr {

inline constexpr int kSourcePatchSize = 40;
inline constexpr int kPatchesPerVolume = 9;
inline constexpr int kLrPatchSize = 10;
inline constexpr double kForegroundFraction = 0.10;

struct ScaleRange {
  double lo = 2.0;
  double hi = 3.0;
};

/// HR edge length for an LR edge at scale s: round-half-up of lr * s.
int scaled_extent(int lr_extent, double s);

/// A (2, size, size, size) block cut from a two-channel volume.
struct SourcePatch {
  std::array<int, 3> corner{};
  int size = kSourcePatchSize;
  std::vector<float> data;
};

/// One training sample: 2-channel LR input, single-channel HR DWI target.
struct MultiChannelPatchPair {
  std::vector<float> lr;
  Shape3 lr_shape;
  std::vector<float> hr;
  Shape3 hr_shape;
  double scale = 0.0;
  std::string source_id;
  std::array<int, 3> corner{};
};

/// Samples `count` patch corners uniformly among positions whose window has
/// at least 10% nonzero DWI voxels (without replacement when enough exist).
std::vector<SourcePatch> extract_patches(const MultiChannelVolume& vol, int count, int size, Rng& rng);

/// s ~ U(range.lo, range.hi).
double sample_scale(Rng& rng, ScaleRange range = {});

/// Central L^3 crop of the DWI channel (L = round(lr_size * s)) as the HR
/// target; both channels of that crop tricubically downsampled to lr_size^3
/// as the LR input. `enforce` restricts s to the training range.
MultiChannelPatchPair make_training_pair(const SourcePatch& patch, double s,
                                         std::optional<ScaleRange> enforce = ScaleRange{},
                                         int lr_size = kLrPatchSize);

enum class Split { train, val, test };
const char* to_string(Split s);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string subject_id;
  std::filesystem::path dwi_path;
  std::filesystem::path t1_path;
  Split split = Split::train;
  int line = 0;
  std::string raw;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::vector<ManifestEntry> subset(Split s) const;
  std::size_t count(Split s) const { return subset(s).size(); }
};

struct SplitCounts {
  int train = 70;
  int val = 10;
  int test = 20;
};

/// Scans `root` for subject directories holding dwi.nii[.gz] and t1.nii[.gz]
/// and splits them at subject level under a seeded shuffle.
DatasetManifest build_manifest(const std::filesystem::path& root, SplitCounts counts, std::uint64_t seed);

/// Tab-separated `subject_id, dwi_path, t1_path, split`; '#' starts a comment.
/// Relative paths resolve against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// One cached volume's patches plus provenance.
struct PatchCacheFile {
  std::string subject_id;
  std::uint64_t seed = 0;
  int channels = MultiChannelVolume::kChannels;
  std::vector<SourcePatch> patches;
};

void write_patch_cache(const std::filesystem::path& path, const PatchCacheFile& cache);
PatchCacheFile read_patch_cache(const std::filesystem::path& path);

}  // namespace csrvolsr
