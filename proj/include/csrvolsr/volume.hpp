#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace csrvolsr {

/// Spatial extent of a 3D lattice. Storage everywhere in this library is
/// C-order over (x, y, z): z is the fastest-varying index.
struct Shape3 {
  int x = 1;
  int y = 1;
  int z = 1;

  std::size_t voxels() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool operator==(const Shape3&) const = default;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(y) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(z) +
           static_cast<std::size_t>(k);
  }

  static Shape3 cube(int n) { return {n, n, n}; }
};

std::string to_string(const Shape3& s);

enum class Modality { dwi_b1000, b0, t1w, normalized_dwi };
enum class Normalization { raw, b0_ratio, percentile_unit };

const char* to_string(Modality m);
const char* to_string(Normalization n);

/// Upper bound of the normalized DWI intensity range.
inline constexpr float kDwiClipMax = 2.0f;

struct Volume {
  Shape3 shape;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  Modality modality = Modality::dwi_b1000;
  Normalization normalization = Normalization::raw;
  std::vector<float> data;

  Volume() = default;
  Volume(Shape3 s, std::array<double, 3> spacing, Modality m, Normalization n)
      : shape(s), spacing_mm(spacing), modality(m), normalization(n), data(s.voxels(), 0.0f) {}

  float& at(int i, int j, int k) { return data[shape.index(i, j, k)]; }
  float at(int i, int j, int k) const { return data[shape.index(i, j, k)]; }
};

/// Two co-registered channels on one lattice: channel 0 is the normalized DWI,
/// channel 1 the normalized anatomical (T1w) image. Channel-major storage.
struct MultiChannelVolume {
  static constexpr int kChannels = 2;

  Shape3 shape;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::vector<float> data;

  MultiChannelVolume() = default;
  MultiChannelVolume(Shape3 s, std::array<double, 3> spacing)
      : shape(s), spacing_mm(spacing), data(kChannels * s.voxels(), 0.0f) {}

  std::span<float> channel(int c) { return {data.data() + c * shape.voxels(), shape.voxels()}; }
  std::span<const float> channel(int c) const {
    return {data.data() + c * shape.voxels(), shape.voxels()};
  }
};

/// Copies the sub-box [origin, origin + size) of a C-order field.
std::vector<float> crop(std::span<const float> field, Shape3 shape, std::array<int, 3> origin,
                        Shape3 size);

bool all_finite(std::span<const float> values);

}  // namespace csrvolsr
