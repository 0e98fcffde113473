#include "csrvolsr/volume.hpp"

#include <algorithm>
#include <cmath>

#include "csrvolsr/error.hpp"

namespace csrvolsr {

std::string to_string(const Shape3& s) {
  return std::to_string(s.x) + "x" + std::to_string(s.y) + "x" + std::to_string(s.z);
}

const char* to_string(Modality m) {
  switch (m) {
    case Modality::dwi_b1000: return "DWI_B1000";
    case Modality::b0: return "B0";
    case Modality::t1w: return "T1W";
    case Modality::normalized_dwi: return "NORMALIZED_DWI";
  }
  return "?";
}

const char* to_string(Normalization n) {
  switch (n) {
    case Normalization::raw: return "RAW";
    case Normalization::b0_ratio: return "B0_RATIO";
    case Normalization::percentile_unit: return "PERCENTILE_UNIT";
  }
  return "?";
}

std::vector<float> crop(std::span<const float> field, Shape3 shape, std::array<int, 3> origin,
                        Shape3 size) {
  if (field.size() != shape.voxels()) throw Error(ErrorKind::ShapeMismatch, "crop: field size does not match shape");
  for (int a = 0; a < 3; ++a) {
    if (origin[a] < 0 || size[a] < 0 || origin[a] + size[a] > shape[a]) {
      throw Error(ErrorKind::ShapeMismatch, "crop box " + to_string(size) + " exceeds " + to_string(shape));
    }
  }
  std::vector<float> out(size.voxels());
  for (int i = 0; i < size.x; ++i) {
    for (int j = 0; j < size.y; ++j) {
      const float* src = field.data() + shape.index(origin[0] + i, origin[1] + j, origin[2]);
      std::copy(src, src + size.z, out.data() + size.index(i, j, 0));
    }
  }
  return out;
}

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace csrvolsr
