#include "csrvolsr/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>

#include "csrvolsr/error.hpp"

namespace csrvolsr {
namespace {

static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

enum DataType : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUint16 = 512,
  kUint32 = 768,
  kInt64 = 1024,
  kUint64 = 1280,
};

struct GzCloser {
  void operator()(gzFile f) const {
    if (f) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

void byteswap(void* p, std::size_t width) {
  auto* b = static_cast<unsigned char*>(p);
  std::reverse(b, b + width);
}

class HeaderReader {
 public:
  HeaderReader(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_ + offset, sizeof(T));
    if (swap_) byteswap(&v, sizeof(T));
    return v;
  }

 private:
  const unsigned char* bytes_;
  bool swap_;
};

template <typename T>
void put(unsigned char* bytes, std::size_t offset, T value) {
  std::memcpy(bytes + offset, &value, sizeof(T));
}

int bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUint8:
    case kInt8: return 1;
    case kInt16:
    case kUint16: return 2;
    case kInt32:
    case kUint32:
    case kFloat32: return 4;
    case kFloat64:
    case kInt64:
    case kUint64: return 8;
    default: return 0;
  }
}

template <typename T>
double read_as(const unsigned char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) byteswap(&v, sizeof(T));
  return static_cast<double>(v);
}

double decode_voxel(const unsigned char* p, std::int16_t datatype, bool swap) {
  switch (datatype) {
    case kUint8: return read_as<std::uint8_t>(p, swap);
    case kInt8: return read_as<std::int8_t>(p, swap);
    case kInt16: return read_as<std::int16_t>(p, swap);
    case kUint16: return read_as<std::uint16_t>(p, swap);
    case kInt32: return read_as<std::int32_t>(p, swap);
    case kUint32: return read_as<std::uint32_t>(p, swap);
    case kFloat32: return read_as<float>(p, swap);
    case kFloat64: return read_as<double>(p, swap);
    case kInt64: return read_as<std::int64_t>(p, swap);
    case kUint64: return read_as<std::uint64_t>(p, swap);
    default: return 0.0;
  }
}

void read_exact(gzFile f, void* dst, std::size_t n, const std::filesystem::path& path) {
  auto* out = static_cast<unsigned char*>(dst);
  while (n > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
    const int got = gzread(f, out, chunk);
    if (got <= 0) {
      throw Error(ErrorKind::MalformedHeader, "truncated NIfTI file " + path.string());
    }
    out += got;
    n -= static_cast<std::size_t>(got);
  }
}

}  // namespace

std::vector<Volume> load_volumes(const std::filesystem::path& path, Modality modality) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::MissingFile, path.string());
  }
  GzHandle file(gzopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());

  unsigned char header[kHeaderSize];
  if (gzread(file.get(), header, kHeaderSize) != kHeaderSize) {
    throw Error(ErrorKind::MalformedHeader, "short header in " + path.string());
  }
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, header, 4);
  bool swap = false;
  if (sizeof_hdr != kHeaderSize) {
    byteswap(&sizeof_hdr, 4);
    if (sizeof_hdr != kHeaderSize) {
      throw Error(ErrorKind::MalformedHeader, "not a NIfTI-1 header: " + path.string());
    }
    swap = true;
  }
  const HeaderReader h(header, swap);
  if (std::memcmp(header + 344, "n+1", 4) != 0) {
    throw Error(ErrorKind::MalformedHeader,
                "only single-file NIfTI-1 (magic n+1) is supported: " + path.string());
  }

  const auto ndim = h.get<std::int16_t>(40);
  if (ndim < 1 || ndim > 7) throw Error(ErrorKind::MalformedHeader, "bad dim[0] in " + path.string());
  std::array<std::int64_t, 7> dims{1, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < ndim; ++i) {
    dims[i] = h.get<std::int16_t>(42 + 2 * i);
    if (dims[i] < 1) throw Error(ErrorKind::MalformedHeader, "non-positive dimension in " + path.string());
  }
  for (int i = 4; i < 7; ++i) {
    if (dims[i] != 1) {
      throw Error(ErrorKind::MalformedHeader, "images above 4D are not supported: " + path.string());
    }
  }
  const auto datatype = h.get<std::int16_t>(70);
  const int width = bytes_per_voxel(datatype);
  if (width == 0) {
    throw Error(ErrorKind::MalformedHeader,
                "unsupported datatype " + std::to_string(datatype) + " in " + path.string());
  }
  std::array<double, 3> spacing{};
  for (int i = 0; i < 3; ++i) {
    const double p = std::fabs(h.get<float>(80 + 4 * i));
    spacing[i] = (std::isfinite(p) && p > 0.0) ? p : 1.0;
  }
  const float vox_offset = h.get<float>(108);
  float slope = h.get<float>(112);
  float inter = h.get<float>(116);
  if (!std::isfinite(slope) || slope == 0.0f) {
    slope = 1.0f;
    inter = 0.0f;
  }
  if (!std::isfinite(inter)) inter = 0.0f;

  const long skip = static_cast<long>(vox_offset) - kHeaderSize;
  if (skip < 0) throw Error(ErrorKind::MalformedHeader, "vox_offset inside header: " + path.string());
  if (skip > 0) {
    std::vector<unsigned char> ext(static_cast<std::size_t>(skip));
    read_exact(file.get(), ext.data(), ext.size(), path);
  }

  const Shape3 shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
  const std::size_t frame_voxels = shape.voxels();
  const auto frames = static_cast<std::size_t>(dims[3]);
  std::vector<unsigned char> raw(frame_voxels * frames * static_cast<std::size_t>(width));
  read_exact(file.get(), raw.data(), raw.size(), path);

  std::vector<Volume> out;
  out.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    Volume v(shape, spacing, modality, Normalization::raw);
    // File order is x-fastest; internal order is z-fastest.
    const unsigned char* base = raw.data() + f * frame_voxels * static_cast<std::size_t>(width);
    std::size_t n = 0;
    for (int k = 0; k < shape.z; ++k) {
      for (int j = 0; j < shape.y; ++j) {
        for (int i = 0; i < shape.x; ++i, ++n) {
          const double value = decode_voxel(base + n * static_cast<std::size_t>(width), datatype, swap);
          v.at(i, j, k) = static_cast<float>(value * slope + inter);
        }
      }
    }
    if (!all_finite(v.data)) {
      throw Error(ErrorKind::NonFiniteData, "NaN/Inf voxel in " + path.string());
    }
    out.push_back(std::move(v));
  }
  return out;
}

Volume load_volume(const std::filesystem::path& path, Modality modality) {
  auto frames = load_volumes(path, modality);
  if (frames.size() != 1) {
    throw Error(ErrorKind::MalformedHeader,
                "expected a 3D image, found " + std::to_string(frames.size()) + " frames in " + path.string());
  }
  return std::move(frames.front());
}

void save_volumes(const std::filesystem::path& path, const std::vector<Volume>& frames) {
  if (frames.empty()) throw Error(ErrorKind::PreconditionViolated, "no frames to write");
  const Shape3 shape = frames.front().shape;
  for (const auto& f : frames) {
    if (!(f.shape == shape)) throw Error(ErrorKind::ShapeMismatch, "frames differ in shape");
  }
  if (shape.x > 32767 || shape.y > 32767 || shape.z > 32767 || frames.size() > 32767) {
    throw Error(ErrorKind::PreconditionViolated, "dimension exceeds NIfTI-1 limits");
  }

  unsigned char header[kDataOffset] = {};
  put<std::int32_t>(header, 0, kHeaderSize);
  put<char>(header, 38, 'r');
  const bool is4d = frames.size() > 1;
  put<std::int16_t>(header, 40, is4d ? 4 : 3);
  put<std::int16_t>(header, 42, static_cast<std::int16_t>(shape.x));
  put<std::int16_t>(header, 44, static_cast<std::int16_t>(shape.y));
  put<std::int16_t>(header, 46, static_cast<std::int16_t>(shape.z));
  put<std::int16_t>(header, 48, static_cast<std::int16_t>(frames.size()));
  for (int i = 4; i < 7; ++i) put<std::int16_t>(header, 42 + 2 * i, 1);
  put<std::int16_t>(header, 70, kFloat32);
  put<std::int16_t>(header, 72, 32);
  const auto& sp = frames.front().spacing_mm;
  put<float>(header, 76, 1.0f);  // qfac
  for (int i = 0; i < 3; ++i) put<float>(header, 80 + 4 * i, static_cast<float>(sp[i]));
  put<float>(header, 92, 1.0f);
  put<float>(header, 108, static_cast<float>(kDataOffset));
  put<float>(header, 112, 1.0f);
  put<char>(header, 123, 2 | 8);  // mm, seconds
  put<std::int16_t>(header, 254, 1);  // sform: scanner anatomical, diagonal affine
  put<float>(header, 280, static_cast<float>(sp[0]));
  put<float>(header, 296 + 4, static_cast<float>(sp[1]));
  put<float>(header, 312 + 8, static_cast<float>(sp[2]));
  std::memcpy(header + 344, "n+1", 4);

  const bool gz = path.extension() == ".gz";
  GzHandle file(gzopen(path.c_str(), gz ? "wb6" : "wbT"));
  if (!file) throw Error(ErrorKind::Io, "cannot write " + path.string());
  if (gzwrite(file.get(), header, kDataOffset) != kDataOffset) {
    throw Error(ErrorKind::Io, "write failed: " + path.string());
  }
  std::vector<float> plane;
  for (const auto& f : frames) {
    plane.resize(static_cast<std::size_t>(shape.x) * static_cast<std::size_t>(shape.y));
    for (int k = 0; k < shape.z; ++k) {
      std::size_t n = 0;
      for (int j = 0; j < shape.y; ++j) {
        for (int i = 0; i < shape.x; ++i) plane[n++] = f.at(i, j, k);
      }
      const auto bytes = static_cast<unsigned>(plane.size() * sizeof(float));
      if (gzwrite(file.get(), plane.data(), bytes) != static_cast<int>(bytes)) {
        throw Error(ErrorKind::Io, "write failed: " + path.string());
      }
    }
  }
  if (gzclose(file.release()) != Z_OK) throw Error(ErrorKind::Io, "close failed: " + path.string());
}

void save_volume(const std::filesystem::path& path, const Volume& volume) {
  save_volumes(path, {volume});
}

void save_multichannel(const std::filesystem::path& path, const MultiChannelVolume& volume) {
  std::vector<Volume> frames;
  for (int c = 0; c < MultiChannelVolume::kChannels; ++c) {
    Volume v(volume.shape, volume.spacing_mm, c == 0 ? Modality::normalized_dwi : Modality::t1w,
             c == 0 ? Normalization::b0_ratio : Normalization::percentile_unit);
    auto ch = volume.channel(c);
    std::copy(ch.begin(), ch.end(), v.data.begin());
    frames.push_back(std::move(v));
  }
  save_volumes(path, frames);
}

}  // namespace csrvolsr
