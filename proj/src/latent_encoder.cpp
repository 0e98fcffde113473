#include "csrvolsr/latent_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "csrvolsr/error.hpp"
#include "csrvolsr/rng.hpp"

namespace csrvolsr {
namespace {

std::string rdb_name(int d, int c) { return "rdb" + std::to_string(d + 1) + ".conv" + std::to_string(c + 1); }
std::string lff_name(int d) { return "rdb" + std::to_string(d + 1) + ".lff"; }

template <typename T>
void relu_inplace(T* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
}

}  // namespace

void EncoderConfig::validate() const {
  if (num_blocks < 1 || convs_per_block < 1 || growth_rate < 1 || base_channels < 1 || in_channels < 1) {
    throw Error(ErrorKind::InvalidConfig, "encoder block, conv, growth and channel counts must all be >= 1");
  }
}

std::vector<EncoderLayer> encoder_layers(const EncoderConfig& cfg) {
  cfg.validate();
  const int g0 = cfg.base_channels;
  const int g = cfg.growth_rate;
  std::vector<EncoderLayer> layers;
  layers.push_back({"sfe1", {cfg.in_channels, g0, 3}});
  layers.push_back({"sfe2", {g0, g0, 3}});
  for (int d = 0; d < cfg.num_blocks; ++d) {
    for (int c = 0; c < cfg.convs_per_block; ++c) layers.push_back({rdb_name(d, c), {g0 + c * g, g, 3}});
    layers.push_back({lff_name(d), {g0 + cfg.convs_per_block * g, g0, 1}});
  }
  layers.push_back({"gff1", {cfg.num_blocks * g0, g0, 1}});
  layers.push_back({"gff2", {g0, g0, 3}});
  layers.push_back({"out", {g0, EncoderConfig::out_channels, 3}});
  return layers;
}

template <typename T>
ParamSet<T> make_encoder_tensors(const EncoderConfig& config) {
  ParamSet<T> set;
  for (const auto& layer : encoder_layers(config)) {
    const auto& g = layer.geometry;
    set.add("encoder." + layer.name + ".weight", {g.out_channels, g.in_channels, g.kernel, g.kernel, g.kernel});
    set.add("encoder." + layer.name + ".bias", {g.out_channels});
  }
  return set;
}

template <typename T>
EncoderParams<T> init_encoder_params(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams<T> p{config, make_encoder_tensors<T>(config)};
  Rng rng(seed);
  for (const auto& layer : encoder_layers(config)) {
    const auto& g = layer.geometry;
    const double bound = 1.0 / std::sqrt(static_cast<double>(g.in_channels) * g.kernel * g.kernel * g.kernel);
    for (auto& w : p.tensors["encoder." + layer.name + ".weight"].data) w = static_cast<T>(rng.uniform(-bound, bound));
  }
  return p;
}

template <typename T>
void EncoderPass<T>::conv(const std::string& name, const T* in, T* out) const {
  const auto& w = params_.tensors["encoder." + name + ".weight"];
  const auto& b = params_.tensors["encoder." + name + ".bias"];
  const ConvGeometry g{w.shape[1], w.shape[0], w.shape[2]};
  conv3d_forward(in, shape_, w.data.data(), b.data.data(), g, out);
}

template <typename T>
void EncoderPass<T>::conv_back(const std::string& name, const T* in, const T* grad_out, ParamSet<T>& grads,
                               T* grad_in) const {
  const auto& w = params_.tensors["encoder." + name + ".weight"];
  const ConvGeometry g{w.shape[1], w.shape[0], w.shape[2]};
  conv3d_backward(in, shape_, w.data.data(), g, grad_out, grads["encoder." + name + ".weight"].data.data(),
                  grads["encoder." + name + ".bias"].data.data(), grad_in);
}

template <typename T>
FeatureVolume<T> EncoderPass<T>::forward(std::span<const T> lr, Shape3 shape) {
  const auto& cfg = params_.config;
  if (shape.x < 1 || shape.y < 1 || shape.z < 1) {
    throw Error(ErrorKind::ShapeTooSmall, "encoder input must have every spatial extent >= 1");
  }
  const std::size_t vox = shape.voxels();
  if (lr.size() != static_cast<std::size_t>(cfg.in_channels) * vox) {
    throw Error(ErrorKind::ShapeMismatch, "encoder expects " + std::to_string(cfg.in_channels) +
                                              " channels of " + to_string(shape));
  }
  shape_ = shape;
  const int g0 = cfg.base_channels;
  const int g = cfg.growth_rate;
  const int C = cfg.convs_per_block;
  const int D = cfg.num_blocks;

  input_.assign(lr.begin(), lr.end());
  shallow1_.assign(static_cast<std::size_t>(g0) * vox, T(0));
  shallow2_.assign(static_cast<std::size_t>(g0) * vox, T(0));
  conv("sfe1", input_.data(), shallow1_.data());
  conv("sfe2", shallow1_.data(), shallow2_.data());

  blocks_.assign(static_cast<std::size_t>(D), {});
  block_outputs_.assign(static_cast<std::size_t>(D) * g0 * vox, T(0));
  const T* block_in = shallow2_.data();
  for (int d = 0; d < D; ++d) {
    auto& buf = blocks_[static_cast<std::size_t>(d)];
    buf.assign(static_cast<std::size_t>(g0 + C * g) * vox, T(0));
    std::copy(block_in, block_in + static_cast<std::size_t>(g0) * vox, buf.begin());
    for (int c = 0; c < C; ++c) {
      T* slot = buf.data() + static_cast<std::size_t>(g0 + c * g) * vox;
      conv(rdb_name(d, c), buf.data(), slot);
      relu_inplace(slot, static_cast<std::size_t>(g) * vox);
    }
    T* out = block_outputs_.data() + static_cast<std::size_t>(d) * g0 * vox;
    conv(lff_name(d), buf.data(), out);
    for (std::size_t i = 0; i < static_cast<std::size_t>(g0) * vox; ++i) out[i] += buf[i];
    block_in = out;
  }

  fused_.assign(static_cast<std::size_t>(g0) * vox, T(0));
  global_.assign(static_cast<std::size_t>(g0) * vox, T(0));
  conv("gff1", block_outputs_.data(), fused_.data());
  conv("gff2", fused_.data(), global_.data());
  for (std::size_t i = 0; i < global_.size(); ++i) global_[i] += shallow1_[i];

  std::vector<T> out(static_cast<std::size_t>(EncoderConfig::out_channels) * vox);
  conv("out", global_.data(), out.data());
  FeatureVolume<T> fv(shape);
  for (int ch = 0; ch < EncoderConfig::out_channels; ++ch) {
    const T* src = out.data() + static_cast<std::size_t>(ch) * vox;
    for (std::size_t v = 0; v < vox; ++v) fv.features[v * kFeatureChannels + static_cast<std::size_t>(ch)] = src[v];
  }
  return fv;
}

template <typename T>
void EncoderPass<T>::backward(std::span<const T> grad_features, ParamSet<T>& grads) const {
  const auto& cfg = params_.config;
  const std::size_t vox = shape_.voxels();
  const int g0 = cfg.base_channels;
  const int g = cfg.growth_rate;
  const int C = cfg.convs_per_block;
  const int D = cfg.num_blocks;
  const std::size_t n0 = static_cast<std::size_t>(g0) * vox;

  std::vector<T> d_out(static_cast<std::size_t>(EncoderConfig::out_channels) * vox);
  for (int ch = 0; ch < EncoderConfig::out_channels; ++ch) {
    T* dst = d_out.data() + static_cast<std::size_t>(ch) * vox;
    for (std::size_t v = 0; v < vox; ++v) dst[v] = grad_features[v * kFeatureChannels + static_cast<std::size_t>(ch)];
  }

  std::vector<T> d_global(n0, T(0));
  conv_back("out", global_.data(), d_out.data(), grads, d_global.data());
  std::vector<T> d_shallow1 = d_global;  // global residual
  std::vector<T> d_fused(n0, T(0));
  conv_back("gff2", fused_.data(), d_global.data(), grads, d_fused.data());
  std::vector<T> d_block_outputs(block_outputs_.size(), T(0));
  conv_back("gff1", block_outputs_.data(), d_fused.data(), grads, d_block_outputs.data());

  std::vector<T> d_buf;
  std::vector<T> d_slot;
  for (int d = D - 1; d >= 0; --d) {
    const auto& buf = blocks_[static_cast<std::size_t>(d)];
    const T* d_block_out = d_block_outputs.data() + static_cast<std::size_t>(d) * n0;
    d_buf.assign(buf.size(), T(0));
    // Local residual: the block input receives the output gradient directly.
    std::copy(d_block_out, d_block_out + n0, d_buf.begin());
    conv_back(lff_name(d), buf.data(), d_block_out, grads, d_buf.data());
    for (int c = C - 1; c >= 0; --c) {
      const std::size_t offset = static_cast<std::size_t>(g0 + c * g) * vox;
      const std::size_t n = static_cast<std::size_t>(g) * vox;
      d_slot.assign(n, T(0));
      for (std::size_t i = 0; i < n; ++i) d_slot[i] = buf[offset + i] > T(0) ? d_buf[offset + i] : T(0);
      conv_back(rdb_name(d, c), buf.data(), d_slot.data(), grads, d_buf.data());
    }
    if (d > 0) {
      T* prev = d_block_outputs.data() + static_cast<std::size_t>(d - 1) * n0;
      for (std::size_t i = 0; i < n0; ++i) prev[i] += d_buf[i];
    }
  }
  // d_buf now holds the gradient of block 1's input, i.e. of sfe2's output.
  conv_back("sfe2", shallow1_.data(), d_buf.data(), grads, d_shallow1.data());
  conv_back("sfe1", input_.data(), d_shallow1.data(), grads, nullptr);
}

template <typename T>
FeatureVolume<T> encode(std::span<const T> lr, Shape3 shape, const EncoderParams<T>& params) {
  EncoderPass<T> pass(params);
  return pass.forward(lr, shape);
}

template ParamSet<float> make_encoder_tensors<float>(const EncoderConfig&);
template ParamSet<double> make_encoder_tensors<double>(const EncoderConfig&);
template EncoderParams<float> init_encoder_params<float>(const EncoderConfig&, std::uint64_t);
template EncoderParams<double> init_encoder_params<double>(const EncoderConfig&, std::uint64_t);
template class EncoderPass<float>;
template class EncoderPass<double>;
template FeatureVolume<float> encode<float>(std::span<const float>, Shape3, const EncoderParams<float>&);
template FeatureVolume<double> encode<double>(std::span<const double>, Shape3, const EncoderParams<double>&);

}  // namespace csrvolsr
