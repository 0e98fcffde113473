#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csrvolsr/conv3d.hpp"
#include "csrvolsr/coord_field.hpp"
#include "csrvolsr/params.hpp"

namespace csrvolsr {

/// Residual dense network hyperparameters. The output width is fixed at 128.
struct EncoderConfig {
  int num_blocks = 4;        // D
  int convs_per_block = 4;   // C
  int growth_rate = 32;      // G
  int base_channels = 64;    // G0
  int in_channels = 2;

  static constexpr int out_channels = kFeatureChannels;
  static constexpr int kernel_size = 3;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderLayer {
  std::string name;
  ConvGeometry geometry;
};

/// Every convolution in forward order: sfe1, sfe2, rdb{d}.conv{c}, rdb{d}.lff,
/// gff1, gff2, out.
std::vector<EncoderLayer> encoder_layers(const EncoderConfig& config);

template <typename T>
struct EncoderParams {
  EncoderConfig config;
  ParamSet<T> tensors;

  std::size_t param_count() const { return tensors.param_count(); }
};

/// Fan-in scaled (Kaiming-uniform, a = sqrt(5)) weights on +-1/sqrt(fan_in),
/// zero biases, deterministic in `seed`.
template <typename T>
EncoderParams<T> init_encoder_params(const EncoderConfig& config, std::uint64_t seed);

/// Zero-valued tensors with the layout of `config` (used for gradients).
template <typename T>
ParamSet<T> make_encoder_tensors(const EncoderConfig& config);

/// One forward evaluation that keeps the activations needed by backward().
template <typename T>
class EncoderPass {
 public:
  explicit EncoderPass(const EncoderParams<T>& params) : params_(params) {}

  /// `lr` is channel-major (in_channels, x, y, z).
  FeatureVolume<T> forward(std::span<const T> lr, Shape3 shape);

  /// `grad_features` is channel-last (V x 128); accumulates into `grads`.
  void backward(std::span<const T> grad_features, ParamSet<T>& grads) const;

 private:
  void conv(const std::string& name, const T* in, T* out) const;
  void conv_back(const std::string& name, const T* in, const T* grad_out, ParamSet<T>& grads, T* grad_in) const;

  const EncoderParams<T>& params_;
  Shape3 shape_;
  std::vector<T> input_;
  std::vector<T> shallow1_;             // sfe1 output, target of the global residual
  std::vector<T> shallow2_;             // sfe2 output, input of block 1
  std::vector<std::vector<T>> blocks_;  // per block: [input | conv outputs]
  std::vector<T> block_outputs_;        // concatenated block outputs (D * G0)
  std::vector<T> fused_;                // gff1 output
  std::vector<T> global_;               // gff2 output + shallow1
};

/// Forward only.
template <typename T>
FeatureVolume<T> encode(std::span<const T> lr, Shape3 shape, const EncoderParams<T>& params);

}  // namespace csrvolsr
