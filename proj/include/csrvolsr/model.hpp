#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csrvolsr/coord_field.hpp"
#include "csrvolsr/inr_decoder.hpp"
#include "csrvolsr/latent_encoder.hpp"

namespace csrvolsr {

/// Architecture plus the input-channel ablations. With use_t1 = false the
/// anatomical channel is zero-filled (two encoder inputs kept); with
/// strict_one_channel the encoder takes the DWI channel alone.
struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  bool use_t1 = true;
  bool strict_one_channel = false;

  int encoder_channels() const { return strict_one_channel ? 1 : 2; }
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct Model {
  ModelConfig config;
  EncoderParams<T> encoder;
  DecoderParams<T> decoder;

  std::size_t param_count() const { return encoder.param_count() + decoder.param_count(); }

  template <typename U>
  Model<U> cast() const {
    return Model<U>{config, EncoderParams<U>{encoder.config, encoder.tensors.template cast<U>()},
                    DecoderParams<U>{decoder.config, decoder.tensors.template cast<U>()}};
  }
};

template <typename T>
struct ModelGrads {
  ParamSet<T> encoder;
  ParamSet<T> decoder;

  static ModelGrads zeros_for(const Model<T>& model) {
    return {model.encoder.tensors.zeros_like(), model.decoder.tensors.zeros_like()};
  }
};

template <typename T>
Model<T> init_model(ModelConfig config, std::uint64_t seed);

/// Maps a (2, x, y, z) LR block to the encoder's input per the ablation flags.
template <typename T>
std::vector<T> encoder_input(std::span<const float> lr_two_channel, Shape3 shape, const ModelConfig& config);

/// encode -> dense HR coordinate grid -> trilinear features -> decode, keeping
/// what backward() needs.
template <typename T>
class PatchForward {
 public:
  explicit PatchForward(const Model<T>& model) : model_(model), encoder_(model.encoder), decoder_(model.decoder) {}

  /// Prediction on the full grid of `hr_shape`, C-order.
  std::vector<T> forward(std::span<const float> lr_two_channel, Shape3 lr_shape, Shape3 hr_shape);

  /// Accumulates dLoss/dparams given dLoss/dprediction.
  void backward(std::span<const T> grad_pred, ModelGrads<T>& grads) const;

 private:
  const Model<T>& model_;
  EncoderPass<T> encoder_;
  DecoderPass<T> decoder_;
  Shape3 lr_shape_;
  CoordGrid grid_;
};

/// Inference at arbitrary coordinates (M x 3) of an encoded feature volume.
template <typename T>
std::vector<T> query(const Model<T>& model, const FeatureVolume<T>& features, std::span<const double> coords,
                     std::size_t chunk = 65536);

}  // namespace csrvolsr
