#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csrvolsr/coord_field.hpp"
#include "csrvolsr/params.hpp"

namespace csrvolsr {

/// Coordinate-conditioned MLP: input is concat(c, v_c) (3 + 128 values),
/// ReLU after every layer but the last, and a learned projection of the raw
/// input added to the output of ReLU number `skip_at`.
struct DecoderConfig {
  int num_layers = 8;
  int hidden_width = 256;
  int skip_at = 4;

  static constexpr int in_dim = 3 + kFeatureChannels;
  static constexpr int out_dim = 1;

  void validate() const;
  /// True for the reference topology (8 layers, skip after the 4th ReLU).
  bool is_reference_topology() const { return num_layers == 8 && skip_at == 4; }
  bool operator==(const DecoderConfig&) const = default;
};

template <typename T>
struct DecoderParams {
  DecoderConfig config;
  ParamSet<T> tensors;

  std::size_t param_count() const { return tensors.param_count(); }
};

/// "decoder.fc{k}.weight" (out, in) and ".bias" for k = 1..num_layers, plus
/// "decoder.skip.weight" (hidden, 131) and ".bias".
template <typename T>
ParamSet<T> make_decoder_tensors(const DecoderConfig& config);

template <typename T>
DecoderParams<T> init_decoder_params(const DecoderConfig& config, std::uint64_t seed);

/// Forward over M query rows, retaining activations for backward().
template <typename T>
class DecoderPass {
 public:
  explicit DecoderPass(const DecoderParams<T>& params) : params_(params) {}

  /// coords: M x 3, features: M x 128. Returns M intensities.
  std::vector<T> forward(std::span<const double> coords, std::span<const T> features);

  /// Accumulates parameter gradients into `grads` and writes dLoss/dfeatures
  /// (M x 128) into `grad_features` when non-empty.
  void backward(std::span<const T> grad_out, ParamSet<T>& grads, std::span<T> grad_features) const;

 private:
  const DecoderParams<T>& params_;
  std::size_t rows_ = 0;
  std::vector<T> input_;                     // M x 131
  std::vector<std::vector<T>> activations_;  // post-ReLU output of layers 1..L-1
  std::vector<T> skip_sum_;                  // ReLU(skip_at) + skip projection
};

/// Forward only, evaluated in chunks of `chunk` rows. Rows are independent.
template <typename T>
std::vector<T> decode(std::span<const double> coords, std::span<const T> features, const DecoderParams<T>& params,
                      std::size_t chunk = 65536);

}  // namespace csrvolsr
