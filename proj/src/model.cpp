#include "csrvolsr/model.hpp"

#include <algorithm>

#include "csrvolsr/error.hpp"
#include "csrvolsr/rng.hpp"

namespace csrvolsr {

template <typename T>
Model<T> init_model(ModelConfig config, std::uint64_t seed) {
  config.encoder.in_channels = config.encoder_channels();
  config.encoder.validate();
  config.decoder.validate();
  return Model<T>{config, init_encoder_params<T>(config.encoder, derive_seed(seed, "init.encoder")),
                  init_decoder_params<T>(config.decoder, derive_seed(seed, "init.decoder"))};
}

template <typename T>
std::vector<T> encoder_input(std::span<const float> lr, Shape3 shape, const ModelConfig& config) {
  const std::size_t vox = shape.voxels();
  if (lr.size() != 2 * vox) throw Error(ErrorKind::ShapeMismatch, "LR input must have two channels");
  if (config.strict_one_channel) return std::vector<T>(lr.begin(), lr.begin() + static_cast<std::ptrdiff_t>(vox));
  std::vector<T> out(lr.begin(), lr.end());
  if (!config.use_t1) std::fill(out.begin() + static_cast<std::ptrdiff_t>(vox), out.end(), T(0));
  return out;
}

template <typename T>
std::vector<T> PatchForward<T>::forward(std::span<const float> lr, Shape3 lr_shape, Shape3 hr_shape) {
  lr_shape_ = lr_shape;
  const auto input = encoder_input<T>(lr, lr_shape, model_.config);
  const FeatureVolume<T> fv = encoder_.forward(input, lr_shape);
  grid_ = hr_to_lr_coords(make_coord_grid(hr_shape), lr_shape, hr_shape);
  const auto feats = sample_features(fv, grid_);
  return decoder_.forward(grid_.coords, feats);
}

template <typename T>
void PatchForward<T>::backward(std::span<const T> grad_pred, ModelGrads<T>& grads) const {
  std::vector<T> d_feats(grid_.size() * kFeatureChannels);
  decoder_.backward(grad_pred, grads.decoder, d_feats);
  std::vector<T> d_volume(lr_shape_.voxels() * kFeatureChannels, T(0));
  sample_features_backward<T>(lr_shape_, grid_.coords, d_feats, d_volume);
  encoder_.backward(d_volume, grads.encoder);
}

template <typename T>
std::vector<T> query(const Model<T>& model, const FeatureVolume<T>& features, std::span<const double> coords,
                     std::size_t chunk) {
  const std::size_t m = coords.size() / 3;
  chunk = std::max<std::size_t>(chunk, 1);
  std::vector<T> out;
  out.reserve(m);
  std::vector<T> feats;
  DecoderPass<T> pass(model.decoder);
  for (std::size_t r0 = 0; r0 < m; r0 += chunk) {
    const std::size_t r1 = std::min(m, r0 + chunk);
    const auto rows = coords.subspan(3 * r0, 3 * (r1 - r0));
    feats.resize((r1 - r0) * kFeatureChannels);
    sample_features<T>(features, rows, feats);
    auto part = pass.forward(rows, feats);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template Model<float> init_model<float>(ModelConfig, std::uint64_t);
template Model<double> init_model<double>(ModelConfig, std::uint64_t);
template std::vector<float> encoder_input<float>(std::span<const float>, Shape3, const ModelConfig&);
template std::vector<double> encoder_input<double>(std::span<const float>, Shape3, const ModelConfig&);
template class PatchForward<float>;
template class PatchForward<double>;
template std::vector<float> query<float>(const Model<float>&, const FeatureVolume<float>&, std::span<const double>,
                                         std::size_t);
template std::vector<double> query<double>(const Model<double>&, const FeatureVolume<double>&,
                                           std::span<const double>, std::size_t);

}  // namespace csrvolsr
