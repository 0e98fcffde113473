#include "csrvolsr/inr_decoder.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "csrvolsr/error.hpp"
#include "csrvolsr/rng.hpp"

namespace csrvolsr {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

std::string fc(int k) { return "decoder.fc" + std::to_string(k); }

int layer_in(const DecoderConfig& c, int k) { return k == 1 ? DecoderConfig::in_dim : c.hidden_width; }
int layer_out(const DecoderConfig& c, int k) { return k == c.num_layers ? DecoderConfig::out_dim : c.hidden_width; }

// out (M x n_out) = in (M x n_in) * W^T + b
template <typename T>
void linear(const T* in, std::size_t rows, const Tensor<T>& w, const Tensor<T>& b, T* out) {
  const int n_out = w.shape[0];
  const int n_in = w.shape[1];
  const auto m = static_cast<Eigen::Index>(rows);
  Eigen::Map<const RowMat<T>> x(in, m, n_in);
  Eigen::Map<const RowMat<T>> W(w.data.data(), n_out, n_in);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.data.data(), n_out);
  Eigen::Map<RowMat<T>> y(out, m, n_out);
  y.noalias() = x * W.transpose();
  y.rowwise() += bias;
}

// Accumulates dW += dy^T x, db += colsum(dy); writes dx = dy W when dx is non-null.
template <typename T>
void linear_back(const T* in, std::size_t rows, const Tensor<T>& w, const T* dy, Tensor<T>& dw, Tensor<T>& db,
                 T* dx, bool accumulate_dx) {
  const int n_out = w.shape[0];
  const int n_in = w.shape[1];
  const auto m = static_cast<Eigen::Index>(rows);
  Eigen::Map<const RowMat<T>> x(in, m, n_in);
  Eigen::Map<const RowMat<T>> W(w.data.data(), n_out, n_in);
  Eigen::Map<const RowMat<T>> g(dy, m, n_out);
  Eigen::Map<RowMat<T>> gw(dw.data.data(), n_out, n_in);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(db.data.data(), n_out);
  gw.noalias() += g.transpose() * x;
  // Plain row-order loop: Eigen's vectorized reductions peel by address, which
  // would tie the rounding to where the buffers happen to be allocated.
  for (Eigen::Index r = 0; r < m; ++r)
    for (int j = 0; j < n_out; ++j) gb[j] += g(r, j);
  if (dx) {
    Eigen::Map<RowMat<T>> gx(dx, m, n_in);
    if (accumulate_dx) {
      gx.noalias() += g * W;
    } else {
      gx.noalias() = g * W;
    }
  }
}

}  // namespace

void DecoderConfig::validate() const {
  if (num_layers < 2) throw Error(ErrorKind::InvalidConfig, "decoder needs at least 2 layers");
  if (hidden_width < 1) throw Error(ErrorKind::InvalidConfig, "decoder hidden width must be >= 1");
  if (skip_at < 1 || skip_at > num_layers - 1) {
    throw Error(ErrorKind::InvalidConfig, "decoder skip_at must lie in [1, num_layers - 1]");
  }
}

template <typename T>
ParamSet<T> make_decoder_tensors(const DecoderConfig& config) {
  config.validate();
  ParamSet<T> set;
  for (int k = 1; k <= config.num_layers; ++k) {
    set.add(fc(k) + ".weight", {layer_out(config, k), layer_in(config, k)});
    set.add(fc(k) + ".bias", {layer_out(config, k)});
  }
  set.add("decoder.skip.weight", {config.hidden_width, DecoderConfig::in_dim});
  set.add("decoder.skip.bias", {config.hidden_width});
  return set;
}

template <typename T>
DecoderParams<T> init_decoder_params(const DecoderConfig& config, std::uint64_t seed) {
  DecoderParams<T> p{config, make_decoder_tensors<T>(config)};
  Rng rng(seed);
  for (auto& [name, t] : p.tensors) {
    if (t.shape.size() != 2) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[1]));
    for (auto& w : t.data) w = static_cast<T>(rng.uniform(-bound, bound));
  }
  return p;
}

template <typename T>
std::vector<T> DecoderPass<T>::forward(std::span<const double> coords, std::span<const T> features) {
  const auto& cfg = params_.config;
  const std::size_t m = coords.size() / 3;
  if (coords.size() != 3 * m || features.size() != m * kFeatureChannels) {
    throw Error(ErrorKind::ShapeMismatch, "decoder expects M x 3 coordinates and M x 128 features");
  }
  rows_ = m;
  constexpr int in_dim = DecoderConfig::in_dim;
  input_.resize(m * in_dim);
  for (std::size_t r = 0; r < m; ++r) {
    T* dst = input_.data() + r * in_dim;
    for (int a = 0; a < 3; ++a) dst[a] = static_cast<T>(coords[3 * r + static_cast<std::size_t>(a)]);
    std::copy_n(features.data() + r * kFeatureChannels, kFeatureChannels, dst + 3);
  }
  for (T v : input_) {
    if (!std::isfinite(static_cast<double>(v))) throw Error(ErrorKind::NonFiniteInput, "non-finite decoder input");
  }

  activations_.assign(static_cast<std::size_t>(cfg.num_layers - 1), {});
  const T* x = input_.data();
  for (int k = 1; k < cfg.num_layers; ++k) {
    auto& a = activations_[static_cast<std::size_t>(k - 1)];
    a.resize(m * static_cast<std::size_t>(cfg.hidden_width));
    linear(x, m, params_.tensors[fc(k) + ".weight"], params_.tensors[fc(k) + ".bias"], a.data());
    for (auto& v : a) v = v > T(0) ? v : T(0);
    x = a.data();
    if (k == cfg.skip_at) {
      skip_sum_.resize(a.size());
      linear(input_.data(), m, params_.tensors["decoder.skip.weight"], params_.tensors["decoder.skip.bias"],
             skip_sum_.data());
      for (std::size_t i = 0; i < a.size(); ++i) skip_sum_[i] += a[i];
      x = skip_sum_.data();
    }
  }
  std::vector<T> out(m);
  linear(x, m, params_.tensors[fc(cfg.num_layers) + ".weight"], params_.tensors[fc(cfg.num_layers) + ".bias"],
         out.data());
  return out;
}

template <typename T>
void DecoderPass<T>::backward(std::span<const T> grad_out, ParamSet<T>& grads, std::span<T> grad_features) const {
  const auto& cfg = params_.config;
  const std::size_t m = rows_;
  constexpr int in_dim = DecoderConfig::in_dim;
  const auto w = static_cast<std::size_t>(cfg.hidden_width);

  const auto layer_input = [&](int k) -> const T* {
    if (k == 1) return input_.data();
    if (k - 1 == cfg.skip_at) return skip_sum_.data();
    return activations_[static_cast<std::size_t>(k - 2)].data();
  };

  std::vector<T> d_input(m * in_dim, T(0));
  std::vector<T> d_h(m * w);
  const int L = cfg.num_layers;
  linear_back(layer_input(L), m, params_.tensors[fc(L) + ".weight"], grad_out.data(), grads[fc(L) + ".weight"],
              grads[fc(L) + ".bias"], d_h.data(), false);
  std::vector<T> d_z(m * w);
  for (int k = L - 1; k >= 1; --k) {
    if (k == cfg.skip_at) {
      linear_back(input_.data(), m, params_.tensors["decoder.skip.weight"], d_h.data(), grads["decoder.skip.weight"],
                  grads["decoder.skip.bias"], d_input.data(), true);
    }
    const auto& a = activations_[static_cast<std::size_t>(k - 1)];
    for (std::size_t i = 0; i < d_z.size(); ++i) d_z[i] = a[i] > T(0) ? d_h[i] : T(0);
    if (k == 1) {
      linear_back(input_.data(), m, params_.tensors[fc(1) + ".weight"], d_z.data(), grads[fc(1) + ".weight"],
                  grads[fc(1) + ".bias"], d_input.data(), true);
    } else {
      linear_back(layer_input(k), m, params_.tensors[fc(k) + ".weight"], d_z.data(), grads[fc(k) + ".weight"],
                  grads[fc(k) + ".bias"], d_h.data(), false);
    }
  }
  if (!grad_features.empty()) {
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(d_input.data() + r * in_dim + 3, kFeatureChannels, grad_features.data() + r * kFeatureChannels);
    }
  }
}

template <typename T>
std::vector<T> decode(std::span<const double> coords, std::span<const T> features, const DecoderParams<T>& params,
                      std::size_t chunk) {
  const std::size_t m = coords.size() / 3;
  std::vector<T> out;
  out.reserve(m);
  chunk = std::max<std::size_t>(chunk, 1);
  DecoderPass<T> pass(params);
  for (std::size_t r0 = 0; r0 < m; r0 += chunk) {
    const std::size_t r1 = std::min(m, r0 + chunk);
    auto part = pass.forward(coords.subspan(3 * r0, 3 * (r1 - r0)),
                             features.subspan(r0 * kFeatureChannels, (r1 - r0) * kFeatureChannels));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template ParamSet<float> make_decoder_tensors<float>(const DecoderConfig&);
template ParamSet<double> make_decoder_tensors<double>(const DecoderConfig&);
template DecoderParams<float> init_decoder_params<float>(const DecoderConfig&, std::uint64_t);
template DecoderParams<double> init_decoder_params<double>(const DecoderConfig&, std::uint64_t);
template class DecoderPass<float>;
template class DecoderPass<double>;
template std::vector<float> decode<float>(std::span<const double>, std::span<const float>,
                                          const DecoderParams<float>&, std::size_t);
template std::vector<double> decode<double>(std::span<const double>, std::span<const double>,
                                            const DecoderParams<double>&, std::size_t);

}  // namespace csrvolsr
