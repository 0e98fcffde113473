#include "csrvolsr/params.hpp"

#include <algorithm>

#include "csrvolsr/error.hpp"

namespace csrvolsr {

template <typename T>
std::size_t Tensor<T>::numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

template <typename T>
Tensor<T>& ParamSet<T>::add(const std::string& name, std::vector<int> shape) {
  if (contains(name)) throw Error(ErrorKind::InvalidConfig, "duplicate parameter " + name);
  Tensor<T> t;
  t.data.assign(Tensor<T>::numel_of(shape), T(0));
  t.shape = std::move(shape);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

template <typename T>
Tensor<T>& ParamSet<T>::operator[](const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::CheckpointIncompatible, "missing parameter " + name);
  return items_[it->second].second;
}

template <typename T>
const Tensor<T>& ParamSet<T>::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::CheckpointIncompatible, "missing parameter " + name);
  return items_[it->second].second;
}

template <typename T>
std::size_t ParamSet<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : items_) out.add(name, t.shape);
  return out;
}

template <typename T>
void ParamSet<T>::fill(T value) {
  for (auto& [name, t] : items_) std::fill(t.data.begin(), t.data.end(), value);
}

template struct Tensor<float>;
template struct Tensor<double>;
template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace csrvolsr
