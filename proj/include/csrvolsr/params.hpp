#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace csrvolsr {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  static std::size_t numel_of(const std::vector<int>& shape);
  std::size_t numel() const { return data.size(); }
};

/// Named tensors in insertion order. Names are layer paths such as
/// "decoder.fc4.weight"; the order is the serialization order.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& add(const std::string& name, std::vector<int> shape);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& operator[](const std::string& name);
  const Tensor<T>& operator[](const std::string& name) const;

  std::size_t size() const { return items_.size(); }
  std::size_t param_count() const;

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  ParamSet zeros_like() const;
  void fill(T value);

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, t] : items_) {
      auto& d = out.add(name, t.shape);
      for (std::size_t i = 0; i < t.data.size(); ++i) d.data[i] = static_cast<U>(t.data[i]);
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::map<std::string, std::size_t> index_;
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace csrvolsr
