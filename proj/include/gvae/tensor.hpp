#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gvae/common.hpp"

namespace gvae {

// Dense row-major tensor of rank 1..3. Rank-2 tensors map onto Eigen
// matrices for the linear-algebra kernels; rank-3 is used only by the
// pairwise density ops of the total-correlation estimator.
template <typename T>
struct tensor {
  std::vector<int> shape;
  std::vector<T> data;

  using matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using map = Eigen::Map<matrix>;
  using const_map = Eigen::Map<const matrix>;

  tensor() = default;
  explicit tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(std::size_t(numel()), T(0));
  }
  tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (std::size_t(numel()) != data.size())
      throw dimension_error("tensor: shape does not match data length");
  }

  static tensor zeros(std::vector<int> s) { return tensor(std::move(s)); }
  static tensor scalar(T v) { return tensor({1}, {v}); }

  long numel() const {
    long n = 1;
    for (int d : shape) {
      if (d <= 0) throw dimension_error("tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  int rank() const { return int(shape.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.size() == 1 ? 1 : shape.at(1); }

  T& at(int i) { return data[std::size_t(i)]; }
  T at(int i) const { return data[std::size_t(i)]; }
  T& at(int i, int j) { return data[std::size_t(i) * shape[1] + j]; }
  T at(int i, int j) const { return data[std::size_t(i) * shape[1] + j]; }

  // Rank-2 (or rank-1 column) Eigen view.
  map mat() {
    return map(data.data(), rows(), cols());
  }
  const_map mat() const {
    return const_map(data.data(), rows(), cols());
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  bool same_shape(const tensor& o) const { return shape == o.shape; }

  template <typename U>
  tensor<U> cast() const {
    tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

}  // namespace gvae
