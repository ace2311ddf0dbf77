#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gvae/rng.hpp"
#include "gvae/tape.hpp"
#include "gvae/tensor.hpp"

namespace gvae {

// Named parameters in registration order. Registration order is also the
// serialization order, so checkpoints round-trip without a manifest.
// Optimizer moments live alongside each entry.
template <typename T>
class param_store {
 public:
  struct entry {
    std::string name;
    tensor<T> value;
    tensor<T> m, v;  // Adam moments
  };

  tensor<T>& add(std::string name, tensor<T> value) {
    if (index_.count(name))
      throw contract_error("param_store: duplicate parameter '" + name + "'");
    index_[name] = int(entries_.size());
    entry e;
    e.name = std::move(name);
    e.m = tensor<T>::zeros(value.shape);
    e.v = tensor<T>::zeros(value.shape);
    e.value = std::move(value);
    entries_.push_back(std::move(e));
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw contract_error("param_store: unknown parameter '" + name + "'");
    return entries_[std::size_t(it->second)].value;
  }
  const tensor<T>& at(const std::string& name) const {
    return const_cast<param_store*>(this)->at(name);
  }

  std::vector<entry>& entries() { return entries_; }
  const std::vector<entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Parameter values as float32, registration order. The checkpoint header is
// written by the owner; this is just the payload.
template <typename T>
void write_param_payload(std::ostream& os, const param_store<T>& ps) {
  for (const auto& e : ps.entries()) {
    for (T v : e.value.data) {
      const float f = float(v);
      os.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
}

template <typename T>
void read_param_payload(std::istream& is, param_store<T>& ps) {
  for (auto& e : ps.entries()) {
    for (T& v : e.value.data) {
      float f;
      is.read(reinterpret_cast<char*>(&f), sizeof(float));
      if (!is) throw format_error("checkpoint payload truncated");
      v = T(f);
    }
  }
}

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)). The stream is seeded
// from the tensor's name, so tensors of equal name and shape are bit-identical
// across model variants regardless of registration order.
template <typename T>
tensor<T> glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out,
                         std::uint64_t seed, const std::string& name) {
  rng r(derive_seed(seed, name));
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  tensor<T> out(shape);
  for (T& v : out.data) v = T(r.uniform(-a, a));
  return out;
}

enum class activation : std::uint8_t { tanh_fn = 0, relu_fn = 1 };

inline activation activation_from_string(const std::string& s) {
  if (s == "tanh") return activation::tanh_fn;
  if (s == "relu") return activation::relu_fn;
  throw config_error("unknown activation '" + s + "' (expected tanh or relu)");
}

inline std::string to_string(activation a) {
  return a == activation::tanh_fn ? "tanh" : "relu";
}

// Leaf ids for the current tape, keyed by parameter name.
using leaf_map = std::unordered_map<std::string, int>;

// Fully connected stack. sizes = {in, hidden..., out}; the hidden activation
// is applied after every layer except the last, which stays linear so callers
// can treat the output as logits or coordinates as needed.
template <typename T>
struct mlp {
  std::string prefix;
  std::vector<int> sizes;
  activation act = activation::tanh_fn;

  int layers() const { return int(sizes.size()) - 1; }
  std::string wname(int l) const { return prefix + ".w" + std::to_string(l); }
  std::string bname(int l) const { return prefix + ".b" + std::to_string(l); }

  void register_params(param_store<T>& ps, std::uint64_t seed) const {
    if (sizes.size() < 2) throw contract_error("mlp: need at least two layer sizes");
    for (int l = 0; l < layers(); ++l) {
      const int fi = sizes[std::size_t(l)], fo = sizes[std::size_t(l) + 1];
      ps.add(wname(l), glorot_uniform<T>({fi, fo}, fi, fo, seed, wname(l)));
      ps.add(bname(l), tensor<T>::zeros({fo}));
    }
  }

  typename tape<T>::var forward(tape<T>& t, typename tape<T>::var x,
                                const leaf_map& leaves) const {
    auto v = x;
    for (int l = 0; l < layers(); ++l) {
      v = t.matmul(v, leaves.at(wname(l)));
      v = t.add_bias(v, leaves.at(bname(l)));
      if (l + 1 < layers())
        v = act == activation::tanh_fn ? t.tanh_(v) : t.relu_(v);
    }
    return v;
  }

  tensor<T> forward_nograd(const param_store<T>& ps, const tensor<T>& x) const {
    if (x.rank() != 2 || x.shape[1] != sizes.front())
      throw dimension_error("mlp forward: input shape " + shape_str(x.shape) +
                            " does not match width " + std::to_string(sizes.front()));
    tensor<T> v = x;
    for (int l = 0; l < layers(); ++l) {
      const auto& w = ps.at(wname(l));
      const auto& b = ps.at(bname(l));
      tensor<T> next({v.shape[0], w.shape[1]});
      next.mat().noalias() = v.mat() * w.mat();
      next.mat().rowwise() += b.mat().reshaped().transpose();
      // Scalar loops keep this path bit-identical to the tape ops.
      if (l + 1 < layers()) {
        if (act == activation::tanh_fn)
          for (T& u : next.data) u = std::tanh(u);
        else
          for (T& u : next.data) u = u > T(0) ? u : T(0);
      }
      v = std::move(next);
    }
    if (!v.all_finite()) throw numeric_error("mlp forward produced non-finite values");
    return v;
  }
};

// Adam with bias correction; moments are stored per parameter in the store.
// Gradients arrive in registration order (missing gradients are skipped so
// frozen parameters stay put).
template <typename T>
struct adam {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  long steps = 0;

  void step(param_store<T>& ps, const std::vector<const tensor<T>*>& grads) {
    if (grads.size() != ps.size())
      throw contract_error("adam: gradient count does not match parameter count");
    ++steps;
    const T bc1 = T(1) - std::pow(beta1, T(steps));
    const T bc2 = T(1) - std::pow(beta2, T(steps));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i]) continue;
      auto& e = ps.entries()[i];
      const auto& g = *grads[i];
      if (!g.same_shape(e.value))
        throw dimension_error("adam: gradient shape mismatch for '" + e.name + "'");
      for (std::size_t k = 0; k < e.value.data.size(); ++k) {
        e.m.data[k] = beta1 * e.m.data[k] + (T(1) - beta1) * g.data[k];
        e.v.data[k] = beta2 * e.v.data[k] + (T(1) - beta2) * g.data[k] * g.data[k];
        const T mhat = e.m.data[k] / bc1;
        const T vhat = e.v.data[k] / bc2;
        e.value.data[k] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

}  // namespace gvae
