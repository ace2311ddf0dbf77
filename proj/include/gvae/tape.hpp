#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gvae/tensor.hpp"

namespace gvae {

// Overflow-safe logistic; shared by the tape op and the no-grad decode path
// so both produce identical bits.
template <typename T>
inline T stable_sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

// Reverse-mode tape. Operations append nodes in evaluation order (which is
// already a topological order), so the backward pass is a single reverse
// sweep. Every op validates shapes and checks its output for NaN/Inf; a
// non-finite value raises numeric_error naming the offending node instead
// of propagating.
//
// The op set is exactly what the loss graphs of this project need: affine
// layers, pointwise nonlinearities, the sin/cos circle embedding, column
// slicing/concatenation, Bernoulli cross-entropy, and the pairwise Gaussian
// log-density reductions used by the minibatch total-correlation estimator.
template <typename T>
class tape {
 public:
  using var = int;

  var constant(tensor<T> v) { return push("constant", std::move(v), -1, -1, nullptr); }

  var leaf(tensor<T> v) {
    var id = push("leaf", std::move(v), -1, -1, nullptr);
    nodes_[id].requires_grad = true;
    return id;
  }

  // [B,in] x [in,out] -> [B,out]
  var matmul(var a, var b) {
    auto& ta = val(a);
    auto& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
      throw dimension_error("matmul: incompatible shapes " + shape_str(ta.shape) +
                            " x " + shape_str(tb.shape));
    tensor<T> out({ta.shape[0], tb.shape[1]});
    out.mat().noalias() = ta.mat() * tb.mat();
    return push("matmul", std::move(out), a, b, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      auto gout = n.grad.mat();
      if (t.wants_grad(n.p0))
        t.grad_of(n.p0).mat().noalias() += gout * t.val(n.p1).mat().transpose();
      if (t.wants_grad(n.p1))
        t.grad_of(n.p1).mat().noalias() += t.val(n.p0).mat().transpose() * gout;
    });
  }

  // [B,C] + [C] broadcast over rows
  var add_bias(var x, var b) {
    auto& tx = val(x);
    auto& tb = val(b);
    if (tx.rank() != 2 || tb.rank() != 1 || tb.shape[0] != tx.shape[1])
      throw dimension_error("add_bias: incompatible shapes");
    tensor<T> out = tx;
    out.mat().rowwise() += tb.mat().reshaped().transpose();
    return push("add_bias", std::move(out), x, b, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (t.wants_grad(n.p0)) t.grad_of(n.p0).mat() += n.grad.mat();
      if (t.wants_grad(n.p1))
        t.grad_of(n.p1).mat().reshaped().transpose() += n.grad.mat().colwise().sum();
    });
  }

  var add(var a, var b) { return binary("add", a, b, [](T x, T y) { return x + y; },
                                        [](T, T, T g) { return std::pair<T, T>{g, g}; }); }
  var sub(var a, var b) { return binary("sub", a, b, [](T x, T y) { return x - y; },
                                        [](T, T, T g) { return std::pair<T, T>{g, -g}; }); }
  var mul(var a, var b) { return binary("mul", a, b, [](T x, T y) { return x * y; },
                                        [](T x, T y, T g) { return std::pair<T, T>{g * y, g * x}; }); }

  var affine(var x, T scale, T shift) {
    return unary("affine", x, [=](T v) { return scale * v + shift; },
                 [=](T, T, T g) { return scale * g; });
  }

  var tanh_(var x) {
    return unary("tanh", x, [](T v) { return std::tanh(v); },
                 [](T, T y, T g) { return g * (T(1) - y * y); });
  }
  var relu_(var x) {
    return unary("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                 [](T v, T, T g) { return v > T(0) ? g : T(0); });
  }
  var sigmoid_(var x) {
    return unary("sigmoid", x, [](T v) { return stable_sigmoid(v); },
                 [](T, T y, T g) { return g * y * (T(1) - y); });
  }
  var exp_(var x) {
    return unary("exp", x, [](T v) { return std::exp(v); },
                 [](T, T y, T g) { return g * y; });
  }
  var sin_(var x) {
    return unary("sin", x, [](T v) { return std::sin(v); },
                 [](T v, T, T g) { return g * std::cos(v); });
  }
  var cos_(var x) {
    return unary("cos", x, [](T v) { return std::cos(v); },
                 [](T v, T, T g) { return -g * std::sin(v); });
  }
  var square_(var x) {
    return unary("square", x, [](T v) { return v * v; },
                 [](T v, T, T g) { return T(2) * v * g; });
  }
  var abs_(var x) {
    return unary("abs", x, [](T v) { return std::abs(v); },
                 [](T v, T, T g) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
  }
  var clamp_(var x, T lo, T hi) {
    return unary("clamp", x, [=](T v) { return std::min(std::max(v, lo), hi); },
                 [=](T v, T, T g) { return (v > lo && v < hi) ? g : T(0); });
  }

  var slice_cols(var x, int c0, int c1) {
    auto& tx = val(x);
    if (tx.rank() != 2 || c0 < 0 || c1 > tx.shape[1] || c0 >= c1)
      throw dimension_error("slice_cols: bad column range");
    tensor<T> out({tx.shape[0], c1 - c0});
    out.mat() = tx.mat().middleCols(c0, c1 - c0);
    return push("slice_cols", std::move(out), x, -1, [c0, c1](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (t.wants_grad(n.p0))
        t.grad_of(n.p0).mat().middleCols(c0, c1 - c0) += n.grad.mat();
    });
  }

  var concat_cols(var a, var b) {
    auto& ta = val(a);
    auto& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[0] != tb.shape[0])
      throw dimension_error("concat_cols: row mismatch");
    tensor<T> out({ta.shape[0], ta.shape[1] + tb.shape[1]});
    out.mat().leftCols(ta.shape[1]) = ta.mat();
    out.mat().rightCols(tb.shape[1]) = tb.mat();
    const int ca = ta.shape[1];
    return push("concat_cols", std::move(out), a, b, [ca](tape& t, int id) {
      auto& n = t.nodes_[id];
      const int cb = n.value.shape[1] - ca;
      if (t.wants_grad(n.p0)) t.grad_of(n.p0).mat() += n.grad.mat().leftCols(ca);
      if (t.wants_grad(n.p1)) t.grad_of(n.p1).mat() += n.grad.mat().rightCols(cb);
    });
  }

  // [B,C] + constant row vector (no gradient into the row)
  var add_row(var x, const std::vector<T>& row) {
    auto& tx = val(x);
    if (tx.rank() != 2 || int(row.size()) != tx.shape[1])
      throw dimension_error("add_row: width mismatch");
    tensor<T> out = tx;
    for (int i = 0; i < out.shape[0]; ++i)
      for (int j = 0; j < out.shape[1]; ++j) out.at(i, j) += row[std::size_t(j)];
    return push("add_row", std::move(out), x, -1, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (t.wants_grad(n.p0)) t.grad_of(n.p0).mat() += n.grad.mat();
    });
  }

  var sum_all(var x) {
    T s = T(0);
    for (T v : val(x).data) s += v;
    return push("sum_all", tensor<T>::scalar(s), x, -1, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (!t.wants_grad(n.p0)) return;
      const T g = n.grad.at(0);
      for (T& v : t.grad_of(n.p0).data) v += g;
    });
  }

  var mean_all(var x) {
    const long n = val(x).numel();
    T s = T(0);
    for (T v : val(x).data) s += v;
    return push("mean_all", tensor<T>::scalar(s / T(n)), x, -1, [n](tape& t, int id) {
      auto& nd = t.nodes_[id];
      if (!t.wants_grad(nd.p0)) return;
      const T g = nd.grad.at(0) / T(n);
      for (T& v : t.grad_of(nd.p0).data) v += g;
    });
  }

  // [B,C] -> [B], summing columns
  var sum_cols(var x) {
    auto& tx = val(x);
    if (tx.rank() != 2) throw dimension_error("sum_cols: rank-2 input required");
    tensor<T> out({tx.shape[0]});
    for (int i = 0; i < tx.shape[0]; ++i) {
      T s = T(0);
      for (int j = 0; j < tx.shape[1]; ++j) s += tx.at(i, j);
      out.at(i) = s;
    }
    return push("sum_cols", std::move(out), x, -1, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (!t.wants_grad(n.p0)) return;
      auto& gx = t.grad_of(n.p0);
      for (int i = 0; i < gx.shape[0]; ++i)
        for (int j = 0; j < gx.shape[1]; ++j) gx.at(i, j) += n.grad.at(i);
    });
  }

  // Bernoulli cross-entropy between sigmoid(logits) and fixed targets,
  // summed over columns (pixels) and averaged over rows (batch).
  var bce_logits(var logits, var targets) {
    auto& tl = val(logits);
    auto& tt = val(targets);
    if (!tl.same_shape(tt)) throw dimension_error("bce_logits: shape mismatch");
    if (tl.rank() != 2) throw dimension_error("bce_logits: rank-2 input required");
    const int b = tl.shape[0];
    T acc = T(0);
    for (std::size_t i = 0; i < tl.data.size(); ++i) {
      const T x = tl.data[i], y = tt.data[i];
      // max(x,0) - x*y + log(1+exp(-|x|))
      acc += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    return push("bce_logits", tensor<T>::scalar(acc / T(b)), logits, targets,
                [](tape& t, int id) {
                  auto& n = t.nodes_[id];
                  if (!t.wants_grad(n.p0)) return;
                  auto& tl = t.val(n.p0);
                  auto& tt = t.val(n.p1);
                  auto& gx = t.grad_of(n.p0);
                  const T g = n.grad.at(0) / T(tl.shape[0]);
                  for (std::size_t i = 0; i < tl.data.size(); ++i)
                    gx.data[i] += g * (stable_sigmoid(tl.data[i]) - tt.data[i]);
                });
  }

  // Pairwise diagonal-Gaussian log density: entry (i,j,k) is the log density
  // of z[i,k] under N(mu[j,k], exp(logvar[j,k])). Output is [B,B,d].
  var gauss_logpdf_pair(var z, var mu, var logvar) {
    auto& tz = val(z);
    auto& tm = val(mu);
    auto& tv = val(logvar);
    if (tz.rank() != 2 || !tz.same_shape(tm) || !tz.same_shape(tv))
      throw dimension_error("gauss_logpdf_pair: inputs must share shape [B,d]");
    const int b = tz.shape[0], d = tz.shape[1];
    tensor<T> out({b, b, d});
    const T l2pi = T(std::log(2.0 * M_PI));
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j)
        for (int k = 0; k < d; ++k) {
          const T diff = tz.at(i, k) - tm.at(j, k);
          const T lv = tv.at(j, k);
          out.data[std::size_t((i * b + j) * d + k)] =
              T(-0.5) * (l2pi + lv + diff * diff * std::exp(-lv));
        }
    return push(
        "gauss_logpdf_pair", std::move(out), z, mu,
        [](tape& t, int id) {
                  auto& n = t.nodes_[id];
                  auto& tz = t.val(n.p0);
                  auto& tm = t.val(n.p1);
                  auto& tv = t.val(n.p2);
                  const int b = tz.shape[0], d = tz.shape[1];
                  const bool wz = t.wants_grad(n.p0), wm = t.wants_grad(n.p1),
                             wv = t.wants_grad(n.p2);
                  for (int i = 0; i < b; ++i)
                    for (int j = 0; j < b; ++j)
                      for (int k = 0; k < d; ++k) {
                        const T g = n.grad.data[std::size_t((i * b + j) * d + k)];
                        if (g == T(0)) continue;
                        const T diff = tz.at(i, k) - tm.at(j, k);
                        const T inv_var = std::exp(-tv.at(j, k));
                        if (wz) t.grad_of(n.p0).at(i, k) += g * (-diff * inv_var);
                        if (wm) t.grad_of(n.p1).at(j, k) += g * (diff * inv_var);
                        if (wv)
                          t.grad_of(n.p2).at(j, k) +=
                              g * (T(-0.5) + T(0.5) * diff * diff * inv_var);
                      }
        },
        logvar);
  }

  // [B,B,d] -> [B,B], summing the trailing axis
  var sum_depth(var x) {
    auto& tx = val(x);
    if (tx.rank() != 3) throw dimension_error("sum_depth: rank-3 input required");
    const int b0 = tx.shape[0], b1 = tx.shape[1], d = tx.shape[2];
    tensor<T> out({b0, b1});
    for (int i = 0; i < b0; ++i)
      for (int j = 0; j < b1; ++j) {
        T s = T(0);
        for (int k = 0; k < d; ++k) s += tx.data[std::size_t((i * b1 + j) * d + k)];
        out.at(i, j) = s;
      }
    return push("sum_depth", std::move(out), x, -1, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (!t.wants_grad(n.p0)) return;
      auto& gx = t.grad_of(n.p0);
      const int b0 = gx.shape[0], b1 = gx.shape[1], d = gx.shape[2];
      for (int i = 0; i < b0; ++i)
        for (int j = 0; j < b1; ++j)
          for (int k = 0; k < d; ++k)
            gx.data[std::size_t((i * b1 + j) * d + k)] += n.grad.at(i, j);
    });
  }

  // [B,B] -> [B], log-sum-exp over the second axis
  var logsumexp_cols(var x) {
    auto& tx = val(x);
    if (tx.rank() != 2) throw dimension_error("logsumexp_cols: rank-2 input required");
    const int r = tx.shape[0], c = tx.shape[1];
    tensor<T> out({r});
    for (int i = 0; i < r; ++i) {
      T m = tx.at(i, 0);
      for (int j = 1; j < c; ++j) m = std::max(m, tx.at(i, j));
      T s = T(0);
      for (int j = 0; j < c; ++j) s += std::exp(tx.at(i, j) - m);
      out.at(i) = m + std::log(s);
    }
    return push("logsumexp_cols", std::move(out), x, -1, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (!t.wants_grad(n.p0)) return;
      auto& tx = t.val(n.p0);
      auto& gx = t.grad_of(n.p0);
      const int r = tx.shape[0], c = tx.shape[1];
      for (int i = 0; i < r; ++i) {
        const T g = n.grad.at(i), lse = n.value.at(i);
        for (int j = 0; j < c; ++j) gx.at(i, j) += g * std::exp(tx.at(i, j) - lse);
      }
    });
  }

  // [B,B,d] -> [B,d], log-sum-exp over the middle axis
  var logsumexp_mid(var x) {
    auto& tx = val(x);
    if (tx.rank() != 3) throw dimension_error("logsumexp_mid: rank-3 input required");
    const int b0 = tx.shape[0], b1 = tx.shape[1], d = tx.shape[2];
    tensor<T> out({b0, d});
    for (int i = 0; i < b0; ++i)
      for (int k = 0; k < d; ++k) {
        T m = tx.data[std::size_t(i * b1 * d + k)];
        for (int j = 1; j < b1; ++j)
          m = std::max(m, tx.data[std::size_t((i * b1 + j) * d + k)]);
        T s = T(0);
        for (int j = 0; j < b1; ++j)
          s += std::exp(tx.data[std::size_t((i * b1 + j) * d + k)] - m);
        out.at(i, k) = m + std::log(s);
      }
    return push("logsumexp_mid", std::move(out), x, -1, [](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (!t.wants_grad(n.p0)) return;
      auto& tx = t.val(n.p0);
      auto& gx = t.grad_of(n.p0);
      const int b0 = tx.shape[0], b1 = tx.shape[1], d = tx.shape[2];
      for (int i = 0; i < b0; ++i)
        for (int k = 0; k < d; ++k) {
          const T g = n.grad.at(i, k), lse = n.value.at(i, k);
          for (int j = 0; j < b1; ++j)
            gx.data[std::size_t((i * b1 + j) * d + k)] +=
                g * std::exp(tx.data[std::size_t((i * b1 + j) * d + k)] - lse);
        }
    });
  }

  // Reverse sweep from a scalar loss node. Gradients accumulate into every
  // node reachable from a leaf; leaves keep theirs for collection.
  void backward(var loss) {
    auto& ln = nodes_.at(std::size_t(loss));
    if (ln.value.numel() != 1)
      throw contract_error("backward: loss must be a scalar");
    if (!ln.requires_grad)
      throw contract_error("backward: loss does not depend on any leaf");
    for (auto& n : nodes_) {
      if (n.requires_grad) {
        n.grad = tensor<T>::zeros(n.value.shape);
      }
    }
    ln.grad.at(0) = T(1);
    for (int id = loss; id >= 0; --id) {
      auto& n = nodes_[std::size_t(id)];
      if (n.back && n.requires_grad) n.back(*this, id);
    }
  }

  const tensor<T>& value(var v) const { return nodes_.at(std::size_t(v)).value; }
  const tensor<T>& grad(var v) const {
    auto& n = nodes_.at(std::size_t(v));
    if (n.grad.data.empty()) throw contract_error("grad: no gradient computed");
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct node {
    tensor<T> value;
    tensor<T> grad;
    int p0 = -1, p1 = -1, p2 = -1;
    bool requires_grad = false;
    std::function<void(tape&, int)> back;
    const char* op = "";
  };

  std::vector<node> nodes_;

  tensor<T>& val(var v) { return nodes_.at(std::size_t(v)).value; }
  tensor<T>& grad_of(var v) { return nodes_[std::size_t(v)].grad; }
  bool wants_grad(var v) const { return v >= 0 && nodes_[std::size_t(v)].requires_grad; }

  var push(const char* op, tensor<T> value, int p0, int p1,
           std::function<void(tape&, int)> back, int p2 = -1) {
    if (!value.all_finite())
      throw numeric_error(std::string("non-finite value produced by op '") + op +
                          "' at node " + std::to_string(nodes_.size()));
    node n;
    n.value = std::move(value);
    n.p0 = p0;
    n.p1 = p1;
    n.p2 = p2;
    n.back = std::move(back);
    n.op = op;
    n.requires_grad = wants_grad(p0) || wants_grad(p1) || wants_grad(p2);
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  template <typename FwdFn, typename BwdFn>
  var unary(const char* op, var x, FwdFn fwd, BwdFn bwd) {
    tensor<T> out = val(x);
    for (T& v : out.data) v = fwd(v);
    return push(op, std::move(out), x, -1, [bwd](tape& t, int id) {
      auto& n = t.nodes_[id];
      if (!t.wants_grad(n.p0)) return;
      auto& in = t.val(n.p0);
      auto& gx = t.grad_of(n.p0);
      for (std::size_t i = 0; i < in.data.size(); ++i)
        gx.data[i] += bwd(in.data[i], n.value.data[i], n.grad.data[i]);
    });
  }

  template <typename FwdFn, typename BwdFn>
  var binary(const char* op, var a, var b, FwdFn fwd, BwdFn bwd) {
    auto& ta = val(a);
    auto& tb = val(b);
    if (!ta.same_shape(tb))
      throw dimension_error(std::string(op) + ": shape mismatch " +
                            shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    tensor<T> out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = fwd(ta.data[i], tb.data[i]);
    return push(op, std::move(out), a, b, [bwd](tape& t, int id) {
      auto& n = t.nodes_[id];
      auto& ta = t.val(n.p0);
      auto& tb = t.val(n.p1);
      const bool wa = t.wants_grad(n.p0), wb = t.wants_grad(n.p1);
      for (std::size_t i = 0; i < ta.data.size(); ++i) {
        auto [ga, gb] = bwd(ta.data[i], tb.data[i], n.grad.data[i]);
        if (wa) t.grad_of(n.p0).data[i] += ga;
        if (wb) t.grad_of(n.p1).data[i] += gb;
      }
    });
  }
};

}  // namespace gvae
