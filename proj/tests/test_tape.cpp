#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "gvae/tape.hpp"

using namespace gvae;
using gvae::testing::max_grad_error;
using gvae::testing::random_tensor;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("matmul and bias gradients match finite differences") {
  rng r(11);
  auto a = random_tensor({3, 4}, r);
  auto w = random_tensor({4, 2}, r);
  auto b = random_tensor({2}, r);
  const double err = max_grad_error(
      {a, w, b}, [](tape<double>& t, const std::vector<int>& in) {
        auto y = t.add_bias(t.matmul(in[0], in[1]), in[2]);
        return t.sum_all(t.square_(y));
      });
  CHECK(err < kTol);
}

TEST_CASE("elementwise binary op gradients match finite differences") {
  rng r(12);
  auto a = random_tensor({3, 3}, r);
  auto b = random_tensor({3, 3}, r, 0.5, 1.5);
  const double err = max_grad_error(
      {a, b}, [](tape<double>& t, const std::vector<int>& in) {
        auto s = t.add(in[0], in[1]);
        auto d = t.sub(in[0], in[1]);
        auto p = t.mul(s, d);
        return t.mean_all(t.square_(p));
      });
  CHECK(err < kTol);
}

TEST_CASE("pointwise nonlinearity gradients match finite differences") {
  rng r(13);
  // Keep samples away from the relu/abs kinks and the clamp edges, where the
  // two-sided difference quotient does not estimate either one-sided slope.
  auto x = random_tensor({2, 5}, r, 0.2, 1.4);

  auto check = [&](auto opfn) {
    return max_grad_error({x}, [&](tape<double>& t, const std::vector<int>& in) {
      return t.sum_all(opfn(t, in[0]));
    });
  };

  CHECK(check([](tape<double>& t, int v) { return t.tanh_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.relu_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.sigmoid_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.exp_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.sin_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.cos_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.square_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.abs_(v); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.clamp_(v, 0.0, 1.2); }) < kTol);
  CHECK(check([](tape<double>& t, int v) { return t.affine(v, 2.5, -0.75); }) < kTol);
}

TEST_CASE("slice, concat and row-shift gradients match finite differences") {
  rng r(14);
  auto a = random_tensor({3, 4}, r);
  auto b = random_tensor({3, 2}, r);
  const double err = max_grad_error(
      {a, b}, [](tape<double>& t, const std::vector<int>& in) {
        auto cat = t.concat_cols(in[0], in[1]);
        auto left = t.slice_cols(cat, 0, 3);
        auto right = t.slice_cols(cat, 3, 6);
        auto shifted = t.add_row(left, {0.5, -1.0, 0.25});
        return t.sum_all(t.mul(shifted, right));
      });
  CHECK(err < kTol);
}

TEST_CASE("reduction gradients match finite differences") {
  rng r(15);
  auto x = random_tensor({4, 3}, r);
  const double err = max_grad_error(
      {x}, [](tape<double>& t, const std::vector<int>& in) {
        auto per_row = t.sum_cols(t.square_(in[0]));
        return t.mean_all(per_row);
      });
  CHECK(err < kTol);
}

TEST_CASE("bce_logits gradients match finite differences") {
  rng r(16);
  auto logits = random_tensor({4, 6}, r, -2.0, 2.0);
  tensor<double> targets({4, 6});
  for (double& v : targets.data) v = r.uniform() < 0.5 ? 0.0 : 1.0;
  const double err = max_grad_error(
      {logits}, [&](tape<double>& t, const std::vector<int>& in) {
        return t.bce_logits(in[0], t.constant(targets));
      });
  CHECK(err < kTol);
}

TEST_CASE("bce_logits value matches the naive formula") {
  tensor<double> logits({1, 2}, {0.3, -1.7});
  tensor<double> targets({1, 2}, {1.0, 0.0});
  tape<double> t;
  auto loss = t.bce_logits(t.leaf(logits), t.constant(targets));
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.at(0, i)));
    const double y = targets.at(0, i);
    expect += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  CHECK_THAT(t.value(loss).at(0), Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("pairwise Gaussian log-density gradients match finite differences") {
  rng r(17);
  auto z = random_tensor({3, 2}, r);
  auto mu = random_tensor({3, 2}, r);
  auto lv = random_tensor({3, 2}, r, -0.5, 0.5);
  const double err = max_grad_error(
      {z, mu, lv}, [](tape<double>& t, const std::vector<int>& in) {
        auto lp = t.gauss_logpdf_pair(in[0], in[1], in[2]);
        auto joint = t.logsumexp_cols(t.sum_depth(lp));
        auto marg = t.logsumexp_mid(lp);
        return t.add(t.mean_all(joint), t.mean_all(t.square_(marg)));
      });
  CHECK(err < kTol);
}

TEST_CASE("pairwise Gaussian log-density values are exact") {
  tensor<double> z({2, 1}, {0.4, -0.2});
  tensor<double> mu({2, 1}, {0.0, 1.0});
  tensor<double> lv({2, 1}, {0.0, -1.0});
  tape<double> t;
  auto lp = t.gauss_logpdf_pair(t.leaf(z), t.leaf(mu), t.leaf(lv));
  // Entry (i, j): log N(z_i | mu_j, exp(lv_j)).
  const double v01 = t.value(lp).data[1];
  const double d = 0.4 - 1.0;
  const double expect = -0.5 * (std::log(2.0 * M_PI) + (-1.0) + d * d * std::exp(1.0));
  CHECK_THAT(v01, Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("logsumexp handles widely separated magnitudes") {
  tensor<double> x({1, 3}, {1000.0, 0.0, -1000.0});
  tape<double> t;
  auto out = t.logsumexp_cols(t.leaf(x));
  CHECK_THAT(t.value(out).at(0), Catch::Matchers::WithinAbs(1000.0, 1e-9));
}

TEST_CASE("composite network graph passes gradcheck") {
  rng r(18);
  auto x = random_tensor({2, 5}, r);
  auto w0 = random_tensor({5, 4}, r, -0.6, 0.6);
  auto b0 = random_tensor({4}, r, -0.1, 0.1);
  auto w1 = random_tensor({4, 3}, r, -0.6, 0.6);
  auto b1 = random_tensor({3}, r, -0.1, 0.1);
  tensor<double> target({2, 3});
  for (double& v : target.data) v = r.uniform() < 0.5 ? 0.0 : 1.0;
  const double err = max_grad_error(
      {x, w0, b0, w1, b1}, [&](tape<double>& t, const std::vector<int>& in) {
        auto h = t.tanh_(t.add_bias(t.matmul(in[0], in[1]), in[2]));
        auto logits = t.add_bias(t.matmul(h, in[3]), in[4]);
        return t.bce_logits(logits, t.constant(target));
      });
  CHECK(err < kTol);
}

TEST_CASE("gradients flow only into leaves") {
  tensor<double> a({1, 2}, {1.0, 2.0});
  tensor<double> c({1, 2}, {3.0, 4.0});
  tape<double> t;
  auto la = t.leaf(a);
  auto cc = t.constant(c);
  auto loss = t.sum_all(t.mul(la, cc));
  t.backward(loss);
  CHECK(t.grad(la).at(0, 0) == 3.0);
  CHECK(t.grad(la).at(0, 1) == 4.0);
  CHECK_THROWS_AS(t.grad(cc), contract_error);
}

TEST_CASE("shape violations are rejected up front") {
  tape<double> t;
  auto a = t.leaf(tensor<double>({2, 3}));
  auto b = t.leaf(tensor<double>({2, 2}));
  CHECK_THROWS_AS(t.matmul(a, b), dimension_error);
  CHECK_THROWS_AS(t.add(a, b), dimension_error);
  CHECK_THROWS_AS(t.slice_cols(a, 2, 2), dimension_error);
  CHECK_THROWS_AS(t.add_bias(a, b), dimension_error);
}

TEST_CASE("backward demands a scalar loss that depends on a leaf") {
  tape<double> t;
  auto a = t.leaf(tensor<double>({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  CHECK_THROWS_AS(t.backward(a), contract_error);
  auto c = t.constant(tensor<double>::scalar(1.0));
  CHECK_THROWS_AS(t.backward(c), contract_error);
}

TEST_CASE("non-finite results abort with the offending op named") {
  tape<double> t;
  auto a = t.leaf(tensor<double>({1, 1}, {1000.0}));
  CHECK_THROWS_MATCHES(t.exp_(a), numeric_error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("exp")));
}
