#include <catch2/catch_amalgamated.hpp>

#include "gvae/rng.hpp"
#include "gvae/tensor.hpp"

using namespace gvae;

TEST_CASE("fnv1a matches the published 64-bit test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("hash_hex prints 16 lowercase hex digits") {
  CHECK(hash_hex(0xcbf29ce484222325ull) == "cbf29ce484222325");
  CHECK(hash_hex(0) == "0000000000000000");
  CHECK(hash_hex(0xffull) == "00000000000000ff");
}

TEST_CASE("derive_seed separates streams by tag and by seed") {
  CHECK(derive_seed(7, "batch") == derive_seed(7, "batch"));
  CHECK(derive_seed(7, "batch") != derive_seed(7, "reparam"));
  CHECK(derive_seed(7, "batch") != derive_seed(8, "batch"));
  // Tag boundaries must matter: ("ab", c) vs ("a", bc) style collisions.
  CHECK(derive_seed(7, "pairs1") != derive_seed(7, "pairs") + 1);
}

TEST_CASE("rng streams are reproducible and distinct") {
  rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  for (int i = 0; i < 100; ++i) differs |= (a.next_u64() != c.next_u64());
  CHECK(differs);
}

TEST_CASE("uniform stays in [0,1) with a plausible mean") {
  rng r(1);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 20000.0 - 0.5) < 0.02);
}

TEST_CASE("uniform_int covers its range without bias artifacts") {
  rng r(2);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const int k = r.uniform_int(7);
    REQUIRE(k >= 0);
    REQUIRE(k < 7);
    counts[std::size_t(k)]++;
  }
  for (int k = 0; k < 7; ++k) CHECK(counts[std::size_t(k)] > 800);
  CHECK_THROWS_AS(r.uniform_int(0), contract_error);
  CHECK_THROWS_AS(r.uniform_int(-3), contract_error);
}

TEST_CASE("normal draws have unit-ish moments") {
  rng r(3);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("tensor layout is row-major and Eigen views write through") {
  tensor<float> t({2, 3});
  for (int i = 0; i < 6; ++i) t.data[std::size_t(i)] = float(i);
  CHECK(t.at(0, 2) == 2.0f);
  CHECK(t.at(1, 0) == 3.0f);
  CHECK(t.mat()(1, 2) == 5.0f);
  t.mat()(0, 1) = 42.0f;
  CHECK(t.at(0, 1) == 42.0f);
}

TEST_CASE("tensor validates shape against data") {
  CHECK_THROWS_AS(tensor<float>({2, 3}, {1.0f, 2.0f}), dimension_error);
  CHECK_THROWS_AS(tensor<float>({0, 3}), dimension_error);
  CHECK_THROWS_AS(tensor<float>({-1}), dimension_error);
  CHECK(tensor<float>::scalar(5.0f).numel() == 1);
}

TEST_CASE("tensor cast converts element type") {
  tensor<double> d({2}, {1.5, -2.25});
  auto f = d.cast<float>();
  CHECK(f.shape == d.shape);
  CHECK(f.at(1) == -2.25f);
}

TEST_CASE("all_finite flags NaN and infinity") {
  tensor<float> t({2}, {1.0f, 2.0f});
  CHECK(t.all_finite());
  t.at(0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t.at(0) = std::numeric_limits<float>::infinity();
  CHECK_FALSE(t.all_finite());
}
