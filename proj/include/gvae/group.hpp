#pragma once

#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "gvae/rng.hpp"

namespace gvae {

// Element of (Z/nZ)^m with exact integer arithmetic. This is the reference
// group the latent action is audited against; nothing here touches floats.
struct cyclic_tuple {
  int n = 1;
  std::vector<int> values;

  cyclic_tuple(int n_, std::vector<int> v) : n(n_), values(std::move(v)) {
    if (n < 1) throw contract_error("cyclic_tuple: modulus must be >= 1");
    for (int& x : values) {
      x %= n;
      if (x < 0) x += n;
    }
  }

  int m() const { return int(values.size()); }

  bool operator==(const cyclic_tuple& o) const {
    return n == o.n && values == o.values;
  }
};

inline cyclic_tuple identity(int n, int m) {
  return cyclic_tuple(n, std::vector<int>(std::size_t(m), 0));
}

inline void require_same_group(const cyclic_tuple& a, const cyclic_tuple& b) {
  if (a.n != b.n || a.m() != b.m())
    throw contract_error("cyclic_tuple: modulus or arity mismatch");
}

inline cyclic_tuple compose(const cyclic_tuple& a, const cyclic_tuple& b) {
  require_same_group(a, b);
  std::vector<int> v(a.values);
  for (int k = 0; k < a.m(); ++k) v[std::size_t(k)] = (v[std::size_t(k)] + b.values[std::size_t(k)]) % a.n;
  return cyclic_tuple(a.n, std::move(v));
}

inline cyclic_tuple inverse(const cyclic_tuple& a) {
  std::vector<int> v(a.values);
  for (int& x : v) x = (a.n - x) % a.n;
  return cyclic_tuple(a.n, std::move(v));
}

// Least k >= 1 with k*a = 0: the lcm over coordinates of n / gcd(n, v).
inline long order_of(const cyclic_tuple& a) {
  long ord = 1;
  for (int v : a.values) {
    const long coord = a.n / std::gcd(a.n, v == 0 ? a.n : v);
    ord = std::lcm(ord, coord);
  }
  return ord;
}

// Composition table over flat element ids (lexicographic tuple order). Kept
// as plain data so tests can corrupt entries as a negative control.
using composition_table = std::vector<std::vector<int>>;

inline composition_table build_composition_table(int n, int m) {
  long count = 1;
  for (int k = 0; k < m; ++k) count *= n;
  auto decode = [&](long id) {
    std::vector<int> v(std::size_t(m), 0);
    for (int k = m - 1; k >= 0; --k) {
      v[std::size_t(k)] = int(id % n);
      id /= n;
    }
    return v;
  };
  auto encode = [&](const std::vector<int>& v) {
    long id = 0;
    for (int k = 0; k < m; ++k) id = id * n + v[std::size_t(k)];
    return id;
  };
  composition_table t(std::size_t(count), std::vector<int>(std::size_t(count), 0));
  for (long a = 0; a < count; ++a) {
    const auto va = decode(a);
    for (long b = 0; b < count; ++b) {
      auto vb = decode(b);
      for (int k = 0; k < m; ++k) vb[std::size_t(k)] = (vb[std::size_t(k)] + va[std::size_t(k)]) % n;
      t[std::size_t(a)][std::size_t(b)] = int(encode(vb));
    }
  }
  return t;
}

// Brute-force closure, associativity, identity, inverses and commutativity.
// Cubic in the group order, hence the size precondition.
inline bool check_axioms_on_table(const composition_table& t) {
  const long count = long(t.size());
  for (const auto& row : t) {
    if (long(row.size()) != count) return false;
    for (int v : row)
      if (v < 0 || v >= count) return false;  // closure
  }
  long id = -1;
  for (long e = 0; e < count; ++e) {
    bool ok = true;
    for (long a = 0; a < count && ok; ++a)
      ok = t[std::size_t(e)][std::size_t(a)] == a && t[std::size_t(a)][std::size_t(e)] == a;
    if (ok) {
      id = e;
      break;
    }
  }
  if (id < 0) return false;
  for (long a = 0; a < count; ++a) {
    bool has_inverse = false;
    for (long b = 0; b < count && !has_inverse; ++b)
      has_inverse = t[std::size_t(a)][std::size_t(b)] == id;
    if (!has_inverse) return false;
  }
  for (long a = 0; a < count; ++a)
    for (long b = 0; b < count; ++b) {
      if (t[std::size_t(a)][std::size_t(b)] != t[std::size_t(b)][std::size_t(a)]) return false;
      for (long c = 0; c < count; ++c) {
        const int ab_c = t[std::size_t(t[std::size_t(a)][std::size_t(b)])][std::size_t(c)];
        const int a_bc = t[std::size_t(a)][std::size_t(t[std::size_t(b)][std::size_t(c)])];
        if (ab_c != a_bc) return false;
      }
    }
  return true;
}

inline bool check_group_axioms(int n, int m) {
  if (n < 1 || n > 6 || m < 1 || m > 3)
    throw contract_error("check_group_axioms: exhaustive check limited to n <= 6, m <= 3");
  return check_axioms_on_table(build_composition_table(n, m));
}

// Circle embedding of one cyclic coordinate: z on the n-cycle maps to the
// unit-circle point (sin, cos) at angle 2*pi*z/n.
inline std::pair<double, double> eta_coord(double z, int n) {
  const double a = 2.0 * M_PI * z / double(n);
  return {std::sin(a), std::cos(a)};
}

// The embedding must carry addition mod n to rotation: eta(a+b) equals the
// angle-sum composition of eta(a) and eta(b). Returns the max elementwise
// deviation over random integer pairs; analytically zero, so anything above
// rounding noise is a defect.
inline double eta_homomorphism_check(int n, int trials, rng& r) {
  if (n < 2) throw contract_error("eta_homomorphism_check: n must be >= 2");
  if (trials < 1) throw contract_error("eta_homomorphism_check: trials must be >= 1");
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int a = r.uniform_int(n), b = r.uniform_int(n);
    const auto [sa, ca] = eta_coord(a, n);
    const auto [sb, cb] = eta_coord(b, n);
    const auto [ss, cs] = eta_coord(a + b, n);  // eta is n-periodic
    const double sum_s = sa * cb + ca * sb;
    const double sum_c = ca * cb - sa * sb;
    worst = std::max(worst, std::abs(ss - sum_s));
    worst = std::max(worst, std::abs(cs - sum_c));
  }
  return worst;
}

}  // namespace gvae
