#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "gvae/groupify.hpp"

namespace gvae {

// Post-hoc residuals of the group-structure conditions on a trained codec,
// computed with the same expressions and norm as the training losses but no
// gradients. All statistics are order-invariant over the audit set.
struct residual_report {
  double abel_mean = 0.0;
  double abel_max = 0.0;
  double order_mean = 0.0;
  double order_max = 0.0;
  double recon_mse = 0.0;  // deterministic reconstruction floor, same norm
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> abel_pair_mean;  // aligned with `pairs`
  std::vector<double> order_dim_mean;
  long sample_count = 0;
};

// Squared error per pixel, averaged within each row.
template <typename T>
std::vector<double> row_mse(const tensor<T>& a, const tensor<T>& b) {
  if (!a.same_shape(b) || a.rank() != 2)
    throw dimension_error("row_mse: matching rank-2 tensors required");
  std::vector<double> out(std::size_t(a.shape[0]), 0.0);
  for (int i = 0; i < a.shape[0]; ++i) {
    double acc = 0.0;
    for (int j = 0; j < a.shape[1]; ++j) {
      const double d = double(a.at(i, j)) - double(b.at(i, j));
      acc += d * d;
    }
    out[std::size_t(i)] = acc / double(a.shape[1]);
  }
  return out;
}

template <typename Codec, typename T>
residual_report audit_codec(const Codec& m, const tensor<T>& obs) {
  if (obs.rank() != 2 || obs.shape[0] < 1)
    throw contract_error("audit: nonempty observation batch required");
  const int d = m.latent_dim();
  const int n = m.modulus();
  residual_report rep;
  rep.sample_count = obs.shape[0];

  // Reconstruction floor: decode the deterministic code back to pixels.
  const auto recon = m.decode_probs(m.encode_mu(obs));
  {
    const auto rows = row_mse(recon, obs);
    double acc = 0.0;
    for (double v : rows) acc += v;
    rep.recon_mse = acc / double(rows.size());
  }

  // Stage-1 applications are shared across commutator and period checks.
  std::vector<tensor<T>> step1, step_back;
  step1.reserve(std::size_t(d));
  step_back.reserve(std::size_t(d));
  for (int i = 0; i < d; ++i) {
    step1.push_back(generator_apply(m, obs, i, 1));
    step_back.push_back(generator_apply(m, obs, i, n - 1));
  }

  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const auto ij = generator_apply(m, step1[std::size_t(j)], i, 1);
      const auto ji = generator_apply(m, step1[std::size_t(i)], j, 1);
      const auto rows = row_mse(ij, ji);
      double acc = 0.0;
      for (double v : rows) {
        acc += v;
        rep.abel_max = std::max(rep.abel_max, v);
      }
      rep.pairs.emplace_back(i, j);
      rep.abel_pair_mean.push_back(acc / double(rows.size()));
    }
  for (double v : rep.abel_pair_mean) rep.abel_mean += v;
  if (!rep.abel_pair_mean.empty()) rep.abel_mean /= double(rep.abel_pair_mean.size());

  for (int i = 0; i < d; ++i) {
    const auto up = generator_apply(m, step_back[std::size_t(i)], i, 1);
    const auto down = generator_apply(m, step1[std::size_t(i)], i, n - 1);
    const auto rows_up = row_mse(up, obs);
    const auto rows_down = row_mse(down, obs);
    double acc = 0.0;
    for (std::size_t r = 0; r < rows_up.size(); ++r) {
      const double v = rows_up[r] + rows_down[r];
      acc += v;
      rep.order_max = std::max(rep.order_max, v);
    }
    rep.order_dim_mean.push_back(acc / double(rows_up.size()));
  }
  for (double v : rep.order_dim_mean) rep.order_mean += v;
  if (!rep.order_dim_mean.empty()) rep.order_mean /= double(rep.order_dim_mean.size());

  return rep;
}

// Every 5th lexicographic grid index is held out of training so audits and
// period checks run on images the model never saw.
inline std::vector<long> holdout_indices(long grid_size) {
  std::vector<long> out;
  for (long i = 0; i < grid_size; i += 5) out.push_back(i);
  return out;
}

inline std::vector<long> training_indices(long grid_size) {
  std::vector<long> out;
  for (long i = 0; i < grid_size; ++i)
    if (i % 5 != 0) out.push_back(i);
  return out;
}

// Without-replacement draw of at most `cap` audit images; returns the whole
// pool when it is smaller than the cap.
inline std::vector<long> audit_sample(std::vector<long> pool, int cap, rng& r) {
  if (cap < 1) throw contract_error("audit_sample: cap must be >= 1");
  if (long(pool.size()) <= long(cap)) return pool;
  for (int k = 0; k < cap; ++k) {
    const int pick = k + r.uniform_int(int(pool.size()) - k);
    std::swap(pool[std::size_t(k)], pool[std::size_t(pick)]);
  }
  pool.resize(std::size_t(cap));
  return pool;
}

}  // namespace gvae
