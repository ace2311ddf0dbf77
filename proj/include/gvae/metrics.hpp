#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gvae/factors.hpp"
#include "gvae/model.hpp"

namespace gvae {

struct metric_options {
  int betavae_train = 500;
  int betavae_test = 200;
  int betavae_pairs = 16;  // L pairs averaged into one classifier example
  int factorvae_train = 800;
  int factorvae_test = 400;
  int factorvae_batch = 64;
  double collapse_std = 0.05;  // below this a latent dim casts no votes
  int mig_bins = 20;
  double dci_l1 = 0.01;
  int dci_steps = 200;
  double dci_lr = 0.1;
  int classifier_steps = 200;
  double classifier_lr = 0.1;

  void validate() const {
    if (betavae_train < 1 || betavae_test < 1 || betavae_pairs < 1)
      throw config_error("metrics: betavae sample counts must be >= 1");
    if (factorvae_train < 1 || factorvae_test < 1 || factorvae_batch < 2)
      throw config_error("metrics: factorvae needs votes and batch >= 2");
    if (mig_bins < 2) throw config_error("metrics: mig needs at least 2 bins");
    if (dci_l1 < 0 || dci_steps < 1 || dci_lr <= 0)
      throw config_error("metrics: invalid dci classifier settings");
    if (classifier_steps < 1 || classifier_lr <= 0)
      throw config_error("metrics: invalid classifier settings");
  }
};

struct metric_report {
  double betavae = 0.0;
  double factorvae = 0.0;
  double mig = 0.0;
  double dci = 0.0;
  bool betavae_degenerate = false;  // all-equal features, score set to chance
  std::vector<std::vector<long>> factorvae_votes;  // [dim][factor] counts
  std::vector<std::vector<double>> mi_matrix;      // [dim][factor], nats
  std::vector<std::vector<double>> importance;     // [dim][factor], >= 0
};

// mu codes for the whole grid, encoded in chunks. Row i belongs to flat
// grid index i.
template <typename Codec>
tensor<float> representation(const Codec& codec, const factor_dataset& data) {
  const long n = data.count();
  const int d = codec.latent_dim();
  tensor<float> codes({int(n), d});
  const long chunk = 256;
  for (long start = 0; start < n; start += chunk) {
    const long stop = std::min(n, start + chunk);
    std::vector<long> ids;
    ids.reserve(std::size_t(stop - start));
    for (long i = start; i < stop; ++i) ids.push_back(i);
    const auto mu = codec.encode_mu(data.observations(ids));
    if (!mu.all_finite()) throw numeric_error("representation: non-finite codes");
    for (long i = start; i < stop; ++i)
      for (int j = 0; j < d; ++j) codes.at(int(i), j) = mu.at(int(i - start), j);
  }
  return codes;
}

inline std::vector<std::vector<int>> grid_labels(const factor_dataset& data) {
  std::vector<std::vector<int>> labels(std::size_t(data.count()));
  const int m = data.spec().count_factors();
  for (long i = 0; i < data.count(); ++i) {
    labels[std::size_t(i)].resize(std::size_t(m));
    for (int k = 0; k < m; ++k) labels[std::size_t(i)][std::size_t(k)] = data.label(i, k);
  }
  return labels;
}

namespace detail {

// Multinomial logistic regression, full-batch gradient descent from zero
// weights, optional L1 proximal step. Deterministic.
struct linear_model {
  int classes = 0, dim = 0;
  std::vector<double> w;  // [classes * dim]
  std::vector<double> b;  // [classes]
};

inline linear_model fit_multinomial(const std::vector<double>& x,
                                    const std::vector<int>& y, int n, int dim,
                                    int classes, int steps, double lr, double l1) {
  if (n < 1 || dim < 1 || classes < 2)
    throw contract_error("classifier: need samples, features and >= 2 classes");
  linear_model mod;
  mod.classes = classes;
  mod.dim = dim;
  mod.w.assign(std::size_t(classes) * dim, 0.0);
  mod.b.assign(std::size_t(classes), 0.0);
  std::vector<double> p(std::size_t(classes), 0.0);
  std::vector<double> gw(mod.w.size(), 0.0), gb(mod.b.size(), 0.0);
  for (int s = 0; s < steps; ++s) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double* xi = &x[std::size_t(i) * dim];
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < classes; ++c) {
        double l = mod.b[std::size_t(c)];
        for (int j = 0; j < dim; ++j) l += mod.w[std::size_t(c) * dim + j] * xi[j];
        p[std::size_t(c)] = l;
        mx = std::max(mx, l);
      }
      double z = 0.0;
      for (int c = 0; c < classes; ++c) {
        p[std::size_t(c)] = std::exp(p[std::size_t(c)] - mx);
        z += p[std::size_t(c)];
      }
      for (int c = 0; c < classes; ++c) {
        const double g = (p[std::size_t(c)] / z - (c == y[std::size_t(i)] ? 1.0 : 0.0)) / n;
        gb[std::size_t(c)] += g;
        for (int j = 0; j < dim; ++j) gw[std::size_t(c) * dim + j] += g * xi[j];
      }
    }
    for (std::size_t k = 0; k < gb.size(); ++k) mod.b[k] -= lr * gb[k];
    const double shrink = lr * l1;
    for (std::size_t k = 0; k < gw.size(); ++k) {
      double w = mod.w[k] - lr * gw[k];
      if (l1 > 0.0) {
        const double mag = std::abs(w) - shrink;
        w = mag > 0.0 ? (w > 0.0 ? mag : -mag) : 0.0;
      }
      mod.w[k] = w;
    }
  }
  return mod;
}

inline int predict_class(const linear_model& mod, const double* xi) {
  int best = 0;
  double best_l = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < mod.classes; ++c) {
    double l = mod.b[std::size_t(c)];
    for (int j = 0; j < mod.dim; ++j) l += mod.w[std::size_t(c) * mod.dim + j] * xi[j];
    if (l > best_l) {
      best_l = l;
      best = c;
    }
  }
  return best;
}

struct column_stats {
  std::vector<double> mean, std;
};

inline column_stats standardize_stats(const std::vector<double>& x, int n, int dim) {
  column_stats st;
  st.mean.assign(std::size_t(dim), 0.0);
  st.std.assign(std::size_t(dim), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) st.mean[std::size_t(j)] += x[std::size_t(i) * dim + j];
  for (double& m : st.mean) m /= n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) {
      const double c = x[std::size_t(i) * dim + j] - st.mean[std::size_t(j)];
      st.std[std::size_t(j)] += c * c;
    }
  for (double& s : st.std) s = std::sqrt(s / n);
  return st;
}

// Zero-spread columns map to zero so constant features carry no signal.
inline void apply_standardize(std::vector<double>& x, int n, int dim,
                              const column_stats& st) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) {
      double& v = x[std::size_t(i) * dim + j];
      v = st.std[std::size_t(j)] > 0.0 ? (v - st.mean[std::size_t(j)]) / st.std[std::size_t(j)]
                                       : 0.0;
    }
}

// One interventional batch sharing a single drawn value of factor k.
inline std::vector<long> sample_fixed_factor_batch(const factor_spec& spec, rng& r,
                                                   int fixed_k, int batch) {
  const int shared = r.uniform_int(spec.factors[std::size_t(fixed_k)].cardinality);
  std::vector<long> ids;
  ids.reserve(std::size_t(batch));
  std::vector<int> idx(spec.factors.size(), 0);
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < spec.count_factors(); ++k)
      idx[std::size_t(k)] = k == fixed_k
                                ? shared
                                : r.uniform_int(spec.factors[std::size_t(k)].cardinality);
    ids.push_back(spec.flat_index(idx));
  }
  return ids;
}

inline int factor_count_or_throw(const std::vector<std::vector<int>>& labels) {
  if (labels.empty() || labels[0].empty())
    throw contract_error("metrics: empty label table");
  return int(labels[0].size());
}

}  // namespace detail

// Average absolute code difference over L same-factor pairs, classified back
// to the factor that was held fixed. Score = held-out accuracy.
inline double betavae_score_codes(const tensor<float>& codes, const factor_dataset& data,
                                  rng& r, const metric_options& opts,
                                  bool* degenerate = nullptr) {
  opts.validate();
  const int d = codes.shape[1];
  const int m = data.spec().count_factors();
  const int n_train = opts.betavae_train, n_test = opts.betavae_test;
  const int total = n_train + n_test;

  std::vector<double> feats(std::size_t(total) * d, 0.0);
  std::vector<int> label(std::size_t(total), 0);
  for (int i = 0; i < total; ++i) {
    const int k = r.uniform_int(m);
    const auto pairs = sample_pair_fixed_factor(data.spec(), r, k, opts.betavae_pairs);
    for (int p = 0; p < opts.betavae_pairs; ++p)
      for (int j = 0; j < d; ++j)
        feats[std::size_t(i) * d + j] +=
            std::abs(double(codes.at(int(pairs.first[std::size_t(p)]), j)) -
                     codes.at(int(pairs.second[std::size_t(p)]), j));
    for (int j = 0; j < d; ++j) feats[std::size_t(i) * d + j] /= opts.betavae_pairs;
    label[std::size_t(i)] = k;
  }

  bool all_equal = true;
  for (int i = 1; i < n_train && all_equal; ++i)
    for (int j = 0; j < d; ++j)
      if (feats[std::size_t(i) * d + j] != feats[std::size_t(0) * d + j]) {
        all_equal = false;
        break;
      }
  if (degenerate) *degenerate = all_equal;
  if (all_equal) return 1.0 / m;

  const auto st = detail::standardize_stats(feats, n_train, d);
  detail::apply_standardize(feats, total, d, st);
  std::vector<double> train(feats.begin(), feats.begin() + std::size_t(n_train) * d);
  std::vector<int> train_y(label.begin(), label.begin() + n_train);
  const auto mod = detail::fit_multinomial(train, train_y, n_train, d, m,
                                           opts.classifier_steps, opts.classifier_lr, 0.0);
  int correct = 0;
  for (int i = n_train; i < total; ++i)
    if (detail::predict_class(mod, &feats[std::size_t(i) * d]) == label[std::size_t(i)])
      ++correct;
  return double(correct) / n_test;
}

// Variance-argmin voting over std-normalized codes; majority vote maps dims
// to factors on the training votes, score = test-vote accuracy.
inline double factorvae_score_codes(const tensor<float>& codes, const factor_dataset& data,
                                    rng& r, const metric_options& opts,
                                    std::vector<std::vector<long>>* votes_out = nullptr) {
  opts.validate();
  const long n = codes.shape[0];
  const int d = codes.shape[1];
  const int m = data.spec().count_factors();

  std::vector<double> scale(std::size_t(d), 0.0);
  {
    std::vector<double> flat(codes.data.begin(), codes.data.end());
    const auto st = detail::standardize_stats(flat, int(n), d);
    scale = st.std;
  }
  std::vector<int> active;
  for (int j = 0; j < d; ++j)
    if (scale[std::size_t(j)] >= opts.collapse_std) active.push_back(j);
  if (active.empty()) throw contract_error("factorvae: representation collapsed");

  auto vote_dim = [&](int k) {
    const auto ids =
        detail::sample_fixed_factor_batch(data.spec(), r, k, opts.factorvae_batch);
    int best = active[0];
    double best_var = std::numeric_limits<double>::infinity();
    for (int j : active) {
      double mean = 0.0, sq = 0.0;
      for (long id : ids) {
        const double v = double(codes.at(int(id), j)) / scale[std::size_t(j)];
        mean += v;
        sq += v * v;
      }
      mean /= double(ids.size());
      const double var = sq / double(ids.size()) - mean * mean;
      if (var < best_var) {
        best_var = var;
        best = j;
      }
    }
    return best;
  };

  std::vector<std::vector<long>> votes(std::size_t(d), std::vector<long>(std::size_t(m), 0));
  for (int t = 0; t < opts.factorvae_train; ++t) {
    const int k = r.uniform_int(m);
    votes[std::size_t(vote_dim(k))][std::size_t(k)] += 1;
  }
  std::vector<int> assigned(std::size_t(d), 0);
  for (int j = 0; j < d; ++j) {
    long best = -1;
    for (int k = 0; k < m; ++k)
      if (votes[std::size_t(j)][std::size_t(k)] > best) {
        best = votes[std::size_t(j)][std::size_t(k)];
        assigned[std::size_t(j)] = k;
      }
  }
  if (votes_out) *votes_out = votes;

  int correct = 0;
  for (int t = 0; t < opts.factorvae_test; ++t) {
    const int k = r.uniform_int(m);
    if (assigned[std::size_t(vote_dim(k))] == k) ++correct;
  }
  return double(correct) / opts.factorvae_test;
}

// MI between each latent dim (equal-mass discretized) and each factor,
// natural log. Duplicate values share a bin, so a constant dim scores zero.
inline std::vector<std::vector<double>> discrete_mutual_information(
    const tensor<float>& codes, const std::vector<std::vector<int>>& labels, int bins) {
  if (bins < 2) throw contract_error("discrete mi: bins must be >= 2");
  if (codes.rank() != 2 || long(labels.size()) != codes.shape[0])
    throw dimension_error("discrete mi: codes rows must match labels");
  const long n = codes.shape[0];
  const int d = codes.shape[1];
  const int m = detail::factor_count_or_throw(labels);
  std::vector<int> cards(std::size_t(m), 0);
  for (const auto& row : labels)
    for (int k = 0; k < m; ++k)
      cards[std::size_t(k)] = std::max(cards[std::size_t(k)], row[std::size_t(k)] + 1);

  std::vector<std::vector<double>> mi(std::size_t(d), std::vector<double>(std::size_t(m), 0.0));
  std::vector<float> sorted(std::size_t(n), 0.0f);
  std::vector<int> bin_of(std::size_t(n), 0);
  for (int j = 0; j < d; ++j) {
    for (long i = 0; i < n; ++i) sorted[std::size_t(i)] = codes.at(int(i), j);
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) continue;  // constant dim: MI row stays 0
    std::vector<float> edges;
    edges.reserve(std::size_t(bins - 1));
    for (int q = 1; q < bins; ++q)
      edges.push_back(sorted[std::size_t(long(q) * n / bins)]);
    for (long i = 0; i < n; ++i)
      bin_of[std::size_t(i)] = int(std::upper_bound(edges.begin(), edges.end(),
                                                    codes.at(int(i), j)) -
                                   edges.begin());
    for (int k = 0; k < m; ++k) {
      const int card = cards[std::size_t(k)];
      std::vector<long> joint(std::size_t(bins) * card, 0);
      std::vector<long> pb(std::size_t(bins), 0), pv(std::size_t(card), 0);
      for (long i = 0; i < n; ++i) {
        const int b = bin_of[std::size_t(i)];
        const int v = labels[std::size_t(i)][std::size_t(k)];
        joint[std::size_t(b) * card + v] += 1;
        pb[std::size_t(b)] += 1;
        pv[std::size_t(v)] += 1;
      }
      double acc = 0.0;
      for (int b = 0; b < bins; ++b)
        for (int v = 0; v < card; ++v) {
          const long c = joint[std::size_t(b) * card + v];
          if (c == 0) continue;
          const double pj = double(c) / n;
          acc += pj * std::log(pj * n * double(n) / (double(pb[std::size_t(b)]) *
                                                     pv[std::size_t(v)]));
        }
      mi[std::size_t(j)][std::size_t(k)] = std::max(0.0, acc);
    }
  }
  return mi;
}

// Mean over factors of the top-1 vs top-2 MI gap, normalized by the factor
// entropy. Clipped into [0,1] against estimator noise.
inline double mig(const tensor<float>& codes,
                  const std::vector<std::vector<int>>& labels, int bins = 20,
                  std::vector<std::vector<double>>* mi_out = nullptr) {
  const auto mi = discrete_mutual_information(codes, labels, bins);
  if (mi_out) *mi_out = mi;
  const long n = long(labels.size());
  const int d = codes.shape[1];
  const int m = detail::factor_count_or_throw(labels);

  double acc = 0.0;
  for (int k = 0; k < m; ++k) {
    std::vector<long> counts;
    for (const auto& row : labels) {
      const int v = row[std::size_t(k)];
      if (v >= int(counts.size())) counts.resize(std::size_t(v) + 1, 0);
      counts[std::size_t(v)] += 1;
    }
    double h = 0.0;
    for (long c : counts)
      if (c > 0) h -= (double(c) / n) * std::log(double(c) / n);
    if (h <= 0.0) throw contract_error("mig: factor " + std::to_string(k) +
                                       " has zero entropy");
    double top1 = 0.0, top2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = mi[std::size_t(j)][std::size_t(k)];
      if (v > top1) {
        top2 = top1;
        top1 = v;
      } else if (v > top2) {
        top2 = v;
      }
    }
    if (d == 1) top2 = 0.0;  // no runner-up exists
    acc += (top1 - top2) / h;
  }
  return std::clamp(acc / m, 0.0, 1.0);
}

struct dci_result {
  double disentanglement = 0.0;
  std::vector<std::vector<double>> importance;  // [dim][factor]
};

// Importance from per-factor L1 linear classifiers over standardized codes;
// per-dim score is one minus the entropy of its normalized importance row,
// weighted by the dim's share of total importance.
inline dci_result dci_disentanglement(const tensor<float>& codes,
                                      const std::vector<std::vector<int>>& labels,
                                      const metric_options& opts = {}) {
  opts.validate();
  const long n = codes.shape[0];
  const int d = codes.shape[1];
  const int m = detail::factor_count_or_throw(labels);
  if (long(labels.size()) != n)
    throw dimension_error("dci: codes rows must match labels");

  std::vector<double> x(codes.data.begin(), codes.data.end());
  const auto st = detail::standardize_stats(x, int(n), d);
  detail::apply_standardize(x, int(n), d, st);

  dci_result out;
  out.importance.assign(std::size_t(d), std::vector<double>(std::size_t(m), 0.0));
  for (int k = 0; k < m; ++k) {
    int card = 0;
    std::vector<int> y(std::size_t(n), 0);
    for (long i = 0; i < n; ++i) {
      y[std::size_t(i)] = labels[std::size_t(i)][std::size_t(k)];
      card = std::max(card, y[std::size_t(i)] + 1);
    }
    const auto mod = detail::fit_multinomial(x, y, int(n), d, card, opts.dci_steps,
                                             opts.dci_lr, opts.dci_l1);
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int c = 0; c < card; ++c) acc += std::abs(mod.w[std::size_t(c) * d + j]);
      out.importance[std::size_t(j)][std::size_t(k)] = acc / card;
    }
  }

  double total = 0.0;
  for (const auto& row : out.importance)
    for (double v : row) total += v;
  if (total <= 0.0) return out;  // nothing informative: score stays 0

  const double log_m = std::log(double(m));
  double score = 0.0;
  for (int j = 0; j < d; ++j) {
    double row_sum = 0.0;
    for (double v : out.importance[std::size_t(j)]) row_sum += v;
    if (row_sum <= 0.0) continue;  // dead dim carries no weight
    double h = 0.0;
    for (double v : out.importance[std::size_t(j)]) {
      if (v <= 0.0) continue;
      const double p = v / row_sum;
      h -= p * std::log(p) / log_m;
    }
    score += (row_sum / total) * (1.0 - h);
  }
  out.disentanglement = std::clamp(score, 0.0, 1.0);
  return out;
}

// Codec-level entry points: encode the grid once, then score the codes.
template <typename Codec>
double betavae_score(const Codec& codec, const factor_dataset& data, rng& r,
                     const metric_options& opts = {}, bool* degenerate = nullptr) {
  return betavae_score_codes(representation(codec, data), data, r, opts, degenerate);
}

template <typename Codec>
double factorvae_score(const Codec& codec, const factor_dataset& data, rng& r,
                       const metric_options& opts = {},
                       std::vector<std::vector<long>>* votes_out = nullptr) {
  return factorvae_score_codes(representation(codec, data), data, r, opts, votes_out);
}

// All four scores over precomputed codes, deterministic per seed.
inline metric_report evaluate_metric_codes(const tensor<float>& codes,
                                           const factor_dataset& data,
                                           std::uint64_t seed,
                                           const metric_options& opts = {}) {
  opts.validate();
  const auto labels = grid_labels(data);
  metric_report rep;
  rng bv(derive_seed(seed, "metrics.betavae"));
  rep.betavae = betavae_score_codes(codes, data, bv, opts, &rep.betavae_degenerate);
  rng fv(derive_seed(seed, "metrics.factorvae"));
  rep.factorvae = factorvae_score_codes(codes, data, fv, opts, &rep.factorvae_votes);
  rep.mig = mig(codes, labels, opts.mig_bins, &rep.mi_matrix);
  const auto dci = dci_disentanglement(codes, labels, opts);
  rep.dci = dci.disentanglement;
  rep.importance = dci.importance;
  return rep;
}

template <typename Codec>
metric_report evaluate_metrics(const Codec& codec, const factor_dataset& data,
                               std::uint64_t seed, const metric_options& opts = {}) {
  return evaluate_metric_codes(representation(codec, data), data, seed, opts);
}

}  // namespace gvae
