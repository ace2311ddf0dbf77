#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gvae/vae.hpp"

namespace gvae {

enum class pair_strategy { automatic, all_pairs, sampled };

inline pair_strategy pair_strategy_from_string(const std::string& s) {
  if (s == "auto") return pair_strategy::automatic;
  if (s == "all") return pair_strategy::all_pairs;
  if (s == "sampled") return pair_strategy::sampled;
  throw config_error("unknown pair strategy '" + s + "' (expected auto, all, sampled)");
}

inline std::string to_string(pair_strategy p) {
  switch (p) {
    case pair_strategy::automatic: return "auto";
    case pair_strategy::all_pairs: return "all";
    default: return "sampled";
  }
}

// Which structural losses enter the objective; the single-loss variants
// exist for ablation runs.
enum class iso_parts { both, abel_only, order_only };

inline iso_parts iso_parts_from_string(const std::string& s) {
  if (s == "both") return iso_parts::both;
  if (s == "abel") return iso_parts::abel_only;
  if (s == "order") return iso_parts::order_only;
  throw config_error("unknown iso parts '" + s + "' (expected both, abel, order)");
}

inline std::string to_string(iso_parts p) {
  switch (p) {
    case iso_parts::both: return "both";
    case iso_parts::abel_only: return "abel";
    default: return "order";
  }
}

struct group_config {
  int n = 8;
  double gamma_iso = 1.0;
  pair_strategy pairs = pair_strategy::automatic;
  int pair_sample_k = 8;
  iso_parts parts = iso_parts::both;

  void validate() const {
    if (n < 2) throw config_error("group config: n must be >= 2");
    if (gamma_iso < 0) throw config_error("group config: gamma_iso must be >= 0");
    if (pair_sample_k < 1) throw config_error("group config: pair_sample_k must be >= 1");
  }
};

// Unordered generator pairs entering the commutator loss. All pairs up to
// d = 8; beyond that a per-step sample keeps the graph size flat.
inline std::vector<std::pair<int, int>> select_pairs(int d, const group_config& cfg,
                                                     rng& pair_rng) {
  if (d < 2) throw contract_error("select_pairs: need at least two dimensions");
  std::vector<std::pair<int, int>> all;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) all.emplace_back(i, j);
  const bool sample = cfg.pairs == pair_strategy::sampled ||
                      (cfg.pairs == pair_strategy::automatic && d > 8);
  if (!sample || long(all.size()) <= cfg.pair_sample_k) return all;
  std::set<int> chosen;
  while (int(chosen.size()) < cfg.pair_sample_k)
    chosen.insert(pair_rng.uniform_int(int(all.size())));
  std::vector<std::pair<int, int>> out;
  for (int k : chosen) out.push_back(all[std::size_t(k)]);
  return out;
}

// phi_i^k on a batch: deterministic encode, shift coordinate i by k, decode.
// Works on any codec exposing encode_mu / decode_probs / latent_dim / modulus.
template <typename Codec, typename T>
tensor<T> generator_apply(const Codec& m, const tensor<T>& obs, int i, int k) {
  const auto g = generator_power(m.modulus(), m.latent_dim(), i, k);
  return m.decode_probs(act(g, m.encode_mu(obs)));
}

// Norm of Eq.-style residuals: squared error per pixel, averaged over both
// pixels and batch. Matches the reconstruction scale so unit loss weights
// stay meaningful.
template <typename T>
double per_pixel_mse(const tensor<T>& a, const tensor<T>& b) {
  if (!a.same_shape(b)) throw dimension_error("per_pixel_mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    const double diff = double(a.data[k]) - double(b.data[k]);
    acc += diff * diff;
  }
  return acc / double(a.data.size());
}

// Commutator loss without gradients: sum over unordered pairs of
// ||phi_i(phi_j(o)) - phi_j(phi_i(o))||. Reference implementation for audits
// and for cross-checking the tape graph.
template <typename Codec, typename T>
double abel_loss_value(const Codec& m, const tensor<T>& obs,
                       const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) throw contract_error("abel loss: empty pair set");
  std::map<std::pair<int, int>, tensor<T>> stage1;
  for (const auto& [i, j] : pairs) {
    if (i == j) throw contract_error("abel loss: pair must have distinct dims");
    if (!stage1.count({i, 1})) stage1.emplace(std::make_pair(i, 1), generator_apply(m, obs, i, 1));
    if (!stage1.count({j, 1})) stage1.emplace(std::make_pair(j, 1), generator_apply(m, obs, j, 1));
  }
  double total = 0.0;
  for (const auto& [i, j] : pairs) {
    const auto ij = generator_apply(m, stage1.at({j, 1}), i, 1);
    const auto ji = generator_apply(m, stage1.at({i, 1}), j, 1);
    total += per_pixel_mse(ij, ji);
  }
  return total;
}

// Period loss without gradients: sum over dims of the two symmetric
// compositions ||phi_i(phi_i^{n-1}(o)) - o|| + ||phi_i^{n-1}(phi_i(o)) - o||,
// each power realized as a single shifted pass.
template <typename Codec, typename T>
double order_loss_value(const Codec& m, const tensor<T>& obs,
                        const std::vector<int>& dims) {
  if (dims.empty()) throw contract_error("order loss: empty dim set");
  const int n = m.modulus();
  double total = 0.0;
  for (int i : dims) {
    const auto up = generator_apply(m, generator_apply(m, obs, i, n - 1), i, 1);
    const auto down = generator_apply(m, generator_apply(m, obs, i, 1), i, n - 1);
    total += per_pixel_mse(up, obs) + per_pixel_mse(down, obs);
  }
  return total;
}

template <typename T>
struct iso_loss_vars {
  typename tape<T>::var abel = -1;
  typename tape<T>::var order = -1;
  typename tape<T>::var iso = -1;
};

// Tape graph of the isomorphism losses, sharing the caller's encoder pass.
// Layout of passes, for a batch of B images and d latent dims:
//   stage 1: per (dim, power in {1, n-1}) one decode, then one encode of the
//            resulting probabilities;
//   stage 2: one decode per commutator side and per period term.
// Gradients flow through every pass; nothing is detached.
template <typename T>
iso_loss_vars<T> build_iso_loss(model_graph<T>& g, typename tape<T>::var obs,
                                typename tape<T>::var mu, const group_config& cfg,
                                rng& pair_rng) {
  auto& t = g.t;
  const int d = g.model.arch.d;
  const int n = cfg.n;
  if (n != g.model.arch.n)
    throw config_error("group config n=" + std::to_string(n) +
                       " does not match model n=" + std::to_string(g.model.arch.n));
  const bool want_abel = cfg.parts != iso_parts::order_only;
  const bool want_order = cfg.parts != iso_parts::abel_only;
  // pair selection only draws randomness when the commutator loss is active
  std::vector<std::pair<int, int>> pairs;
  if (want_abel) pairs = select_pairs(d, cfg, pair_rng);

  auto one_hot_row = [&](int i, int k) {
    std::vector<T> row(std::size_t(d), T(0));
    row[std::size_t(i)] = T(k);
    return row;
  };

  // Stage 1, shared by both losses: phi_i^k(o) for k = 1 and k = n-1, plus
  // the re-encoded mean of each result.
  std::map<std::pair<int, int>, typename tape<T>::var> probs1, mu2;
  auto need = [&](int i, int k) {
    if (mu2.count({i, k})) return;
    const auto shifted = t.add_row(mu, one_hot_row(i, k));
    const auto probs = t.sigmoid_(g.decode_logits(shifted));
    probs1.emplace(std::make_pair(i, k), probs);
    mu2.emplace(std::make_pair(i, k), g.encode(probs).first);
  };
  for (const auto& [i, j] : pairs) {
    need(i, 1);
    need(j, 1);
  }
  if (want_order)
    for (int i = 0; i < d; ++i) {
      need(i, 1);
      need(i, n - 1);
    }

  auto mse = [&](typename tape<T>::var a, typename tape<T>::var b) {
    return t.mean_all(t.square_(t.sub(a, b)));
  };

  iso_loss_vars<T> out;
  for (const auto& [i, j] : pairs) {
    const auto ij = t.sigmoid_(g.decode_logits(t.add_row(mu2.at({j, 1}), one_hot_row(i, 1))));
    const auto ji = t.sigmoid_(g.decode_logits(t.add_row(mu2.at({i, 1}), one_hot_row(j, 1))));
    const auto term = mse(ij, ji);
    out.abel = out.abel < 0 ? term : t.add(out.abel, term);
  }
  if (want_order)
    for (int i = 0; i < d; ++i) {
      const auto up =
          t.sigmoid_(g.decode_logits(t.add_row(mu2.at({i, n - 1}), one_hot_row(i, 1))));
      const auto down =
          t.sigmoid_(g.decode_logits(t.add_row(mu2.at({i, 1}), one_hot_row(i, n - 1))));
      const auto term = t.add(mse(up, obs), mse(down, obs));
      out.order = out.order < 0 ? term : t.add(out.order, term);
    }
  if (out.abel >= 0 && out.order >= 0)
    out.iso = t.add(out.abel, out.order);
  else
    out.iso = out.abel >= 0 ? out.abel : out.order;
  return out;
}

template <typename T>
struct total_loss_vars {
  typename tape<T>::var total = -1;
  vae_loss_vars<T> vae;
  iso_loss_vars<T> iso;  // vars stay -1 when gamma_iso = 0
};

// Total objective: L_VAE + gamma_iso * (abel + order). One encoder pass over
// the batch feeds both parts; with gamma_iso = 0 the isomorphism graph is not
// built at all, so the degenerate configuration is the plain VAE bit for bit.
template <typename T>
total_loss_vars<T> build_total_loss(model_graph<T>& g, const tensor<T>& obs_values,
                                    const vae_config& vcfg, const group_config& gcfg,
                                    rng& reparam_rng, rng& pair_rng, long step) {
  gcfg.validate();
  auto& t = g.t;
  const auto obs = t.constant(obs_values);
  const auto [mu, logvar] = g.encode(obs);

  total_loss_vars<T> out;
  const auto eps = draw_noise<T>(obs_values.shape[0], g.model.arch.d, reparam_rng);
  out.vae = build_vae_objective(g, obs, mu, logvar, eps, vcfg, step);
  if (gcfg.gamma_iso == 0.0) {
    out.total = out.vae.loss;
    return out;
  }
  out.iso = build_iso_loss(g, obs, mu, gcfg, pair_rng);
  out.total = t.add(out.vae.loss, t.affine(out.iso.iso, T(gcfg.gamma_iso), T(0)));
  return out;
}

}  // namespace gvae
