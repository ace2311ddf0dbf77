#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "gvae/model.hpp"
#include "gvae/tape.hpp"

namespace gvae {

enum class objective_kind { beta, anneal, betatc };

inline objective_kind objective_from_string(const std::string& s) {
  if (s == "beta") return objective_kind::beta;
  if (s == "anneal") return objective_kind::anneal;
  if (s == "betatc") return objective_kind::betatc;
  throw config_error("unknown objective '" + s + "' (expected beta, anneal, betatc)");
}

inline std::string to_string(objective_kind k) {
  switch (k) {
    case objective_kind::beta: return "beta";
    case objective_kind::anneal: return "anneal";
    default: return "betatc";
  }
}

struct vae_config {
  objective_kind objective = objective_kind::beta;
  double beta = 4.0;
  double gamma = 100.0;  // anneal penalty weight
  double c_max = 25.0;   // anneal capacity ceiling
  long c_steps = 10000;  // steps to reach c_max
  double beta_tc = 6.0;
  long dataset_size = 0;  // required by the betatc estimator

  void validate(int batch_size) const {
    if (beta < 0 || gamma < 0 || beta_tc < 0 || c_max < 0)
      throw config_error("vae config: weights and capacity must be >= 0");
    if (c_steps < 1) throw config_error("vae config: c_steps must be >= 1");
    if (objective == objective_kind::betatc) {
      if (batch_size < 2)
        throw contract_error("betatc estimator undefined for batch size 1");
      if (dataset_size < batch_size)
        throw config_error("vae config: dataset_size must cover the batch");
    }
  }
};

// Linear capacity ramp 0 -> c_max over c_steps, then flat.
inline double capacity_at(const vae_config& cfg, long step) {
  if (step < 0) throw contract_error("capacity_at: negative step");
  if (step >= cfg.c_steps) return cfg.c_max;
  return cfg.c_max * double(step) / double(cfg.c_steps);
}

// Per-step tape wiring of one model: parameter leaves plus the forward
// building blocks every loss shares.
template <typename T>
struct model_graph {
  using var = typename tape<T>::var;

  tape<T>& t;
  const mlp_model<T>& model;
  leaf_map leaves;

  model_graph(tape<T>& t_, const mlp_model<T>& m) : t(t_), model(m) {
    for (const auto& e : m.params.entries()) leaves[e.name] = t.leaf(e.value);
  }

  // obs -> (mu, clamped logvar)
  std::pair<var, var> encode(var obs) {
    const int d = model.arch.d;
    const var raw = model.encoder().forward(t, obs, leaves);
    const var mu = t.slice_cols(raw, 0, d);
    const var lv = t.clamp_(t.slice_cols(raw, d, 2 * d), T(kLogvarLo), T(kLogvarHi));
    return {mu, lv};
  }

  var eta(var z) {
    const var angle = t.affine(z, eta_omega<T>(model.arch.n), T(0));
    return t.concat_cols(t.sin_(angle), t.cos_(angle));
  }

  var decode_logits(var z) {
    const var in =
        model.arch.convention == decoder_convention::groupified ? eta(z) : z;
    return model.decoder().forward(t, in, leaves);
  }

  var decode_probs(var z) { return t.sigmoid_(decode_logits(z)); }

  // Gradients for every parameter, ordered like the store; call after
  // t.backward(loss).
  std::vector<const tensor<T>*> collect_grads() const {
    std::vector<const tensor<T>*> grads;
    grads.reserve(model.params.size());
    for (const auto& e : model.params.entries())
      grads.push_back(&t.grad(leaves.at(e.name)));
    return grads;
  }
};

template <typename T>
struct tc_term_vars {
  typename tape<T>::var mi = -1;
  typename tape<T>::var tc = -1;
  typename tape<T>::var dkl = -1;
};

// Minibatch-weighted-sampling decomposition of the aggregate-posterior KL
// into mutual information, total correlation and dimension-wise KL. With all
// three weights at 1 the terms telescope to log q(z|x) - log p(z) per sample.
template <typename T>
tc_term_vars<T> build_tc_terms(tape<T>& t, typename tape<T>::var z,
                               typename tape<T>::var mu,
                               typename tape<T>::var logvar, int d, int batch,
                               long dataset_size) {
  if (batch < 2) throw contract_error("betatc estimator undefined for batch size 1");
  const T log_nb = T(std::log(double(dataset_size) * double(batch)));
  const T l2pi = T(std::log(2.0 * M_PI));

  // log q(z_i | x_i): diagonal Gaussian density at the own-sample stats.
  const auto diff = t.sub(z, mu);
  const auto quad = t.mul(t.square_(diff), t.exp_(t.affine(logvar, T(-1), T(0))));
  const auto cond_elems =
      t.affine(t.add(quad, t.affine(logvar, T(1), l2pi)), T(-0.5), T(0));
  const auto log_q_cond = t.sum_cols(cond_elems);  // [B]

  const auto pair = t.gauss_logpdf_pair(z, mu, logvar);  // [B,B,d]
  const auto log_qz =
      t.affine(t.logsumexp_cols(t.sum_depth(pair)), T(1), -log_nb);  // [B]
  const auto log_qz_prod =
      t.affine(t.sum_cols(t.logsumexp_mid(pair)), T(1), -T(d) * log_nb);  // [B]

  // log p(z) under the standard normal prior.
  const auto log_pz = t.sum_cols(t.affine(t.square_(z), T(-0.5), T(-0.5) * l2pi));

  tc_term_vars<T> out;
  out.mi = t.mean_all(t.sub(log_q_cond, log_qz));
  out.tc = t.mean_all(t.sub(log_qz, log_qz_prod));
  out.dkl = t.mean_all(t.sub(log_qz_prod, log_pz));
  return out;
}

template <typename T>
struct vae_loss_vars {
  typename tape<T>::var loss = -1;
  typename tape<T>::var recon = -1;
  typename tape<T>::var kl = -1;
  tc_term_vars<T> tc_terms;   // populated for the betatc objective only
  double capacity = 0.0;      // anneal diagnostic
};

// Shared ELBO pieces and the objective head. The caller supplies the encoder
// outputs (so the same data pass can also feed the isomorphism losses) and
// the reparameterization noise (so draws stay under the training loop's
// stream discipline).
template <typename T>
vae_loss_vars<T> build_vae_objective(model_graph<T>& g, typename tape<T>::var obs,
                                     typename tape<T>::var mu,
                                     typename tape<T>::var logvar,
                                     const tensor<T>& eps, const vae_config& cfg,
                                     long step) {
  auto& t = g.t;
  const int b = eps.shape[0];
  const int d = g.model.arch.d;
  cfg.validate(b);

  // z = mu + exp(logvar/2) * eps
  const auto z =
      t.add(mu, t.mul(t.exp_(t.affine(logvar, T(0.5), T(0))), t.constant(eps)));

  vae_loss_vars<T> out;
  out.recon = t.bce_logits(g.decode_logits(z), obs);

  // KL(q(z|x) || N(0,I)) = 0.5 * sum_d(mu^2 + sigma^2 - 1 - logvar), batch mean.
  const auto kl_elems = t.sub(t.add(t.square_(mu), t.exp_(logvar)),
                              t.affine(logvar, T(1), T(1)));
  out.kl = t.affine(t.mean_all(t.sum_cols(kl_elems)), T(0.5), T(0));

  switch (cfg.objective) {
    case objective_kind::beta:
      out.loss = t.add(out.recon, t.affine(out.kl, T(cfg.beta), T(0)));
      break;
    case objective_kind::anneal: {
      out.capacity = capacity_at(cfg, step);
      const auto gap = t.abs_(t.affine(out.kl, T(1), T(-out.capacity)));
      out.loss = t.add(out.recon, t.affine(gap, T(cfg.gamma), T(0)));
      break;
    }
    case objective_kind::betatc: {
      out.tc_terms = build_tc_terms(t, z, mu, logvar, d, b, cfg.dataset_size);
      // MI and dimension-wise KL keep weight 1; only TC carries beta_tc.
      out.loss = t.add(t.add(out.recon, out.tc_terms.mi),
                       t.add(t.affine(out.tc_terms.tc, T(cfg.beta_tc), T(0)),
                             out.tc_terms.dkl));
      break;
    }
  }
  return out;
}

// Reparameterization noise for one step, row-major over [batch, d].
template <typename T>
tensor<T> draw_noise(int batch, int d, rng& r) {
  tensor<T> eps({batch, d});
  for (T& v : eps.data) v = T(r.normal());
  return eps;
}

}  // namespace gvae
