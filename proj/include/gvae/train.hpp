#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "gvae/audit.hpp"
#include "gvae/config.hpp"
#include "gvae/metrics.hpp"

namespace gvae {

struct loss_sample {
  long step = 0;
  double total = 0, recon = 0, kl = 0;
  double abel = -1, order = -1;  // -1 when that head was not built
};

struct eval_sample {
  long step = 0;
  metric_report metrics;
  residual_report residuals;
};

struct train_result {
  mlp_model<float> model;
  std::vector<loss_sample> losses;
  std::vector<eval_sample> evals;
  long steps_done = 0;
  bool aborted = false;
  std::string abort_reason;
  double wall_seconds = 0;
};

// One full training run: batches from the non-holdout grid, Adam updates,
// metric and residual evaluations on a cadence plus at step 0 and the end.
// Single-threaded and bit-reproducible from (config, dataset). The callback
// sees each loss sample as it is recorded and must not throw.
inline train_result run_training(run_config cfg, const factor_dataset& data,
                                 const std::function<void(const loss_sample&)>& on_loss = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const auto train_ids = training_indices(data.count());
  cfg.vae.dataset_size = long(train_ids.size());
  cfg.vae.validate(cfg.batch);
  cfg.arch.input_size = data.image_size();

  train_result res;
  res.model = mlp_model<float>::create(cfg.arch, cfg.seed);

  rng batch_rng(derive_seed(cfg.seed, "batch"));
  rng reparam_rng(derive_seed(cfg.seed, "reparam"));
  rng pair_rng(derive_seed(cfg.seed, "pairs"));
  rng audit_rng(derive_seed(cfg.seed, "audit"));

  const auto audit_ids = audit_sample(holdout_indices(data.count()), 256, audit_rng);
  const auto audit_obs = data.observations(audit_ids);

  auto evaluate = [&](long step) {
    eval_sample ev;
    ev.step = step;
    const auto codes = representation(res.model, data);
    ev.metrics = evaluate_metric_codes(codes, data,
                                       derive_seed(cfg.seed, "metrics" + std::to_string(step)));
    ev.residuals = audit_codec(res.model, audit_obs);
    res.evals.push_back(std::move(ev));
  };

  evaluate(0);

  adam<float> opt;
  opt.lr = float(cfg.lr);
  for (long step = 0; step < cfg.steps; ++step) {
    std::vector<long> ids(std::size_t(cfg.batch), 0);
    for (long& id : ids)
      id = train_ids[std::size_t(batch_rng.uniform_int(int(train_ids.size())))];
    const auto obs = data.observations(ids);

    try {
      tape<float> t;
      model_graph<float> g(t, res.model);
      const auto built =
          build_total_loss(g, obs, cfg.vae, cfg.group, reparam_rng, pair_rng, step);
      const double total = t.value(built.total).at(0);
      if (!std::isfinite(total)) throw numeric_error("total loss is not finite");
      t.backward(built.total);
      const auto grads = g.collect_grads();
      for (const auto* gr : grads)
        if (!gr->all_finite()) throw numeric_error("gradient is not finite");

      if (step % 100 == 0 || step + 1 == cfg.steps) {
        loss_sample ls;
        ls.step = step;
        ls.total = total;
        ls.recon = t.value(built.vae.recon).at(0);
        ls.kl = t.value(built.vae.kl).at(0);
        if (built.iso.abel >= 0) ls.abel = t.value(built.iso.abel).at(0);
        if (built.iso.order >= 0) ls.order = t.value(built.iso.order).at(0);
        if (on_loss) on_loss(ls);
        res.losses.push_back(ls);
      }
      opt.step(res.model.params, grads);
    } catch (const numeric_error& e) {
      res.aborted = true;
      res.abort_reason = "step " + std::to_string(step) + ": " + e.what();
      res.steps_done = step;
      break;
    }
    res.steps_done = step + 1;
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 != cfg.steps)
      evaluate(step + 1);
  }

  if (!res.aborted && (res.evals.empty() || res.evals.back().step != res.steps_done))
    evaluate(res.steps_done);

  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline nlohmann::json metrics_json(const metric_report& m) {
  nlohmann::json j;
  j["betavae"] = m.betavae;
  j["factorvae"] = m.factorvae;
  j["mig"] = m.mig;
  j["dci"] = m.dci;
  j["diagnostics"] = {{"betavae_degenerate", m.betavae_degenerate},
                      {"factorvae_votes", m.factorvae_votes},
                      {"mi_matrix", m.mi_matrix},
                      {"importance", m.importance}};
  return j;
}

inline nlohmann::json residuals_json(const residual_report& r) {
  return {{"abel_mean", r.abel_mean},   {"abel_max", r.abel_max},
          {"order_mean", r.order_mean}, {"order_max", r.order_max},
          {"recon_mse", r.recon_mse},   {"sample_count", r.sample_count},
          {"abel_pair_mean", r.abel_pair_mean},
          {"order_dim_mean", r.order_dim_mean}};
}

// Slim view of a persisted run, enough for aggregation.
struct record_eval {
  long step = 0;
  double betavae = 0, factorvae = 0, mig = 0, dci = 0;
  double abel_mean = 0, abel_max = 0, order_mean = 0, order_max = 0, recon_mse = 0;
};

struct run_record {
  config_map config;
  std::string hash_hex;
  std::vector<loss_sample> losses;
  std::vector<record_eval> evals;
  std::string status;  // "ok" or "nan_abort"
  std::string abort_reason;
  std::string checkpoint;
  double wall_seconds = 0;
};

// Record files are JSONL: one config line, loss and eval lines in step
// order, one final line. Written to a temp file and renamed into place.
inline std::string write_run_record(const std::string& dir, const run_config& cfg,
                                    const train_result& res,
                                    const std::string& checkpoint_path) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto hash = hash_hex(run_config_hash(cfg));
  const auto path = (fs::path(dir) / ("run_" + hash + ".jsonl")).string();
  const auto tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw format_error("cannot open '" + tmp + "' for writing");
    os << nlohmann::json{{"event", "config"},
                         {"hash", hash},
                         {"config", to_config_map(cfg)}}
       << "\n";
    for (const auto& ls : res.losses) {
      nlohmann::json j{{"event", "loss"},   {"step", ls.step}, {"total", ls.total},
                       {"recon", ls.recon}, {"kl", ls.kl}};
      if (ls.abel >= 0) j["abel"] = ls.abel;
      if (ls.order >= 0) j["order"] = ls.order;
      os << j << "\n";
    }
    for (const auto& ev : res.evals)
      os << nlohmann::json{{"event", "eval"},
                           {"step", ev.step},
                           {"metrics", metrics_json(ev.metrics)},
                           {"residuals", residuals_json(ev.residuals)}}
         << "\n";
    os << nlohmann::json{{"event", "final"},
                         {"status", res.aborted ? "nan_abort" : "ok"},
                         {"reason", res.abort_reason},
                         {"steps_done", res.steps_done},
                         {"wall_seconds", res.wall_seconds},
                         {"checkpoint", checkpoint_path}}
       << "\n";
    if (!os) throw format_error("failed writing record '" + tmp + "'");
  }
  fs::rename(tmp, path);
  return path;
}

inline run_record read_run_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open record '" + path + "'");
  run_record rec;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw format_error("record '" + path + "' line " + std::to_string(lineno) +
                         ": " + e.what());
    }
    const std::string event = j.value("event", "");
    if (event == "config") {
      rec.hash_hex = j.value("hash", "");
      for (const auto& [k, v] : j.at("config").items())
        rec.config[k] = v.get<std::string>();
    } else if (event == "loss") {
      loss_sample ls;
      ls.step = j.value("step", 0L);
      ls.total = j.value("total", 0.0);
      ls.recon = j.value("recon", 0.0);
      ls.kl = j.value("kl", 0.0);
      ls.abel = j.value("abel", -1.0);
      ls.order = j.value("order", -1.0);
      rec.losses.push_back(ls);
    } else if (event == "eval") {
      record_eval ev;
      ev.step = j.value("step", 0L);
      const auto& m = j.at("metrics");
      ev.betavae = m.value("betavae", 0.0);
      ev.factorvae = m.value("factorvae", 0.0);
      ev.mig = m.value("mig", 0.0);
      ev.dci = m.value("dci", 0.0);
      const auto& r = j.at("residuals");
      ev.abel_mean = r.value("abel_mean", 0.0);
      ev.abel_max = r.value("abel_max", 0.0);
      ev.order_mean = r.value("order_mean", 0.0);
      ev.order_max = r.value("order_max", 0.0);
      ev.recon_mse = r.value("recon_mse", 0.0);
      rec.evals.push_back(ev);
    } else if (event == "final") {
      rec.status = j.value("status", "");
      rec.abort_reason = j.value("reason", "");
      rec.checkpoint = j.value("checkpoint", "");
      rec.wall_seconds = j.value("wall_seconds", 0.0);
    } else {
      throw format_error("record '" + path + "' line " + std::to_string(lineno) +
                         ": unknown event '" + event + "'");
    }
  }
  if (rec.config.empty() || rec.status.empty())
    throw format_error("record '" + path + "' is missing config or final line");
  return rec;
}

}  // namespace gvae
