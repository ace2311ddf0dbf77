#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gvae/report.hpp"
#include "gvae/sweep.hpp"
#include "gvae/traverse.hpp"

// Command line front end. The whole dispatcher lives in a header so tests
// can call cli_main with a crafted argv and check exit codes in process.
// Exit codes: 0 success, 2 bad configuration or file format, 3 numeric
// abort during training, 1 anything else.

namespace gvae {
namespace detail {

inline void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path))
    throw config_error(what + " '" + path + "' does not exist");
}

// Checkpoint plus record in cfg.out_dir, same layout run_sweep produces, so
// eval/traverse/report work on either source.
inline std::string save_run_outputs(const run_config& cfg, const train_result& res) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const auto hash = hash_hex(run_config_hash(cfg));
  const auto ckpt = (fs::path(cfg.out_dir) / ("ckpt_" + hash + ".gvae")).string();
  res.model.save(ckpt + ".tmp");
  fs::rename(ckpt + ".tmp", ckpt);
  return write_run_record(cfg.out_dir, cfg, res, ckpt);
}

// Residuals on the same holdout sample the training loop audits.
inline residual_report holdout_residuals(const mlp_model<float>& model,
                                         const factor_dataset& data,
                                         std::uint64_t seed) {
  rng audit_rng(derive_seed(seed, "audit"));
  const auto ids = audit_sample(holdout_indices(data.count()), 256, audit_rng);
  return audit_codec(model, data.observations(ids));
}

inline void emit_json(const nlohmann::json& j, const std::string& out_path,
                      std::ostream& os) {
  const auto text = j.dump(2);
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw format_error("cannot open '" + out_path + "' for writing");
    f << text << "\n";
  }
  os << text << "\n";
}

struct gen_args {
  int shapes = 3, scales = 6, pos_x = 8, pos_y = 8, height = 16, width = 16;
  std::string out;
};

inline int cmd_gen_data(const gen_args& a, std::ostream& os) {
  factor_spec spec;
  spec.factors = {{"shape", a.shapes},
                  {"scale", a.scales},
                  {"pos_x", a.pos_x},
                  {"pos_y", a.pos_y}};
  spec.image_height = a.height;
  spec.image_width = a.width;
  factor_dataset data(spec);
  data.save(a.out);
  os << "wrote " << data.count() << " images (" << a.height << "x" << a.width
     << ") to " << a.out << "\n";
  return 0;
}

struct train_args {
  std::string config;
  std::string out;    // overrides the config's output directory when set
  long long seed = 0;
  bool seed_set = false;
};

inline int cmd_train(const train_args& a, std::ostream& os) {
  auto cfg = run_config_from_map(read_config_file(a.config));
  if (a.seed_set) cfg.seed = std::uint64_t(a.seed);
  if (!a.out.empty()) cfg.out_dir = a.out;
  require_file(cfg.dataset, "dataset");
  const auto data = factor_dataset::load(cfg.dataset);

  os << "run " << hash_hex(run_config_hash(cfg)) << ": mode=" << cfg.mode
     << " objective=" << to_string(cfg.vae.objective) << " seed=" << cfg.seed
     << " steps=" << cfg.steps << "\n";
  const auto res = run_training(cfg, data, [&](const loss_sample& ls) {
    os << "step " << ls.step << " total=" << ls.total << " recon=" << ls.recon
       << " kl=" << ls.kl;
    if (ls.abel >= 0) os << " abel=" << ls.abel;
    if (ls.order >= 0) os << " order=" << ls.order;
    os << "\n";
  });
  const auto record = save_run_outputs(cfg, res);
  os << "record " << record << "\n";
  if (res.aborted) {
    std::cerr << "training aborted: " << res.abort_reason << "\n";
    return 3;
  }
  os << "done in " << res.wall_seconds << "s, " << res.evals.size()
     << " evaluations\n";
  return 0;
}

struct eval_args {
  std::string checkpoint, dataset, out;
  long long seed = 0;
};

inline int cmd_eval(const eval_args& a, std::ostream& os) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.dataset, "dataset");
  const auto model = mlp_model<float>::load(a.checkpoint);
  const auto data = factor_dataset::load(a.dataset);
  const auto codes = representation(model, data);
  const auto metrics =
      evaluate_metric_codes(codes, data, derive_seed(std::uint64_t(a.seed), "metrics"));
  const auto residuals = holdout_residuals(model, data, std::uint64_t(a.seed));
  nlohmann::json j;
  j["checkpoint"] = a.checkpoint;
  j["seed"] = a.seed;
  j["metrics"] = metrics_json(metrics);
  j["residuals"] = residuals_json(residuals);
  emit_json(j, a.out, os);
  return 0;
}

struct traverse_args {
  std::string checkpoint, dataset, out;
  long long image = 0;
  int dim = 0;
  double t0 = 0, t1 = -1, step = 1;  // t1 < 0 means one default period past wrap
};

inline int cmd_traverse(const traverse_args& a, std::ostream& os) {
  namespace fs = std::filesystem;
  require_file(a.checkpoint, "checkpoint");
  require_file(a.dataset, "dataset");
  const auto model = mlp_model<float>::load(a.checkpoint);
  const auto data = factor_dataset::load(a.dataset);
  if (a.image < 0 || a.image >= data.count())
    throw config_error("image index out of range");
  if (a.dim < 0 || a.dim >= model.latent_dim())
    throw config_error("latent dim out of range");

  const int n = model.modulus();
  const double t1 = a.t1 < 0 ? a.t0 + 2 * n - 2 : a.t1;
  const auto obs = data.observations({a.image});
  const auto tr = traverse_dim(model, obs, a.dim, a.t0, t1, a.step);

  fs::create_directories(a.out);
  const auto tag = "img" + std::to_string(a.image) + "_dim" + std::to_string(a.dim);
  const auto strip_path = (fs::path(a.out) / ("traverse_" + tag + ".pgm")).string();
  write_pgm(strip_path, data.spec().image_height,
            data.spec().image_width * int(tr.frames.size()),
            strip_u8(tr, data.spec().image_height, data.spec().image_width));

  period_report rep;
  try {
    rep = measure_period(tr, a.dim, n);
  } catch (const contract_error& e) {
    // a range that never reaches t + n is a usage problem at this level
    throw config_error(e.what());
  }
  nlohmann::json j;
  j["dim"] = rep.dim;
  j["n"] = rep.n;
  j["offsets"] = rep.offsets;
  j["mse"] = rep.mse;
  j["mse_mean"] = rep.mse_mean;
  j["mse_max"] = rep.mse_max;
  j["pairs"] = rep.pairs;
  j["recon_floor"] = reconstruction_floor(model, obs);
  j["strip"] = strip_path;
  emit_json(j, (fs::path(a.out) / ("period_" + tag + ".json")).string(), os);
  return 0;
}

struct sweep_args {
  std::string config, out;
  int workers = 0;  // 0 keeps the GVAE_WORKERS / serial default
};

inline int cmd_sweep(const sweep_args& a, std::ostream& os) {
  auto base = run_config_from_map(read_config_file(a.config));
  if (!a.out.empty()) base.out_dir = a.out;
  require_file(base.dataset, "dataset");
  const auto data = factor_dataset::load(base.dataset);
  const auto cells = default_sweep_cells(base);
  const int workers = a.workers > 0 ? a.workers : sweep_workers();
  os << "sweep: " << cells.size() << " cells, " << workers << " worker(s), into "
     << base.out_dir << "\n";
  const auto outcomes = run_sweep(cells, base.out_dir, data, workers);
  long ran = 0, skipped = 0, failed = 0;
  for (const auto& o : outcomes) {
    if (o.skipped) {
      ++skipped;
      continue;
    }
    if (o.failed) {
      ++failed;
      os << "cell " << o.cell << " (" << hash_hex(o.hash) << ") failed: "
         << o.message << "\n";
    } else {
      ++ran;
    }
  }
  os << "sweep complete: " << ran << " ran, " << skipped << " skipped, "
     << failed << " failed\n";
  return 0;
}

struct report_args {
  std::string records, out, checkpoint, dataset;
};

inline int cmd_report(const report_args& a, std::ostream& os) {
  namespace fs = std::filesystem;
  if (a.checkpoint.empty() != a.dataset.empty())
    throw config_error("latent export needs both --checkpoint and --dataset");

  std::vector<std::string> warnings;
  const auto rows = load_report_rows(a.records, &warnings);
  const auto aggregates = aggregate_metrics(rows);
  const auto deltas = paired_deltas(rows, &warnings);
  const auto signs = sign_tests(deltas);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  fs::create_directories(a.out);
  write_aggregate_csv((fs::path(a.out) / "aggregate.csv").string(), aggregates);
  write_paired_csv((fs::path(a.out) / "paired_deltas.csv").string(), deltas);
  write_sign_csv((fs::path(a.out) / "sign_tests.csv").string(), signs);
  os << rows.size() << " runs, " << deltas.size() << " paired deltas, "
     << signs.size() << " sign tests -> " << a.out << "\n";

  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint, "checkpoint");
    require_file(a.dataset, "dataset");
    const auto model = mlp_model<float>::load(a.checkpoint);
    const auto data = factor_dataset::load(a.dataset);
    const auto latent = (fs::path(a.out) / "latent_space.csv").string();
    write_latent_csv(latent, model, data);
    os << "latent coordinates -> " << latent << "\n";
  }
  return 0;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& os = std::cout) {
  CLI::App app{"groupified vae laboratory"};
  app.require_subcommand(1);

  detail::gen_args ga;
  auto* gen = app.add_subcommand("gen-data", "render the synthetic factor grid");
  gen->add_option("--shapes", ga.shapes, "sprite kinds (max 3)");
  gen->add_option("--scales", ga.scales, "scale steps");
  gen->add_option("--pos-x", ga.pos_x, "horizontal positions");
  gen->add_option("--pos-y", ga.pos_y, "vertical positions");
  gen->add_option("--height", ga.height, "image height");
  gen->add_option("--width", ga.width, "image width");
  gen->add_option("--out", ga.out, "dataset file to write")->required();

  detail::train_args ta;
  auto* train = app.add_subcommand("train", "train one model from a config file");
  train->add_option("--config", ta.config, "key=value run config")->required();
  auto* seed_opt = train->add_option("--seed", ta.seed, "override the config seed");
  train->add_option("--out", ta.out, "override the output directory");

  detail::eval_args ea;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--checkpoint", ea.checkpoint, "model file")->required();
  eval->add_option("--dataset", ea.dataset, "dataset file")->required();
  eval->add_option("--seed", ea.seed, "metric sampling seed");
  eval->add_option("--out", ea.out, "also write the JSON report here");

  detail::traverse_args va;
  auto* trav = app.add_subcommand("traverse", "decode along one latent coordinate");
  trav->add_option("--checkpoint", va.checkpoint, "model file")->required();
  trav->add_option("--dataset", va.dataset, "dataset file")->required();
  trav->add_option("--image", va.image, "source image index");
  trav->add_option("--dim", va.dim, "latent coordinate")->required();
  trav->add_option("--t0", va.t0, "first offset");
  trav->add_option("--t1", va.t1, "last offset (default covers one wrap)");
  trav->add_option("--step", va.step, "offset increment");
  trav->add_option("--out", va.out, "directory for strip and report")->required();

  detail::sweep_args sa;
  auto* sweep = app.add_subcommand("sweep", "run the default grid over a base config");
  sweep->add_option("--config", sa.config, "base run config")->required();
  sweep->add_option("--out", sa.out, "override the sweep directory");
  sweep->add_option("--workers", sa.workers, "parallel cells (default GVAE_WORKERS)");

  detail::report_args ra;
  auto* report = app.add_subcommand("report", "aggregate run records into CSV tables");
  report->add_option("--records", ra.records, "directory of run records")->required();
  report->add_option("--out", ra.out, "directory for the CSV tables")->required();
  report->add_option("--checkpoint", ra.checkpoint, "model for the latent export");
  report->add_option("--dataset", ra.dataset, "dataset for the latent export");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // prints help or the parse problem
    return rc == 0 ? 0 : 2;
  }

  try {
    ta.seed_set = seed_opt->count() > 0;
    if (app.got_subcommand(gen)) return detail::cmd_gen_data(ga, os);
    if (app.got_subcommand(train)) return detail::cmd_train(ta, os);
    if (app.got_subcommand(eval)) return detail::cmd_eval(ea, os);
    if (app.got_subcommand(trav)) return detail::cmd_traverse(va, os);
    if (app.got_subcommand(sweep)) return detail::cmd_sweep(sa, os);
    if (app.got_subcommand(report)) return detail::cmd_report(ra, os);
    return 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const format_error& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gvae
