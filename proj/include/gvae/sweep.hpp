#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "gvae/train.hpp"

namespace gvae {

// Desk-scale default grid: per objective two settings of its own knob,
// five seeds, both modes. 3 * 2 * 5 * 2 = 60 cells.
inline std::vector<run_config> default_sweep_cells(const run_config& base) {
  struct menu_row {
    objective_kind objective;
    double values[2];
  };
  const menu_row menu[] = {
      {objective_kind::beta, {1.0, 4.0}},
      {objective_kind::anneal, {10.0, 25.0}},
      {objective_kind::betatc, {2.0, 6.0}},
  };
  std::vector<run_config> cells;
  for (const auto& row : menu)
    for (double v : row.values)
      for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (const char* mode : {"original", "groupified"}) {
          run_config c = base;
          c.vae.objective = row.objective;
          switch (row.objective) {
            case objective_kind::beta: c.vae.beta = v; break;
            case objective_kind::anneal: c.vae.c_max = v; break;
            case objective_kind::betatc: c.vae.beta_tc = v; break;
          }
          c.seed = seed;
          c.mode = mode;
          if (c.mode == "groupified") c.group.gamma_iso = base.group.gamma_iso;
          c.apply_mode();
          cells.push_back(std::move(c));
        }
  return cells;
}

struct sweep_outcome {
  std::size_t cell = 0;
  std::uint64_t hash = 0;
  std::string record_path;
  bool skipped = false;   // record already existed
  bool failed = false;    // threw or aborted; sweep continued
  std::string message;
};

inline int sweep_workers() {
  const char* env = std::getenv("GVAE_WORKERS");
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return int(std::clamp(v, 1L, 16L));
}

// Runs every cell that has no record yet. Each cell trains single-threaded;
// cells are distributed over `workers` threads. A cell failure is recorded
// in its outcome and does not stop the others.
inline std::vector<sweep_outcome> run_sweep(const std::vector<run_config>& cells,
                                            const std::string& out_dir,
                                            const factor_dataset& data,
                                            int workers = sweep_workers()) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<sweep_outcome> outcomes(cells.size());

  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      auto& out = outcomes[i];
      out.cell = i;
      // the sweep directory is part of the cell identity; pin it before
      // hashing so the record filename matches the resume lookup
      auto cfg = cells[i];
      cfg.out_dir = out_dir;
      out.hash = run_config_hash(cfg);
      const auto hash = hash_hex(out.hash);
      const auto record = (fs::path(out_dir) / ("run_" + hash + ".jsonl")).string();
      out.record_path = record;
      if (fs::exists(record)) {
        out.skipped = true;
        continue;
      }
      try {
        const auto res = run_training(cfg, data);
        const auto ckpt = (fs::path(out_dir) / ("ckpt_" + hash + ".gvae")).string();
        res.model.save(ckpt + ".tmp");
        fs::rename(ckpt + ".tmp", ckpt);
        write_run_record(out_dir, cfg, res, ckpt);
        if (res.aborted) {
          out.failed = true;
          out.message = res.abort_reason;
        }
      } catch (const std::exception& e) {
        out.failed = true;
        out.message = e.what();
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return outcomes;
}

}  // namespace gvae
