#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "gvae/groupify.hpp"
#include "gvae/model.hpp"
#include "gvae/vae.hpp"

namespace gvae {

// Flat key = value configuration text. '#' starts a comment, blank lines are
// skipped, keys are unique. The canonical form (sorted keys, one "k=v" per
// line) is what gets hashed, so formatting differences do not change runs.
using config_map = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-')
      return false;
  return true;
}

inline long parse_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': '" + v + "' is not an integer");
  }
  if (used != v.size())
    throw config_error("config key '" + key + "': '" + v + "' is not an integer");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': '" + v + "' is not a number");
  }
  if (used != v.size())
    throw config_error("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

// Shortest round-trip decimal so canonical text is stable across writers.
inline std::string format_double(double v) {
  char buf[64];
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

}  // namespace detail

inline config_map parse_config_text(const std::string& text) {
  config_map out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (!detail::valid_key(key))
      throw config_error("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
    if (value.empty())
      throw config_error("config line " + std::to_string(lineno) + ": empty value for '" +
                         key + "'");
    if (!out.emplace(key, value).second)
      throw config_error("config line " + std::to_string(lineno) + ": duplicate key '" +
                         key + "'");
  }
  return out;
}

inline std::string canonical_config_text(const config_map& m) {
  std::string out;
  for (const auto& [k, v] : m) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

inline std::uint64_t config_hash(const config_map& m) {
  const auto text = canonical_config_text(m);
  return fnv1a(text.data(), text.size());
}

inline config_map read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// One training run, fully specified. The original mode pins the plain
// decoder and switches the structural losses off.
struct run_config {
  std::string dataset;
  vae_config vae;
  group_config group;
  std::string mode = "groupified";
  model_arch arch;
  std::uint64_t seed = 0;
  long steps = 4000;
  int batch = 64;
  double lr = 1e-3;
  long eval_every = 1000;
  std::string out_dir = "runs";

  void apply_mode() {
    if (mode == "original") {
      arch.convention = decoder_convention::original;
      group.gamma_iso = 0.0;
    } else if (mode == "groupified") {
      arch.convention = decoder_convention::groupified;
    } else {
      throw config_error("mode must be 'original' or 'groupified', got '" + mode + "'");
    }
    arch.n = group.n;
  }

  void validate() const {
    if (dataset.empty()) throw config_error("run config: dataset path is required");
    if (mode != "original" && mode != "groupified")
      throw config_error("run config: bad mode '" + mode + "'");
    if (steps < 0) throw config_error("run config: steps must be >= 0");
    if (batch < 2) throw config_error("run config: batch must be >= 2");
    if (lr <= 0) throw config_error("run config: lr must be > 0");
    if (eval_every < 1) throw config_error("run config: eval_every must be >= 1");
    if (out_dir.empty()) throw config_error("run config: output directory is required");
    // dataset_size binds when the dataset loads; a stand-in keeps the other
    // value checks active before that
    auto probe = vae;
    if (probe.objective == objective_kind::betatc && probe.dataset_size == 0)
      probe.dataset_size = batch;
    probe.validate(batch);
    group.validate();
    if (mode == "original" && group.gamma_iso != 0.0)
      throw config_error("run config: original mode requires gamma_iso = 0");
    if (mode == "original" && arch.convention != decoder_convention::original)
      throw config_error("run config: original mode requires the plain decoder");
  }
};

inline run_config run_config_from_map(const config_map& m) {
  run_config c;
  for (const auto& [key, value] : m) {
    if (key == "dataset") c.dataset = value;
    else if (key == "objective") c.vae.objective = objective_from_string(value);
    else if (key == "beta") c.vae.beta = detail::parse_double(key, value);
    else if (key == "gamma") c.vae.gamma = detail::parse_double(key, value);
    else if (key == "c_max") c.vae.c_max = detail::parse_double(key, value);
    else if (key == "c_steps") c.vae.c_steps = detail::parse_long(key, value);
    else if (key == "beta_tc") c.vae.beta_tc = detail::parse_double(key, value);
    else if (key == "n") c.group.n = int(detail::parse_long(key, value));
    else if (key == "d") c.arch.d = int(detail::parse_long(key, value));
    else if (key == "act") c.arch.act_fn = activation_from_string(value);
    else if (key == "gamma_iso") c.group.gamma_iso = detail::parse_double(key, value);
    else if (key == "pairs") c.group.pairs = pair_strategy_from_string(value);
    else if (key == "pair_sample_k") c.group.pair_sample_k = int(detail::parse_long(key, value));
    else if (key == "iso") c.group.parts = iso_parts_from_string(value);
    else if (key == "mode") c.mode = value;
    else if (key == "seed") c.seed = std::uint64_t(detail::parse_long(key, value));
    else if (key == "steps") c.steps = detail::parse_long(key, value);
    else if (key == "batch") c.batch = int(detail::parse_long(key, value));
    else if (key == "lr") c.lr = detail::parse_double(key, value);
    else if (key == "eval_every") c.eval_every = detail::parse_long(key, value);
    else if (key == "out") c.out_dir = value;
    else throw config_error("unknown config key '" + key + "'");
  }
  c.apply_mode();
  c.validate();
  return c;
}

// Full echo with defaults expanded; hashing this makes equal settings
// collide regardless of which keys the source file spelled out.
inline config_map to_config_map(const run_config& c) {
  config_map m;
  m["dataset"] = c.dataset;
  m["objective"] = to_string(c.vae.objective);
  m["beta"] = detail::format_double(c.vae.beta);
  m["gamma"] = detail::format_double(c.vae.gamma);
  m["c_max"] = detail::format_double(c.vae.c_max);
  m["c_steps"] = std::to_string(c.vae.c_steps);
  m["beta_tc"] = detail::format_double(c.vae.beta_tc);
  m["n"] = std::to_string(c.group.n);
  m["d"] = std::to_string(c.arch.d);
  m["act"] = to_string(c.arch.act_fn);
  m["gamma_iso"] = detail::format_double(c.group.gamma_iso);
  m["pairs"] = to_string(c.group.pairs);
  m["pair_sample_k"] = std::to_string(c.group.pair_sample_k);
  m["iso"] = to_string(c.group.parts);
  m["mode"] = c.mode;
  m["seed"] = std::to_string(c.seed);
  m["steps"] = std::to_string(c.steps);
  m["batch"] = std::to_string(c.batch);
  m["lr"] = detail::format_double(c.lr);
  m["eval_every"] = std::to_string(c.eval_every);
  m["out"] = c.out_dir;
  return m;
}

inline std::uint64_t run_config_hash(const run_config& c) {
  return config_hash(to_config_map(c));
}

}  // namespace gvae
