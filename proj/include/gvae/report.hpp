#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <tuple>

#include "gvae/metrics.hpp"
#include "gvae/train.hpp"

namespace gvae {

// One completed run, reduced to what the tables need.
struct report_row {
  std::string objective;
  std::string mode;
  double hyper = 0;  // the swept knob of that objective
  std::uint64_t seed = 0;
  record_eval first_eval;
  record_eval final_eval;
};

inline const char* objective_hyper_key(const std::string& objective) {
  if (objective == "beta") return "beta";
  if (objective == "anneal") return "c_max";
  if (objective == "betatc") return "beta_tc";
  throw format_error("unknown objective '" + objective + "' in record");
}

inline double metric_value(const record_eval& ev, const std::string& metric) {
  if (metric == "betavae") return ev.betavae;
  if (metric == "factorvae") return ev.factorvae;
  if (metric == "mig") return ev.mig;
  if (metric == "dci") return ev.dci;
  throw contract_error("unknown metric '" + metric + "'");
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"betavae", "factorvae", "mig", "dci"};
  return names;
}

// Loads every run_*.jsonl in the directory. Rows come back sorted on
// (objective, hyper, mode, seed), so downstream aggregation does not depend
// on directory iteration order.
inline std::vector<report_row> load_report_rows(const std::string& dir,
                                                std::vector<std::string>* warnings = nullptr) {
  namespace fs = std::filesystem;
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };
  std::vector<report_row> rows;
  if (!fs::is_directory(dir)) throw config_error("records directory '" + dir + "' not found");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("run_", 0) != 0 || entry.path().extension() != ".jsonl") continue;
    run_record rec;
    try {
      rec = read_run_record(entry.path().string());
    } catch (const format_error& e) {
      warn(std::string("skipping unreadable record: ") + e.what());
      continue;
    }
    if (rec.status != "ok") {
      warn("skipping record " + name + " with status " + rec.status);
      continue;
    }
    if (rec.evals.empty()) {
      warn("skipping record " + name + " without evaluations");
      continue;
    }
    report_row row;
    try {
      row.objective = rec.config.at("objective");
      row.mode = rec.config.at("mode");
      row.hyper = std::stod(rec.config.at(objective_hyper_key(row.objective)));
      row.seed = std::stoull(rec.config.at("seed"));
    } catch (const std::exception& e) {
      warn("skipping record " + name + " with malformed config: " + e.what());
      continue;
    }
    row.first_eval = rec.evals.front();
    row.final_eval = rec.evals.back();
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const report_row& a, const report_row& b) {
    return std::tie(a.objective, a.hyper, a.mode, a.seed) <
           std::tie(b.objective, b.hyper, b.mode, b.seed);
  });
  return rows;
}

struct aggregate_entry {
  std::string objective;
  std::string mode;
  std::string metric;
  double mean = 0;
  double std_dev = 0;  // sample std over runs; 0 for a single run
  int n = 0;
};

inline std::vector<aggregate_entry> aggregate_metrics(const std::vector<report_row>& rows) {
  std::map<std::pair<std::string, std::string>, std::vector<const report_row*>> groups;
  for (const auto& row : rows) groups[{row.objective, row.mode}].push_back(&row);
  std::vector<aggregate_entry> out;
  for (const auto& [key, members] : groups)
    for (const auto& metric : metric_names()) {
      aggregate_entry e;
      e.objective = key.first;
      e.mode = key.second;
      e.metric = metric;
      e.n = int(members.size());
      for (const auto* row : members) e.mean += metric_value(row->final_eval, metric);
      e.mean /= e.n;
      if (e.n > 1) {
        double sq = 0;
        for (const auto* row : members) {
          const double c = metric_value(row->final_eval, metric) - e.mean;
          sq += c * c;
        }
        e.std_dev = std::sqrt(sq / (e.n - 1));
      }
      out.push_back(std::move(e));
    }
  return out;
}

struct paired_delta {
  std::string objective;
  double hyper = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double original = 0;
  double groupified = 0;
  double delta = 0;  // groupified - original
};

// Matches runs across modes on (objective, hyper, seed). Cells without
// exactly one run per mode are skipped with a warning.
inline std::vector<paired_delta> paired_deltas(const std::vector<report_row>& rows,
                                               std::vector<std::string>* warnings = nullptr) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };
  std::map<std::tuple<std::string, double, std::uint64_t>,
           std::pair<std::vector<const report_row*>, std::vector<const report_row*>>>
      cells;
  for (const auto& row : rows) {
    auto& cell = cells[{row.objective, row.hyper, row.seed}];
    (row.mode == "original" ? cell.first : cell.second).push_back(&row);
  }
  std::vector<paired_delta> out;
  for (const auto& [key, cell] : cells) {
    if (cell.first.size() != 1 || cell.second.size() != 1) {
      warn("unpaired cell objective=" + std::get<0>(key) +
           " hyper=" + std::to_string(std::get<1>(key)) +
           " seed=" + std::to_string(std::get<2>(key)));
      continue;
    }
    for (const auto& metric : metric_names()) {
      paired_delta d;
      d.objective = std::get<0>(key);
      d.hyper = std::get<1>(key);
      d.seed = std::get<2>(key);
      d.metric = metric;
      d.original = metric_value(cell.first[0]->final_eval, metric);
      d.groupified = metric_value(cell.second[0]->final_eval, metric);
      d.delta = d.groupified - d.original;
      out.push_back(std::move(d));
    }
  }
  return out;
}

// Exact two-sided binomial sign test at p = 1/2; ties are dropped.
inline double sign_test_p(int positive, int negative) {
  const int n = positive + negative;
  if (n == 0) return 1.0;
  std::vector<double> pmf(std::size_t(n) + 1, 0.0);
  pmf[0] = std::pow(0.5, n);
  for (int k = 1; k <= n; ++k)
    pmf[std::size_t(k)] = pmf[std::size_t(k) - 1] * double(n - k + 1) / double(k);
  double lo = 0, hi = 0;
  for (int k = 0; k <= positive; ++k) lo += pmf[std::size_t(k)];
  for (int k = positive; k <= n; ++k) hi += pmf[std::size_t(k)];
  return std::min(1.0, 2.0 * std::min(lo, hi));
}

struct sign_test_entry {
  std::string objective;
  std::string metric;
  int pairs = 0;
  int positive = 0;
  int negative = 0;
  double p_value = 1.0;
};

inline std::vector<sign_test_entry> sign_tests(const std::vector<paired_delta>& deltas) {
  std::map<std::pair<std::string, std::string>, sign_test_entry> groups;
  for (const auto& d : deltas) {
    auto& e = groups[{d.objective, d.metric}];
    e.objective = d.objective;
    e.metric = d.metric;
    ++e.pairs;
    if (d.delta > 0) ++e.positive;
    if (d.delta < 0) ++e.negative;
  }
  std::vector<sign_test_entry> out;
  for (auto& [key, e] : groups) {
    e.p_value = sign_test_p(e.positive, e.negative);
    out.push_back(e);
  }
  return out;
}

namespace detail {

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw format_error("cannot open '" + path + "' for writing");
  return os;
}

}  // namespace detail

inline void write_aggregate_csv(const std::string& path,
                                const std::vector<aggregate_entry>& entries) {
  auto os = detail::open_csv(path);
  os << "objective,mode,metric,mean,std,n\n";
  for (const auto& e : entries)
    os << e.objective << ',' << e.mode << ',' << e.metric << ','
       << detail::csv_num(e.mean) << ',' << detail::csv_num(e.std_dev) << ',' << e.n << "\n";
}

inline void write_paired_csv(const std::string& path,
                             const std::vector<paired_delta>& deltas) {
  auto os = detail::open_csv(path);
  os << "objective,hyper,seed,metric,original,groupified,delta\n";
  for (const auto& d : deltas)
    os << d.objective << ',' << detail::csv_num(d.hyper) << ',' << d.seed << ','
       << d.metric << ',' << detail::csv_num(d.original) << ','
       << detail::csv_num(d.groupified) << ',' << detail::csv_num(d.delta) << "\n";
}

inline void write_sign_csv(const std::string& path,
                           const std::vector<sign_test_entry>& entries) {
  auto os = detail::open_csv(path);
  os << "objective,metric,pairs,positive,negative,p_value\n";
  for (const auto& e : entries)
    os << e.objective << ',' << e.metric << ',' << e.pairs << ',' << e.positive << ','
       << e.negative << ',' << detail::csv_num(e.p_value) << "\n";
}

// One row per grid point: factor labels plus the mu coordinates, for
// external scatter plots of the representation space.
template <typename Codec>
void write_latent_csv(const std::string& path, const Codec& codec,
                      const factor_dataset& data) {
  const auto codes = representation(codec, data);
  auto os = detail::open_csv(path);
  os << "shape,scale,pos_x,pos_y";
  for (int j = 0; j < codes.shape[1]; ++j) os << ",mu_" << j;
  os << "\n";
  for (long i = 0; i < data.count(); ++i) {
    os << data.label(i, 0) << ',' << data.label(i, 1) << ',' << data.label(i, 2) << ','
       << data.label(i, 3);
    for (int j = 0; j < codes.shape[1]; ++j)
      os << ',' << detail::csv_num(double(codes.at(int(i), j)));
    os << "\n";
  }
}

}  // namespace gvae
