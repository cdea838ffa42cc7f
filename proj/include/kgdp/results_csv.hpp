#pragma once

// results.csv / summary.csv writers. Numbers are written with %.17g so a
// re-run with the same seed is byte-identical.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "kgdp/harness.hpp"

namespace kgdp {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> results_columns(std::size_t theta_dimension) {
  std::vector<std::string> cols = {"run_id", "n",       "policy",    "x_index",
                                   "y_observed", "oc",  "oc_pct",    "entropy",
                                   "p_truth", "resampled", "f_mse_sqrt_norm"};
  for (std::size_t i = 0; i < theta_dimension; ++i) cols.push_back("theta_err_" + std::to_string(i));
  return cols;
}

inline void write_header(std::ostream& out, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

// One row per (replication, step); run_id is the replication's position.
inline void write_results_csv(std::ostream& out, const ReplicationResult& result, PolicyKind policy,
                              std::size_t theta_dimension) {
  write_header(out, results_columns(theta_dimension));
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    for (const auto& s : result.runs[r].steps) {
      out << r << ',' << s.n << ',' << to_string(policy) << ',' << s.x_index << ','
          << format_number(s.y) << ',' << format_number(s.oc) << ',' << format_number(s.oc_pct) << ','
          << format_number(s.entropy) << ',' << (s.p_truth ? format_number(*s.p_truth) : "") << ','
          << (s.resampled ? 1 : 0) << ',' << format_number(s.f_mse_sqrt_norm);
      for (double e : s.theta_err) out << ',' << format_number(e);
      out << '\n';
    }
  }
}

inline std::vector<std::string> summary_columns(std::size_t theta_dimension) {
  std::vector<std::string> cols = {"n",           "policy",      "replications",
                                   "oc_mean",     "oc_se",       "oc_pct_mean",
                                   "oc_pct_se",   "entropy_mean", "entropy_se",
                                   "p_truth_mean", "p_truth_se", "f_mse_sqrt_norm_mean",
                                   "f_mse_sqrt_norm_se"};
  for (std::size_t i = 0; i < theta_dimension; ++i) {
    cols.push_back("theta_err_" + std::to_string(i) + "_mean");
    cols.push_back("theta_err_" + std::to_string(i) + "_se");
  }
  return cols;
}

inline void write_summary_csv(std::ostream& out, const ReplicationResult& result, PolicyKind policy,
                              std::size_t theta_dimension) {
  write_header(out, summary_columns(theta_dimension));
  for (const auto& s : result.summary) {
    out << s.n << ',' << to_string(policy) << ',' << result.runs.size() << ',' << format_number(s.oc.mean)
        << ',' << format_number(s.oc.se) << ',' << format_number(s.oc_pct.mean) << ','
        << format_number(s.oc_pct.se) << ',' << format_number(s.entropy.mean) << ','
        << format_number(s.entropy.se) << ',';
    if (s.p_truth)
      out << format_number(s.p_truth->mean) << ',' << format_number(s.p_truth->se);
    else
      out << ',';
    out << ',' << format_number(s.f_mse_sqrt_norm.mean) << ',' << format_number(s.f_mse_sqrt_norm.se);
    for (const auto& e : s.theta_err) out << ',' << format_number(e.mean) << ',' << format_number(e.se);
    out << '\n';
  }
}

}  // namespace kgdp
