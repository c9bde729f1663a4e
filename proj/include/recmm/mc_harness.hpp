#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recmm/estimator.hpp"
#include "recmm/link.hpp"
#include "recmm/simulation.hpp"

namespace recmm {

struct McRow {
  std::string name;
  double truth = 0.0;
  double mean_est = 0.0;
  double bias = 0.0;
  double bias_pct = 0.0;
  std::optional<double> sd;  // absent with fewer than two successful replicates
  double se_fisher = 0.0;    // mean over replicates
  double se_sandwich = 0.0;
  double cp_fisher = 0.0;
  double cp_sandwich = 0.0;
};

/// Estimates of one replicate, in row order of McSummary.
struct McReplicate {
  bool ok = false;
  std::string error;
  std::vector<double> estimate;
  std::vector<double> se_fisher;
  std::vector<double> se_sandwich;
};

struct McSummary {
  std::vector<McRow> rows;
  std::size_t reps = 0;
  std::size_t failures = 0;
  std::vector<McReplicate> replicates;

  const McRow& row(const std::string& name) const;
};

struct McOptions {
  std::size_t reps = 1;
  std::size_t n = 200;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  SolverOptions solver;
};

/// Simulate, fit and estimate variances for each replicate; replicate r uses
/// seed stream_seed(seed, r). Rows: beta1..betad, A(tau/4), A(tau/2), A(tau),
/// with baseline truths from the config's Gompertz parameters. Throws
/// ConvergenceError when every replicate fails.
McSummary run_mc_study(const SimulationConfig& cfg, const LinkFunction& fit_link, const McOptions& opts);

}  // namespace recmm
