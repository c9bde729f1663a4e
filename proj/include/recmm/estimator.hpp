#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "recmm/dataset.hpp"
#include "recmm/likelihood.hpp"
#include "recmm/link.hpp"
#include "recmm/weights.hpp"

namespace recmm {

struct SolverOptions {
  double tol = 1e-8;            // max-norm of the gradient (log-jump coordinates)
  double rel_tol = 1e-12;       // relative change of the log-likelihood
  int max_iter = 500;
  int profile_sweeps = 3;
  int lbfgs_memory = 10;
  double switch_tol = 1e-3;     // hand over from L-BFGS to Newton below this gradient norm
  int max_lbfgs_iter = 200;
};

struct FitResult {
  LinkFunction link;
  Eigen::VectorXd beta;
  std::vector<double> jump_times;
  Eigen::VectorXd jump_sizes;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::size_t n = 0;
  double tau = 0.0;
  std::vector<std::string> warnings;

  std::size_t dim() const { return static_cast<std::size_t>(beta.size()); }
  std::size_t grid_size() const { return jump_times.size(); }
  ParamVector params() const { return ParamVector::from_jumps(beta, jump_sizes); }
  /// Sum of jump sizes at grid times <= t.
  double cumulative_baseline(double t) const;
};

/// beta = 0, jumps = dN(t_k) / pseudo risk size.
ParamVector initial_values(const Dataset& ds, const WeightContext& wc);

/// One self-consistency sweep of the jump sizes at fixed beta.
Eigen::VectorXd profile_jump_update(const Eigen::VectorXd& beta, const Eigen::VectorXd& jumps, const Dataset& ds,
                                    const WeightContext& wc, const LinkFunction& link);

/// Weighted NPMLE. Censoring weights are built from the data. A fit that runs
/// out of iterations is returned with converged = false.
FitResult fit_npmle(const Dataset& ds, const LinkFunction& link, const SolverOptions& opts = {});
FitResult fit_npmle(const Dataset& ds, const WeightContext& wc, const LinkFunction& link,
                    const SolverOptions& opts = {});
/// Same, on a prebuilt model and from a given start.
FitResult fit_npmle(const LikelihoodModel& model, ParamVector start, const SolverOptions& opts = {});

/// Root of the weighted partial-likelihood score
///   U(beta) = sum_events [Z_i(s) - S1(s) / S0(s)],  S_r(s) = sum_j w_j(s) Z_j(s)^{(r)} e^{beta'Z_j(s)},
/// by damped Newton from beta = 0.
Eigen::VectorXd ghosh_lin_fit(const Dataset& ds, const WeightContext& wc);

/// Score U(beta) of ghosh_lin_fit.
Eigen::VectorXd ghosh_lin_score(const Dataset& ds, const WeightContext& wc, const Eigen::VectorXd& beta);

}  // namespace recmm
