#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "recmm/estimator.hpp"
#include "recmm/weights.hpp"

namespace recmm {

/// Observed information and sandwich covariance of (beta, jump sizes), in raw
/// jump-size coordinates.
struct VarianceResult {
  Eigen::MatrixXd fisher;             // -Hessian of the total log-likelihood
  Eigen::MatrixXd middle;             // n^-1 sum_i (eta_i + kappa_i)(eta_i + kappa_i)'
  Eigen::MatrixXd covariance;         // sandwich covariance of the estimator
  Eigen::MatrixXd fisher_covariance;  // fisher^-1
  Eigen::VectorXd beta_se;
  Eigen::VectorXd fisher_only_se;
  std::vector<double> grid;
  std::size_t n = 0;
  std::vector<std::string> warnings;

  std::size_t dim() const { return static_cast<std::size_t>(beta_se.size()); }
};

/// Per-subject score contributions at the fit (rows: subjects).
Eigen::MatrixXd eta_components(const FitResult& fit, const Dataset& ds, const WeightContext& wc,
                               const LinkFunction& link);

/// Censoring-martingale correction for the estimated IPC weights:
///   kappa_i = sum_u q(u) / pi(u) dM_i^c(u)
/// over the censoring jump times u, with pi(u) = #{X_j >= u}/n and q(u) the
/// averaged derivative of the terminal-tail terms whose weights involve u.
Eigen::MatrixXd kappa_components(const FitResult& fit, const Dataset& ds, const WeightContext& wc,
                                 const CensoringSurvival& gc, const LinkFunction& link);

/// Throws NumericalError when the information is singular or indefinite.
VarianceResult sandwich(const FitResult& fit, const Dataset& ds, const WeightContext& wc,
                        const CensoringSurvival& gc, const LinkFunction& link);
VarianceResult sandwich(const FitResult& fit, const Dataset& ds);

/// 1{t_m <= t} over the grid.
Eigen::VectorXd step_indicator(const std::vector<double>& grid, double t);

/// Covariance of h1'beta + h2'jumps with g1'beta + g2'jumps.
double functional_covariance(const VarianceResult& vr, const Eigen::VectorXd& h1, const Eigen::VectorXd& h2,
                             const Eigen::VectorXd& g1, const Eigen::VectorXd& g2, bool fisher_only = false);
double functional_variance(const VarianceResult& vr, const Eigen::VectorXd& h1, const Eigen::VectorXd& h2,
                           bool fisher_only = false);
/// Variance of the cumulative baseline at t.
double baseline_variance(const VarianceResult& vr, double t, bool fisher_only = false);

}  // namespace recmm
