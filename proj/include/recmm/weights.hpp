#pragma once

#include <Eigen/Core>

#include <vector>

#include "recmm/dataset.hpp"

namespace recmm {

/// Kaplan-Meier estimate of the censoring survival G_c and the matching
/// Nelson-Aalen censoring hazard, both stepping at observed censoring times.
///
/// Follow-up ends at min(C, D, tau); only censorings strictly before tau
/// count as censoring events. Terminal events and administrative ends
/// remove subjects from the risk set without a jump.
struct CensoringSurvival {
  std::vector<double> jump_times;
  std::vector<double> values;                  // G_c at each jump time
  std::vector<double> nelson_aalen_censoring;  // A^c at each jump time
  std::vector<double> at_risk;                 // #{i : X_i >= u} at each jump time
  std::vector<double> events;                  // censorings at each jump time

  /// Right-continuous value G_c(t).
  double value(double t) const;
  /// Left limit G_c(t-).
  double left_limit(double t) const;
  /// Hazard increment dA^c at jump index j.
  double hazard_increment(std::size_t j) const { return events[j] / at_risk[j]; }
};

CensoringSurvival km_censoring(const Dataset& ds);

/// IPC weights on the recurrent grid (rows: subjects, columns: grid times).
///
///   weights(i, k)    = 1{C_i ^ tau >= t_k}                      no terminal event
///                    = 1 for t_k <= D_i, G_c(t_k-)/G_c(D_i-)    after a terminal event
///   simplified(i, k) = G_c(t_k-)/G_c(D_i-) for subjects with a terminal event, else 0
struct WeightContext {
  std::vector<double> grid;
  Eigen::MatrixXd weights;
  Eigen::MatrixXd simplified;

  std::size_t subjects() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t grid_size() const { return grid.size(); }
  /// Column sums of `weights`: the expected size of the pseudo risk set.
  Eigen::VectorXd pseudo_risk_sizes() const { return weights.colwise().sum().transpose(); }
};

WeightContext ipc_weights(const Dataset& ds, const CensoringSurvival& gc);

/// Column sums of the IPC weights on the recurrent grid without forming the
/// n x K matrices; O(n log n + K) time and O(n + K) memory.
Eigen::VectorXd pseudo_risk_sizes(const Dataset& ds, const CensoringSurvival& gc);

/// Expected size of the pseudo risk set at grid time t. Throws when t is not a grid time.
double pseudo_risk_size(const WeightContext& wc, double t);

}  // namespace recmm
