#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "recmm/dataset.hpp"
#include "recmm/link.hpp"
#include "recmm/weights.hpp"

namespace recmm {

/// Regression coefficients and log jump sizes of the step-function baseline.
struct ParamVector {
  Eigen::VectorXd beta;
  Eigen::VectorXd log_jumps;

  Eigen::VectorXd jumps() const { return log_jumps.array().exp().matrix(); }
  Eigen::Index size() const { return beta.size() + log_jumps.size(); }
  /// (beta, log_jumps) stacked.
  Eigen::VectorXd packed() const;
  static ParamVector unpack(const Eigen::VectorXd& packed, std::size_t dim);
  static ParamVector from_jumps(Eigen::VectorXd beta, const Eigen::VectorXd& jumps);
};

/// Per-subject quantities on the grid at a parameter value. Rows run over grid
/// indices 0..end-1, where `end` is the last grid index the subject's
/// likelihood contribution touches.
struct SubjectSweep {
  Eigen::VectorXd exp_lp;   // exp(beta' Z_i(t_m))
  Eigen::VectorXd exposure; // a_m = exp_lp_m * jump_m
  Eigen::VectorXd cumulative;  // H_m = sum_{l <= m} a_l
  Eigen::MatrixXd cumulative_z;  // sum_{l <= m} a_l Z_i(t_l), rows = grid index
};

/// Discretized weighted log-likelihood of the transformation model
///
///   sum_{recurrences} [log dL(t) + beta'Z_i(t) + log G'(H_i(t))]
///   - sum_i G(H_i(D_i ^ C_i ^ tau))
///   - sum_{i: terminal} sum_{t_k > D_i} w*_i(t_k) e^{beta'Z_i(t_k)} dL(t_k) G'(H_i(t_k))
///
/// with H_i(t) = sum_{t_m <= t} e^{beta'Z_i(t_m)} dL(t_m). Derivatives are taken
/// with respect to (beta, log jump sizes) and are exact.
class LikelihoodModel {
 public:
  LikelihoodModel(const Dataset& ds, const WeightContext& wc, LinkFunction link);

  std::size_t dim() const { return dim_; }
  std::size_t grid_size() const { return grid_.size(); }
  std::size_t subjects() const { return subjects_.size(); }
  std::size_t num_params() const { return dim_ + grid_.size(); }
  const LinkFunction& link() const { return link_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& grid_counts() const { return counts_; }

  double value(const ParamVector& p) const;
  Eigen::VectorXd gradient(const ParamVector& p) const;
  Eigen::MatrixXd hessian(const ParamVector& p) const;

  struct Evaluation {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
  };
  /// order 0: value, 1: + gradient, 2: + Hessian.
  Evaluation evaluate(const ParamVector& p, int order) const;
  /// Value without throwing; nullopt when any intermediate is non-finite.
  std::optional<double> try_value(const ParamVector& p) const;

  /// Row i holds the gradient of subject i's contribution (log-jump coordinates).
  Eigen::MatrixXd subject_gradients(const ParamVector& p) const;

  /// One self-consistency sweep:
  ///   dL(t_k) <- dN(t_k) / sum_i w_i(t_k) e^{beta'Z_i(t_k)} G'(H_i(t_k)).
  Eigen::VectorXd profile_update(const ParamVector& p) const;

  SubjectSweep sweep(std::size_t i, const ParamVector& p) const;
  /// Grid index range [0, end) used by subject i.
  std::size_t subject_end(std::size_t i) const { return subjects_[i].end; }
  /// Number of grid times <= end of follow-up.
  std::size_t subject_follow(std::size_t i) const { return subjects_[i].follow; }
  bool subject_terminal(std::size_t i) const { return subjects_[i].terminal; }
  double subject_wstar(std::size_t i, std::size_t m) const { return subjects_[i].wstar[m]; }
  /// Z_i(t_m) for m < subject_end(i).
  Eigen::VectorXd subject_covariate(std::size_t i, std::size_t m) const;
  /// Events of subject i as (grid index, count).
  const std::vector<std::pair<std::size_t, double>>& subject_events(std::size_t i) const {
    return subjects_[i].events;
  }

 private:
  struct Subject {
    std::string id;
    std::size_t end = 0;
    std::size_t follow = 0;
    bool terminal = false;
    bool constant = true;
    // Rows: grid index (a single row when `constant`).
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z;
    std::vector<std::pair<std::size_t, double>> events;
    std::vector<double> wstar;  // size end; zero below `follow`
  };

  struct Accumulator;
  bool accumulate(std::size_t i, const Eigen::VectorXd& beta, const Eigen::VectorXd& log_jumps,
                  const Eigen::VectorXd& jumps, int order, Accumulator& acc, std::string* error) const;
  Evaluation run(const ParamVector& p, int order, bool throw_on_error, bool* ok) const;
  void check_shape(const ParamVector& p) const;

  LinkFunction link_;
  std::size_t dim_ = 0;
  std::vector<double> grid_;
  std::vector<double> counts_;
  std::vector<Subject> subjects_;
  Eigen::MatrixXd weights_;
};

double loglik(const ParamVector& p, const Dataset& ds, const WeightContext& wc, const LinkFunction& link);
Eigen::VectorXd grad_loglik(const ParamVector& p, const Dataset& ds, const WeightContext& wc,
                            const LinkFunction& link);
Eigen::MatrixXd hessian_loglik(const ParamVector& p, const Dataset& ds, const WeightContext& wc,
                               const LinkFunction& link);

}  // namespace recmm
