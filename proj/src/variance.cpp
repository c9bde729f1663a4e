#include "recmm/variance.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

namespace {

void require_converged(const FitResult& fit) {
  if (!fit.converged) throw ValidationError("variance estimation requires a converged fit");
}

void check_rows(const Eigen::MatrixXd& m, const Dataset& ds, const char* block) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (!m.row(i).allFinite())
      throw NumericalError(std::string("non-finite ") + block + " component for subject " +
                           ds.subject(static_cast<std::size_t>(i)).id);
}

}  // namespace

Eigen::MatrixXd eta_components(const FitResult& fit, const Dataset& ds, const WeightContext& wc,
                               const LinkFunction& link) {
  LikelihoodModel model(ds, wc, link);
  Eigen::MatrixXd eta = model.subject_gradients(fit.params());
  const auto d = static_cast<Eigen::Index>(fit.dim());
  for (Eigen::Index m = 0; m < fit.jump_sizes.size(); ++m) eta.col(d + m) /= fit.jump_sizes[m];
  check_rows(eta, ds, "eta");
  return eta;
}

Eigen::MatrixXd kappa_components(const FitResult& fit, const Dataset& ds, const WeightContext& wc,
                                 const CensoringSurvival& gc, const LinkFunction& link) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  const auto d = static_cast<Eigen::Index>(fit.dim());
  const auto k = static_cast<Eigen::Index>(fit.grid_size());
  Eigen::MatrixXd kappa = Eigen::MatrixXd::Zero(n, d + k);
  const std::size_t nc = gc.jump_times.size();
  if (nc == 0) return kappa;

  LikelihoodModel model(ds, wc, link);
  const ParamVector p = fit.params();
  const auto& grid = model.grid();
  const double nd = static_cast<double>(ds.size());

  // q(u_c), one row per censoring jump time
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nc), d + k);
  bool any = false;
  for (std::size_t i = 0; i < model.subjects(); ++i) {
    if (!model.subject_terminal(i)) continue;
    const double death = *ds.subject(i).terminal_time;
    const std::size_t follow = model.subject_follow(i);
    const std::size_t end = model.subject_end(i);
    if (follow >= end) continue;
    const SubjectSweep sw = model.sweep(i, p);
    // tails over m' >= j of the terminal-tail derivative pieces
    std::vector<double> tail_g2(end + 1, 0.0);  // sum w* a G''
    Eigen::MatrixXd tail_beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(end + 1), d);
    std::vector<double> g1(end, 0.0);
    for (std::size_t m = end; m-- > follow;) {
      const auto im = static_cast<Eigen::Index>(m);
      const LinkValues lv = link.eval(sw.cumulative[im]);
      g1[m] = lv.g1;
      const double w = model.subject_wstar(i, m);
      const double a = sw.exposure[im];
      tail_g2[m] = tail_g2[m + 1] + w * a * lv.g2;
      tail_beta.row(im) = tail_beta.row(im + 1);
      if (d > 0)
        tail_beta.row(im) +=
            w * a * (lv.g1 * model.subject_covariate(i, m).transpose() + lv.g2 * sw.cumulative_z.row(im));
    }
    for (std::size_t c = 0; c < nc; ++c) {
      const double u = gc.jump_times[c];
      if (u < death) continue;
      const std::size_t first =
          std::max(follow, static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), u) - grid.begin()));
      if (first >= end) continue;
      any = true;
      auto row = q.row(static_cast<Eigen::Index>(c));
      if (d > 0) row.head(d) += tail_beta.row(static_cast<Eigen::Index>(first));
      for (std::size_t l = 0; l < end; ++l) {
        const auto il = static_cast<Eigen::Index>(l);
        double v = sw.exp_lp[il] * tail_g2[std::max(first, l)];
        if (l >= first) v += model.subject_wstar(i, l) * sw.exp_lp[il] * g1[l];
        row[d + il] += v;
      }
    }
  }
  if (!any) return kappa;
  q /= nd;

  for (std::size_t c = 0; c < nc; ++c) {
    const double u = gc.jump_times[c];
    const double pi = gc.at_risk[c] / nd;
    if (!(pi > 0.0)) throw NumericalError("kappa_components: empty risk set at censoring time " + format_double(u));
    const double drift = gc.hazard_increment(c);
    const Eigen::RowVectorXd qc = q.row(static_cast<Eigen::Index>(c)) / pi;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = ds.subject(static_cast<std::size_t>(i));
      const double x = std::min(s.follow_up_end(), ds.tau());
      if (x < u) continue;
      double dm = -drift;
      if (!s.has_terminal() && s.censor_time == u && s.censor_time < ds.tau()) dm += 1.0;
      kappa.row(i) += dm * qc;
    }
  }
  check_rows(kappa, ds, "kappa");
  return kappa;
}

VarianceResult sandwich(const FitResult& fit, const Dataset& ds, const WeightContext& wc,
                        const CensoringSurvival& gc, const LinkFunction& link) {
  require_converged(fit);
  LikelihoodModel model(ds, wc, link);
  const ParamVector p = fit.params();
  const auto ev = model.evaluate(p, 2);
  const auto d = static_cast<Eigen::Index>(fit.dim());
  const auto k = static_cast<Eigen::Index>(fit.grid_size());
  const Eigen::VectorXd& lambda = fit.jump_sizes;

  // log-jump -> jump-size coordinates
  Eigen::MatrixXd h = ev.hessian;
  for (Eigen::Index m = 0; m < k; ++m) h(d + m, d + m) -= ev.gradient[d + m];
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(d + k);
  scale.tail(k) = lambda.cwiseInverse();
  h = scale.asDiagonal() * h * scale.asDiagonal();

  VarianceResult vr;
  vr.fisher = -h;
  vr.grid = fit.jump_times;
  vr.n = ds.size();

  const Eigen::MatrixXd eta = eta_components(fit, ds, wc, link);
  const Eigen::MatrixXd kappa = kappa_components(fit, ds, wc, gc, link);
  const Eigen::MatrixXd psi = eta + kappa;
  const Eigen::MatrixXd outer = psi.transpose() * psi;
  vr.middle = outer / static_cast<double>(ds.size());

  Eigen::LDLT<Eigen::MatrixXd> ldlt(vr.fisher);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any())
    throw NumericalError(
        "observed information is singular or indefinite; inspect the model and the dataset (collinear covariates, "
        "empty strata, or an unsuitable link)");
  const double rcond = ldlt.rcond();
  if (rcond < 1e-12)
    vr.warnings.push_back("observed information is ill-conditioned (reciprocal condition " + format_double(rcond) + ")");
  vr.fisher_covariance = ldlt.solve(Eigen::MatrixXd::Identity(d + k, d + k));
  vr.fisher_covariance = 0.5 * (vr.fisher_covariance + vr.fisher_covariance.transpose()).eval();
  vr.covariance = vr.fisher_covariance * outer * vr.fisher_covariance;
  vr.covariance = 0.5 * (vr.covariance + vr.covariance.transpose()).eval();
  vr.beta_se = vr.covariance.diagonal().head(d).cwiseMax(0.0).cwiseSqrt();
  vr.fisher_only_se = vr.fisher_covariance.diagonal().head(d).cwiseMax(0.0).cwiseSqrt();
  return vr;
}

VarianceResult sandwich(const FitResult& fit, const Dataset& ds) {
  const CensoringSurvival gc = km_censoring(ds);
  const WeightContext wc = ipc_weights(ds, gc);
  return sandwich(fit, ds, wc, gc, fit.link);
}

Eigen::VectorXd step_indicator(const std::vector<double>& grid, double t) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t m = 0; m < grid.size(); ++m) out[static_cast<Eigen::Index>(m)] = grid[m] <= t ? 1.0 : 0.0;
  return out;
}

double functional_covariance(const VarianceResult& vr, const Eigen::VectorXd& h1, const Eigen::VectorXd& h2,
                             const Eigen::VectorXd& g1, const Eigen::VectorXd& g2, bool fisher_only) {
  const auto d = static_cast<Eigen::Index>(vr.dim());
  const auto k = static_cast<Eigen::Index>(vr.grid.size());
  if (h1.size() != d || g1.size() != d || h2.size() != k || g2.size() != k)
    throw ValidationError("functional has dimension (" + std::to_string(h1.size()) + ", " +
                          std::to_string(h2.size()) + "), expected (" + std::to_string(d) + ", " +
                          std::to_string(k) + ")");
  Eigen::VectorXd h(d + k), g(d + k);
  h << h1, h2;
  g << g1, g2;
  const Eigen::MatrixXd& cov = fisher_only ? vr.fisher_covariance : vr.covariance;
  return h.dot(cov * g);
}

double functional_variance(const VarianceResult& vr, const Eigen::VectorXd& h1, const Eigen::VectorXd& h2,
                           bool fisher_only) {
  return functional_covariance(vr, h1, h2, h1, h2, fisher_only);
}

double baseline_variance(const VarianceResult& vr, double t, bool fisher_only) {
  return functional_variance(vr, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vr.dim())),
                             step_indicator(vr.grid, t), fisher_only);
}

}  // namespace recmm
