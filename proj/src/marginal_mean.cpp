#include "recmm/marginal_mean.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

PredictionCurve predict_marginal_mean(const FitResult& fit, const VarianceResult* vr,
                                      const std::vector<CovariateInterval>& profile, const std::vector<double>& times,
                                      const PredictionOptions& opts) {
  const auto d = static_cast<Eigen::Index>(fit.dim());
  if (profile.empty() || profile.front().start != 0.0)
    throw ValidationError("covariate profile must start at time 0");
  for (std::size_t j = 0; j < profile.size(); ++j) {
    if (static_cast<Eigen::Index>(profile[j].values.size()) != d)
      throw ValidationError("covariate profile has dimension " + std::to_string(profile[j].values.size()) +
                            ", fit has " + std::to_string(d));
    if (j > 0 && !(profile[j].start > profile[j - 1].start))
      throw ValidationError("covariate profile start times must increase");
  }
  for (double t : times)
    if (!(t >= 0.0) || t > fit.tau)
      throw ValidationError("prediction time " + format_double(t) + " outside [0, tau=" + format_double(fit.tau) + "]");
  if (vr && (vr->dim() != fit.dim() || vr->grid.size() != fit.grid_size()))
    throw ValidationError("variance result does not match the fit");

  const std::size_t k = fit.grid_size();
  std::vector<double> exposure(k);
  std::vector<Eigen::VectorXd> zs(k);
  for (std::size_t m = 0; m < k; ++m) {
    const double t = fit.jump_times[m];
    auto it = std::upper_bound(profile.begin(), profile.end(), t,
                               [](double x, const CovariateInterval& c) { return x < c.start; });
    const auto& vals = std::prev(it)->values;
    zs[m] = Eigen::Map<const Eigen::VectorXd>(vals.data(), d);
    const double lp = d > 0 ? zs[m].dot(fit.beta) : 0.0;
    exposure[m] = std::exp(lp);
  }

  std::vector<std::size_t> order(times.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  PredictionCurve out;
  out.times = times;
  out.mean.assign(times.size(), 0.0);
  out.se.assign(times.size(), 0.0);
  out.ci_low.assign(times.size(), 0.0);
  out.ci_high.assign(times.size(), 0.0);

  double H = 0.0;
  Eigen::VectorXd hz = Eigen::VectorXd::Zero(d);
  std::size_t m = 0;
  for (std::size_t j : order) {
    const double t = times[j];
    while (m < k && fit.jump_times[m] <= t) {
      const double a = exposure[m] * fit.jump_sizes[static_cast<Eigen::Index>(m)];
      H += a;
      if (d > 0) hz += a * zs[m];
      ++m;
    }
    const LinkValues lv = fit.link.eval(H);
    out.mean[j] = lv.g;
    double se = 0.0;
    if (vr && m > 0) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(d + static_cast<Eigen::Index>(k));
      if (d > 0) grad.head(d) = lv.g1 * hz;
      for (std::size_t l = 0; l < m; ++l) grad[d + static_cast<Eigen::Index>(l)] = lv.g1 * exposure[l];
      se = std::sqrt(std::max(0.0, grad.dot(vr->covariance * grad)));
    }
    out.se[j] = se;
    if (opts.log_band && lv.g > 0.0) {
      const double f = std::exp(opts.z * se / lv.g);
      out.ci_low[j] = lv.g / f;
      out.ci_high[j] = lv.g * f;
    } else {
      out.ci_low[j] = lv.g - opts.z * se;
      out.ci_high[j] = lv.g + opts.z * se;
    }
  }
  return out;
}

namespace {

StepFunction pseudo_na(const Dataset& ds, const Eigen::VectorXd& risk) {
  StepFunction out;
  out.times = ds.recurrent_grid();
  const auto& counts = ds.grid_counts();
  double total = 0.0;
  for (std::size_t m = 0; m < counts.size(); ++m) {
    const double r = risk[static_cast<Eigen::Index>(m)];
    if (!(r > 0.0)) throw NumericalError("pseudo risk set is empty at event time " + format_double(out.times[m]));
    total += counts[m] / r;
    out.values.push_back(total);
  }
  return out;
}

}  // namespace

StepFunction nelson_aalen_pseudo(const Dataset& ds, const WeightContext& wc) {
  return pseudo_na(ds, wc.pseudo_risk_sizes());
}

StepFunction nelson_aalen_pseudo(const Dataset& ds, const CensoringSurvival& gc) {
  return pseudo_na(ds, pseudo_risk_sizes(ds, gc));
}

StepFunction aalen_johansen_marginal_mean(const Dataset& ds) {
  // time -> (recurrences, terminal events, removals)
  struct Cell {
    double recurrences = 0.0;
    double deaths = 0.0;
    double removals = 0.0;
  };
  std::map<double, Cell> table;
  for (const auto& s : ds.subjects()) {
    for (double t : s.recurrent_times) table[t].recurrences += 1.0;
    const double x = std::min(s.follow_up_end(), ds.tau());
    auto& c = table[x];
    c.removals += 1.0;
    if (s.has_terminal()) c.deaths += 1.0;
  }
  StepFunction out;
  double at_risk = static_cast<double>(ds.size());
  double surv = 1.0;
  double total = 0.0;
  for (const auto& [t, c] : table) {
    if (c.recurrences > 0.0) {
      if (!(at_risk > 0.0)) throw NumericalError("empty risk set at recurrence time " + format_double(t));
      total += surv * c.recurrences / at_risk;
      out.times.push_back(t);
      out.values.push_back(total);
    }
    if (c.deaths > 0.0) surv *= 1.0 - c.deaths / at_risk;
    at_risk -= c.removals;
  }
  return out;
}

}  // namespace recmm
