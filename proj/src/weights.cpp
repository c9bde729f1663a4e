#include "recmm/weights.hpp"

#include <algorithm>
#include <map>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

double CensoringSurvival::value(double t) const {
  auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double CensoringSurvival::left_limit(double t) const {
  auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

CensoringSurvival km_censoring(const Dataset& ds) {
  if (ds.empty()) throw ValidationError("km_censoring: empty dataset");
  // time -> (censorings, removals)
  std::map<double, std::pair<double, double>> table;
  for (const auto& s : ds.subjects()) {
    const double x = std::min(s.follow_up_end(), ds.tau());
    auto& cell = table[x];
    cell.second += 1.0;
    if (!s.has_terminal() && s.censor_time < ds.tau()) cell.first += 1.0;
  }
  CensoringSurvival out;
  double at_risk = static_cast<double>(ds.size());
  double surv = 1.0;
  double hazard = 0.0;
  for (const auto& [t, cell] : table) {
    if (cell.first > 0.0) {
      surv *= 1.0 - cell.first / at_risk;
      hazard += cell.first / at_risk;
      out.jump_times.push_back(t);
      out.values.push_back(surv);
      out.nelson_aalen_censoring.push_back(hazard);
      out.at_risk.push_back(at_risk);
      out.events.push_back(cell.first);
    }
    at_risk -= cell.second;
  }
  return out;
}

WeightContext ipc_weights(const Dataset& ds, const CensoringSurvival& gc) {
  WeightContext wc;
  wc.grid = ds.recurrent_grid();
  const auto n = static_cast<Eigen::Index>(ds.size());
  const auto k = static_cast<Eigen::Index>(wc.grid.size());
  wc.weights = Eigen::MatrixXd::Zero(n, k);
  wc.simplified = Eigen::MatrixXd::Zero(n, k);

  std::vector<double> gc_left(wc.grid.size());
  for (std::size_t m = 0; m < wc.grid.size(); ++m) gc_left[m] = gc.left_limit(wc.grid[m]);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = ds.subject(static_cast<std::size_t>(i));
    if (!s.has_terminal()) {
      const double end = std::min(s.censor_time, ds.tau());
      for (Eigen::Index m = 0; m < k; ++m) wc.weights(i, m) = wc.grid[m] <= end ? 1.0 : 0.0;
      continue;
    }
    const double d = *s.terminal_time;
    const double denom = gc.left_limit(d);
    if (!(denom > 0.0))
      throw NumericalError("ipc_weights: censoring survival is zero before the terminal event of subject " + s.id +
                           " at " + format_double(d) + "; weight undefined");
    for (Eigen::Index m = 0; m < k; ++m) {
      const double ratio = gc_left[m] / denom;
      wc.simplified(i, m) = ratio;
      wc.weights(i, m) = wc.grid[m] <= d ? 1.0 : ratio;
    }
  }
  return wc;
}

Eigen::VectorXd pseudo_risk_sizes(const Dataset& ds, const CensoringSurvival& gc) {
  const auto& grid = ds.recurrent_grid();
  // at-risk ends (weight 1 while t <= end) and terminal times with 1/G_c(D-)
  std::vector<double> ends;
  std::vector<std::pair<double, double>> deaths;
  ends.reserve(ds.size());
  for (const auto& s : ds.subjects()) {
    if (!s.has_terminal()) {
      ends.push_back(std::min(s.censor_time, ds.tau()));
      continue;
    }
    const double d = *s.terminal_time;
    const double denom = gc.left_limit(d);
    if (!(denom > 0.0))
      throw NumericalError("ipc_weights: censoring survival is zero before the terminal event of subject " + s.id +
                           " at " + format_double(d) + "; weight undefined");
    ends.push_back(d);
    deaths.emplace_back(d, 1.0 / denom);
  }
  std::sort(ends.begin(), ends.end());
  std::sort(deaths.begin(), deaths.end());
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  std::size_t j = 0;
  double tail = 0.0;  // sum of 1/G_c(D-) over D < t
  for (std::size_t m = 0; m < grid.size(); ++m) {
    const double t = grid[m];
    while (j < deaths.size() && deaths[j].first < t) tail += deaths[j++].second;
    const auto alive = ends.end() - std::lower_bound(ends.begin(), ends.end(), t);
    out[static_cast<Eigen::Index>(m)] = static_cast<double>(alive) + gc.left_limit(t) * tail;
  }
  return out;
}

double pseudo_risk_size(const WeightContext& wc, double t) {
  auto it = std::lower_bound(wc.grid.begin(), wc.grid.end(), t);
  if (it == wc.grid.end() || *it != t)
    throw ValidationError("pseudo_risk_size: " + format_double(t) + " is not a grid time");
  return wc.weights.col(it - wc.grid.begin()).sum();
}

}  // namespace recmm
