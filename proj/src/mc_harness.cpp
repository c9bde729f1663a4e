#include "recmm/mc_harness.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "recmm/errors.hpp"
#include "recmm/variance.hpp"

namespace recmm {

const McRow& McSummary::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw ValidationError("no Monte Carlo row named '" + name + "'");
}

namespace {

constexpr double kZ = 1.959963984540054;

McReplicate run_replicate(const SimulationConfig& base, const LinkFunction& fit_link, const McOptions& opts,
                          std::size_t rep) {
  McReplicate out;
  try {
    SimulationConfig cfg = base;
    cfg.n = opts.n;
    cfg.seed = stream_seed(opts.seed, rep);
    const Dataset ds = simulate_dataset(cfg);
    const CensoringSurvival gc = km_censoring(ds);
    const WeightContext wc = ipc_weights(ds, gc);
    const FitResult fit = fit_npmle(ds, wc, fit_link, opts.solver);
    if (!fit.converged) {
      out.error = "not converged";
      return out;
    }
    const VarianceResult vr = sandwich(fit, ds, wc, gc, fit_link);
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
      out.estimate.push_back(fit.beta[j]);
      out.se_fisher.push_back(vr.fisher_only_se[j]);
      out.se_sandwich.push_back(vr.beta_se[j]);
    }
    for (double frac : {0.25, 0.5, 1.0}) {
      const double t = frac * cfg.tau;
      out.estimate.push_back(fit.cumulative_baseline(t));
      out.se_fisher.push_back(std::sqrt(std::max(0.0, baseline_variance(vr, t, true))));
      out.se_sandwich.push_back(std::sqrt(std::max(0.0, baseline_variance(vr, t, false))));
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

McSummary run_mc_study(const SimulationConfig& cfg, const LinkFunction& fit_link, const McOptions& opts) {
  if (opts.reps == 0) throw ValidationError("mc study needs at least one replicate");
  cfg.validate();
  McSummary summary;
  summary.reps = opts.reps;
  summary.replicates.resize(opts.reps);

  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(opts.reps)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t rep = next++; rep < opts.reps; rep = next++)
      summary.replicates[rep] = run_replicate(cfg, fit_link, opts, rep);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<std::string> names;
  std::vector<double> truths;
  for (std::size_t j = 0; j < cfg.dim(); ++j) {
    names.push_back("beta" + std::to_string(j + 1));
    truths.push_back(cfg.beta[j]);
  }
  names.insert(names.end(), {"A(tau/4)", "A(tau/2)", "A(tau)"});
  for (double frac : {0.25, 0.5, 1.0}) truths.push_back(gompertz_cum(cfg.gamma1, cfg.gamma2, frac * cfg.tau));

  std::size_t ok = 0;
  for (const auto& r : summary.replicates) ok += r.ok ? 1 : 0;
  summary.failures = opts.reps - ok;
  if (ok == 0) {
    const std::string why = summary.replicates.front().error;
    throw ConvergenceError("all " + std::to_string(opts.reps) + " replicates failed (first: " + why + ")");
  }

  for (std::size_t p = 0; p < names.size(); ++p) {
    McRow row;
    row.name = names[p];
    row.truth = truths[p];
    double sum = 0.0, sum_sef = 0.0, sum_ses = 0.0, cov_f = 0.0, cov_s = 0.0;
    for (const auto& r : summary.replicates) {
      if (!r.ok) continue;
      const double est = r.estimate[p];
      sum += est;
      sum_sef += r.se_fisher[p];
      sum_ses += r.se_sandwich[p];
      cov_f += std::abs(est - row.truth) <= kZ * r.se_fisher[p] ? 1.0 : 0.0;
      cov_s += std::abs(est - row.truth) <= kZ * r.se_sandwich[p] ? 1.0 : 0.0;
    }
    const double m = static_cast<double>(ok);
    row.mean_est = sum / m;
    row.bias = row.mean_est - row.truth;
    row.bias_pct = row.truth != 0.0 ? 100.0 * row.bias / std::abs(row.truth) : std::nan("");
    row.se_fisher = sum_sef / m;
    row.se_sandwich = sum_ses / m;
    row.cp_fisher = cov_f / m;
    row.cp_sandwich = cov_s / m;
    if (ok >= 2) {
      double ss = 0.0;
      for (const auto& r : summary.replicates)
        if (r.ok) ss += (r.estimate[p] - row.mean_est) * (r.estimate[p] - row.mean_est);
      row.sd = std::sqrt(ss / (m - 1.0));
    }
    summary.rows.push_back(row);
  }
  return summary;
}

}  // namespace recmm
