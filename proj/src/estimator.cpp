#include "recmm/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

double FitResult::cumulative_baseline(double t) const {
  double total = 0.0;
  for (std::size_t m = 0; m < jump_times.size() && jump_times[m] <= t; ++m) total += jump_sizes[static_cast<Eigen::Index>(m)];
  return total;
}

ParamVector initial_values(const Dataset& ds, const WeightContext& wc) {
  const auto& counts = ds.grid_counts();
  const Eigen::VectorXd risk = wc.pseudo_risk_sizes();
  Eigen::VectorXd jumps(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t m = 0; m < counts.size(); ++m) {
    const auto im = static_cast<Eigen::Index>(m);
    if (!(risk[im] > 0.0))
      throw NumericalError("pseudo risk set is empty at event time " + format_double(wc.grid[m]));
    jumps[im] = counts[m] / risk[im];
  }
  return ParamVector::from_jumps(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.dim())), jumps);
}

Eigen::VectorXd profile_jump_update(const Eigen::VectorXd& beta, const Eigen::VectorXd& jumps, const Dataset& ds,
                                    const WeightContext& wc, const LinkFunction& link) {
  if ((jumps.array() <= 0.0).any()) throw ValidationError("profile_jump_update: jump sizes must be positive");
  return LikelihoodModel(ds, wc, link).profile_update(ParamVector::from_jumps(beta, jumps));
}

namespace {

double max_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double rel_change(double now, double before) { return std::abs(now - before) / std::max(1.0, std::abs(before)); }

struct State {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd g;
};

// Backtracking along `dir` from `s`; returns true and updates `s` when an ascent point is found.
bool line_search(const LikelihoodModel& model, std::size_t dim, State& s, const Eigen::VectorXd& dir, double step,
                 double armijo) {
  const double slope = s.g.dot(dir);
  if (!(slope > 0.0)) return false;
  for (int tries = 0; tries < 60; ++tries, step *= 0.5) {
    Eigen::VectorXd trial = s.x + step * dir;
    auto v = model.try_value(ParamVector::unpack(trial, dim));
    if (v && *v >= s.f + armijo * step * slope) {
      s.x = std::move(trial);
      s.f = *v;
      return true;
    }
  }
  return false;
}

}  // namespace

FitResult fit_npmle(const LikelihoodModel& model, ParamVector start, const SolverOptions& opts) {
  const std::size_t dim = model.dim();
  if (model.grid_size() == 0) throw ValidationError("fit_npmle: no recurrent events");

  for (int sweep = 0; sweep < opts.profile_sweeps; ++sweep) {
    ParamVector next = start;
    next.log_jumps = model.profile_update(start).array().log().matrix();
    if (!model.try_value(next)) break;
    start = std::move(next);
  }

  State s;
  s.x = start.packed();
  {
    auto v = model.try_value(start);
    if (!v) throw NumericalError("fit_npmle: non-finite log-likelihood at the initial values");
    s.f = *v;
  }
  s.g = model.gradient(start);

  int iter = 0;
  double last_change = std::numeric_limits<double>::infinity();

  // quasi-Newton phase
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;
  while (iter < std::min(opts.max_iter, opts.max_lbfgs_iter) && max_norm(s.g) > opts.switch_tol) {
    // two-loop recursion on the negated objective
    Eigen::VectorXd q = -s.g;
    std::vector<double> alpha(memory.size());
    for (std::size_t j = memory.size(); j-- > 0;) {
      const auto& [sv, yv] = memory[j];
      alpha[j] = sv.dot(q) / yv.dot(sv);
      q -= alpha[j] * yv;
    }
    double step = 1.0;
    if (!memory.empty()) {
      const auto& [sv, yv] = memory.back();
      q *= sv.dot(yv) / yv.dot(yv);
    } else {
      step = std::min(1.0, 1.0 / max_norm(s.g));
    }
    for (std::size_t j = 0; j < memory.size(); ++j) {
      const auto& [sv, yv] = memory[j];
      const double b = yv.dot(q) / yv.dot(sv);
      q += (alpha[j] - b) * sv;
    }
    Eigen::VectorXd dir = -q;
    if (!(s.g.dot(dir) > 0.0)) {
      memory.clear();
      dir = s.g;
      step = std::min(1.0, 1.0 / max_norm(s.g));
    }
    State before = s;
    ++iter;
    if (!line_search(model, dim, s, dir, step, 1e-4)) {
      memory.clear();
      break;
    }
    s.g = model.gradient(ParamVector::unpack(s.x, dim));
    last_change = rel_change(s.f, before.f);
    Eigen::VectorXd sv = s.x - before.x;
    Eigen::VectorXd yv = before.g - s.g;  // gradient change of -f
    if (sv.dot(yv) > 1e-12 * sv.norm() * yv.norm()) {
      memory.emplace_back(std::move(sv), std::move(yv));
      if (static_cast<int>(memory.size()) > opts.lbfgs_memory) memory.pop_front();
    }
  }

  // Newton polish with the analytic Hessian
  bool converged = false;
  double best_gnorm = std::numeric_limits<double>::infinity();
  int stalled = 0;
  while (true) {
    const auto ev = model.evaluate(ParamVector::unpack(s.x, dim), 2);
    s.g = ev.gradient;
    const double gnorm = max_norm(s.g);
    if (gnorm < opts.tol && last_change < opts.rel_tol) {
      converged = true;
      break;
    }
    if (iter >= opts.max_iter) break;
    ++iter;
    const Eigen::MatrixXd info = -ev.hessian;
    const double scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
    Eigen::VectorXd dir;
    double mu = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd damped = info;
      if (mu > 0.0) damped.diagonal().array() += mu;
      Eigen::LLT<Eigen::MatrixXd> llt(damped);
      if (llt.info() == Eigen::Success) {
        dir = llt.solve(s.g);
        if (dir.allFinite()) break;
      }
      mu = mu == 0.0 ? 1e-10 * scale : mu * 10.0;
      dir.resize(0);
    }
    if (dir.size() == 0) dir = s.g;
    const double before = s.f;
    // Near the optimum the predicted gain drops below the rounding noise of the
    // log-likelihood and a line search can no longer rank the points; take the
    // full step there unless it loses more than that noise.
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(s.f));
    bool moved = false;
    if (0.5 * s.g.dot(dir) < noise) {
      Eigen::VectorXd trial = s.x + dir;
      auto v = model.try_value(ParamVector::unpack(trial, dim));
      if (v && *v >= s.f - noise) {
        s.x = std::move(trial);
        s.f = *v;
        moved = true;
      }
    }
    if (!moved && !line_search(model, dim, s, dir, 1.0, 0.0)) {
      // no representable ascent left: stationary to working precision
      converged = gnorm < opts.tol;
      break;
    }
    last_change = rel_change(s.f, before);
    if (gnorm < 0.5 * best_gnorm) {
      best_gnorm = gnorm;
      stalled = 0;
    } else if (++stalled >= 8) {
      converged = gnorm < opts.tol;
      break;
    }
  }

  const ParamVector best = ParamVector::unpack(s.x, dim);
  FitResult out;
  out.link = model.link();
  out.beta = best.beta;
  out.jump_times = model.grid();
  out.jump_sizes = best.jumps();
  out.loglik = s.f;
  out.iterations = iter;
  out.converged = converged;
  out.gradient_norm = max_norm(s.g);
  out.n = model.subjects();
  if (!converged)
    out.warnings.push_back("solver stopped after " + std::to_string(iter) + " iterations with gradient norm " +
                           format_double(out.gradient_norm));
  return out;
}

FitResult fit_npmle(const Dataset& ds, const WeightContext& wc, const LinkFunction& link, const SolverOptions& opts) {
  if (ds.grid_size() == 0) throw ValidationError("fit_npmle: the dataset has no recurrent events");
  LikelihoodModel model(ds, wc, link);
  FitResult out = fit_npmle(model, initial_values(ds, wc), opts);
  out.tau = ds.tau();
  return out;
}

FitResult fit_npmle(const Dataset& ds, const LinkFunction& link, const SolverOptions& opts) {
  if (ds.grid_size() == 0) throw ValidationError("fit_npmle: the dataset has no recurrent events");
  const WeightContext wc = ipc_weights(ds, km_censoring(ds));
  return fit_npmle(ds, wc, link, opts);
}

namespace {

struct PartialLikelihood {
  double value = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;  // negative Jacobian of the score
};

PartialLikelihood partial_likelihood(const LikelihoodModel& model, const WeightContext& wc,
                                     const Eigen::VectorXd& beta, bool derivatives) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  const std::size_t k = model.grid_size();
  const auto& counts = model.grid_counts();
  PartialLikelihood out;
  out.score = Eigen::VectorXd::Zero(d);
  out.info = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> s0(k, 0.0);
  std::vector<Eigen::VectorXd> s1(k, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> s2(derivatives ? k : 0, Eigen::MatrixXd::Zero(d, d));
  for (std::size_t i = 0; i < model.subjects(); ++i) {
    for (std::size_t m = 0; m < model.subject_end(i); ++m) {
      const double w = wc.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
      if (w == 0.0) continue;
      const Eigen::VectorXd z = model.subject_covariate(i, m);
      const double lp = z.dot(beta);
      if (!(std::abs(lp) <= 700.0)) throw NumericalError("ghosh_lin_fit: exp(beta'Z) overflows");
      const double r = w * std::exp(lp);
      s0[m] += r;
      s1[m] += r * z;
      if (derivatives) s2[m].noalias() += r * z * z.transpose();
    }
    for (const auto& [m, cnt] : model.subject_events(i)) {
      const Eigen::VectorXd z = model.subject_covariate(i, m);
      out.value += cnt * z.dot(beta);
      out.score += cnt * z;
    }
  }
  for (std::size_t m = 0; m < k; ++m) {
    out.value -= counts[m] * std::log(s0[m]);
    const Eigen::VectorXd mean = s1[m] / s0[m];
    out.score -= counts[m] * mean;
    if (derivatives) out.info += counts[m] * (s2[m] / s0[m] - mean * mean.transpose());
  }
  return out;
}

}  // namespace

Eigen::VectorXd ghosh_lin_score(const Dataset& ds, const WeightContext& wc, const Eigen::VectorXd& beta) {
  LikelihoodModel model(ds, wc, LinkFunction::identity());
  return partial_likelihood(model, wc, beta, false).score;
}

Eigen::VectorXd ghosh_lin_fit(const Dataset& ds, const WeightContext& wc) {
  if (ds.dim() == 0) throw ValidationError("ghosh_lin_fit: requires at least one covariate");
  if (ds.grid_size() == 0) throw ValidationError("ghosh_lin_fit: the dataset has no recurrent events");
  LikelihoodModel model(ds, wc, LinkFunction::identity());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.dim()));
  auto cur = partial_likelihood(model, wc, beta, true);
  for (int iter = 0; iter < 200; ++iter) {
    if (max_norm(cur.score) < 1e-11 * std::max(1.0, static_cast<double>(ds.size()))) return beta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14)
      throw NumericalError("ghosh_lin_fit: singular score Jacobian");
    const Eigen::VectorXd step = ldlt.solve(cur.score);
    double t = 1.0;
    bool moved = false;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      const Eigen::VectorXd trial = beta + t * step;
      try {
        auto next = partial_likelihood(model, wc, trial, true);
        if (next.value >= cur.value) {
          beta = trial;
          cur = std::move(next);
          moved = true;
          break;
        }
      } catch (const NumericalError&) {
      }
    }
    if (!moved) {
      if (max_norm(cur.score) < 1e-7 * std::max(1.0, static_cast<double>(ds.size()))) return beta;
      throw ConvergenceError("ghosh_lin_fit: step halving failed to increase the partial likelihood");
    }
    if (max_norm(t * step) < 1e-13) return beta;
  }
  throw ConvergenceError("ghosh_lin_fit: no convergence within 200 Newton steps");
}

}  // namespace recmm
