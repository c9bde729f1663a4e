#include "recmm/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

namespace {
constexpr double kMaxLinearPredictor = 700.0;
}

Eigen::VectorXd ParamVector::packed() const {
  Eigen::VectorXd out(size());
  out << beta, log_jumps;
  return out;
}

ParamVector ParamVector::unpack(const Eigen::VectorXd& packed, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  ParamVector p;
  p.beta = packed.head(d);
  p.log_jumps = packed.tail(packed.size() - d);
  return p;
}

ParamVector ParamVector::from_jumps(Eigen::VectorXd beta, const Eigen::VectorXd& jumps) {
  ParamVector p;
  p.beta = std::move(beta);
  p.log_jumps = jumps.array().log().matrix();
  return p;
}

struct LikelihoodModel::Accumulator {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  Eigen::VectorXd off_const;  // uu off-diagonal coefficients of constant-covariate subjects

  // scratch, sized to the grid
  std::vector<double> lp, ex, a, H, g1, g2, g3, cnt, c, e, g, gp, S, E;
  Eigen::MatrixXd hz;

  Accumulator(std::size_t d, std::size_t k, int order) {
    const auto p = static_cast<Eigen::Index>(d + k);
    if (order >= 1) grad = Eigen::VectorXd::Zero(p);
    if (order >= 2) {
      hess = Eigen::MatrixXd::Zero(p, p);
      off_const = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
      hz.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    }
    for (auto* v : {&lp, &ex, &a, &H, &g1, &g2, &g3, &cnt, &c, &e, &g, &gp, &S, &E}) v->assign(k, 0.0);
  }
};

LikelihoodModel::LikelihoodModel(const Dataset& ds, const WeightContext& wc, LinkFunction link)
    : link_(link), dim_(ds.dim()), grid_(ds.recurrent_grid()), counts_(ds.grid_counts()), weights_(wc.weights) {
  if (wc.grid != grid_) throw ValidationError("weight context grid does not match the dataset's recurrent grid");
  if (wc.subjects() != ds.size()) throw ValidationError("weight context does not match the dataset's subjects");
  const std::size_t k = grid_.size();
  subjects_.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rec = ds.subject(i);
    Subject& s = subjects_[i];
    s.id = rec.id;
    const double end_time = std::min(rec.follow_up_end(), ds.tau());
    s.follow = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), end_time) - grid_.begin());
    s.terminal = rec.has_terminal();
    s.end = s.terminal ? k : s.follow;
    s.constant = rec.covariates_constant();
    const auto d = static_cast<Eigen::Index>(dim_);
    if (s.constant) {
      s.z.resize(1, d);
      for (Eigen::Index c = 0; c < d; ++c) s.z(0, c) = rec.covariate_path.front().values[c];
    } else {
      s.z.resize(static_cast<Eigen::Index>(s.end), d);
      for (std::size_t m = 0; m < s.end; ++m) {
        const auto& z = covariate_at(rec, grid_[m], ds.tau());
        for (Eigen::Index c = 0; c < d; ++c) s.z(static_cast<Eigen::Index>(m), c) = z[c];
      }
    }
    for (double t : rec.recurrent_times) {
      const std::size_t m = ds.grid_index(t);
      if (!s.events.empty() && s.events.back().first == m)
        s.events.back().second += 1.0;
      else
        s.events.emplace_back(m, 1.0);
    }
    s.wstar.assign(s.end, 0.0);
    if (s.terminal)
      for (std::size_t m = s.follow; m < s.end; ++m) s.wstar[m] = wc.simplified(static_cast<Eigen::Index>(i), m);
  }
}

void LikelihoodModel::check_shape(const ParamVector& p) const {
  if (static_cast<std::size_t>(p.beta.size()) != dim_ || static_cast<std::size_t>(p.log_jumps.size()) != grid_.size())
    throw ValidationError("parameter vector has shape (" + std::to_string(p.beta.size()) + ", " +
                          std::to_string(p.log_jumps.size()) + "), expected (" + std::to_string(dim_) + ", " +
                          std::to_string(grid_.size()) + ")");
}

Eigen::VectorXd LikelihoodModel::subject_covariate(std::size_t i, std::size_t m) const {
  const Subject& s = subjects_[i];
  return s.z.row(s.constant ? 0 : static_cast<Eigen::Index>(m)).transpose();
}

bool LikelihoodModel::accumulate(std::size_t i, const Eigen::VectorXd& beta, const Eigen::VectorXd& log_jumps,
                                 const Eigen::VectorXd& jumps, int order, Accumulator& acc,
                                 std::string* error) const {
  const Subject& s = subjects_[i];
  const std::size_t end = s.end;
  if (end == 0) return true;
  const auto d = static_cast<Eigen::Index>(dim_);
  auto zrow = [&](std::size_t m) { return s.z.row(s.constant ? 0 : static_cast<Eigen::Index>(m)); };

  auto& lp = acc.lp;
  auto& ex = acc.ex;
  auto& a = acc.a;
  auto& H = acc.H;
  double running = 0.0;
  for (std::size_t m = 0; m < end; ++m) {
    if (s.constant && m > 0) {
      lp[m] = lp[0];
      ex[m] = ex[0];
    } else {
      lp[m] = d > 0 ? zrow(m).dot(beta) : 0.0;
      if (!(std::abs(lp[m]) <= kMaxLinearPredictor)) {
        if (error)
          *error = "non-finite exp(beta'Z) for subject " + s.id + " at time " + format_double(grid_[m]) +
                   " (linear predictor " + format_double(lp[m]) + ")";
        return false;
      }
      ex[m] = std::exp(lp[m]);
    }
    a[m] = ex[m] * jumps[static_cast<Eigen::Index>(m)];
    running += a[m];
    H[m] = running;
  }
  if (!std::isfinite(running)) {
    if (error) *error = "non-finite cumulative intensity for subject " + s.id;
    return false;
  }
  double g_at_follow = 0.0;
  for (std::size_t m = 0; m < end; ++m) {
    const LinkValues lv = link_.eval(H[m]);
    acc.g1[m] = lv.g1;
    acc.g2[m] = lv.g2;
    if (m + 1 == s.follow) g_at_follow = lv.g;
    if (order >= 2) acc.g3[m] = link_.third(H[m]);
  }

  double val = 0.0;
  for (const auto& [m, count] : s.events)
    val += count * (log_jumps[static_cast<Eigen::Index>(m)] + lp[m] + std::log(acc.g1[m]));
  val -= g_at_follow;
  if (s.terminal)
    for (std::size_t m = s.follow; m < end; ++m) val -= s.wstar[m] * a[m] * acc.g1[m];
  if (!std::isfinite(val)) {
    if (error) *error = "non-finite log-likelihood contribution for subject " + s.id;
    return false;
  }
  acc.value += val;
  if (order < 1) return true;

  auto& cnt = acc.cnt;
  std::fill(cnt.begin(), cnt.begin() + static_cast<std::ptrdiff_t>(end), 0.0);
  for (const auto& [m, count] : s.events) cnt[m] += count;

  // c_m multiplies dH_m, g_m multiplies da_m directly (terminal tail only).
  auto& c = acc.c;
  auto& g = acc.g;
  auto& gp = acc.gp;
  for (std::size_t m = 0; m < end; ++m) {
    const double f1 = acc.g2[m] / acc.g1[m];
    c[m] = cnt[m] * f1;
    if (m + 1 == s.follow) c[m] -= acc.g1[m];
    g[m] = 0.0;
    gp[m] = 0.0;
    if (s.terminal && m >= s.follow) {
      g[m] = -s.wstar[m] * acc.g1[m];
      gp[m] = -s.wstar[m] * acc.g2[m];
      c[m] += a[m] * gp[m];
    }
  }
  auto& S = acc.S;
  double suffix = 0.0;
  for (std::size_t m = end; m-- > 0;) {
    suffix += c[m];
    S[m] = suffix;
  }
  for (std::size_t q = 0; q < end; ++q) {
    const double r = cnt[q] + a[q] * (S[q] + g[q]);
    acc.grad[d + static_cast<Eigen::Index>(q)] += r;
    if (d > 0) acc.grad.head(d) += r * zrow(q).transpose();
  }
  if (order < 2) return true;

  auto& e = acc.e;
  for (std::size_t m = 0; m < end; ++m) {
    const double f1 = acc.g2[m] / acc.g1[m];
    const double f2 = acc.g3[m] / acc.g1[m] - f1 * f1;
    e[m] = cnt[m] * f2;
    if (m + 1 == s.follow) e[m] -= acc.g2[m];
    if (s.terminal && m >= s.follow) e[m] -= a[m] * s.wstar[m] * acc.g3[m];
  }
  auto& E = acc.E;
  suffix = 0.0;
  for (std::size_t m = end; m-- > 0;) {
    suffix += e[m];
    E[m] = suffix;
  }

  auto& hess = acc.hess;
  // jump-jump block: diagonal now, upper triangle via F(r) = E(r) + g'(r)
  for (std::size_t q = 0; q < end; ++q) {
    const auto iq = d + static_cast<Eigen::Index>(q);
    hess(iq, iq) += a[q] * a[q] * (E[q] + 2.0 * gp[q]) + a[q] * (S[q] + g[q]);
  }
  if (s.constant) {
    const double ex2 = ex[0] * ex[0];
    for (std::size_t r = 1; r < end; ++r) acc.off_const[static_cast<Eigen::Index>(r)] += ex2 * (E[r] + gp[r]);
  } else {
    for (std::size_t r = 1; r < end; ++r) {
      const double fr = a[r] * (E[r] + gp[r]);
      const auto ir = d + static_cast<Eigen::Index>(r);
      for (std::size_t q = 0; q < r; ++q) hess(d + static_cast<Eigen::Index>(q), ir) += a[q] * fr;
    }
  }
  if (d == 0) return true;

  auto& hz = acc.hz;
  Eigen::VectorXd run = Eigen::VectorXd::Zero(d);
  for (std::size_t m = 0; m < end; ++m) {
    run += a[m] * zrow(m).transpose();
    hz.row(static_cast<Eigen::Index>(m)) = run.transpose();
  }
  Eigen::VectorXd sehz = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sgaz = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd bb = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t q = end; q-- > 0;) {
    const auto iq = static_cast<Eigen::Index>(q);
    const Eigen::VectorXd z = zrow(q).transpose();
    const Eigen::VectorXd hzq = hz.row(iq).transpose();
    sehz += e[q] * hzq;
    sgaz += gp[q] * a[q] * z;
    const Eigen::VectorXd row = a[q] * (sehz + (S[q] + g[q]) * z + gp[q] * hzq + sgaz);
    hess.block(d + iq, 0, 1, d) += row.transpose();
    bb.noalias() += e[q] * hzq * hzq.transpose() + a[q] * (S[q] + g[q]) * z * z.transpose();
    if (gp[q] != 0.0) bb.noalias() += gp[q] * a[q] * (z * hzq.transpose() + hzq * z.transpose());
  }
  hess.topLeftCorner(d, d) += bb;
  return true;
}

LikelihoodModel::Evaluation LikelihoodModel::run(const ParamVector& p, int order, bool throw_on_error,
                                                 bool* ok) const {
  check_shape(p);
  const std::size_t k = grid_.size();
  const auto d = static_cast<Eigen::Index>(dim_);
  Accumulator acc(dim_, k, order);
  const Eigen::VectorXd jumps = p.jumps();
  for (Eigen::Index m = 0; m < jumps.size(); ++m) {
    if (!(jumps[m] > 0.0) || !std::isfinite(jumps[m])) {
      if (throw_on_error) throw NumericalError("jump size at grid index " + std::to_string(m) + " is not positive and finite");
      *ok = false;
      return {};
    }
  }
  std::string error;
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    if (!accumulate(i, p.beta, p.log_jumps, jumps, order, acc, throw_on_error ? &error : nullptr)) {
      if (throw_on_error) throw NumericalError(error);
      *ok = false;
      return {};
    }
  }
  Evaluation out;
  out.value = acc.value;
  if (order >= 1) out.gradient = std::move(acc.grad);
  if (order >= 2) {
    auto& h = acc.hess;
    for (std::size_t r = 1; r < k; ++r) {
      const double coef = acc.off_const[static_cast<Eigen::Index>(r)] * jumps[static_cast<Eigen::Index>(r)];
      if (coef == 0.0) continue;
      const auto ir = d + static_cast<Eigen::Index>(r);
      for (std::size_t q = 0; q < r; ++q) h(d + static_cast<Eigen::Index>(q), ir) += coef * jumps[static_cast<Eigen::Index>(q)];
    }
    const auto kk = static_cast<Eigen::Index>(k);
    // mirror: jump-jump upper -> lower, jump-beta lower-left -> upper-right
    h.bottomRightCorner(kk, kk).triangularView<Eigen::StrictlyLower>() =
        h.bottomRightCorner(kk, kk).transpose().triangularView<Eigen::StrictlyLower>();
    if (d > 0) h.topRightCorner(d, kk) = h.bottomLeftCorner(kk, d).transpose();
    h.topLeftCorner(d, d) = 0.5 * (h.topLeftCorner(d, d) + h.topLeftCorner(d, d).transpose()).eval();
    out.hessian = std::move(h);
  }
  if (ok) *ok = true;
  return out;
}

LikelihoodModel::Evaluation LikelihoodModel::evaluate(const ParamVector& p, int order) const {
  return run(p, order, true, nullptr);
}

double LikelihoodModel::value(const ParamVector& p) const { return run(p, 0, true, nullptr).value; }

Eigen::VectorXd LikelihoodModel::gradient(const ParamVector& p) const { return run(p, 1, true, nullptr).gradient; }

Eigen::MatrixXd LikelihoodModel::hessian(const ParamVector& p) const { return run(p, 2, true, nullptr).hessian; }

std::optional<double> LikelihoodModel::try_value(const ParamVector& p) const {
  bool ok = false;
  auto ev = run(p, 0, false, &ok);
  if (!ok || !std::isfinite(ev.value)) return std::nullopt;
  return ev.value;
}

Eigen::MatrixXd LikelihoodModel::subject_gradients(const ParamVector& p) const {
  check_shape(p);
  const std::size_t k = grid_.size();
  const Eigen::VectorXd jumps = p.jumps();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(subjects_.size()), static_cast<Eigen::Index>(dim_ + k));
  Accumulator acc(dim_, k, 1);
  std::string error;
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    acc.grad.setZero();
    if (!accumulate(i, p.beta, p.log_jumps, jumps, 1, acc, &error)) throw NumericalError(error);
    out.row(static_cast<Eigen::Index>(i)) = acc.grad.transpose();
  }
  return out;
}

Eigen::VectorXd LikelihoodModel::profile_update(const ParamVector& p) const {
  check_shape(p);
  const std::size_t k = grid_.size();
  Eigen::VectorXd denom = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    const SubjectSweep sw = sweep(i, p);
    for (std::size_t m = 0; m < subjects_[i].end; ++m) {
      const auto im = static_cast<Eigen::Index>(m);
      const double w = weights_(static_cast<Eigen::Index>(i), im);
      if (w == 0.0) continue;
      denom[im] += w * sw.exp_lp[im] * link_.eval(sw.cumulative[im]).g1;
    }
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(k));
  for (std::size_t m = 0; m < k; ++m) {
    const auto im = static_cast<Eigen::Index>(m);
    if (!(denom[im] > 0.0))
      throw NumericalError("profile_jump_update: zero denominator at grid time " + format_double(grid_[m]));
    out[im] = counts_[m] / denom[im];
  }
  return out;
}

SubjectSweep LikelihoodModel::sweep(std::size_t i, const ParamVector& p) const {
  check_shape(p);
  const Subject& s = subjects_[i];
  const auto end = static_cast<Eigen::Index>(s.end);
  const auto d = static_cast<Eigen::Index>(dim_);
  SubjectSweep out;
  out.exp_lp.resize(end);
  out.exposure.resize(end);
  out.cumulative.resize(end);
  out.cumulative_z.resize(end, d);
  double running = 0.0;
  Eigen::VectorXd run_z = Eigen::VectorXd::Zero(d);
  for (Eigen::Index m = 0; m < end; ++m) {
    const auto z = s.z.row(s.constant ? 0 : m);
    const double lp = d > 0 ? z.dot(p.beta) : 0.0;
    if (!(std::abs(lp) <= kMaxLinearPredictor))
      throw NumericalError("non-finite exp(beta'Z) for subject " + s.id + " at time " +
                           format_double(grid_[static_cast<std::size_t>(m)]));
    out.exp_lp[m] = std::exp(lp);
    out.exposure[m] = out.exp_lp[m] * std::exp(p.log_jumps[m]);
    running += out.exposure[m];
    out.cumulative[m] = running;
    if (d > 0) {
      run_z += out.exposure[m] * z.transpose();
      out.cumulative_z.row(m) = run_z.transpose();
    }
  }
  return out;
}

double loglik(const ParamVector& p, const Dataset& ds, const WeightContext& wc, const LinkFunction& link) {
  return LikelihoodModel(ds, wc, link).value(p);
}

Eigen::VectorXd grad_loglik(const ParamVector& p, const Dataset& ds, const WeightContext& wc,
                            const LinkFunction& link) {
  return LikelihoodModel(ds, wc, link).gradient(p);
}

Eigen::MatrixXd hessian_loglik(const ParamVector& p, const Dataset& ds, const WeightContext& wc,
                               const LinkFunction& link) {
  return LikelihoodModel(ds, wc, link).hessian(p);
}

}  // namespace recmm
