#include "doctest.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "recmm/errors.hpp"
#include "recmm/estimator.hpp"
#include "recmm/simulation.hpp"
#include "recmm/variance.hpp"

using namespace recmm;
using doctest::Approx;
using oracle::subject;

namespace {

struct Fitted {
  Dataset ds;
  CensoringSurvival gc;
  WeightContext wc;
  FitResult fit;
};

Fitted fitted(Dataset ds, const LinkFunction& link) {
  Fitted f{std::move(ds), {}, {}, {}};
  f.gc = km_censoring(f.ds);
  f.wc = ipc_weights(f.ds, f.gc);
  f.fit = fit_npmle(f.ds, f.wc, link);
  REQUIRE(f.fit.converged);
  return f;
}

Dataset simulated(std::size_t n, std::uint64_t seed, bool censoring, double cap) {
  auto cfg = preset_config("scenario_bc_1");
  cfg.n = n;
  cfg.seed = seed;
  cfg.censoring = censoring;
  cfg.gamma3_cap = cap;
  return simulate_dataset(cfg);
}

// Total score in raw (beta, jump size) coordinates for a given weight matrix.
Eigen::VectorXd raw_score(const Dataset& ds, const WeightContext& wc, const LinkFunction& link,
                          const FitResult& fit) {
  LikelihoodModel model(ds, wc, link);
  Eigen::VectorXd g = model.gradient(fit.params());
  const auto d = static_cast<Eigen::Index>(fit.dim());
  for (Eigen::Index m = 0; m < fit.jump_sizes.size(); ++m) g[d + m] /= fit.jump_sizes[m];
  return g;
}

// Derivative of the total score with respect to the case weight of subject i
// in the censoring hazard: w*(t) for a terminal subject is rescaled by
// exp(-sum_{D <= u < t} [dA_eps(u) - dA(u)]) with
// dA_eps(u) = (d(u) + eps dN_i(u)) / (Y(u) + eps Y_i(u)).
Eigen::VectorXd kappa_oracle(const Fitted& f, const LinkFunction& link, std::size_t i) {
  const auto& ds = f.ds;
  const double tau = ds.tau();
  std::set<double> times;
  for (const auto& s : ds.subjects())
    if (oracle::randomly_censored(s, tau)) times.insert(s.censor_time);
  auto shifted = [&](double eps) {
    WeightContext wc = f.wc;
    for (std::size_t j = 0; j < ds.size(); ++j) {
      const auto& s = ds.subject(j);
      if (!s.has_terminal()) continue;
      for (std::size_t m = 0; m < wc.grid.size(); ++m) {
        const double t = wc.grid[m];
        if (t <= *s.terminal_time) continue;
        double shift = 0.0;
        for (double u : times) {
          if (u < *s.terminal_time || u >= t) continue;
          double d = 0.0, y = 0.0;
          for (const auto& r : ds.subjects()) {
            y += oracle::observed_end(r, tau) >= u;
            d += oracle::randomly_censored(r, tau) && r.censor_time == u;
          }
          const auto& si = ds.subject(i);
          const double di = oracle::randomly_censored(si, tau) && si.censor_time == u;
          const double yi = oracle::observed_end(si, tau) >= u;
          shift += (d + eps * di) / (y + eps * yi) - d / y;
        }
        const auto jj = static_cast<Eigen::Index>(j), mm = static_cast<Eigen::Index>(m);
        wc.weights(jj, mm) *= std::exp(-shift);
        wc.simplified(jj, mm) *= std::exp(-shift);
      }
    }
    return raw_score(ds, wc, link, f.fit);
  };
  const double h = 1e-6;
  return (shifted(h) - shifted(-h)) / (2 * h);
}

}  // namespace

TEST_CASE("eta rows are per-subject score contributions") {
  std::mt19937_64 rng(31);
  for (auto link : {LinkFunction::identity(), LinkFunction::box_cox(0.5), LinkFunction::logarithmic(1.0)}) {
    auto f = fitted(oracle::random_dataset(rng, 25, 2), link);
    const auto eta = eta_components(f.fit, f.ds, f.wc, link);
    const auto d = f.fit.dim();
    auto w = [&](std::size_t i, double t) {
      return f.wc.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f.ds.grid_index(t)));
    };
    for (std::size_t i = 0; i < f.ds.size(); i += 3) {
      auto li = [&](const Eigen::VectorXd& x) {
        std::vector<double> beta(x.data(), x.data() + d), jumps(x.data() + d, x.data() + x.size());
        return oracle::subject_loglik(f.ds, i, link, beta, jumps, w);
      };
      Eigen::VectorXd x(f.fit.dim() + f.fit.grid_size());
      x << f.fit.beta, f.fit.jump_sizes;
      const Eigen::VectorXd fd = oracle::fd_gradient(li, x, 1e-7);
      CHECK(oracle::relative_error(eta.row(static_cast<Eigen::Index>(i)).transpose(), fd) < 1e-5);
    }
  }
}

TEST_CASE("eta sums to the total score at the estimate") {
  auto f = fitted(simulated(150, 2, false, 0.0), LinkFunction::box_cox(1.0));
  const auto eta = eta_components(f.fit, f.ds, f.wc, f.fit.link);
  const Eigen::VectorXd total = eta.colwise().sum().transpose();
  CHECK(total.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("permuting subjects permutes the rows") {
  std::mt19937_64 rng(4);
  auto base = oracle::random_dataset(rng, 20, 1);
  auto f = fitted(base, LinkFunction::box_cox(0.5));
  std::vector<std::size_t> order(base.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<SubjectRecord> subjects;
  for (auto j : order) subjects.push_back(base.subject(j));
  Dataset permuted(subjects, base.tau(), base.dim());
  auto gc = km_censoring(permuted);
  auto wc = ipc_weights(permuted, gc);
  const auto eta = eta_components(f.fit, f.ds, f.wc, f.fit.link);
  const auto eta_p = eta_components(f.fit, permuted, wc, f.fit.link);
  const auto kappa = kappa_components(f.fit, f.ds, f.wc, f.gc, f.fit.link);
  const auto kappa_p = kappa_components(f.fit, permuted, wc, gc, f.fit.link);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto a = static_cast<Eigen::Index>(r), b = static_cast<Eigen::Index>(order[r]);
    CHECK((eta_p.row(a) - eta.row(b)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((kappa_p.row(a) - kappa.row(b)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("kappa vanishes without terminal events or without random censoring") {
  SUBCASE("no terminal events") {
    auto f = fitted(simulated(120, 5, true, 0.0), LinkFunction::box_cox(1.0));
    CHECK(f.gc.jump_times.size() > 0);
    CHECK(kappa_components(f.fit, f.ds, f.wc, f.gc, f.fit.link).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("administrative censoring only") {
    auto f = fitted(simulated(120, 6, false, 0.3), LinkFunction::box_cox(0.5));
    std::size_t terminal = 0;
    for (const auto& s : f.ds.subjects()) terminal += s.has_terminal();
    CHECK(terminal > 0);
    CHECK(kappa_components(f.fit, f.ds, f.wc, f.gc, f.fit.link).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("kappa is the score derivative in the censoring case weights") {
  SUBCASE("small fixture") {
    // one terminal event and one random censoring after it
    Dataset ds({subject("1", {0.5}, {1.0}, 0.0, 1.5), subject("2", {-0.3}, {0.5, 1.8}, 2.0),
                subject("3", {1.0}, {2.2, 3.0}, 4.0), subject("4", {0.0}, {0.8, 3.5}, 4.0)},
               4.0, 1);
    auto f = fitted(ds, LinkFunction::identity());
    const auto kappa = kappa_components(f.fit, f.ds, f.wc, f.gc, f.fit.link);
    CHECK(kappa.cwiseAbs().maxCoeff() > 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i)
      CHECK(oracle::relative_error(kappa.row(static_cast<Eigen::Index>(i)).transpose(),
                                   kappa_oracle(f, f.fit.link, i)) < 1e-7);
  }
  SUBCASE("random data") {
    std::mt19937_64 rng(77);
    for (auto link : {LinkFunction::box_cox(0.5), LinkFunction::logarithmic(1.0)}) {
      auto f = fitted(oracle::random_dataset(rng, 25, 2), link);
      const auto kappa = kappa_components(f.fit, f.ds, f.wc, f.gc, link);
      for (std::size_t i = 0; i < f.ds.size(); i += 4)
        CHECK(oracle::relative_error(kappa.row(static_cast<Eigen::Index>(i)).transpose(),
                                     kappa_oracle(f, link, i)) < 1e-6);
    }
  }
}

TEST_CASE("sandwich structure") {
  auto f = fitted(simulated(200, 8, true, 0.3), LinkFunction::box_cox(1.0));
  const auto vr = sandwich(f.fit, f.ds, f.wc, f.gc, f.fit.link);
  const auto d = static_cast<Eigen::Index>(vr.dim());
  CHECK(d == 2);
  CHECK((vr.fisher - vr.fisher.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * vr.fisher.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(vr.middle);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * vr.middle.norm());
  CHECK((vr.covariance.diagonal().array() >= 0.0).all());

  // fisher is minus the Jacobian of the raw-coordinate score
  LikelihoodModel model(f.ds, f.wc, f.fit.link);
  auto score = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd lj = x.tail(x.size() - d).array().log().matrix();
    ParamVector p{x.head(d), lj};
    Eigen::VectorXd g = model.gradient(p);
    g.tail(x.size() - d).array() /= x.tail(x.size() - d).array();
    return g;
  };
  Eigen::VectorXd x(vr.fisher.rows());
  x << f.fit.beta, f.fit.jump_sizes;
  const Eigen::MatrixXd J = oracle::fd_jacobian(score, x, 1e-7 * f.fit.jump_sizes.minCoeff());
  CHECK(oracle::relative_error(-vr.fisher, J) < 1e-5);

  // coordinate functionals
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[j] = 1.0;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vr.grid.size()));
    CHECK(functional_variance(vr, e, zero) == Approx(vr.beta_se[j] * vr.beta_se[j]));
    CHECK(functional_variance(vr, e, zero, true) == Approx(vr.fisher_only_se[j] * vr.fisher_only_se[j]));
  }
  const Eigen::VectorXd h1 = Eigen::VectorXd::Constant(d, 0.3);
  const Eigen::VectorXd h2 = step_indicator(vr.grid, 2.5);
  CHECK(functional_covariance(vr, h1, h2, h1, h2) == Approx(functional_variance(vr, h1, h2)));
  const Eigen::VectorXd g1 = Eigen::VectorXd::Constant(d, -1.0);
  const Eigen::VectorXd g2 = step_indicator(vr.grid, 4.0);
  CHECK(functional_covariance(vr, h1, h2, g1, g2) == Approx(functional_covariance(vr, g1, g2, h1, h2)));
  CHECK(baseline_variance(vr, 2.5) == Approx(functional_variance(vr, Eigen::VectorXd::Zero(d), h2)));
  CHECK(baseline_variance(vr, 2.5) > 0.0);
  CHECK_THROWS_AS(functional_variance(vr, Eigen::VectorXd::Zero(d + 1), h2), ValidationError);

  const Eigen::VectorXd ind = step_indicator({1.0, 2.0, 3.0}, 2.0);
  CHECK(ind == Eigen::Vector3d(1.0, 1.0, 0.0));
}

TEST_CASE("sandwich equals inverse information when the outer product matches") {
  // With kappa = 0 the two estimates differ only through the outer-product
  // versus observed information; replacing the middle by the information
  // must return the inverse information exactly.
  auto f = fitted(simulated(150, 9, false, 0.0), LinkFunction::box_cox(1.0));
  const auto vr = sandwich(f.fit, f.ds);
  const Eigen::MatrixXd back = vr.fisher_covariance * vr.fisher * vr.fisher_covariance;
  CHECK(oracle::relative_error(back, vr.fisher_covariance) < 1e-8);
  for (Eigen::Index j = 0; j < 2; ++j) CHECK(vr.beta_se[j] == Approx(vr.fisher_only_se[j]).epsilon(0.25));
}

TEST_CASE("variance needs a converged fit") {
  auto f = fitted(simulated(60, 10, true, 0.3), LinkFunction::box_cox(1.0));
  auto fit = f.fit;
  fit.converged = false;
  CHECK_THROWS_AS(sandwich(fit, f.ds), ValidationError);
}
