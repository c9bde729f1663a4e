#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "recmm/errors.hpp"
#include "recmm/estimator.hpp"
#include "recmm/marginal_mean.hpp"
#include "recmm/simulation.hpp"
#include "recmm/variance.hpp"

using namespace recmm;
using doctest::Approx;
using oracle::subject;

namespace {

FitResult manual_fit(LinkFunction link, Eigen::VectorXd beta) {
  FitResult fit;
  fit.link = link;
  fit.beta = std::move(beta);
  fit.jump_times = {0.5, 1.0, 2.0, 3.5};
  fit.jump_sizes = Eigen::Vector4d(0.1, 0.3, 0.2, 0.4);
  fit.tau = 4.0;
  fit.converged = true;
  return fit;
}

std::vector<CovariateInterval> constant(std::vector<double> z) { return {{0.0, std::move(z)}}; }

}  // namespace

TEST_CASE("null effect returns the baseline") {
  auto fit = manual_fit(LinkFunction::identity(), Eigen::VectorXd::Zero(2));
  const std::vector<double> times = {0.0, 0.5, 0.7, 1.0, 2.9, 4.0};
  auto curve = predict_marginal_mean(fit, nullptr, constant({1.3, -2.0}), times);
  for (std::size_t j = 0; j < times.size(); ++j) {
    CHECK(curve.mean[j] == Approx(fit.cumulative_baseline(times[j])));
    CHECK(curve.se[j] == 0.0);
  }
}

TEST_CASE("proportionality under the identity link") {
  auto fit = manual_fit(LinkFunction::identity(), Eigen::VectorXd::Constant(1, -0.130));
  const std::vector<double> times = {0.5, 1.0, 2.5, 3.9};
  auto one = predict_marginal_mean(fit, nullptr, constant({1.0}), times);
  auto zero = predict_marginal_mean(fit, nullptr, constant({0.0}), times);
  for (std::size_t j = 0; j < times.size(); ++j) CHECK(one.mean[j] / zero.mean[j] == Approx(std::exp(-0.130)));
  CHECK(std::round(1000.0 * one.mean[0] / zero.mean[0]) / 1000.0 == Approx(0.878));
}

TEST_CASE("general link and time-varying profile") {
  auto fit = manual_fit(LinkFunction::box_cox(0.5), Eigen::VectorXd::Constant(1, 0.7));
  std::vector<CovariateInterval> profile = {{0.0, {0.0}}, {1.0, {1.0}}, {3.0, {-1.0}}};
  auto curve = predict_marginal_mean(fit, nullptr, profile, {3.9, 0.75, 2.0});
  const double H39 = 0.1 + std::exp(0.7) * (0.3 + 0.2) + std::exp(-0.7) * 0.4;
  CHECK(curve.mean[0] == Approx(LinkFunction::box_cox(0.5).value(H39)));
  CHECK(curve.mean[1] == Approx(LinkFunction::box_cox(0.5).value(0.1)));
  CHECK(curve.mean[2] == Approx(LinkFunction::box_cox(0.5).value(0.1 + std::exp(0.7) * 0.5)));
  CHECK(curve.times == std::vector<double>{3.9, 0.75, 2.0});
}

TEST_CASE("prediction errors") {
  auto fit = manual_fit(LinkFunction::identity(), Eigen::VectorXd::Zero(1));
  CHECK_THROWS_AS(predict_marginal_mean(fit, nullptr, constant({0.0}), {4.5}), ValidationError);
  CHECK_THROWS_AS(predict_marginal_mean(fit, nullptr, constant({0.0}), {-0.1}), ValidationError);
  CHECK_THROWS_AS(predict_marginal_mean(fit, nullptr, constant({0.0, 1.0}), {1.0}), ValidationError);
  CHECK_THROWS_AS(predict_marginal_mean(fit, nullptr, {{0.5, {0.0}}}, {1.0}), ValidationError);
}

TEST_CASE("delta-method standard errors") {
  auto cfg = preset_config("scenario_bc_05");
  cfg.n = 150;
  cfg.seed = 3;
  auto ds = simulate_dataset(cfg);
  auto fit = fit_npmle(ds, cfg.link);
  REQUIRE(fit.converged);
  auto vr = sandwich(fit, ds);
  std::vector<CovariateInterval> profile = {{0.0, {0.5, -1.0}}, {2.0, {1.0, 0.0}}};
  const std::vector<double> times = {0.5, 2.5, 5.0};
  auto curve = predict_marginal_mean(fit, &vr, profile, times);

  const auto d = static_cast<Eigen::Index>(fit.dim());
  Eigen::VectorXd x(d + fit.jump_sizes.size());
  x << fit.beta, fit.jump_sizes;
  for (std::size_t j = 0; j < times.size(); ++j) {
    auto mean = [&](const Eigen::VectorXd& y) {
      FitResult f = fit;
      f.beta = y.head(d);
      f.jump_sizes = y.tail(y.size() - d);
      return predict_marginal_mean(f, nullptr, profile, {times[j]}).mean[0];
    };
    const Eigen::VectorXd grad = oracle::fd_gradient(mean, x, 1e-7);
    const double se = std::sqrt(grad.dot(vr.covariance * grad));
    CHECK(curve.se[j] == Approx(se).epsilon(1e-5));
    CHECK(curve.ci_low[j] == Approx(curve.mean[j] - 1.959963984540054 * se).epsilon(1e-5));
  }

  PredictionOptions opts;
  opts.log_band = true;
  auto logged = predict_marginal_mean(fit, &vr, profile, times, opts);
  for (std::size_t j = 0; j < times.size(); ++j) {
    CHECK(logged.ci_low[j] * logged.ci_high[j] == Approx(logged.mean[j] * logged.mean[j]));
    CHECK(logged.ci_low[j] > 0.0);
  }
}

TEST_CASE("pseudo risk Nelson-Aalen") {
  SUBCASE("complete follow-up") {
    Dataset ds({subject("1", {}, {1.0, 2.0}, 5.0), subject("2", {}, {2.0}, 5.0), subject("3", {}, {}, 5.0),
                subject("4", {}, {4.0}, 5.0)},
               5.0, 0);
    auto na = nelson_aalen_pseudo(ds, ipc_weights(ds, km_censoring(ds)));
    CHECK(na(0.5) == 0.0);
    CHECK(na(1.0) == Approx(0.25));
    CHECK(na(2.0) == Approx(0.75));
    CHECK(na(5.0) == Approx(1.0));
  }
  SUBCASE("weighted fixture") {
    Dataset ds({subject("a", {}, {1.0}, 0.0, 2.0), subject("b", {}, {}, 2.5), subject("c", {}, {3.0}, 5.0),
                subject("d", {}, {1.0, 4.0}, 5.0), subject("e", {}, {}, 5.0), subject("f", {}, {4.5}, 5.0)},
               5.0, 0);
    auto na = nelson_aalen_pseudo(ds, ipc_weights(ds, km_censoring(ds)));
    CHECK(na(1.0) == Approx(2.0 / 6.0));
    CHECK(na(3.0) == Approx(2.0 / 6.0 + 1.0 / 4.8));
    CHECK(na(5.0) == Approx(2.0 / 6.0 + 3.0 / 4.8));
  }
}

TEST_CASE("Aalen-Johansen marginal mean") {
  SUBCASE("hand example") {
    Dataset ds({subject("1", {}, {}, 0.0, 1.0), subject("2", {}, {2.0}, 5.0)}, 5.0, 0);
    auto aj = aalen_johansen_marginal_mean(ds);
    CHECK(aj(1.9) == 0.0);
    CHECK(aj(2.0) == Approx(0.5));
  }
  SUBCASE("terminal-free data agrees with the pseudo risk estimator") {
    std::mt19937_64 rng(12);
    auto raw = oracle::random_dataset(rng, 40, 0);
    std::vector<SubjectRecord> subjects;
    for (auto s : raw.subjects()) {
      s.terminal_time.reset();
      subjects.push_back(s);
    }
    Dataset ds(subjects, raw.tau(), 0);
    auto aj = aalen_johansen_marginal_mean(ds);
    auto na = nelson_aalen_pseudo(ds, ipc_weights(ds, km_censoring(ds)));
    CHECK(aj.times == na.times);
    for (std::size_t m = 0; m < aj.values.size(); ++m) CHECK(aj.values[m] == Approx(na.values[m]).epsilon(1e-13));
  }
}
