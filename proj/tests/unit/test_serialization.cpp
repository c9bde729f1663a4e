#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "recmm/errors.hpp"
#include "recmm/estimator.hpp"
#include "recmm/serialization.hpp"
#include "recmm/simulation.hpp"
#include "recmm/variance.hpp"

using namespace recmm;

TEST_CASE("fit JSON round trip") {
  auto cfg = preset_config("scenario_log_05");
  cfg.n = 80;
  cfg.seed = 9;
  auto ds = simulate_dataset(cfg);
  auto fit = fit_npmle(ds, cfg.link);
  REQUIRE(fit.converged);
  auto vr = sandwich(fit, ds);
  auto j = fit_to_json(fit, &vr, {{2.5, fit.cumulative_baseline(2.5), 0.1, 0.2}});
  CHECK(j.at("version").get<std::string>() == version_string());
  CHECK(j.at("k").get<std::size_t>() == fit.grid_size());
  CHECK(j.at("baseline_variance").size() == 1);

  auto back = fit_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.fit.link == fit.link);
  CHECK(back.fit.beta == fit.beta);
  CHECK(back.fit.jump_times == fit.jump_times);
  CHECK(back.fit.jump_sizes == fit.jump_sizes);
  CHECK(back.fit.tau == fit.tau);
  REQUIRE(back.variance.has_value());
  CHECK(back.variance->covariance == vr.covariance);
  CHECK(back.variance->fisher_covariance == vr.fisher_covariance);

  auto bare = fit_from_json(nlohmann::json::parse(fit_to_json(fit, nullptr).dump()));
  CHECK_FALSE(bare.variance.has_value());
}

TEST_CASE("malformed fit files") {
  CHECK_THROWS_AS(fit_from_json(nlohmann::json::parse("{\"link\": \"boxcox:1\"}")), ValidationError);
  CHECK_THROWS_AS(read_fit_file("/nonexistent/fit.json"), std::ios_base::failure);
  const std::string path = "recmm_bad_fit.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(read_fit_file(path), ValidationError);
  std::remove(path.c_str());
}
