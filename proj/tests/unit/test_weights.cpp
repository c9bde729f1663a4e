#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "recmm/errors.hpp"
#include "recmm/weights.hpp"

using namespace recmm;
using doctest::Approx;
using oracle::subject;

namespace {

// Terminal event at 2, one censoring at 2.5 with five subjects still at risk:
// G_c(2-) = 1 and G_c(3-) = 4/5.
Dataset ipc_fixture() {
  return Dataset({subject("a", {}, {1.0}, 0.0, 2.0), subject("b", {}, {}, 2.5), subject("c", {}, {3.0}, 5.0),
                  subject("d", {}, {1.0, 4.0}, 5.0), subject("e", {}, {}, 5.0), subject("f", {}, {4.5}, 5.0)},
                 5.0, 0);
}

}  // namespace

TEST_CASE("censoring survival examples") {
  SUBCASE("single censoring") {
    Dataset ds({subject("1", {}, {1.0}, 4.0)}, 5.0, 0);
    auto gc = km_censoring(ds);
    CHECK(gc.value(3.9) == 1.0);
    CHECK(gc.value(4.0) == 0.0);
    CHECK(gc.left_limit(4.0) == 1.0);
  }
  SUBCASE("censoring then terminal") {
    Dataset ds({subject("1", {}, {1.0}, 2.0), subject("2", {}, {}, 0.0, 4.0)}, 5.0, 0);
    auto gc = km_censoring(ds);
    CHECK(gc.value(1.99) == 1.0);
    CHECK(gc.value(2.0) == 0.5);
    CHECK(gc.value(4.5) == 0.5);
    REQUIRE(gc.at_risk.size() == 1);
    CHECK(gc.at_risk[0] == 2.0);
  }
  SUBCASE("administrative end only") {
    Dataset ds({subject("1", {}, {1.0}, 5.0), subject("2", {}, {2.0}, 0.0, 3.0)}, 5.0, 0);
    auto gc = km_censoring(ds);
    CHECK(gc.jump_times.empty());
    for (double t : {0.0, 1.0, 4.99, 5.0}) CHECK(gc.value(t) == 1.0);
  }
}

TEST_CASE("censoring survival matches the product-limit oracle") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    auto ds = oracle::random_dataset(rng, 30, 1);
    auto gc = km_censoring(ds);
    for (double t = 0.0; t <= ds.tau(); t += 0.05) {
      CHECK(gc.value(t) == Approx(oracle::km(ds, t)).epsilon(1e-14));
      CHECK(gc.left_limit(t) == Approx(oracle::km_left(ds, t)).epsilon(1e-14));
    }
    for (double u : gc.jump_times) {
      CHECK(gc.value(u) == Approx(oracle::km(ds, u)).epsilon(1e-14));
      CHECK(gc.left_limit(u) == Approx(oracle::km_left(ds, u)).epsilon(1e-14));
    }
    // monotone, in [0, 1]
    for (std::size_t j = 0; j < gc.values.size(); ++j) {
      CHECK(gc.values[j] >= 0.0);
      CHECK(gc.values[j] <= 1.0);
      if (j > 0) CHECK(gc.values[j] <= gc.values[j - 1]);
    }
  }
}

TEST_CASE("ipc weight examples") {
  auto ds = ipc_fixture();
  auto gc = km_censoring(ds);
  CHECK(gc.left_limit(3.0) == Approx(0.8));
  CHECK(gc.left_limit(2.0) == 1.0);
  auto wc = ipc_weights(ds, gc);
  const auto k3 = ds.grid_index(3.0);
  CHECK(wc.weights(0, k3) == Approx(0.8));
  CHECK(wc.weights(0, ds.grid_index(1.0)) == 1.0);
  CHECK(wc.simplified(0, k3) == Approx(0.8));
  CHECK(wc.simplified(1, k3) == 0.0);
  // censored at 2.5
  CHECK(wc.weights(1, ds.grid_index(1.0)) == 1.0);
  CHECK(wc.weights(1, k3) == 0.0);

  // the pseudo risk set at 3 holds four subjects plus the 0.8-weighted cured one
  CHECK(pseudo_risk_size(wc, 3.0) == Approx(4.8));
  CHECK(pseudo_risk_size(wc, 1.0) == Approx(6.0));
  CHECK_THROWS_AS(pseudo_risk_size(wc, 2.0), ValidationError);
}

TEST_CASE("indicator weights without a terminal event") {
  Dataset ds({subject("1", {}, {1.0}, 4.0), subject("2", {}, {3.0, 4.5}, 5.0)}, 5.0, 0);
  auto wc = ipc_weights(ds, km_censoring(ds));
  CHECK(wc.weights(0, ds.grid_index(3.0)) == 1.0);
  CHECK(wc.weights(0, ds.grid_index(4.5)) == 0.0);
}

TEST_CASE("pseudo risk size examples") {
  SUBCASE("full risk set") {
    std::vector<SubjectRecord> subjects;
    for (int i = 0; i < 10; ++i) subjects.push_back(subject(std::to_string(i), {}, {0.4 * (i + 1)}, 5.0));
    Dataset ds(subjects, 5.0, 0);
    auto wc = ipc_weights(ds, km_censoring(ds));
    for (double t : ds.recurrent_grid()) CHECK(pseudo_risk_size(wc, t) == 10.0);
  }
  SUBCASE("cured subject keeps weight one") {
    Dataset ds({subject("1", {}, {}, 0.0, 1.0), subject("2", {}, {2.0}, 5.0), subject("3", {}, {}, 5.0)}, 5.0, 0);
    auto wc = ipc_weights(ds, km_censoring(ds));
    CHECK(pseudo_risk_size(wc, 2.0) == 3.0);
  }
}

TEST_CASE("weights match the oracle on random data") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    auto ds = oracle::random_dataset(rng, 30, 1);
    auto wc = ipc_weights(ds, km_censoring(ds));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& s = ds.subject(i);
      for (std::size_t m = 0; m < wc.grid.size(); ++m) {
        const double t = wc.grid[m];
        const auto ii = static_cast<Eigen::Index>(i);
        const auto mm = static_cast<Eigen::Index>(m);
        CHECK(wc.weights(ii, mm) == Approx(oracle::weight(ds, i, t)).epsilon(1e-13));
        CHECK(wc.weights(ii, mm) >= 0.0);
        CHECK(wc.weights(ii, mm) <= 1.0);
        if (t <= oracle::observed_end(s, ds.tau())) CHECK(wc.weights(ii, mm) == 1.0);
      }
    }
  }
}

TEST_CASE("censoring survival stays positive before a terminal event") {
  // the terminal subject is in every earlier risk set
  Dataset ds({subject("1", {}, {1.0}, 2.0), subject("2", {}, {}, 2.0), subject("3", {}, {}, 0.0, 2.5)}, 5.0, 0);
  auto gc = km_censoring(ds);
  CHECK(gc.value(2.0) == Approx(1.0 / 3.0));
  auto wc = ipc_weights(ds, gc);
  CHECK(wc.weights(2, 0) == 1.0);
}

TEST_CASE("pseudo risk sizes without the weight matrices") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    auto ds = oracle::random_dataset(rng, 30, 1);
    auto gc = km_censoring(ds);
    auto dense = ipc_weights(ds, gc).pseudo_risk_sizes();
    auto light = pseudo_risk_sizes(ds, gc);
    REQUIRE(light.size() == dense.size());
    CHECK((light - dense).cwiseAbs().maxCoeff() < 1e-12);
  }
}
