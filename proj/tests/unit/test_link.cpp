#include "doctest.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "recmm/errors.hpp"
#include "recmm/link.hpp"

using namespace recmm;
using doctest::Approx;

TEST_CASE("link values") {
  auto v = LinkFunction::box_cox(1.0).eval(2.0);
  CHECK(v.g == Approx(2.0));
  CHECK(v.g1 == Approx(1.0));
  CHECK(v.g2 == Approx(0.0));

  v = LinkFunction::box_cox(0.5).eval(3.0);
  CHECK(v.g == Approx(2.0));
  CHECK(v.g1 == Approx(0.5));
  CHECK(v.g2 == Approx(-0.0625));

  const double e = std::numbers::e;
  v = LinkFunction::logarithmic(1.0).eval(e - 1.0);
  CHECK(v.g == Approx(1.0));
  CHECK(v.g1 == Approx(1.0 / e));
  CHECK(v.g2 == Approx(-1.0 / (e * e)));
}

TEST_CASE("small Box-Cox parameter against the series in rho") {
  // ((1+x)^rho - 1)/rho = L + rho L^2/2 + rho^2 L^3/6 + ..., L = log(1+x)
  for (double rho : {1e-12, 1e-9, 1e-7, 1e-5}) {
    for (double x : {1e-6, 0.1, 1.0, 7.5}) {
      const double L = std::log1p(x);
      const double series = L + rho * L * L / 2 + rho * rho * L * L * L / 6;
      // below the threshold the limit is exact and the error is the first series term
      const double tol = rho < LinkFunction::kLimitThreshold ? rho * L * L : 1e-12 * std::max(1.0, series);
      CHECK(std::abs(LinkFunction::box_cox(rho).value(x) - series) <= tol);
    }
  }
  CHECK(std::abs(LinkFunction::box_cox(1e-12).value(1.0) - std::log(2.0)) < 1e-8);
}

TEST_CASE("small logarithmic parameter against the series in r") {
  // log(1 + r x)/r = x - r x^2/2 + r^2 x^3/3 - ...
  for (double r : {1e-12, 1e-9, 1e-7, 1e-5}) {
    for (double x : {1e-6, 0.1, 1.0, 7.5}) {
      const double series = x - r * x * x / 2 + r * r * x * x * x / 3;
      const double tol = r < LinkFunction::kLimitThreshold ? r * x * x : 1e-12 * std::max(1.0, x);
      CHECK(std::abs(LinkFunction::logarithmic(r).value(x) - series) <= tol);
    }
  }
}

TEST_CASE("derivatives match finite differences") {
  const std::vector<LinkFunction> links = {LinkFunction::box_cox(0.0),  LinkFunction::box_cox(0.5),
                                           LinkFunction::box_cox(2.0),  LinkFunction::box_cox(1e-3),
                                           LinkFunction::logarithmic(1.0), LinkFunction::logarithmic(0.0),
                                           LinkFunction::logarithmic(3.0)};
  const double h = 1e-5;
  for (const auto& link : links) {
    for (double x : {0.05, 0.7, 2.0, 9.0}) {
      const auto v = link.eval(x);
      const auto a = link.eval(x + h), b = link.eval(x - h);
      CHECK(v.g1 == Approx((a.g - b.g) / (2 * h)).epsilon(1e-7));
      CHECK(v.g2 == Approx((a.g1 - b.g1) / (2 * h)).epsilon(1e-6).scale(1.0));
      CHECK(link.third(x) == Approx((a.g2 - b.g2) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("shape properties") {
  for (double p : {0.0, 0.25, 0.5, 1.0, 2.0, 3.0}) {
    for (auto link : {LinkFunction::box_cox(p), LinkFunction::logarithmic(p)}) {
      const auto zero = link.eval(0.0);
      CHECK(zero.g == 0.0);
      CHECK(zero.g1 == Approx(1.0));
      double prev = -1.0;
      for (double x = 0.0; x < 20.0; x += 0.5) {
        const auto v = link.eval(x);
        CHECK(v.g > prev);
        CHECK(v.g1 > 0.0);
        prev = v.g;
        CHECK(link.inverse(v.g) == Approx(x).epsilon(1e-12).scale(1.0));
      }
    }
  }
}

TEST_CASE("family coincidence") {
  for (double x : {0.0, 0.3, 1.0, 12.0}) {
    CHECK(LinkFunction::box_cox(1.0).value(x) == Approx(LinkFunction::logarithmic(1e-9).value(x)));
    CHECK(LinkFunction::logarithmic(1.0).value(x) == Approx(LinkFunction::box_cox(1e-9).value(x)));
    CHECK(LinkFunction::logarithmic(1.0).eval(x).g1 == Approx(LinkFunction::box_cox(0.0).eval(x).g1));
  }
  CHECK(LinkFunction::box_cox(1.0).is_identity());
  CHECK(LinkFunction::logarithmic(0.0).is_identity());
  CHECK_FALSE(LinkFunction::logarithmic(1.0).is_identity());
}

TEST_CASE("invalid arguments") {
  CHECK_THROWS_AS(LinkFunction::box_cox(1.0).eval(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(LinkFunction::box_cox(1.0).eval(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(eval_link(LinkFunction::logarithmic(1.0), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(LinkFunction::box_cox(-1.0), ValidationError);
}

TEST_CASE("link spec parsing") {
  CHECK(LinkFunction::parse("boxcox:0.5") == LinkFunction::box_cox(0.5));
  CHECK(LinkFunction::parse("log:1") == LinkFunction::logarithmic(1.0));
  CHECK(LinkFunction::parse(LinkFunction::logarithmic(1e-8).to_string()) == LinkFunction::logarithmic(1e-8));
  CHECK_THROWS_AS(LinkFunction::parse("cox:1"), ValidationError);
  CHECK_THROWS_AS(LinkFunction::parse("boxcox"), ValidationError);
  CHECK_THROWS_AS(LinkFunction::parse("boxcox:abc"), ValidationError);
  CHECK_THROWS_AS(LinkFunction::parse("log:-2"), ValidationError);
}
