#include "recmm/link.hpp"

#include <cmath>
#include <stdexcept>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

namespace {

void check_argument(double x) {
  if (std::isnan(x)) throw std::invalid_argument("link function evaluated at NaN");
  if (x < 0.0) throw std::invalid_argument("link function evaluated at negative argument " + format_double(x));
}

}  // namespace

LinkFunction::LinkFunction(LinkFamily family, double param) : family_(family), param_(param) {
  if (!(param >= 0.0) || !std::isfinite(param))
    throw ValidationError("link parameter must be finite and nonnegative, got " + format_double(param));
}

LinkFunction LinkFunction::parse(std::string_view spec) {
  auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw ValidationError("link spec must be boxcox:<rho> or log:<r>");
  auto name = spec.substr(0, colon);
  std::string number(spec.substr(colon + 1));
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(number, &used);
    if (used != number.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("invalid link parameter in '" + std::string(spec) + "'");
  }
  if (name == "boxcox") return box_cox(value);
  if (name == "log") return logarithmic(value);
  throw ValidationError("unknown link family '" + std::string(name) + "'");
}

bool LinkFunction::is_identity() const {
  return family_ == LinkFamily::BoxCox ? param_ == 1.0 : is_limit();
}

std::string LinkFunction::to_string() const {
  return (family_ == LinkFamily::BoxCox ? "boxcox:" : "log:") + format_double(param_);
}

LinkValues LinkFunction::eval(double x) const {
  check_argument(x);
  LinkValues out;
  if (family_ == LinkFamily::BoxCox) {
    const double lx = std::log1p(x);
    if (is_limit()) {
      const double inv = std::exp(-lx);
      out.g = lx;
      out.g1 = inv;
      out.g2 = -inv * inv;
    } else {
      const double rho = param_;
      out.g = std::expm1(rho * lx) / rho;
      out.g1 = std::exp((rho - 1.0) * lx);
      out.g2 = (rho - 1.0) * std::exp((rho - 2.0) * lx);
    }
  } else {
    if (is_limit()) {
      out.g = x;
      out.g1 = 1.0;
      out.g2 = 0.0;
    } else {
      const double r = param_;
      const double inv = 1.0 / (1.0 + r * x);
      out.g = std::log1p(r * x) / r;
      out.g1 = inv;
      out.g2 = -r * inv * inv;
    }
  }
  return out;
}

double LinkFunction::third(double x) const {
  check_argument(x);
  if (family_ == LinkFamily::BoxCox) {
    const double rho = is_limit() ? 0.0 : param_;
    return (rho - 1.0) * (rho - 2.0) * std::exp((rho - 3.0) * std::log1p(x));
  }
  if (is_limit()) return 0.0;
  const double inv = 1.0 / (1.0 + param_ * x);
  return 2.0 * param_ * param_ * inv * inv * inv;
}

double LinkFunction::inverse(double y) const {
  check_argument(y);
  if (family_ == LinkFamily::BoxCox) {
    if (is_limit()) return std::expm1(y);
    return std::expm1(std::log1p(param_ * y) / param_);
  }
  if (is_limit()) return y;
  return std::expm1(param_ * y) / param_;
}

LinkValues eval_link(const LinkFunction& link, double x) { return link.eval(x); }

}  // namespace recmm
