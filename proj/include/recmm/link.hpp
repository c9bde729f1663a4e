#pragma once

#include <string>
#include <string_view>

namespace recmm {

enum class LinkFamily { BoxCox, Logarithmic };

struct LinkValues {
  double g = 0.0;   // G(x)
  double g1 = 0.0;  // G'(x)
  double g2 = 0.0;  // G''(x)
};

/// Transformation G of the cumulative intensity.
///
///   BoxCox(rho):      G(x) = ((1 + x)^rho - 1) / rho,  rho -> 0 gives log(1 + x)
///   Logarithmic(r):   G(x) = log(1 + r x) / r,         r -> 0 gives x
///
/// Parameters below 1e-8 evaluate the limiting family exactly; everything else
/// goes through expm1/log1p so small parameters do not cancel.
class LinkFunction {
 public:
  static constexpr double kLimitThreshold = 1e-8;

  LinkFunction() = default;
  LinkFunction(LinkFamily family, double param);

  static LinkFunction box_cox(double rho) { return {LinkFamily::BoxCox, rho}; }
  static LinkFunction logarithmic(double r) { return {LinkFamily::Logarithmic, r}; }
  static LinkFunction identity() { return box_cox(1.0); }
  /// Parses `boxcox:<rho>` or `log:<r>`.
  static LinkFunction parse(std::string_view spec);

  LinkFamily family() const { return family_; }
  double param() const { return param_; }
  bool is_limit() const { return param_ < kLimitThreshold; }
  /// True for the proportional-intensity model (BoxCox(1) or the r -> 0 branch).
  bool is_identity() const;
  std::string to_string() const;

  LinkValues eval(double x) const;
  double value(double x) const { return eval(x).g; }
  /// G'''(x); only the exact likelihood Hessian needs it.
  double third(double x) const;
  /// G^{-1}(y) for y >= 0.
  double inverse(double y) const;

  bool operator==(const LinkFunction&) const = default;

 private:
  LinkFamily family_ = LinkFamily::BoxCox;
  double param_ = 1.0;
};

/// (G, G', G'') at x >= 0. Throws std::invalid_argument on negative or NaN x.
LinkValues eval_link(const LinkFunction& link, double x);

}  // namespace recmm
