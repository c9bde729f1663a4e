#pragma once

#include <vector>

#include "recmm/dataset.hpp"
#include "recmm/estimator.hpp"
#include "recmm/variance.hpp"
#include "recmm/weights.hpp"

namespace recmm {

/// Right-continuous step function starting at 0.
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;

  double operator()(double t) const;
};

struct PredictionCurve {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> se;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
};

struct PredictionOptions {
  bool log_band = false;  // Wald band for log(mean), mapped back
  double z = 1.959963984540054;
};

/// mean(t) = G(sum_{t_m <= t} e^{beta'Z(t_m)} dL(t_m)) for the covariate path
/// `profile`, with delta-method standard errors from vr (zero when vr is null).
PredictionCurve predict_marginal_mean(const FitResult& fit, const VarianceResult* vr,
                                      const std::vector<CovariateInterval>& profile, const std::vector<double>& times,
                                      const PredictionOptions& opts = {});

/// Weighted Nelson-Aalen estimate sum_{t_k <= t} dN(t_k) / pseudo risk size.
StepFunction nelson_aalen_pseudo(const Dataset& ds, const WeightContext& wc);
/// Same estimate from the censoring survival alone, without the weight matrices.
StepFunction nelson_aalen_pseudo(const Dataset& ds, const CensoringSurvival& gc);

/// sum_{u <= t} S_D(u-) dN(u) / #{X_i >= u}, with S_D the Kaplan-Meier
/// survival of the terminal event.
StepFunction aalen_johansen_marginal_mean(const Dataset& ds);

}  // namespace recmm
