#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "recmm/estimator.hpp"
#include "recmm/variance.hpp"

namespace recmm {

/// A fit as stored on disk, with its variance when it was computed.
struct StoredFit {
  FitResult fit;
  std::optional<VarianceResult> variance;
};

struct BaselineVariance {
  double time = 0.0;
  double cumulative = 0.0;
  double se_fisher = 0.0;
  double se_sandwich = 0.0;
};

nlohmann::json fit_to_json(const FitResult& fit, const VarianceResult* vr,
                           const std::vector<BaselineVariance>& baseline = {});
StoredFit fit_from_json(const nlohmann::json& j);

StoredFit read_fit_file(const std::string& path);

std::string version_string();

}  // namespace recmm
