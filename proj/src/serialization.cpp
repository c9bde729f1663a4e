#include "recmm/serialization.hpp"

#include <fstream>

#include "recmm/errors.hpp"

#ifndef RECMM_VERSION
#define RECMM_VERSION "0.0.0"
#endif
#ifndef RECMM_BUILD_ID
#define RECMM_BUILD_ID "unknown"
#endif

namespace recmm {

using nlohmann::json;

std::string version_string() { return std::string(RECMM_VERSION) + "+" + RECMM_BUILD_ID; }

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    out.push_back(row);
  }
  return out;
}

Eigen::VectorXd vector_from(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index size) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
    throw ValidationError("fit file: covariance has the wrong number of rows");
  Eigen::MatrixXd m(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != size)
      throw ValidationError("fit file: covariance row " + std::to_string(i) + " has the wrong length");
    for (Eigen::Index c = 0; c < size; ++c) m(i, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

json fit_to_json(const FitResult& fit, const VarianceResult* vr, const std::vector<BaselineVariance>& baseline) {
  json j;
  j["version"] = version_string();
  j["link"] = fit.link.to_string();
  j["beta"] = vector_json(fit.beta);
  if (vr) {
    j["se"] = vector_json(vr->beta_se);
    j["se_sandwich"] = vector_json(vr->beta_se);
    j["se_fisher"] = vector_json(vr->fisher_only_se);
  }
  j["jump_times"] = fit.jump_times;
  j["jump_sizes"] = vector_json(fit.jump_sizes);
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["gradient_norm"] = fit.gradient_norm;
  j["n"] = fit.n;
  j["k"] = fit.grid_size();
  j["d"] = fit.dim();
  j["tau"] = fit.tau;
  if (!baseline.empty()) {
    json rows = json::array();
    for (const auto& b : baseline)
      rows.push_back({{"time", b.time}, {"cumulative", b.cumulative}, {"se_fisher", b.se_fisher},
                      {"se_sandwich", b.se_sandwich}});
    j["baseline_variance"] = rows;
  }
  std::vector<std::string> warnings = fit.warnings;
  if (vr) warnings.insert(warnings.end(), vr->warnings.begin(), vr->warnings.end());
  j["warnings"] = warnings;
  if (vr) {
    j["covariance"] = matrix_json(vr->covariance);
    j["fisher_covariance"] = matrix_json(vr->fisher_covariance);
  }
  return j;
}

StoredFit fit_from_json(const json& j) {
  StoredFit out;
  try {
    FitResult& f = out.fit;
    f.link = LinkFunction::parse(j.at("link").get<std::string>());
    f.beta = vector_from(j, "beta");
    f.jump_times = j.at("jump_times").get<std::vector<double>>();
    f.jump_sizes = vector_from(j, "jump_sizes");
    if (f.jump_times.size() != static_cast<std::size_t>(f.jump_sizes.size()))
      throw ValidationError("fit file: jump_times and jump_sizes differ in length");
    f.loglik = j.value("loglik", 0.0);
    f.converged = j.value("converged", false);
    f.iterations = j.value("iterations", 0);
    f.gradient_norm = j.value("gradient_norm", 0.0);
    f.n = j.value("n", std::size_t{0});
    f.tau = j.at("tau").get<double>();
    if (j.contains("covariance")) {
      const auto size = f.beta.size() + f.jump_sizes.size();
      VarianceResult vr;
      vr.covariance = matrix_from(j.at("covariance"), size);
      vr.fisher_covariance =
          j.contains("fisher_covariance") ? matrix_from(j.at("fisher_covariance"), size) : vr.covariance;
      vr.beta_se = vector_from(j, "se_sandwich");
      vr.fisher_only_se = vector_from(j, "se_fisher");
      vr.grid = f.jump_times;
      vr.n = f.n;
      out.variance = std::move(vr);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed fit file: ") + e.what());
  }
  return out;
}

StoredFit read_fit_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open fit file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("fit file '" + path + "' is not valid JSON: " + e.what());
  }
  return fit_from_json(j);
}

}  // namespace recmm
