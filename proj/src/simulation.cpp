#include "recmm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

void SimulationConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError(std::string("simulation config: ") + name + " must be positive, got " + format_double(v));
  };
  positive(gamma1, "gamma1");
  positive(gamma2, "gamma2");
  positive(gamma4, "gamma4");
  positive(tau, "tau");
  if (!(gamma3_cap >= 0.0)) throw ValidationError("simulation config: gamma3_cap must be nonnegative");
  if (censoring && !(censor_low < censor_high))
    throw ValidationError("simulation config: censor_low must be below censor_high");
  if (censoring && !(censor_low >= 0.0)) throw ValidationError("simulation config: censor_low must be nonnegative");
  if (!beta2.empty() && beta2.size() != beta.size())
    throw ValidationError("simulation config: beta2 has " + std::to_string(beta2.size()) + " entries, beta has " +
                          std::to_string(beta.size()));
  for (double b : beta)
    if (!std::isfinite(b)) throw ValidationError("simulation config: beta must be finite");
}

SimulationConfig simulation_config(const Config& c) {
  SimulationConfig cfg;
  cfg.link = LinkFunction::parse(c.string("link", "boxcox:1"));
  cfg.beta = c.has("beta") ? c.array("beta") : std::vector<double>{};
  if (auto b2 = c.optional_array("beta2")) cfg.beta2 = *b2;
  cfg.gamma1 = c.number("gamma1");
  cfg.gamma2 = c.number("gamma2");
  cfg.gamma4 = c.number("gamma4");
  cfg.gamma3_cap = c.number("gamma3_cap", cfg.link.family() == LinkFamily::BoxCox ? 0.3 : 0.5);
  cfg.censoring = c.boolean("censoring", true);
  cfg.censor_low = c.number("censor_low", 0.0);
  cfg.censor_high = c.number("censor_high", cfg.censoring ? 0.0 : 1.0);
  cfg.tau = c.number("tau");
  const double n = c.number("n", 0.0);
  if (!(n >= 0.0) || n != std::floor(n)) throw ValidationError("simulation config: n must be a nonnegative integer");
  cfg.n = static_cast<std::size_t>(n);
  const double seed = c.number("seed", 0.0);
  if (!(seed >= 0.0) || seed != std::floor(seed) || seed > 9007199254740992.0)
    throw ValidationError("simulation config: seed must be a nonnegative integer");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.zero_covariates = c.boolean("zero_covariates", false);
  cfg.validate();
  return cfg;
}

SimulationConfig load_simulation_config(const std::string& path) {
  return simulation_config(parse_config_file(path));
}

void write_simulation_config(std::ostream& out, const SimulationConfig& cfg) {
  auto vec = [](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t j = 0; j < v.size(); ++j) s += (j ? ", " : "") + format_double(v[j]);
    return s + "]";
  };
  out << "link = \"" << cfg.link.to_string() << "\"\n";
  out << "beta = " << vec(cfg.beta) << "\n";
  if (!cfg.beta2.empty()) out << "beta2 = " << vec(cfg.beta2) << "\n";
  out << "gamma1 = " << format_double(cfg.gamma1) << "\n";
  out << "gamma2 = " << format_double(cfg.gamma2) << "\n";
  out << "gamma4 = " << format_double(cfg.gamma4) << "\n";
  out << "gamma3_cap = " << format_double(cfg.gamma3_cap) << "\n";
  out << "censoring = " << (cfg.censoring ? "true" : "false") << "\n";
  out << "censor_low = " << format_double(cfg.censor_low) << "\n";
  out << "censor_high = " << format_double(cfg.censor_high) << "\n";
  out << "tau = " << format_double(cfg.tau) << "\n";
  out << "n = " << cfg.n << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "zero_covariates = " << (cfg.zero_covariates ? "true" : "false") << "\n";
}

namespace {

struct Preset {
  const char* name;
  LinkFunction link;
  double gamma1, gamma2, gamma4, cap, low, high;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"scenario_bc_05", LinkFunction::box_cox(0.5), 2.5, 0.4, 0.05, 0.3, 2.0, 20.0},
      {"scenario_bc_1", LinkFunction::box_cox(1.0), 1.8, 0.2, 0.1, 0.3, 2.0, 20.0},
      {"scenario_bc_2", LinkFunction::box_cox(2.0), 0.9, 0.4, 0.05, 0.3, 2.0, 20.0},
      {"scenario_log_05", LinkFunction::logarithmic(0.5), 2.9, 0.8, 0.033, 0.5, 2.0, 21.0},
      {"scenario_log_1", LinkFunction::logarithmic(1.0), 5.3, 1.8, 0.025, 0.5, 2.0, 20.5},
  };
  return table;
}

}  // namespace

SimulationConfig preset_config(const std::string& name) {
  for (const auto& p : presets()) {
    if (name != p.name) continue;
    SimulationConfig cfg;
    cfg.link = p.link;
    cfg.beta = {1.0, -0.5};
    cfg.gamma1 = p.gamma1;
    cfg.gamma2 = p.gamma2;
    cfg.gamma4 = p.gamma4;
    cfg.gamma3_cap = p.cap;
    cfg.censor_low = p.low;
    cfg.censor_high = p.high;
    cfg.tau = 5.0;
    cfg.n = 200;
    cfg.seed = 1;
    return cfg;
  }
  throw ValidationError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : presets()) out.emplace_back(p.name);
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(seed ^ index); }

double RandomStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

double gompertz_cum(double gk, double gl, double t) {
  if (!(t >= 0.0)) throw ValidationError("gompertz_cum: negative time " + format_double(t));
  if (std::isinf(t)) return gk;
  return -gk * std::expm1(-gl * t);
}

namespace {

double linear_predictor(const std::vector<double>& b, const Eigen::VectorXd& z) {
  if (static_cast<Eigen::Index>(b.size()) != z.size())
    throw ValidationError("covariate vector has " + std::to_string(z.size()) + " entries, coefficients have " +
                          std::to_string(b.size()));
  double lp = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) lp += b[j] * z[static_cast<Eigen::Index>(j)];
  return lp;
}

// F = 1 - exp(-x) and -log F for x = G(...) >= 0.
double cdf_from(double x) { return -std::expm1(-x); }

double neg_log_cdf(double x) {
  if (x > 1.0) return -std::log1p(-std::exp(-x));
  return -std::log(-std::expm1(-x));
}

// Subdistributions of one subject.
struct SubjectLaw {
  LinkFunction link;
  double scale1 = 0.0, scale2 = 0.0;  // e^{b'Z} gamma
  double gamma2 = 0.0, gamma4 = 0.0;

  // x_c(t) = G{e^{b'Z} L_c(t)}, so F_c(t) = 1 - exp(-x_c(t))
  double x1(double t) const { return link.eval(scale1 * gompertz_cum(1.0, gamma2, t)).g; }
  double x2(double t) const { return scale2 == 0.0 ? 0.0 : link.eval(scale2 * gompertz_cum(1.0, gamma4, t)).g; }
  double f1(double t) const { return cdf_from(x1(t)); }
  double f2(double t) const { return cdf_from(x2(t)); }
};


SubjectLaw make_law(const SimulationConfig& cfg, const Eigen::VectorXd& z, double gamma3) {
  SubjectLaw law;
  law.link = cfg.link;
  law.scale1 = std::exp(linear_predictor(cfg.beta, z)) * cfg.gamma1;
  law.scale2 = std::exp(linear_predictor(cfg.terminal_beta(), z)) * gamma3;
  law.gamma2 = cfg.gamma2;
  law.gamma4 = cfg.gamma4;
  return law;
}

double safe_gamma3(const SimulationConfig& cfg, const Eigen::VectorXd& z) {
  try {
    return gamma3_of(cfg, z);
  } catch (const NumericalError&) {
    // F1(inf|Z) rounds to 1: no room for terminal events
    return 0.0;
  }
}

}  // namespace

double gamma3_uncapped(const SimulationConfig& cfg, const Eigen::VectorXd& z) {
  const double x = cfg.link.eval(std::exp(linear_predictor(cfg.beta, z)) * cfg.gamma1).g;
  const double f1 = cdf_from(x);
  if (!(f1 > 0.0) || !(f1 < 1.0))
    throw NumericalError("gamma3: F1(inf|Z) = " + format_double(f1) + " is not inside (0, 1)");
  const double target = neg_log_cdf(x);
  if (!(target > 0.0)) throw NumericalError("gamma3: F1(inf|Z) rounds to 1");
  return cfg.link.inverse(target) * std::exp(-linear_predictor(cfg.terminal_beta(), z));
}

double gamma3_of(const SimulationConfig& cfg, const Eigen::VectorXd& z) {
  return std::min(gamma3_uncapped(cfg, z), cfg.gamma3_cap);
}

double subdist(const SimulationConfig& cfg, EventKind which, const Eigen::VectorXd& z, double t) {
  if (!(t >= 0.0)) throw ValidationError("subdist: negative time " + format_double(t));
  const double g3 = which == EventKind::Terminal ? safe_gamma3(cfg, z) : 0.0;
  const SubjectLaw law = make_law(cfg, z, g3);
  return which == EventKind::Recurrent ? law.f1(t) : law.f2(t);
}

SubjectRecord simulate_subject(const SimulationConfig& cfg, RandomStream& rng, const std::string& id) {
  const auto d = static_cast<Eigen::Index>(cfg.dim());
  Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
  if (!cfg.zero_covariates)
    for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
  double end = cfg.tau;
  if (cfg.censoring) end = std::min(rng.uniform(cfg.censor_low, cfg.censor_high), cfg.tau);

  const SubjectLaw law = make_law(cfg, z, safe_gamma3(cfg, z));

  SubjectRecord rec;
  rec.id = id;
  rec.covariate_path.push_back({0.0, std::vector<double>(z.data(), z.data() + d)});
  rec.censor_time = end;

  // Each step draws the type of the next event given none so far after t0:
  // recurrence with P(t0 < T, eps = 1)/P(T > t0), terminal with the eps = 2
  // analogue, and no further event with the remaining mass (nonzero only when
  // the gamma3 cap binds).
  const double inf = std::numeric_limits<double>::infinity();
  const double x1_inf = law.x1(inf);
  const double x2_inf = law.x2(inf);
  double t0 = 0.0;
  while (t0 < end) {
    const double x1_0 = law.x1(t0);
    const double x2_0 = law.x2(t0);
    // probabilities relative to exp(-x1(t0)), which may underflow on its own
    const double rest1 = -std::expm1(-(x1_inf - x1_0));
    const double f2_0 = x2_0 > 0.0 ? std::exp(std::log(-std::expm1(-x2_0)) + x1_0) : 0.0;
    const double rest2 = x2_inf > x2_0 ? std::exp(x1_0 - x2_0 + std::log(-std::expm1(-(x2_inf - x2_0)))) : 0.0;
    const double surv = 1.0 - f2_0;  // P(T > t0) exp(x1(t0))
    if (!(surv > 0.0))
      throw NumericalError("simulate_subject: event-free probability vanished at " + format_double(t0) +
                           " for subject " + id);
    const double p1 = std::clamp(rest1 / surv, 0.0, 1.0);
    const double p2 = std::clamp(rest2 / surv, 0.0, 1.0 - p1);
    const double u = rng.uniform();
    const bool recurrent = u < p1;
    const bool terminal = !recurrent && u < p1 + p2;
    const double x0 = recurrent ? x1_0 : x2_0;
    const double xmax = recurrent ? x1_inf : x2_inf;
    const double v = rng.uniform();
    if (!(recurrent || terminal) || !(xmax > x0)) break;
    // P(T <= t | t0 < T, eps) for the drawn type
    const double denom = -std::expm1(-(xmax - x0));
    auto cond = [&](double t) { return -std::expm1(-((recurrent ? law.x1(t) : law.x2(t)) - x0)) / denom; };
    if (cond(end) < v) break;
    double lo = t0, hi = end;
    int steps = 0;
    while (hi - lo > 1e-10) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (cond(mid) < v)
        lo = mid;
      else
        hi = mid;
      if (++steps > 200) throw NumericalError("simulate_subject: bisection did not converge");
    }
    const double t = hi;
    if (!recurrent) {
      rec.terminal_time = t;
      rec.censor_time = t;
      break;
    }
    if (t <= t0 || (!rec.recurrent_times.empty() && t <= rec.recurrent_times.back())) break;
    rec.recurrent_times.push_back(t);
    t0 = t;
  }
  return rec;
}

Dataset simulate_dataset(const SimulationConfig& cfg) {
  cfg.validate();
  std::vector<SubjectRecord> subjects;
  subjects.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    RandomStream rng(stream_seed(cfg.seed, i));
    subjects.push_back(simulate_subject(cfg, rng, std::to_string(i + 1)));
  }
  return Dataset(std::move(subjects), cfg.tau, cfg.dim());
}

}  // namespace recmm
