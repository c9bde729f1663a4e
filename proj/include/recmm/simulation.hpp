#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "recmm/config.hpp"
#include "recmm/dataset.hpp"
#include "recmm/link.hpp"

namespace recmm {

struct SimulationConfig {
  LinkFunction link = LinkFunction::identity();
  std::vector<double> beta;
  std::vector<double> beta2;  // terminal-event coefficients; empty means beta
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double gamma4 = 1.0;
  double gamma3_cap = 0.3;
  double censor_low = 0.0;
  double censor_high = 1.0;
  double tau = 1.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool censoring = true;        // false: follow-up ends at tau
  bool zero_covariates = false; // true: Z = 0 for everyone

  std::size_t dim() const { return beta.size(); }
  const std::vector<double>& terminal_beta() const { return beta2.empty() ? beta : beta2; }
  void validate() const;
};

SimulationConfig simulation_config(const Config& cfg);
SimulationConfig load_simulation_config(const std::string& path);
void write_simulation_config(std::ostream& out, const SimulationConfig& cfg);

/// Built-in scenario presets: scenario_bc_05, scenario_bc_1, scenario_bc_2,
/// scenario_log_05, scenario_log_1.
SimulationConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Per-subject random stream: 64-bit Mersenne Twister seeded through splitmix64.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  /// Standard normal by Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Seed of stream `index` derived from a base seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

double gompertz_cum(double gk, double gl, double t);

enum class EventKind { Recurrent, Terminal };

/// Subdistribution F_c(t|Z) = 1 - exp[-G{e^{b'Z} L_c(t)}]; t = infinity gives the limit.
double subdist(const SimulationConfig& cfg, EventKind which, const Eigen::VectorXd& z, double t);

/// min(cap, e^{-beta2'Z} G^{-1}(-log F1(inf|Z))). Throws NumericalError when
/// F1(inf|Z) is not inside (0, 1) in floating point.
double gamma3_of(const SimulationConfig& cfg, const Eigen::VectorXd& z);
/// The same without the cap.
double gamma3_uncapped(const SimulationConfig& cfg, const Eigen::VectorXd& z);

SubjectRecord simulate_subject(const SimulationConfig& cfg, RandomStream& rng, const std::string& id);
Dataset simulate_dataset(const SimulationConfig& cfg);

}  // namespace recmm
