#include "recmm/cli.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "recmm/dataset.hpp"
#include "recmm/errors.hpp"
#include "recmm/estimator.hpp"
#include "recmm/format.hpp"
#include "recmm/marginal_mean.hpp"
#include "recmm/mc_harness.hpp"
#include "recmm/serialization.hpp"
#include "recmm/simulation.hpp"
#include "recmm/variance.hpp"

namespace recmm::cli {

namespace {

double to_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* b = text.data();
  const char* e = b + text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  if (b < e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e) throw ValidationError("cannot parse " + what + " '" + text + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// a, a+step, ..., up to b (inclusive within rounding)
std::vector<double> range(double a, double b, double step, const std::string& spec) {
  if (!(step > 0.0)) throw ValidationError("step must be positive in '" + spec + "'");
  if (b < a) throw ValidationError("range end below start in '" + spec + "'");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
  if (count > 10'000'000) throw ValidationError("range '" + spec + "' is too long");
  for (std::size_t i = 0; i <= count; ++i) {
    const double v = a + static_cast<double>(i) * step;
    out.push_back(std::round(v * 1e12) / 1e12);
  }
  return out;
}

// Output sink: a file, or the caller's stream for "-" / empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : path_(path) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw std::ios_base::failure("cannot open output file '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw std::ios_base::failure("failed writing '" + (path_.empty() ? "-" : path_) + "'");
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "NA" : format_double(v)); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<CovariateInterval> read_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open profile file '" + path + "'");
  std::string line;
  std::vector<CovariateInterval> out;
  std::size_t row = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (row == 1) {
      if (cells.empty() || cells[0] != "start")
        throw ValidationError("profile file: header must start with 'start'");
      width = cells.size();
      continue;
    }
    if (cells.size() != width)
      throw ValidationError("profile file row " + std::to_string(row) + ": expected " + std::to_string(width) +
                            " columns, got " + std::to_string(cells.size()));
    CovariateInterval c;
    c.start = to_number(cells[0], "profile start in row " + std::to_string(row));
    for (std::size_t j = 1; j < cells.size(); ++j)
      c.values.push_back(to_number(cells[j], "profile value in row " + std::to_string(row)));
    out.push_back(std::move(c));
  }
  if (out.empty()) throw ValidationError("profile file has no rows");
  return out;
}

struct FitArgs {
  std::string data, out = "-", link = "boxcox:1", var_times;
  double tau = 0.0, tol = 1e-8;
  int max_iter = 500;
  bool no_variance = false, ghosh_lin_check = false;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const Dataset ds = parse_dataset_file(a.data, a.tau);
  for (const auto& w : ds.warnings()) err << "warning: " << w << "\n";
  const LinkFunction link = LinkFunction::parse(a.link);
  std::vector<double> var_times;
  if (!a.var_times.empty()) var_times = parse_times(a.var_times);
  for (double t : var_times)
    if (!(t >= 0.0) || t > a.tau) throw ValidationError("--var-times entry " + format_double(t) + " outside [0, tau]");

  SolverOptions opts;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  const CensoringSurvival gc = km_censoring(ds);
  const WeightContext wc = ipc_weights(ds, gc);
  FitResult fit = fit_npmle(ds, wc, link, opts);
  fit.warnings.insert(fit.warnings.begin(), ds.warnings().begin(), ds.warnings().end());

  std::optional<VarianceResult> vr;
  std::vector<BaselineVariance> baseline;
  if (!a.no_variance && fit.converged) {
    vr = sandwich(fit, ds, wc, gc, link);
    for (double t : var_times)
      baseline.push_back({t, fit.cumulative_baseline(t), std::sqrt(std::max(0.0, baseline_variance(*vr, t, true))),
                          std::sqrt(std::max(0.0, baseline_variance(*vr, t, false)))});
  }
  nlohmann::json j = fit_to_json(fit, vr ? &*vr : nullptr, baseline);

  bool gl_failed = false;
  if (a.ghosh_lin_check) {
    if (!link.is_identity()) throw ValidationError("--ghosh-lin-check requires the identity link (boxcox:1)");
    const Eigen::VectorXd gl = ghosh_lin_fit(ds, wc);
    const double diff = (gl - fit.beta).cwiseAbs().maxCoeff();
    j["ghosh_lin"] = {{"beta", std::vector<double>(gl.data(), gl.data() + gl.size())}, {"max_abs_diff", diff}};
    if (!(diff < 1e-4)) {
      gl_failed = true;
      err << "error: Ghosh-Lin cross-check failed, max |difference| = " << format_double(diff) << "\n";
    }
  }

  Sink sink(a.out, out);
  *sink << j.dump(2) << "\n";
  sink.close();
  if (!fit.converged) {
    err << "error: solver did not converge (gradient norm " << format_double(fit.gradient_norm) << ")\n";
    return kConvergence;
  }
  return gl_failed ? kConvergence : kOk;
}

struct SimulateArgs {
  std::string config, preset, out = "-";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
};

SimulationConfig resolve_config(const std::string& config, const std::string& preset) {
  if (!config.empty() && !preset.empty()) throw ValidationError("give either --config or --preset, not both");
  if (!config.empty()) return load_simulation_config(config);
  if (!preset.empty()) return preset_config(preset);
  throw ValidationError("one of --config or --preset is required");
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  SimulationConfig cfg = resolve_config(a.config, a.preset);
  if (a.seed) cfg.seed = *a.seed;
  if (a.n) cfg.n = *a.n;
  const Dataset ds = simulate_dataset(cfg);
  Sink sink(a.out, out);
  write_dataset(*sink, ds);
  sink.close();
  return kOk;
}

struct PredictArgs {
  std::string fit, profile, times, out = "-";
  bool log_band = false;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const StoredFit stored = read_fit_file(a.fit);
  const auto profile = read_profile(a.profile);
  const std::vector<double> times = a.times.empty() ? stored.fit.jump_times : parse_times(a.times);
  PredictionOptions opts;
  opts.log_band = a.log_band;
  const PredictionCurve curve =
      predict_marginal_mean(stored.fit, stored.variance ? &*stored.variance : nullptr, profile, times, opts);
  Sink sink(a.out, out);
  *sink << "time,mean,se,lo,hi\n";
  for (std::size_t j = 0; j < curve.times.size(); ++j)
    *sink << fmt(curve.times[j]) << ',' << fmt(curve.mean[j]) << ',' << fmt(curve.se[j]) << ','
          << fmt(curve.ci_low[j]) << ',' << fmt(curve.ci_high[j]) << '\n';
  sink.close();
  return kOk;
}

struct SelectArgs {
  std::string data, grid, out = "-";
  double tau = 0.0;
  unsigned threads = 1;
};

int cmd_select(const SelectArgs& a, std::ostream& out, std::ostream& err) {
  const Dataset ds = parse_dataset_file(a.data, a.tau);
  const auto specs = parse_link_grid(a.grid);
  const CensoringSurvival gc = km_censoring(ds);
  const WeightContext wc = ipc_weights(ds, gc);

  struct Row {
    LinkFunction link;
    std::optional<FitResult> fit;
    std::optional<VarianceResult> vr;
    std::string error;
  };
  std::vector<Row> rows(specs.size());
  for (std::size_t r = 0; r < specs.size(); ++r) rows[r].link = LinkFunction::parse(specs[r]);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < rows.size(); r = next++) {
      try {
        rows[r].fit = fit_npmle(ds, wc, rows[r].link);
        if (rows[r].fit->converged)
          rows[r].vr = sandwich(*rows[r].fit, ds, wc, gc, rows[r].link);
        else
          rows[r].error = "not converged";
      } catch (const std::exception& e) {
        rows[r].error = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(a.threads, static_cast<unsigned>(rows.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].fit && rows[r].fit->converged && (!best || rows[r].fit->loglik > rows[*best].fit->loglik)) best = r;

  const std::size_t d = ds.dim();
  const double params = static_cast<double>(d + ds.grid_size());
  Sink sink(a.out, out);
  *sink << "link,family,param,loglik,aic,converged,best";
  for (std::size_t j = 1; j <= d; ++j) *sink << ",beta_" << j;
  for (std::size_t j = 1; j <= d; ++j) *sink << ",se_" << j;
  *sink << ",error\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    *sink << row.link.to_string() << ',' << (row.link.family() == LinkFamily::BoxCox ? "boxcox" : "log") << ','
          << fmt(row.link.param()) << ',';
    if (row.fit) {
      *sink << fmt(row.fit->loglik) << ',' << fmt(-2.0 * row.fit->loglik + 2.0 * params) << ','
            << (row.fit->converged ? "true" : "false");
    } else {
      *sink << "NA,NA,false";
    }
    *sink << ',' << (best && *best == r ? "true" : "false");
    for (std::size_t j = 0; j < d; ++j)
      *sink << ',' << (row.fit ? fmt(row.fit->beta[static_cast<Eigen::Index>(j)]) : "NA");
    for (std::size_t j = 0; j < d; ++j)
      *sink << ',' << (row.vr ? fmt(row.vr->beta_se[static_cast<Eigen::Index>(j)]) : "NA");
    *sink << ',' << csv_escape(row.error) << '\n';
    if (!row.error.empty()) err << "warning: " << row.link.to_string() << ": " << row.error << "\n";
  }
  sink.close();
  return kOk;
}

struct NpeArgs {
  std::string data, out = "-", weights_out;
  double tau = 0.0;
};

int cmd_npe(const NpeArgs& a, std::ostream& out) {
  const Dataset ds = parse_dataset_file(a.data, a.tau);
  const CensoringSurvival gc = km_censoring(ds);
  const Eigen::VectorXd risk = pseudo_risk_sizes(ds, gc);
  const StepFunction pseudo = nelson_aalen_pseudo(ds, gc);
  const StepFunction aj = aalen_johansen_marginal_mean(ds);
  Sink sink(a.out, out);
  *sink << "time,lambda_pseudo,lambda_aj\n";
  for (double t : pseudo.times) *sink << fmt(t) << ',' << fmt(pseudo(t)) << ',' << fmt(aj(t)) << '\n';
  sink.close();
  if (!a.weights_out.empty()) {
    Sink w(a.weights_out, out);
    *w << "time,gc,pseudo_risk\n";
    for (std::size_t m = 0; m < pseudo.times.size(); ++m)
      *w << fmt(pseudo.times[m]) << ',' << fmt(gc.left_limit(pseudo.times[m])) << ','
         << fmt(risk[static_cast<Eigen::Index>(m)]) << '\n';
    w.close();
  }
  return kOk;
}

struct McArgs {
  std::string config, preset, fit_link = "boxcox:1", out = "-";
  std::size_t n = 200, reps = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

int cmd_mc(const McArgs& a, std::ostream& out, std::ostream& err) {
  const SimulationConfig cfg = resolve_config(a.config, a.preset);
  McOptions opts;
  opts.n = a.n;
  opts.reps = a.reps;
  opts.seed = a.seed;
  opts.threads = a.threads;
  const McSummary s = run_mc_study(cfg, LinkFunction::parse(a.fit_link), opts);
  if (s.failures > 0) err << "warning: " << s.failures << " of " << s.reps << " replicates failed\n";
  Sink sink(a.out, out);
  *sink << "param,truth,mean_est,bias,bias_pct,sd,se_fisher,se_sandwich,cp_fisher,cp_sandwich,reps,failures\n";
  for (const auto& r : s.rows)
    *sink << r.name << ',' << fmt(r.truth) << ',' << fmt(r.mean_est) << ',' << fmt(r.bias) << ',' << fmt(r.bias_pct)
          << ',' << (r.sd ? fmt(*r.sd) : "NA") << ',' << fmt(r.se_fisher) << ',' << fmt(r.se_sandwich) << ','
          << fmt(r.cp_fisher) << ',' << fmt(r.cp_sandwich) << ',' << s.reps << ',' << s.failures << '\n';
  sink.close();
  return kOk;
}

}  // namespace

std::vector<double> parse_times(const std::string& spec) {
  if (spec.find(':') != std::string::npos) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) throw ValidationError("time range must be start:end:step, got '" + spec + "'");
    return range(to_number(parts[0], "time"), to_number(parts[1], "time"), to_number(parts[2], "time step"), spec);
  }
  std::vector<double> out;
  for (const auto& item : split(spec, ',')) out.push_back(to_number(item, "time"));
  if (out.empty()) throw ValidationError("empty time list");
  return out;
}

std::vector<std::string> parse_link_grid(const std::string& spec) {
  std::vector<std::string> out;
  for (const auto& item : split(spec, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() == 2) {
      out.push_back(LinkFunction::parse(item).to_string());
    } else if (parts.size() == 4) {
      for (double v : range(to_number(parts[1], "link parameter"), to_number(parts[2], "link parameter"),
                            to_number(parts[3], "link parameter step"), item))
        out.push_back(LinkFunction::parse(parts[0] + ":" + format_double(v)).to_string());
    } else {
      throw ValidationError("link grid entry must be family:value or family:start:end:step, got '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("link grid is empty");
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Marginal-mean transformation models for recurrent events with terminal events", "recmm"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit the weighted NPMLE and its sandwich variance");
  fit->add_option("--data", fa.data, "Counting-process CSV")->required();
  fit->add_option("--tau", fa.tau, "Study end")->required();
  fit->add_option("--link", fa.link, "boxcox:<rho> or log:<r>")->capture_default_str();
  fit->add_option("--tol", fa.tol, "Gradient max-norm tolerance")->capture_default_str();
  fit->add_option("--max-iter", fa.max_iter, "Iteration limit")->capture_default_str();
  fit->add_flag("--no-variance", fa.no_variance, "Skip the sandwich variance");
  fit->add_option("--var-times", fa.var_times, "Times for baseline variance (t1,t2,... or a:b:step)");
  fit->add_flag("--ghosh-lin-check", fa.ghosh_lin_check, "Compare with the Ghosh-Lin score root (identity link)");
  fit->add_option("--out", fa.out, "Output JSON");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset");
  sim->add_option("--config", sa.config, "Simulation config (TOML)");
  sim->add_option("--preset", sa.preset, "Built-in scenario preset");
  sim->add_option("--out", sa.out, "Output CSV");
  sim->add_option("--seed", sa.seed, "Override the config seed");
  sim->add_option("--n", sa.n, "Override the sample size");

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Predict the marginal mean for a covariate profile");
  pred->add_option("--fit", pa.fit, "Fit JSON")->required();
  pred->add_option("--profile", pa.profile, "Covariate profile CSV (start,z1,...)")->required();
  pred->add_option("--times", pa.times, "a:b:step or t1,t2,... (default: jump times)");
  pred->add_flag("--log-band", pa.log_band, "Wald band on the log scale");
  pred->add_option("--out", pa.out, "Output CSV");

  SelectArgs la;
  auto* sel = app.add_subcommand("select", "Fit a grid of links and compare log-likelihood and AIC");
  sel->add_option("--data", la.data, "Counting-process CSV")->required();
  sel->add_option("--tau", la.tau, "Study end")->required();
  sel->add_option("--grid", la.grid, "e.g. boxcox:0.25:1.5:0.25,log:1")->required();
  sel->add_option("--threads", la.threads, "Worker threads")->capture_default_str();
  sel->add_option("--out", la.out, "Output CSV");

  NpeArgs na;
  auto* npe = app.add_subcommand("npe", "Nonparametric marginal-mean estimates");
  npe->add_option("--data", na.data, "Counting-process CSV")->required();
  npe->add_option("--tau", na.tau, "Study end")->required();
  npe->add_option("--out", na.out, "Output CSV");
  npe->add_option("--weights-out", na.weights_out, "Censoring survival and pseudo risk sizes CSV");

  McArgs ma;
  auto* mc = app.add_subcommand("mc-study", "Monte Carlo study of bias, SD, SE and coverage");
  mc->add_option("--config", ma.config, "Simulation config (TOML)");
  mc->add_option("--preset", ma.preset, "Built-in scenario preset");
  mc->add_option("--fit-link", ma.fit_link, "Link used for fitting")->capture_default_str();
  mc->add_option("--n", ma.n, "Sample size per replicate")->capture_default_str();
  mc->add_option("--reps", ma.reps, "Replicates")->capture_default_str();
  mc->add_option("--seed", ma.seed, "Base seed")->capture_default_str();
  mc->add_option("--threads", ma.threads, "Worker threads")->capture_default_str();
  mc->add_option("--out", ma.out, "Output CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    if (*fit) return cmd_fit(fa, out, err);
    if (*sim) return cmd_simulate(sa, out);
    if (*pred) return cmd_predict(pa, out);
    if (*sel) return cmd_select(la, out, err);
    if (*npe) return cmd_npe(na, out);
    if (*mc) return cmd_mc(ma, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kConvergence;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kConvergence;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}

}  // namespace recmm::cli
