#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace recmm {

/// Covariate values that apply on [start, next start).
struct CovariateInterval {
  double start = 0.0;
  std::vector<double> values;

  bool operator==(const CovariateInterval&) const = default;
};

/// Follow-up of one subject: piecewise-constant external covariates, ordered
/// recurrent-event times, an optional terminal event and the end of follow-up.
///
/// For subjects with a terminal event the censoring time is not observed;
/// `censor_time` then holds the terminal time so that `follow_up_end()` is
/// uniform across subjects.
struct SubjectRecord {
  std::string id;
  std::vector<CovariateInterval> covariate_path;
  std::vector<double> recurrent_times;
  std::optional<double> terminal_time;
  double censor_time = 0.0;

  bool has_terminal() const { return terminal_time.has_value(); }
  double follow_up_end() const { return terminal_time ? *terminal_time : censor_time; }
  /// True when one value vector applies over the whole path.
  bool covariates_constant() const;

  bool operator==(const SubjectRecord&) const = default;
};

/// Value of the covariate interval containing t. Intervals are closed on the
/// left; the last interval extends to tau.
const std::vector<double>& covariate_at(const SubjectRecord& subject, double t, double tau);

/// Immutable collection of validated subjects plus the distinct recurrent-event grid.
class Dataset {
 public:
  Dataset() = default;
  /// Validates every subject against tau and the covariate dimension. Tied
  /// recurrences within a subject are pushed apart by one ulp and reported in
  /// warnings().
  Dataset(std::vector<SubjectRecord> subjects, double tau, std::size_t dim);

  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  const SubjectRecord& subject(std::size_t i) const { return subjects_[i]; }
  std::size_t size() const { return subjects_.size(); }
  bool empty() const { return subjects_.empty(); }
  double tau() const { return tau_; }
  std::size_t dim() const { return dim_; }

  /// Sorted distinct recurrent-event times across subjects.
  const std::vector<double>& recurrent_grid() const { return grid_; }
  /// Number of recurrences at each grid time.
  const std::vector<double>& grid_counts() const { return grid_counts_; }
  std::size_t grid_size() const { return grid_.size(); }
  /// Index of t in the grid, or npos when t is not a grid time.
  std::size_t grid_index(double t) const;
  std::size_t total_recurrences() const;

  const std::vector<std::string>& warnings() const { return warnings_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<SubjectRecord> subjects_;
  double tau_ = 0.0;
  std::size_t dim_ = 0;
  std::vector<double> grid_;
  std::vector<double> grid_counts_;
  std::vector<std::string> warnings_;
};

/// Reads the long counting-process CSV (`id,start,stop,status,z1,...,zd`).
/// Throws ValidationError naming the offending row.
Dataset parse_dataset(std::istream& source, double tau);
Dataset parse_dataset_file(const std::string& path, double tau);

/// Writes the canonical CSV form: one row per covariate-constant interval,
/// split at every event.
void write_dataset(std::ostream& out, const Dataset& ds);

struct DiagnosticsOptions {
  double covariate_bound = 100.0;
  double rank_tolerance = 1e-10;
};

struct DiagnosticsReport {
  std::size_t subjects = 0;
  std::size_t recurrences = 0;
  std::size_t terminal_events = 0;
  std::size_t censorings = 0;  // random censorings strictly before tau
  bool bounded = true;
  bool full_rank = true;
  std::vector<std::string> warnings;

  double terminal_fraction() const;
  double censoring_fraction() const;
};

DiagnosticsReport diagnostics(const Dataset& ds, const DiagnosticsOptions& opts = {});

}  // namespace recmm
