#include "recmm/dataset.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "recmm/errors.hpp"
#include "recmm/format.hpp"

namespace recmm {

bool SubjectRecord::covariates_constant() const {
  for (std::size_t j = 1; j < covariate_path.size(); ++j)
    if (covariate_path[j].values != covariate_path[0].values) return false;
  return true;
}

const std::vector<double>& covariate_at(const SubjectRecord& subject, double t, double tau) {
  if (!(t >= 0.0 && t <= tau))
    throw ValidationError("covariate_at: time " + format_double(t) + " outside [0, tau] for subject " +
                          subject.id);
  const auto& path = subject.covariate_path;
  if (path.empty()) throw ValidationError("covariate_at: empty covariate path for subject " + subject.id);
  auto it = std::upper_bound(path.begin(), path.end(), t,
                             [](double v, const CovariateInterval& iv) { return v < iv.start; });
  if (it == path.begin()) return path.front().values;
  return std::prev(it)->values;
}

namespace {

void validate_subject(SubjectRecord& s, double tau, std::size_t dim, std::vector<std::string>& warnings) {
  const std::string who = "subject " + s.id + ": ";
  if (s.covariate_path.empty()) throw ValidationError(who + "empty covariate path");
  if (s.covariate_path.front().start != 0.0) throw ValidationError(who + "covariate path must start at time 0");
  for (std::size_t j = 0; j < s.covariate_path.size(); ++j) {
    const auto& iv = s.covariate_path[j];
    if (iv.values.size() != dim)
      throw ValidationError(who + "covariate dimension " + std::to_string(iv.values.size()) + ", expected " +
                            std::to_string(dim));
    for (double v : iv.values)
      if (!std::isfinite(v)) throw ValidationError(who + "non-finite covariate value");
    if (j > 0 && !(iv.start > s.covariate_path[j - 1].start))
      throw ValidationError(who + "covariate interval starts must be strictly increasing");
  }
  if (!std::isfinite(s.censor_time) || s.censor_time < 0.0)
    throw ValidationError(who + "invalid censoring time");
  if (s.censor_time > tau) throw ValidationError(who + "censoring time exceeds tau");
  if (s.terminal_time) {
    const double d = *s.terminal_time;
    if (!std::isfinite(d) || d <= 0.0) throw ValidationError(who + "invalid terminal time");
    if (d > s.censor_time) throw ValidationError(who + "terminal time after censoring time");
  }

  auto& rt = s.recurrent_times;
  for (std::size_t j = 0; j < rt.size(); ++j) {
    if (!std::isfinite(rt[j]) || rt[j] <= 0.0) throw ValidationError(who + "recurrence times must be positive");
    if (j == 0) continue;
    if (rt[j] < rt[j - 1]) throw ValidationError(who + "recurrence times are not ordered");
    if (rt[j] == rt[j - 1]) {
      rt[j] = std::nextafter(rt[j - 1], INFINITY);
      warnings.push_back(who + "tied recurrences at " + format_double(rt[j - 1]) + " separated by one ulp");
    }
  }
  if (!rt.empty()) {
    if (s.terminal_time && rt.back() >= *s.terminal_time)
      throw ValidationError(who + "recurrence after terminal event");
    if (rt.back() > s.censor_time) throw ValidationError(who + "recurrence after end of follow-up");
  }
}

}  // namespace

Dataset::Dataset(std::vector<SubjectRecord> subjects, double tau, std::size_t dim)
    : subjects_(std::move(subjects)), tau_(tau), dim_(dim) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("tau must be positive and finite");
  for (auto& s : subjects_) validate_subject(s, tau_, dim_, warnings_);

  std::vector<double> all;
  for (const auto& s : subjects_) all.insert(all.end(), s.recurrent_times.begin(), s.recurrent_times.end());
  std::sort(all.begin(), all.end());
  for (double t : all) {
    if (grid_.empty() || grid_.back() != t) {
      grid_.push_back(t);
      grid_counts_.push_back(1.0);
    } else {
      grid_counts_.back() += 1.0;
    }
  }
}

std::size_t Dataset::grid_index(double t) const {
  auto it = std::lower_bound(grid_.begin(), grid_.end(), t);
  if (it == grid_.end() || *it != t) return npos;
  return static_cast<std::size_t>(it - grid_.begin());
}

std::size_t Dataset::total_recurrences() const {
  std::size_t total = 0;
  for (const auto& s : subjects_) total += s.recurrent_times.size();
  return total;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(',', pos);
    auto field = line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    out.push_back(field);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t row, const char* what) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ValidationError("row " + std::to_string(row) + ": non-numeric " + what + " '" + std::string(field) + "'");
  return value;
}

struct Row {
  std::size_t line;
  double start;
  double stop;
  int status;
  std::vector<double> z;
};

SubjectRecord build_subject(const std::string& id, const std::vector<Row>& rows) {
  SubjectRecord s;
  s.id = id;
  bool terminated = false;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const Row& r = rows[j];
    const std::string where = "row " + std::to_string(r.line) + " (subject " + id + "): ";
    if (terminated) {
      if (r.status == 1) throw ValidationError(where + "recurrence after terminal event");
      if (r.status == 2) throw ValidationError(where + "duplicate terminal events");
      throw ValidationError(where + "follow-up continues after terminal event");
    }
    if (j == 0) {
      if (r.start != 0.0) throw ValidationError(where + "first interval must start at time 0");
    } else {
      const Row& prev = rows[j - 1];
      if (r.start < prev.stop) throw ValidationError(where + "overlapping covariate intervals");
      if (r.start > prev.stop) throw ValidationError(where + "gapped covariate intervals");
    }
    // A zero-length row encodes a recurrence tied with the previous one.
    const bool tie_row = r.start == r.stop && r.status == 1 && j > 0 && rows[j - 1].status == 1;
    if (!(r.stop > r.start) && !tie_row) throw ValidationError(where + "interval stop must exceed start");

    if (!tie_row) {
      if (s.covariate_path.empty() || s.covariate_path.back().values != r.z)
        s.covariate_path.push_back({r.start, r.z});
    }
    if (r.status == 1) s.recurrent_times.push_back(r.stop);
    if (r.status == 2) {
      s.terminal_time = r.stop;
      terminated = true;
    }
  }
  s.censor_time = rows.back().stop;
  return s;
}

}  // namespace

Dataset parse_dataset(std::istream& source, double tau) {
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    if (line.empty()) continue;
    for (auto f : split_fields(line)) header.emplace_back(f);
    break;
  }
  if (header.size() < 4 || header[0] != "id" || header[1] != "start" || header[2] != "stop" ||
      header[3] != "status")
    throw ValidationError("row 1: header must begin with id,start,stop,status");
  const std::size_t dim = header.size() - 4;

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ValidationError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " columns, found " + std::to_string(fields.size()));
    Row r;
    r.line = line_no;
    std::string id(fields[0]);
    if (id.empty()) throw ValidationError("row " + std::to_string(line_no) + ": empty id");
    r.start = parse_number(fields[1], line_no, "start");
    r.stop = parse_number(fields[2], line_no, "stop");
    const double status = parse_number(fields[3], line_no, "status");
    if (status != 0.0 && status != 1.0 && status != 2.0)
      throw ValidationError("row " + std::to_string(line_no) + ": status must be 0, 1 or 2");
    r.status = static_cast<int>(status);
    if (r.stop > tau)
      throw ValidationError("row " + std::to_string(line_no) + ": stop time " + std::string(fields[2]) +
                            " exceeds tau");
    r.z.reserve(dim);
    for (std::size_t c = 0; c < dim; ++c) r.z.push_back(parse_number(fields[4 + c], line_no, "covariate"));
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(std::move(r));
  }

  std::vector<SubjectRecord> subjects;
  subjects.reserve(order.size());
  for (const auto& id : order) subjects.push_back(build_subject(id, rows[id]));
  return Dataset(std::move(subjects), tau, dim);
}

Dataset parse_dataset_file(const std::string& path, double tau) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open data file '" + path + "'");
  return parse_dataset(in, tau);
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  out << "id,start,stop,status";
  for (std::size_t c = 0; c < ds.dim(); ++c) out << ",z" << (c + 1);
  out << '\n';
  for (const auto& s : ds.subjects()) {
    const double end = s.follow_up_end();
    std::vector<double> cuts;
    for (std::size_t j = 1; j < s.covariate_path.size(); ++j)
      if (s.covariate_path[j].start < end) cuts.push_back(s.covariate_path[j].start);
    cuts.insert(cuts.end(), s.recurrent_times.begin(), s.recurrent_times.end());
    cuts.push_back(end);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    double start = 0.0;
    for (double stop : cuts) {
      if (stop <= start && !(stop == 0.0 && start == 0.0)) continue;
      int status = 0;
      if (std::binary_search(s.recurrent_times.begin(), s.recurrent_times.end(), stop)) status = 1;
      if (s.terminal_time && stop == *s.terminal_time) status = 2;
      out << s.id << ',' << format_double(start) << ',' << format_double(stop) << ',' << status;
      for (double z : covariate_at(s, start, ds.tau())) out << ',' << format_double(z);
      out << '\n';
      start = stop;
    }
  }
}

// ---------------------------------------------------------------------------
// Diagnostics

double DiagnosticsReport::terminal_fraction() const {
  return subjects == 0 ? 0.0 : static_cast<double>(terminal_events) / static_cast<double>(subjects);
}

double DiagnosticsReport::censoring_fraction() const {
  return subjects == 0 ? 0.0 : static_cast<double>(censorings) / static_cast<double>(subjects);
}

DiagnosticsReport diagnostics(const Dataset& ds, const DiagnosticsOptions& opts) {
  DiagnosticsReport report;
  report.subjects = ds.size();
  report.warnings = ds.warnings();
  double max_abs = 0.0;
  for (const auto& s : ds.subjects()) {
    report.recurrences += s.recurrent_times.size();
    if (s.has_terminal())
      ++report.terminal_events;
    else if (s.censor_time < ds.tau())
      ++report.censorings;
    for (const auto& iv : s.covariate_path)
      for (double v : iv.values) max_abs = std::max(max_abs, std::abs(v));
  }
  if (max_abs > opts.covariate_bound) {
    report.bounded = false;
    report.warnings.push_back("covariate magnitude " + format_double(max_abs) + " exceeds bound " +
                              format_double(opts.covariate_bound));
  }

  const std::size_t d = ds.dim();
  if (d == 0 || ds.empty()) return report;

  // Stack [1, Z_i(t)] over the recurrent grid within each subject's follow-up;
  // the leading column stands in for the baseline.
  std::vector<double> rows;
  std::size_t count = 0;
  const auto& grid = ds.recurrent_grid();
  for (const auto& s : ds.subjects()) {
    bool any = false;
    for (double t : grid) {
      if (t > s.follow_up_end()) break;
      const auto& z = covariate_at(s, t, ds.tau());
      rows.push_back(1.0);
      rows.insert(rows.end(), z.begin(), z.end());
      ++count;
      any = true;
    }
    if (!any) {
      const auto& z = covariate_at(s, 0.0, ds.tau());
      rows.push_back(1.0);
      rows.insert(rows.end(), z.begin(), z.end());
      ++count;
    }
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
      rows.data(), static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d + 1));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(opts.rank_tolerance);
  if (qr.rank() < static_cast<Eigen::Index>(d + 1)) {
    report.full_rank = false;
    report.warnings.push_back("stacked covariate matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                              " of " + std::to_string(d + 1) + " including baseline); multicollinear covariates");
  }
  return report;
}

}  // namespace recmm
