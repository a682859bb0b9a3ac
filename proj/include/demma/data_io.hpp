#pragma once

// CSV ingestion and export, chronological splitting with train-only
// standardization, sliding windows, and the synthetic dataset generator.
//
// CSV dialect: comma separated, header row required, '.' decimal point,
// optional double quotes around a field (no embedded quotes or newlines).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "demma/autodiff.hpp"
#include "demma/error.hpp"
#include "demma/mixture.hpp"
#include "demma/random.hpp"

namespace demma {

struct SeriesDataset {
  std::string time_name;                 // empty when there is no time column
  std::vector<std::string> timestamps;   // empty or one per row
  std::string target_name = "y";
  std::vector<double> target;            // y >= 0
  std::vector<std::string> predictor_names;
  Tensor predictors;                     // rows x n

  std::size_t rows() const { return target.size(); }
  std::size_t predictor_count() const { return predictors.cols(); }

  void validate() const {
    if (predictors.rows() != target.size()) {
      throw IngestionError("predictor rows " + std::to_string(predictors.rows()) + " != target rows " +
                           std::to_string(target.size()));
    }
    if (!timestamps.empty() && timestamps.size() != target.size()) {
      throw IngestionError("timestamp count differs from row count");
    }
    if (predictor_names.size() != predictors.cols()) throw IngestionError("predictor name count differs from columns");
  }
};

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestionError("column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  }
  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    out.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

inline CsvTable read_csv_table(std::istream& is) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (!have_header) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      t.header = detail::split_csv_line(line);
      have_header = true;
      continue;
    }
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != t.header.size()) {
      std::ostringstream os;
      os << "line " << line_no << ": expected " << t.header.size() << " fields, found " << cells.size();
      throw IngestionError(os.str());
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw IngestionError("empty CSV input (no header row)");
  if (t.rows.empty()) throw IngestionError("CSV input has a header but no data rows");
  return t;
}

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot open '" + path + "'");
  return read_csv_table(is);
}

/// Numeric cell; `row` is the 1-based data row (the header is not counted).
inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << "row " << row << ", column '" << column << "': " << why;
    throw IngestionError(os.str());
  };
  if (cell.empty()) fail("missing value");
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) fail("cannot parse '" + cell + "' as a number");
  if (!std::isfinite(v)) fail("non-finite value '" + cell + "'");
  return v;
}

struct CsvColumns {
  std::string target = "y";
  std::vector<std::string> predictors;  // empty: every column except target and time
  std::string time = "date";            // used only if present in the header
};

inline SeriesDataset dataset_from_table(const CsvTable& t, const CsvColumns& cols) {
  SeriesDataset ds;
  const std::size_t ti = t.column(cols.target);
  ds.target_name = cols.target;
  std::ptrdiff_t time_index = -1;
  if (!cols.time.empty() && t.has_column(cols.time) && cols.time != cols.target) {
    time_index = static_cast<std::ptrdiff_t>(t.column(cols.time));
    ds.time_name = cols.time;
  }
  std::vector<std::size_t> pi;
  if (cols.predictors.empty()) {
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (c != ti && static_cast<std::ptrdiff_t>(c) != time_index) pi.push_back(c);
    }
  } else {
    for (const std::string& name : cols.predictors) pi.push_back(t.column(name));
  }
  for (std::size_t c : pi) ds.predictor_names.push_back(t.header[c]);
  ds.predictors = Tensor(t.rows.size(), pi.size());
  ds.target.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double y = parse_cell(t.rows[r][ti], r + 1, t.header[ti]);
    if (y < 0.0) {
      throw IngestionError("row " + std::to_string(r + 1) + ", column '" + t.header[ti] + "': negative target");
    }
    ds.target.push_back(y);
    for (std::size_t j = 0; j < pi.size(); ++j) ds.predictors(r, j) = parse_cell(t.rows[r][pi[j]], r + 1, t.header[pi[j]]);
    if (time_index >= 0) ds.timestamps.push_back(t.rows[r][static_cast<std::size_t>(time_index)]);
  }
  return ds;
}

inline SeriesDataset load_csv(std::istream& is, const CsvColumns& cols) { return dataset_from_table(read_csv_table(is), cols); }

inline SeriesDataset load_csv(const std::string& path, const CsvColumns& cols) {
  return dataset_from_table(read_csv_table(path), cols);
}

/// Single numeric column (for the scan / mixture commands).
inline std::vector<double> load_column(const std::string& path, const std::string& column) {
  const CsvTable t = read_csv_table(path);
  const std::size_t c = t.column(column);
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) out.push_back(parse_cell(t.rows[r][c], r + 1, column));
  return out;
}

inline void write_csv(std::ostream& os, const SeriesDataset& ds) {
  ds.validate();
  const bool with_time = !ds.timestamps.empty();
  if (with_time) os << (ds.time_name.empty() ? "date" : ds.time_name) << ',';
  os << ds.target_name;
  for (const std::string& n : ds.predictor_names) os << ',' << n;
  os << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (with_time) os << ds.timestamps[r] << ',';
    os << ds.target[r];
    for (std::size_t j = 0; j < ds.predictor_count(); ++j) os << ',' << ds.predictors(r, j);
    os << '\n';
  }
}

inline void write_csv(const std::string& path, const SeriesDataset& ds) {
  std::ofstream os(path);
  if (!os) throw IngestionError("cannot write '" + path + "'");
  write_csv(os, ds);
}

// ---------------------------------------------------------------------------
// Splits, standardization, windows

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t size() const { return mean.size(); }
  double apply(double x, std::size_t j) const { return (x - mean[j]) / stddev[j]; }
  bool operator==(const Standardization&) const = default;
};

/// Per-column mean and population standard deviation over the given rows.
/// Zero-variance columns get stddev 1 and a warning.
inline Standardization fit_standardization(const Tensor& x, std::span<const std::size_t> rows,
                                           std::vector<std::string>* warnings = nullptr,
                                           const std::vector<std::string>* names = nullptr) {
  if (rows.empty()) throw ConfigError("standardization needs at least one row");
  Standardization s;
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t r : rows) mean += x(r, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t r : rows) var += (x(r, j) - mean) * (x(r, j) - mean);
    var /= n;
    double sd = std::sqrt(var);
    if (!(sd > 0.0)) {
      sd = 1.0;
      if (warnings) {
        const std::string name = names && j < names->size() ? (*names)[j] : std::to_string(j);
        warnings->push_back("predictor '" + name + "' has zero variance in the training part; using stddev 1");
      }
    }
    s.mean.push_back(mean);
    s.stddev.push_back(sd);
  }
  return s;
}

struct WindowedDataset {
  std::size_t window = 0;               // T
  std::size_t predictors = 0;           // n
  Standardization stats;
  std::vector<Tensor> inputs;           // each n x T, standardized
  std::vector<double> targets;          // raw y at the row after the window
  std::vector<std::size_t> target_rows; // source row index of each target

  std::size_t size() const { return targets.size(); }
  bool empty() const { return targets.empty(); }
};

/// Contiguous run of source rows [begin, end).
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct SplitConfig {
  double train = 0.7;
  double validation = 0.2;
  double test = 0.1;
  std::size_t window = 7;
  // Rotation of the chronological order: the train part starts at this row
  // and the parts wrap around the end of the series. 0 = plain split.
  std::size_t offset = 0;

  void validate() const {
    if (!(train >= 0.0 && validation >= 0.0 && test >= 0.0)) throw ConfigError("split ratios must be >= 0");
    if (std::fabs(train + validation + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    if (window == 0) throw ConfigError("window length must be >= 1");
  }
};

struct DataSplit {
  WindowedDataset train, validation, test;
  std::vector<RowRange> train_rows, validation_rows, test_rows;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<RowRange> rotated_ranges(std::size_t start, std::size_t count, std::size_t total) {
  std::vector<RowRange> out;
  if (count == 0) return out;
  const std::size_t s = start % total;
  if (s + count <= total) {
    out.push_back({s, s + count});
  } else {
    out.push_back({s, total});
    out.push_back({0, count - (total - s)});
  }
  return out;
}

inline void append_windows(const SeriesDataset& ds, const Standardization& st, std::span<const RowRange> ranges,
                           WindowedDataset& out) {
  const std::size_t T = out.window;
  const std::size_t n = ds.predictor_count();
  for (const RowRange& r : ranges) {
    if (r.size() <= T) continue;
    for (std::size_t i = r.begin; i + T < r.end; ++i) {
      Tensor x(n, T);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < n; ++j) x(j, t) = st.apply(ds.predictors(i + t, j), j);
      out.inputs.push_back(std::move(x));
      out.targets.push_back(ds.target[i + T]);
      out.target_rows.push_back(i + T);
    }
  }
}

}  // namespace detail

struct SplitRanges {
  std::vector<RowRange> train, validation, test;
};

/// Row ranges of the three parts for a series of `total` rows.
inline SplitRanges split_ranges(std::size_t total, const SplitConfig& cfg) {
  cfg.validate();
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train * static_cast<double>(total)));
  const auto n_val = std::min(total - n_train,
                              static_cast<std::size_t>(std::llround(cfg.validation * static_cast<double>(total))));
  const std::size_t n_test = total - n_train - n_val;
  return {detail::rotated_ranges(cfg.offset, n_train, total),
          detail::rotated_ranges(cfg.offset + n_train, n_val, total),
          detail::rotated_ranges(cfg.offset + n_train + n_val, n_test, total)};
}

/// Windows whose rows all fall inside one of the given ranges.
inline WindowedDataset make_windows(const SeriesDataset& ds, const Standardization& st, std::size_t window,
                                    std::span<const RowRange> ranges) {
  ds.validate();
  if (st.size() != ds.predictor_count()) {
    throw ShapeError("standardization has " + std::to_string(st.size()) + " features, data has " +
                     std::to_string(ds.predictor_count()));
  }
  WindowedDataset w;
  w.window = window;
  w.predictors = ds.predictor_count();
  w.stats = st;
  detail::append_windows(ds, st, ranges, w);
  return w;
}

/// Windows of a whole dataset under given statistics (e.g. for prediction).
inline WindowedDataset make_windows(const SeriesDataset& ds, const Standardization& st, std::size_t window) {
  const RowRange all{0, ds.rows()};
  return make_windows(ds, st, window, std::span<const RowRange>(&all, 1));
}

/// Chronological 3-way split; statistics from the training predictors only.
/// Windows never cross a part boundary (or the wrap point of a rotated split).
inline DataSplit split_and_standardize(const SeriesDataset& ds, const SplitConfig& cfg = {}) {
  cfg.validate();
  ds.validate();
  const std::size_t total = ds.rows();
  if (total == 0) throw ConfigError("dataset has no rows");
  SplitRanges ranges = split_ranges(total, cfg);

  DataSplit out;
  out.train_rows = std::move(ranges.train);
  out.validation_rows = std::move(ranges.validation);
  out.test_rows = std::move(ranges.test);

  std::vector<std::size_t> train_index;
  for (const RowRange& r : out.train_rows)
    for (std::size_t i = r.begin; i < r.end; ++i) train_index.push_back(i);
  if (train_index.empty()) throw ConfigError("training part is empty");
  const Standardization st = fit_standardization(ds.predictors, train_index, &out.warnings, &ds.predictor_names);

  auto build = [&](const std::vector<RowRange>& ranges, const char* name) {
    WindowedDataset w;
    w.window = cfg.window;
    w.predictors = ds.predictor_count();
    w.stats = st;
    detail::append_windows(ds, st, ranges, w);
    if (w.empty()) {
      std::size_t rows = 0;
      for (const RowRange& r : ranges) rows += r.size();
      throw ConfigError(std::string(name) + " part has " + std::to_string(rows) + " rows, too few for a window of " +
                        std::to_string(cfg.window));
    }
    return w;
  };
  out.train = build(out.train_rows, "training");
  out.validation = build(out.validation_rows, "validation");
  out.test = build(out.test_rows, "test");
  return out;
}

/// Per-step batch tensors (T entries of B x n) for the given window indices.
inline std::vector<Tensor> batch_steps(const WindowedDataset& w, std::span<const std::size_t> idx) {
  std::vector<Tensor> steps(w.window, Tensor(idx.size(), w.predictors));
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor& x = w.inputs[idx[b]];
    for (std::size_t t = 0; t < w.window; ++t)
      for (std::size_t j = 0; j < w.predictors; ++j) steps[t](b, j) = x(j, t);
  }
  return steps;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace detail {

// Proleptic Gregorian date for a day count since 1970-01-01.
inline std::string iso_date(std::int64_t days) {
  days += 719468;
  const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
  const auto doe = static_cast<unsigned>(days - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
  return buf;
}

}  // namespace detail

/// Targets are i.i.d. mixture draws (the first n_rows of sample_mixture(θ,
/// n_rows + 1, seed)); predictor j (1-based) at row t is y_{t+1} plus
/// Gaussian noise with sd noise_scale * (1 + j / n_predictors).
inline SeriesDataset generate_synthetic(const MixtureParams& theta, std::size_t n_rows, std::size_t n_predictors,
                                        double noise_scale, std::uint64_t seed) {
  theta.validate();
  if (n_predictors == 0) throw ConfigError("synthetic data needs at least one predictor");
  if (!(noise_scale >= 0.0)) throw ConfigError("noise scale must be >= 0");
  const std::vector<double> y = sample_mixture(theta, n_rows + 1, seed);
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  SeriesDataset ds;
  ds.time_name = "date";
  ds.target_name = "y";
  ds.target.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n_rows));
  ds.predictors = Tensor(n_rows, n_predictors);
  for (std::size_t j = 1; j <= n_predictors; ++j) ds.predictor_names.push_back("x" + std::to_string(j));
  const std::int64_t day0 = 10957;  // 2000-01-01
  for (std::size_t t = 0; t < n_rows; ++t) {
    ds.timestamps.push_back(detail::iso_date(day0 + static_cast<std::int64_t>(t)));
    for (std::size_t j = 1; j <= n_predictors; ++j) {
      const double sd = noise_scale * (1.0 + static_cast<double>(j) / static_cast<double>(n_predictors));
      ds.predictors(t, j - 1) = y[t + 1] + sd * standard_normal(rng);
    }
  }
  return ds;
}

}  // namespace demma
