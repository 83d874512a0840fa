// SPDX-License-Identifier: Apache-2.0
#include "fedwing/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedwing/error.hpp"

namespace fedwing {
namespace {

const char* kModule = "data-io";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  out.push_back(cell);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
}

unsigned days_in_month(std::int64_t y, unsigned m) {
  static const unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return m == 2 && leap ? 29 : kDays[m - 1];
}

}  // namespace

std::int64_t parse_timestamp(const std::string& raw) {
  const std::string text = trim(raw);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const int fields =
      std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (fields < 6 || (sep != 'T' && sep != ' ')) {
    fail(kModule, "malformed timestamp '" + text + "'");
  }
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest[0] == ':') {
    int used = 0;
    if (std::sscanf(rest.c_str(), ":%2d%n", &s, &used) != 1) {
      fail(kModule, "malformed timestamp '" + text + "'");
    }
    rest = rest.substr(static_cast<std::size_t>(used));
  }
  if (!(rest.empty() || rest == "Z" || rest == "+00:00")) {
    fail(kModule, "unsupported timestamp suffix in '" + text + "' (UTC only)");
  }
  if (mo < 1 || mo > 12 || d < 1 || d > static_cast<int>(days_in_month(y, mo)) || h > 23 ||
      h < 0) {
    fail(kModule, "invalid date in timestamp '" + text + "'");
  }
  if (mi != 0 || s != 0) fail(kModule, "timestamp '" + text + "' is not on the hour");
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 24 + h;
}

std::string format_timestamp(std::int64_t hours) {
  std::int64_t days = hours >= 0 ? hours / 24 : (hours - 23) / 24;
  const auto hour = static_cast<int>(hours - days * 24);
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:00:00", static_cast<long long>(y), m, d,
                hour);
  return buf;
}

StationSeries impute(const RawSeries& raw, const ImputeOptions& options) {
  if (raw.features == 0) fail(kModule, "series has no variables");
  if (raw.values.size() != raw.rows() * raw.features) fail(kModule, "series value count mismatch");
  if (raw.rows() == 0) fail(kModule, "series has no rows");
  for (std::size_t r = 1; r < raw.rows(); ++r) {
    if (raw.hours[r] == raw.hours[r - 1]) {
      fail(kModule, "duplicate timestamp " + format_timestamp(raw.hours[r]));
    }
    if (raw.hours[r] < raw.hours[r - 1]) {
      fail(kModule, "non-monotone timestamps at " + format_timestamp(raw.hours[r]));
    }
  }
  const std::size_t n = raw.features;
  StationSeries out;
  out.features = n;
  const std::int64_t first = raw.hours.front();
  const auto rows = static_cast<std::size_t>(raw.hours.back() - first + 1);
  out.hours.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) out.hours[r] = first + static_cast<std::int64_t>(r);
  out.values.assign(rows * n, kMissing);
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    const auto dst = static_cast<std::size_t>(raw.hours[r] - first);
    std::copy_n(raw.values.begin() + static_cast<std::ptrdiff_t>(r * n), n,
                out.values.begin() + static_cast<std::ptrdiff_t>(dst * n));
  }
  for (std::size_t c = 0; c < n; ++c) {
    auto cell = [&](std::size_t r) -> double& { return out.values[r * n + c]; };
    bool any = false;
    for (std::size_t r = 0; r < rows && !any; ++r) any = !std::isnan(cell(r));
    if (!any) fail(kModule, "variable v" + std::to_string(c) + " is missing at every timestamp");
    std::size_t r = 0;
    while (r < rows) {
      if (!std::isnan(cell(r))) {
        ++r;
        continue;
      }
      const std::size_t begin = r;
      while (r < rows && std::isnan(cell(r))) ++r;
      const std::size_t len = r - begin;
      const bool flanked = begin > 0 && r < rows;
      if (flanked && len <= options.max_interpolated_gap) {
        const double lo = cell(begin - 1), hi = cell(r);
        for (std::size_t k = 0; k < len; ++k) {
          const double t = static_cast<double>(k + 1) / static_cast<double>(len + 1);
          cell(begin + k) = lo + (hi - lo) * t;
        }
      } else {
        for (std::size_t k = begin; k < r; ++k) cell(k) = 0.0;
      }
    }
  }
  return out;
}

RawSeries read_station_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(kModule, "cannot open station file " + path);
  std::string line;
  if (!std::getline(in, line)) fail(kModule, where(path, 1) + "missing header");
  const auto header = split_csv(line);
  if (header.size() < 2 || trim(header[0]) != "timestamp") {
    fail(kModule, where(path, 1) + "header must be timestamp,v0,...");
  }
  RawSeries raw;
  raw.features = header.size() - 1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      fail(kModule, where(path, lineno) + "expected " + std::to_string(header.size()) +
                        " cells, found " + std::to_string(cells.size()));
    }
    try {
      raw.hours.push_back(parse_timestamp(cells[0]));
    } catch (const Error& e) {
      fail(kModule, where(path, lineno) + e.what());
    }
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      if (trim(cells[c]).empty()) {
        v = kMissing;
      } else if (!parse_double(cells[c], v)) {
        fail(kModule, where(path, lineno) + "bad number '" + cells[c] + "'");
      }
      raw.values.push_back(v);
    }
    if (raw.rows() >= 2 && raw.hours[raw.rows() - 1] <= raw.hours[raw.rows() - 2]) {
      fail(kModule, where(path, lineno) +
                        (raw.hours[raw.rows() - 1] == raw.hours[raw.rows() - 2]
                             ? "duplicate timestamp"
                             : "non-monotone timestamp"));
    }
  }
  if (raw.rows() == 0) fail(kModule, path + ": no data rows");
  return raw;
}

void write_station_csv(const std::string& path, const StationSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(kModule, "cannot write " + path);
  out << "timestamp";
  for (std::size_t c = 0; c < series.features; ++c) out << ",v" << c;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < series.rows(); ++r) {
    out << format_timestamp(series.hours[r]);
    for (std::size_t c = 0; c < series.features; ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", series.at(r, c));
      out << buf;
    }
    out << '\n';
  }
  if (!out) fail(kModule, "write failed for " + path);
}

std::vector<StationSeries> load_manifest(const std::string& path, const ImputeOptions& options) {
  std::ifstream in(path);
  if (!in) fail(kModule, "cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<StationSeries> stations;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (lineno == 1 && !cells.empty() && trim(cells[0]) == "station_id") continue;
    if (cells.size() != 5) {
      fail(kModule, where(path, lineno) + "expected 5 fields, found " + std::to_string(cells.size()));
    }
    StationSeries s;
    const std::string id = trim(cells[0]);
    if (id.empty()) fail(kModule, where(path, lineno) + "empty station id");
    double lat = 0, lon = 0, target = 0;
    if (!parse_double(cells[1], lat) || !parse_double(cells[2], lon)) {
      fail(kModule, where(path, lineno) + "bad coordinates");
    }
    if (lat < -90 || lat > 90 || lon < -180 || lon > 180) {
      fail(kModule, where(path, lineno) + "coordinate out of range");
    }
    if (!parse_double(cells[3], target) || target < 0 || target != std::floor(target)) {
      fail(kModule, where(path, lineno) + "bad target variable index");
    }
    for (const auto& other : stations) {
      if (other.id == id) fail(kModule, where(path, lineno) + "duplicate station id " + id);
    }
    const std::filesystem::path file = base / trim(cells[4]);
    s = impute(read_station_csv(file.string()), options);
    s.id = id;
    s.geo = {lat, lon};
    s.target = static_cast<std::size_t>(target);
    if (s.target >= s.features) {
      fail(kModule, where(path, lineno) + "target index " + std::to_string(s.target) +
                        " exceeds variable count " + std::to_string(s.features));
    }
    if (!stations.empty() && stations.front().features != s.features) {
      fail(kModule, where(path, lineno) + "station variable count differs from the first station");
    }
    stations.push_back(std::move(s));
  }
  if (stations.empty()) fail(kModule, path + ": manifest lists no stations");
  return stations;
}

void write_manifest(const std::string& path, const std::vector<StationSeries>& stations,
                    const std::vector<std::string>& relative_paths) {
  if (stations.size() != relative_paths.size()) fail(kModule, "manifest path count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(kModule, "cannot write " + path);
  out << "station_id,lat,lon,target_var_index,relative_path\n";
  char buf[64];
  for (std::size_t i = 0; i < stations.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,", stations[i].geo.latitude,
                  stations[i].geo.longitude);
    out << stations[i].id << buf << stations[i].target << ',' << relative_paths[i] << '\n';
  }
  if (!out) fail(kModule, "write failed for " + path);
}

void SplitSpec::validate() const {
  if (!(pretrain_train_fraction > 0 && pretrain_train_fraction < pretrain_end_fraction &&
        pretrain_end_fraction < 1)) {
    fail(kModule, "split fractions must satisfy 0 < pretrain-train < pretrain-end < 1");
  }
  if (!(finetune_train > 0 && finetune_validation >= 0 && finetune_test > 0)) {
    fail(kModule, "fine-tune split ratios must be positive");
  }
}

SplitBoundaries SplitSpec::boundaries(std::size_t rows) const {
  validate();
  auto at = [rows](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(rows))); };
  SplitBoundaries b;
  b.pretrain_train = {0, at(pretrain_train_fraction)};
  b.pretrain_validation = {b.pretrain_train.end, at(pretrain_end_fraction)};
  const std::size_t start = b.pretrain_validation.end;
  const double region = static_cast<double>(rows - start);
  const double total = finetune_train + finetune_validation + finetune_test;
  const auto train_end = start + static_cast<std::size_t>(std::floor(region * finetune_train / total));
  const auto val_end = start + static_cast<std::size_t>(std::floor(
                                   region * (finetune_train + finetune_validation) / total));
  b.train = {start, train_end};
  b.validation = {train_end, val_end};
  b.test = {val_end, rows};
  return b;
}

NormalizationStats fit_normalization(const StationSeries& series, SplitRange fit) {
  if (fit.size() == 0 || fit.end > series.rows()) fail(kModule, "empty normalization range");
  const std::size_t n = series.features;
  NormalizationStats stats{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  const auto count = static_cast<double>(fit.size());
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0;
    for (std::size_t r = fit.begin; r < fit.end; ++r) mean += series.at(r, c);
    mean /= count;
    double var = 0;
    for (std::size_t r = fit.begin; r < fit.end; ++r) {
      const double d = series.at(r, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / count);
    stats.mean[c] = mean;
    stats.scale[c] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  }
  return stats;
}

std::vector<double> normalize(const StationSeries& series, const NormalizationStats& stats) {
  const std::size_t n = series.features;
  if (stats.mean.size() != n) fail(kModule, "normalization stats do not match variable count");
  std::vector<double> out(series.values.size());
  for (std::size_t r = 0; r < series.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = (series.at(r, c) - stats.mean[c]) / stats.scale[c];
    }
  }
  return out;
}

std::vector<double> denormalize(std::span<const double> values, std::size_t features,
                                const NormalizationStats& stats) {
  if (features == 0 || values.size() % features != 0 || stats.mean.size() != features) {
    fail(kModule, "denormalize shape mismatch");
  }
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = i % features;
    out[i] = values[i] * stats.scale[c] + stats.mean[c];
  }
  return out;
}

ForecastWindows::ForecastWindows(std::shared_ptr<const std::vector<double>> series,
                                 std::size_t features, SplitRange range, std::size_t history,
                                 std::size_t horizon, std::size_t target)
    : series_(std::move(series)),
      features_(features),
      history_(history),
      horizon_(horizon),
      target_(target) {
  if (!series_ || features == 0 || series_->size() % features != 0) {
    fail(kModule, "forecast windows need a [rows x features] series");
  }
  if (history == 0 || horizon == 0) fail(kModule, "history and horizon must be positive");
  if (target >= features) fail(kModule, "target variable out of range");
  if (range.end > series_->size() / features) fail(kModule, "split range exceeds series length");
  const std::size_t span = history + horizon;
  for (std::size_t s = range.begin; s + span <= range.end; ++s) starts_.push_back(s);
}

std::size_t ForecastWindows::output_width(Task task) const {
  return horizon_ * (task == Task::kUnivariate ? 1 : features_);
}

Tensor ForecastWindows::inputs(std::span<const std::size_t> indices) const {
  std::vector<double> v;
  v.reserve(indices.size() * history_ * features_);
  for (std::size_t i : indices) {
    const auto begin = series_->begin() + static_cast<std::ptrdiff_t>(starts_.at(i) * features_);
    v.insert(v.end(), begin, begin + static_cast<std::ptrdiff_t>(history_ * features_));
  }
  return Tensor::from({indices.size(), history_, features_}, std::move(v));
}

Tensor ForecastWindows::targets(std::span<const std::size_t> indices, Task task) const {
  const std::size_t width = output_width(task);
  std::vector<double> v;
  v.reserve(indices.size() * width);
  for (std::size_t i : indices) {
    const std::size_t first = starts_.at(i) + history_;
    for (std::size_t t = 0; t < horizon_; ++t) {
      const double* row = series_->data() + (first + t) * features_;
      if (task == Task::kUnivariate) {
        v.push_back(row[target_]);
      } else {
        v.insert(v.end(), row, row + features_);
      }
    }
  }
  return Tensor::from({indices.size(), width}, std::move(v));
}

Tensor ForecastWindows::input(std::size_t index) const {
  const auto begin = series_->begin() + static_cast<std::ptrdiff_t>(starts_.at(index) * features_);
  return Tensor::from({history_, features_},
                      std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(history_ * features_)));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) fail(kModule, "pearson needs equal series of length >= 2");
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace fedwing
