// SPDX-License-Identifier: Apache-2.0
//
// Station series ingestion (manifest + per-station CSV), gap imputation,
// chronological splits, z-score normalization, forecasting windows and the
// synthetic spatially correlated generator.
#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedwing/prompts.hpp"
#include "fedwing/tensor.hpp"

namespace fedwing {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Series before imputation: hourly rows, NaN marks a missing cell.
struct RawSeries {
  std::vector<std::int64_t> hours;  // hours since 1970-01-01T00:00Z
  std::vector<double> values;       // rows x features, row-major
  std::size_t features = 0;
  std::size_t rows() const { return hours.size(); }
};

struct StationSeries {
  std::string id;
  GeoEncoding geo;
  std::vector<std::int64_t> hours;
  std::vector<double> values;  // rows x features, gap-free
  std::size_t features = 0;
  std::size_t target = 0;  // variable forecast in the univariate task
  std::size_t rows() const { return hours.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * features + col]; }
};

struct ImputeOptions {
  /// Gaps up to this many consecutive hours are linearly interpolated;
  /// longer gaps and gaps touching either end are zero filled.
  std::size_t max_interpolated_gap = 2;
};

/// Inserts rows for absent hours, then fills every missing cell per variable.
StationSeries impute(const RawSeries& raw, const ImputeOptions& options = {});

/// hours since epoch <-> "YYYY-MM-DDTHH:00:00"
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t hours);

/// Reads one station CSV: header "timestamp,v0,...", empty cell = missing.
RawSeries read_station_csv(const std::string& path);
void write_station_csv(const std::string& path, const StationSeries& series);

/// Manifest rows: station_id,lat,lon,target_var_index,relative_path (paths
/// relative to the manifest's directory). A header row is optional.
std::vector<StationSeries> load_manifest(const std::string& path, const ImputeOptions& options = {});
void write_manifest(const std::string& path, const std::vector<StationSeries>& stations,
                    const std::vector<std::string>& relative_paths);

struct SplitRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct SplitBoundaries {
  SplitRange pretrain_train;
  SplitRange pretrain_validation;
  SplitRange train;
  SplitRange validation;
  SplitRange test;
};

/// First 40% pre-training train, 40-50% pre-training validation; the last 50%
/// is split 6:2:2 into fine-tuning train / validation / test.
struct SplitSpec {
  double pretrain_train_fraction = 0.4;
  double pretrain_end_fraction = 0.5;
  double finetune_train = 6.0;
  double finetune_validation = 2.0;
  double finetune_test = 2.0;
  SplitBoundaries boundaries(std::size_t rows) const;
  void validate() const;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 for zero-variance variables
};

/// Per-variable z-score with statistics taken from `fit` rows only.
NormalizationStats fit_normalization(const StationSeries& series, SplitRange fit);
std::vector<double> normalize(const StationSeries& series, const NormalizationStats& stats);
std::vector<double> denormalize(std::span<const double> values, std::size_t features,
                                const NormalizationStats& stats);

enum class Task { kUnivariate, kMultivariate };

/// Sliding history/horizon windows (stride 1) whose rows all lie in one split.
class ForecastWindows {
 public:
  ForecastWindows() = default;
  ForecastWindows(std::shared_ptr<const std::vector<double>> series, std::size_t features,
                  SplitRange range, std::size_t history, std::size_t horizon, std::size_t target);

  std::size_t size() const { return starts_.size(); }
  bool empty() const { return starts_.empty(); }
  std::size_t features() const { return features_; }
  std::size_t history() const { return history_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t target() const { return target_; }
  std::size_t output_width(Task task) const;
  std::size_t start(std::size_t i) const { return starts_[i]; }

  /// [batch x history x features]
  Tensor inputs(std::span<const std::size_t> indices) const;
  /// [batch x horizon*k], k = 1 (univariate target) or features.
  Tensor targets(std::span<const std::size_t> indices, Task task) const;
  /// One history window as [history x features].
  Tensor input(std::size_t index) const;

 private:
  std::shared_ptr<const std::vector<double>> series_;
  std::size_t features_ = 0, history_ = 0, horizon_ = 0, target_ = 0;
  std::vector<std::size_t> starts_;
};

struct SynthConfig {
  std::size_t stations = 12;
  std::size_t hours = 2000;
  std::size_t variables = 4;
  std::uint64_t seed = 7;
  double lat_min = 30.0, lat_max = 42.0;
  double lon_min = -110.0, lon_max = -90.0;
  double noise = 0.15;
  void validate() const;
};

/// Shared regional cycles (24 h plus multi-day periods) whose phase and
/// amplitude drift smoothly with location, a spatially smooth slow anomaly
/// field, per-station offsets and Gaussian noise.
std::vector<StationSeries> synth_generate(const SynthConfig& config);

/// Writes station CSVs plus manifest.csv under `directory`; returns the
/// manifest path.
std::string write_dataset(const std::string& directory, const std::vector<StationSeries>& stations);

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace fedwing
