// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "fedwing/data_io.hpp"
#include "fedwing/error.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {
namespace {

const char* kModule = "data-io";
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kWaves = 5;
constexpr double kSlowPeriods[] = {24.0 * 3.7, 24.0 * 9.3};
constexpr std::int64_t kStartHour = 473352;  // 2024-01-01T00:00Z

struct Wave {
  double kx, ky, omega, phase;
};

}  // namespace

void SynthConfig::validate() const {
  if (stations == 0) fail(kModule, "synthetic dataset needs at least one station");
  if (hours < 2) fail(kModule, "synthetic dataset needs at least two hours");
  if (variables == 0) fail(kModule, "synthetic dataset needs at least one variable");
  if (!(lat_min < lat_max && lon_min < lon_max) || lat_min < -90 || lat_max > 90 ||
      lon_min < -180 || lon_max > 180) {
    fail(kModule, "synthetic region is invalid");
  }
  if (noise < 0) fail(kModule, "noise level must be non-negative");
}

std::vector<StationSeries> synth_generate(const SynthConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0x5917));
  const std::size_t n = config.variables;

  // Jittered grid placement.
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(config.stations))));
  const std::size_t rows = (config.stations + cols - 1) / cols;
  std::vector<std::pair<double, double>> unit(config.stations);  // (y, x) in [0, 1]
  for (std::size_t i = 0; i < config.stations; ++i) {
    const double gy = (static_cast<double>(i / cols) + 0.5 + 0.6 * (rng.uniform() - 0.5)) /
                      static_cast<double>(rows);
    const double gx = (static_cast<double>(i % cols) + 0.5 + 0.6 * (rng.uniform() - 0.5)) /
                      static_cast<double>(cols);
    unit[i] = {gy, gx};
  }

  std::vector<Wave> waves(kWaves);
  for (auto& w : waves) {
    const double angle = kTwoPi * rng.uniform();
    const double k = std::numbers::pi * (0.6 + 0.8 * rng.uniform());
    w = {k * std::cos(angle), k * std::sin(angle), kTwoPi / (48.0 + 192.0 * rng.uniform()),
         kTwoPi * rng.uniform()};
  }
  std::vector<double> mix(n * kWaves), base(n), spread(n), diurnal(n), diurnal_phase(n);
  std::vector<double> slow_amp(n * 2), slow_phase(n * 2);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < kWaves; ++k) mix[v * kWaves + k] = rng.normal() / std::sqrt(double(kWaves));
    base[v] = 10.0 * rng.normal();
    spread[v] = 1.0 + 4.0 * rng.uniform();
    diurnal[v] = 0.5 + rng.uniform();
    diurnal_phase[v] = kTwoPi * rng.uniform();
    for (std::size_t p = 0; p < 2; ++p) {
      slow_amp[v * 2 + p] = 0.3 + 0.5 * rng.uniform();
      slow_phase[v * 2 + p] = kTwoPi * rng.uniform();
    }
  }

  std::vector<StationSeries> out(config.stations);
  for (std::size_t i = 0; i < config.stations; ++i) {
    Rng local(derive_seed(config.seed, 0x5917, i + 1));
    const auto [uy, ux] = unit[i];
    StationSeries& s = out[i];
    char id[32];
    std::snprintf(id, sizeof id, "S%02zu", i);
    s.id = id;
    s.geo = {config.lat_min + uy * (config.lat_max - config.lat_min),
             config.lon_min + ux * (config.lon_max - config.lon_min)};
    s.features = n;
    s.target = 0;
    s.hours.resize(config.hours);
    s.values.resize(config.hours * n);
    std::vector<double> offset(n), ar(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) offset[v] = 0.5 * local.normal();
    const double lat_gain = 1.0 + 0.6 * (uy - 0.5);
    for (std::size_t t = 0; t < config.hours; ++t) {
      s.hours[t] = kStartHour + static_cast<std::int64_t>(t);
      const double tt = static_cast<double>(t);
      double field[kWaves];
      for (std::size_t k = 0; k < kWaves; ++k) {
        const Wave& w = waves[k];
        field[k] = std::cos(w.kx * ux + w.ky * uy - w.omega * tt + w.phase);
      }
      for (std::size_t v = 0; v < n; ++v) {
        double x = diurnal[v] * lat_gain *
                   std::sin(kTwoPi * tt / 24.0 + diurnal_phase[v] + 0.5 * std::numbers::pi * ux);
        for (std::size_t p = 0; p < 2; ++p) {
          x += slow_amp[v * 2 + p] *
               std::sin(kTwoPi * tt / kSlowPeriods[p] + slow_phase[v * 2 + p] +
                        std::numbers::pi * (0.7 * uy + 0.5 * ux));
        }
        for (std::size_t k = 0; k < kWaves; ++k) x += mix[v * kWaves + k] * field[k];
        ar[v] = 0.9 * ar[v] + 0.3 * std::sqrt(1.0 - 0.81) * local.normal();
        x += offset[v] + ar[v] + config.noise * local.normal();
        s.values[t * n + v] = base[v] + spread[v] * x;
      }
    }
  }
  return out;
}

std::string write_dataset(const std::string& directory, const std::vector<StationSeries>& stations) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) fail(kModule, "cannot create output directory " + directory + ": " + ec.message());
  std::vector<std::string> paths;
  for (const auto& s : stations) {
    const std::string rel = s.id + ".csv";
    write_station_csv((std::filesystem::path(directory) / rel).string(), s);
    paths.push_back(rel);
  }
  const std::string manifest = (std::filesystem::path(directory) / "manifest.csv").string();
  write_manifest(manifest, stations, paths);
  return manifest;
}

}  // namespace fedwing
