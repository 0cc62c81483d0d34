#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ftaed/csv.hpp"
#include "ftaed/errors.hpp"
#include "ftaed/sensor_data.hpp"

namespace ftaed {

// Desk-scale freeway scenario: free flow outside a rush window, a congested
// region growing upstream from the downstream boundary during it, stop-and-go
// wave bands inside the region. Rush bounds are day-local step indices.
struct SynthConfig {
  int n_milemarkers = 49;
  int n_lanes = 4;
  int n_days = 6;
  int steps_per_day = 960;
  double free_speed = 65.0;       // mph
  double congested_speed = 18.0;  // mph
  int rush_start_step = 210;      // ~5:45 when the day window opens at 4:00
  int rush_end_step = 600;
  double wave_speed = -12.0;      // mph, negative = against travel
  double noise_std = 1.0;         // mph
  std::uint64_t seed = 1;
  double milemarker_start = 54.0;  // highest (most upstream) milemarker
  double milemarker_spacing = 0.5;
};

// A crash with its queue growing upstream from the epicenter for `duration`,
// then dissipating over the same span. The log records it only at
// true_time + report_delay; true_time stays available as ground truth.
struct InjectedIncident {
  std::int64_t true_time = 0;  // unix seconds
  double epicenter_milemarker = 0.0;
  int epicenter_lane = 1;
  double severity = 0.5;  // fraction of speed removed at the apex
  int duration_seconds = 600;
  double backprop_speed = -12.0;  // mph, negative
  int report_delay_seconds = 0;
};

struct Scenario {
  SensorGrid grid;
  IncidentLog log;
  std::vector<InjectedIncident> truth;
};

inline void validate_synth_config(const SynthConfig& c) {
  if (c.n_milemarkers < 1 || c.n_lanes < 1 || c.n_days < 1)
    fail(ErrorKind::OutOfRangeValue, "grid dimensions must be positive");
  if (c.steps_per_day < 1)
    fail(ErrorKind::OutOfRangeValue, "steps_per_day must be >= 1");
  if (!(c.free_speed > c.congested_speed && c.congested_speed > 0.0))
    fail(ErrorKind::OutOfRangeValue, "need free_speed > congested_speed > 0");
  if (!(c.wave_speed < 0.0))
    fail(ErrorKind::OutOfRangeValue, "wave_speed must be negative");
  if (c.noise_std < 0.0)
    fail(ErrorKind::OutOfRangeValue, "noise_std must be non-negative");
  if (!(c.milemarker_spacing > 0.0))
    fail(ErrorKind::OutOfRangeValue, "milemarker_spacing must be positive");
}

namespace detail {

inline constexpr std::int64_t kSynthBaseDay = 19631;  // 2023-10-01
inline constexpr double kBandWavelengthMiles = 1.5;
inline constexpr double kBandAmplitude = 0.35;  // of the free-congested gap
inline constexpr double kFrontBlendMiles = 1.0;
inline constexpr double kVolumeScale = 15.0;  // vehicles per 30 s at peak flow
inline constexpr double kLaneAttenuation = 0.6;

inline double occupancy_of_speed(double v, double free_speed) {
  return std::clamp(100.0 * (1.0 - v / free_speed), 0.0, 100.0);
}

// Unimodal flow curve: low at jam and at empty-road speeds, peaked between.
inline double volume_of_speed(double v, double free_speed) {
  double u = std::clamp(v / free_speed, 0.0, 1.0);
  return kVolumeScale * 4.0 * u * (1.0 - u);
}

// Noise-free speed at a cell. d_miles is distance upstream of the downstream
// boundary, step is day-local.
inline double nominal_speed(const SynthConfig& c, double d_miles, int step) {
  if (step < c.rush_start_step || step >= c.rush_end_step) return c.free_speed;
  const double hours_in = (step - c.rush_start_step) * 30.0 / 3600.0;
  const double hours_left = (c.rush_end_step - step) * 30.0 / 3600.0;
  const double extent = -c.wave_speed * std::min(hours_in, hours_left);
  const double t_h = step * 30.0 / 3600.0;
  // band crests drift upstream at the wave speed
  const double phase = 2.0 * 3.14159265358979323846 *
                       (d_miles + c.wave_speed * t_h) / kBandWavelengthMiles;
  const double band = c.congested_speed +
                      kBandAmplitude * (c.free_speed - c.congested_speed) *
                          (0.5 + 0.5 * std::sin(phase));
  if (d_miles <= extent) return band;
  if (d_miles <= extent + kFrontBlendMiles) {
    double a = (d_miles - extent) / kFrontBlendMiles;
    return band * (1.0 - a) + c.free_speed * a;
  }
  return c.free_speed;
}

}  // namespace detail

inline Scenario generate_nominal(const SynthConfig& config) {
  validate_synth_config(config);
  Scenario sc;
  SensorGrid& g = sc.grid;
  g.n_lanes = config.n_lanes;
  g.steps_per_day = config.steps_per_day;
  g.window.start_hour = 4.0;
  g.window.end_hour = 4.0 + config.steps_per_day / 120.0;
  g.window.utc_offset_hours = 0;
  g.milemarkers.resize(config.n_milemarkers);
  for (int i = 0; i < config.n_milemarkers; ++i)
    g.milemarkers[i] = config.milemarker_start - i * config.milemarker_spacing;
  g.day_numbers.resize(config.n_days);
  for (int d = 0; d < config.n_days; ++d)
    g.day_numbers[d] = detail::kSynthBaseDay + d;
  const int n_times = config.n_days * config.steps_per_day;
  g.times.resize(n_times);
  const std::int64_t window_offset =
      static_cast<std::int64_t>(std::llround(g.window.start_hour * 3600.0));
  for (int d = 0; d < config.n_days; ++d)
    for (int s = 0; s < config.steps_per_day; ++s)
      g.times[d * config.steps_per_day + s] =
          g.day_numbers[d] * 86400 + window_offset + 30 * s;
  g.values.assign(static_cast<std::size_t>(n_times) * g.n_nodes() *
                      kNumFeatures,
                  0.0f);
  g.missing.assign(g.values.size(), 0);

  const double mm_min = g.milemarkers.back();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int t = 0; t < n_times; ++t) {
    const int step = t % config.steps_per_day;
    for (int node = 0; node < g.n_nodes(); ++node) {
      const double d_miles = g.milemarkers[g.mm_index_of(node)] - mm_min;
      const double v = detail::nominal_speed(config, d_miles, step);
      double speed = v + config.noise_std * noise(rng);
      double occ = detail::occupancy_of_speed(v, config.free_speed) +
                   config.noise_std * noise(rng);
      double vol = detail::volume_of_speed(v, config.free_speed) +
                   config.noise_std * noise(rng);
      g.set_value(t, node, Feature::Speed,
                  static_cast<float>(std::clamp(speed, 0.0, 120.0)));
      g.set_value(t, node, Feature::Occupancy,
                  static_cast<float>(std::clamp(occ, 0.0, 100.0)));
      g.set_value(t, node, Feature::Volume,
                  static_cast<float>(std::max(vol, 0.0)));
    }
  }
  return sc;
}

// Stamps each incident's triangle onto the grid: speed scaled by
// 1 - severity*decay, occupancy/volume shifted by the derived-map delta so
// cells outside every triangle stay bitwise identical to the input.
inline Scenario inject_incidents(const SensorGrid& grid,
                                 const SynthConfig& config,
                                 const std::vector<InjectedIncident>& incidents) {
  Scenario sc;
  sc.grid = grid;
  SensorGrid& g = sc.grid;
  for (const auto& inc : incidents) {
    // severity 0 is a degenerate no-op that still produces a report
    if (!(inc.severity >= 0.0 && inc.severity <= 1.0))
      fail(ErrorKind::OutOfRangeValue, "severity must be in [0, 1]");
    if (inc.report_delay_seconds < 0)
      fail(ErrorKind::OutOfRangeValue, "report_delay must be >= 0");
    if (inc.duration_seconds <= 0)
      fail(ErrorKind::OutOfRangeValue, "duration must be positive");
    if (!(inc.backprop_speed < 0.0))
      fail(ErrorKind::OutOfRangeValue, "backprop_speed must be negative");
    if (inc.true_time < g.times.front() || inc.true_time > g.times.back())
      fail(ErrorKind::OutOfBounds, "incident time outside the grid");
    if (inc.epicenter_lane < 1 || inc.epicenter_lane > g.n_lanes)
      fail(ErrorKind::OutOfBounds, "incident lane outside the grid");
    if (inc.epicenter_milemarker < g.milemarkers.back() ||
        inc.epicenter_milemarker > g.milemarkers.front())
      fail(ErrorKind::OutOfBounds, "incident milemarker outside the grid");

    const int total = 2 * inc.duration_seconds;  // growth then recovery
    for (int t = 0; t < g.n_times(); ++t) {
      const std::int64_t rel = g.times[t] - inc.true_time;
      if (rel < 0 || rel > total) continue;
      const double frac_t = static_cast<double>(rel) / total;
      const int growth = std::min<std::int64_t>(rel, total - rel);
      const double extent = -inc.backprop_speed * growth / 3600.0;
      for (int node = 0; node < g.n_nodes(); ++node) {
        const double d =
            g.milemarkers[g.mm_index_of(node)] - inc.epicenter_milemarker;
        if (d < 0.0 || d > extent) continue;
        const double frac_x = extent > 0.0 ? d / extent : 0.0;
        const double lane_factor = std::pow(
            detail::kLaneAttenuation,
            std::abs(g.lane_of(node) - inc.epicenter_lane));
        const double decay = (1.0 - frac_x) * (1.0 - frac_t) * lane_factor;
        const double mult = 1.0 - inc.severity * decay;
        if (mult >= 1.0) continue;
        if (g.is_missing(t, node, Feature::Speed)) continue;
        const double s_old = g.value(t, node, Feature::Speed);
        const double s_new = s_old * mult;
        g.set_value(t, node, Feature::Speed, static_cast<float>(s_new));
        if (!g.is_missing(t, node, Feature::Occupancy)) {
          double occ = g.value(t, node, Feature::Occupancy) +
                       100.0 * (s_old - s_new) / config.free_speed;
          g.set_value(t, node, Feature::Occupancy,
                      static_cast<float>(std::clamp(occ, 0.0, 100.0)));
        }
        if (!g.is_missing(t, node, Feature::Volume)) {
          double vol = g.value(t, node, Feature::Volume) +
                       detail::volume_of_speed(s_new, config.free_speed) -
                       detail::volume_of_speed(s_old, config.free_speed);
          g.set_value(t, node, Feature::Volume,
                      static_cast<float>(std::max(vol, 0.0)));
        }
      }
    }

    IncidentRecord rec;
    rec.report_time_unix = inc.true_time + inc.report_delay_seconds;
    rec.milemarker = inc.epicenter_milemarker;
    rec.kind = IncidentKind::Crash;
    sc.log.records.push_back(rec);
    sc.truth.push_back(inc);
  }
  std::sort(sc.log.records.begin(), sc.log.records.end(),
            [](const IncidentRecord& a, const IncidentRecord& b) {
              return a.report_time_unix < b.report_time_unix;
            });
  return sc;
}

inline constexpr const char* kGroundTruthCsvHeader =
    "true_time_unix,milemarker,lane,severity,duration_seconds,"
    "backprop_speed,report_delay_seconds";

inline void write_ground_truth_csv(const std::string& path,
                                   const std::vector<InjectedIncident>& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << kGroundTruthCsvHeader << '\n';
  for (const auto& inc : truth)
    out << inc.true_time << ',' << detail::format_double(inc.epicenter_milemarker)
        << ',' << inc.epicenter_lane << ','
        << detail::format_double(inc.severity) << ',' << inc.duration_seconds
        << ',' << detail::format_double(inc.backprop_speed) << ','
        << inc.report_delay_seconds << '\n';
}

inline std::vector<InjectedIncident> read_ground_truth_csv(
    const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line) || line != kGroundTruthCsvHeader)
    fail(ErrorKind::MissingHeader, path);
  std::vector<InjectedIncident> out;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != 7)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()));
    InjectedIncident inc;
    auto tt = csv::parse_int_field(fields[0]);
    auto mm = csv::parse_double_field(fields[1]);
    auto lane = csv::parse_int_field(fields[2]);
    auto sev = csv::parse_double_field(fields[3]);
    auto dur = csv::parse_int_field(fields[4]);
    auto bp = csv::parse_double_field(fields[5]);
    auto delay = csv::parse_int_field(fields[6]);
    if (!tt || !mm || !lane || !sev || !dur || !bp || !delay)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()) +
               ": all fields required");
    inc.true_time = *tt;
    inc.epicenter_milemarker = *mm;
    inc.epicenter_lane = static_cast<int>(*lane);
    inc.severity = *sev;
    inc.duration_seconds = static_cast<int>(*dur);
    inc.backprop_speed = *bp;
    inc.report_delay_seconds = static_cast<int>(*delay);
    out.push_back(inc);
  }
  return out;
}

}  // namespace ftaed
