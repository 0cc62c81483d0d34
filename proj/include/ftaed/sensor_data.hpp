#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ftaed/csv.hpp"
#include "ftaed/errors.hpp"
#include "ftaed/time_util.hpp"

namespace ftaed {

constexpr int kNumFeatures = 3;

enum class Feature : int { Speed = 0, Occupancy = 1, Volume = 2 };

// One 30-second radar measurement at a (milemarker, lane) location.
// Any of the three channels may be absent.
struct SensorReading {
  std::int64_t time_unix = 0;
  double milemarker = 0.0;
  int lane = 0;  // 1..4, lane 1 is the leftmost (HOV) lane
  std::optional<double> speed;      // mph, [0, 120]
  std::optional<double> volume;     // vehicles per 30 s, >= 0
  std::optional<double> occupancy;  // percent, [0, 100]
};

enum class IncidentKind { Crash, Manual };

struct IncidentRecord {
  std::int64_t report_time_unix = 0;
  std::optional<double> milemarker;
  IncidentKind kind = IncidentKind::Crash;
};

// Reported events, sorted by report time.
struct IncidentLog {
  std::vector<IncidentRecord> records;
};

// The daily measurement window, in hours of local time. An explicit UTC
// offset keeps "local" independent of the host timezone.
struct DayWindow {
  double start_hour = 4.0;
  double end_hour = 12.0;
  int utc_offset_hours = 0;

  int steps_per_day() const {
    double steps = (end_hour - start_hour) * 120.0;
    return static_cast<int>(std::lround(steps));
  }
};

// Dense time x node x feature array over one or more day windows.
//
// Node order is canonical: milemarker descending (the direction of travel),
// lane ascending, so node_id(mm_index, lane) = mm_index * n_lanes + lane - 1.
// Times are day-major; consecutive ticks differ by exactly 30 s within a day.
struct SensorGrid {
  std::vector<std::int64_t> times;
  std::vector<double> milemarkers;  // descending
  int n_lanes = 0;
  int steps_per_day = 0;
  std::vector<std::int64_t> day_numbers;  // civil day number per day block
  DayWindow window;

  std::vector<float> values;         // [n_times][n_nodes][kNumFeatures]
  std::vector<std::uint8_t> missing; // same shape, 1 = missing

  int n_times() const { return static_cast<int>(times.size()); }
  int n_milemarkers() const { return static_cast<int>(milemarkers.size()); }
  int n_nodes() const { return n_milemarkers() * n_lanes; }
  int n_days() const { return static_cast<int>(day_numbers.size()); }

  int node_id(int mm_index, int lane) const {
    return mm_index * n_lanes + (lane - 1);
  }
  int mm_index_of(int node) const { return node / n_lanes; }
  int lane_of(int node) const { return node % n_lanes + 1; }
  int day_of_time(int t) const { return t / steps_per_day; }
  int tick_of_time(int t) const { return t % steps_per_day; }

  std::size_t cell(int t, int node, int feature) const {
    return (static_cast<std::size_t>(t) * n_nodes() + node) * kNumFeatures +
           feature;
  }
  float value(int t, int node, Feature f) const {
    return values[cell(t, node, static_cast<int>(f))];
  }
  bool is_missing(int t, int node, Feature f) const {
    return missing[cell(t, node, static_cast<int>(f))] != 0;
  }
  void set_value(int t, int node, Feature f, float v) {
    std::size_t i = cell(t, node, static_cast<int>(f));
    values[i] = v;
    missing[i] = 0;
  }

  bool fully_observed() const {
    return std::all_of(missing.begin(), missing.end(),
                       [](std::uint8_t m) { return m == 0; });
  }
};

// ---------------------------------------------------------------------------
// CSV schemas
// ---------------------------------------------------------------------------

inline constexpr const char* kSensorCsvHeader =
    "time_unix,milemarker,lane,speed,volume,occupancy";
inline constexpr const char* kIncidentCsvHeader =
    "report_time_unix,milemarker,kind";

namespace detail {

inline void check_reading_ranges(const SensorReading& r, int line) {
  auto bad = [&](const std::string& field) {
    fail(ErrorKind::OutOfRangeValue,
         field + " at line " + std::to_string(line));
  };
  if (r.lane < 1 || r.lane > 4) bad("lane");
  if (r.speed && (*r.speed < 0.0 || *r.speed > 120.0)) bad("speed");
  if (r.occupancy && (*r.occupancy < 0.0 || *r.occupancy > 100.0))
    bad("occupancy");
  if (r.volume && *r.volume < 0.0) bad("volume");
}

inline std::string format_double(double v) {
  // Shortest representation that round-trips, so serialize -> parse is
  // the identity and artifacts are byte-stable.
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double parsed = std::strtod(buf, nullptr);
  if (parsed == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      if (std::strtod(shorter, nullptr) == v) return shorter;
    }
  }
  return buf;
}

}  // namespace detail

inline std::vector<SensorReading> parse_sensor_csv(const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line) || line != kSensorCsvHeader)
    fail(ErrorKind::MissingHeader,
         path + ": expected header '" + kSensorCsvHeader + "'");

  std::vector<SensorReading> out;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != 6)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()) +
               ": expected 6 fields, got " + std::to_string(fields.size()));
    SensorReading r;
    try {
      auto t = csv::parse_int_field(fields[0]);
      auto mm = csv::parse_double_field(fields[1]);
      auto lane = csv::parse_int_field(fields[2]);
      if (!t || !mm || !lane)
        fail(ErrorKind::MalformedRow, "time_unix, milemarker, lane required");
      r.time_unix = *t;
      r.milemarker = *mm;
      r.lane = static_cast<int>(*lane);
      r.speed = csv::parse_double_field(fields[3]);
      r.volume = csv::parse_double_field(fields[4]);
      r.occupancy = csv::parse_double_field(fields[5]);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::MalformedRow)
        fail(ErrorKind::MalformedRow,
             path + ":" + std::to_string(reader.line_number()) + ": " +
                 e.what());
      throw;
    }
    detail::check_reading_ranges(r, reader.line_number());
    out.push_back(r);
  }
  return out;
}

inline void write_sensor_csv(const std::string& path,
                             const std::vector<SensorReading>& readings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << kSensorCsvHeader << "\n";
  for (const auto& r : readings) {
    out << r.time_unix << ',' << detail::format_double(r.milemarker) << ','
        << r.lane << ',';
    if (r.speed) out << detail::format_double(*r.speed);
    out << ',';
    if (r.volume) out << detail::format_double(*r.volume);
    out << ',';
    if (r.occupancy) out << detail::format_double(*r.occupancy);
    out << '\n';
  }
}

inline IncidentLog parse_incident_csv(const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line) || line != kIncidentCsvHeader)
    fail(ErrorKind::MissingHeader,
         path + ": expected header '" + kIncidentCsvHeader + "'");

  IncidentLog log;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != 3)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()) +
               ": expected 3 fields");
    IncidentRecord rec;
    try {
      auto t = csv::parse_int_field(fields[0]);
      if (!t) fail(ErrorKind::MalformedRow, "report_time_unix required");
      rec.report_time_unix = *t;
      rec.milemarker = csv::parse_double_field(fields[1]);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::MalformedRow)
        fail(ErrorKind::MalformedRow,
             path + ":" + std::to_string(reader.line_number()) + ": " +
                 e.what());
      throw;
    }
    if (fields[2] == "crash") {
      rec.kind = IncidentKind::Crash;
    } else if (fields[2] == "manual") {
      rec.kind = IncidentKind::Manual;
    } else {
      fail(ErrorKind::UnknownKind,
           path + ":" + std::to_string(reader.line_number()) + ": '" +
               std::string(fields[2]) + "'");
    }
    log.records.push_back(rec);
  }
  std::stable_sort(log.records.begin(), log.records.end(),
                   [](const IncidentRecord& a, const IncidentRecord& b) {
                     return a.report_time_unix < b.report_time_unix;
                   });
  return log;
}

inline void write_incident_csv(const std::string& path, const IncidentLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << kIncidentCsvHeader << "\n";
  for (const auto& rec : log.records) {
    out << rec.report_time_unix << ',';
    if (rec.milemarker) out << detail::format_double(*rec.milemarker);
    out << ',' << (rec.kind == IncidentKind::Crash ? "crash" : "manual")
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Grid assembly
// ---------------------------------------------------------------------------

struct AssembleReport {
  std::size_t duplicate_cells = 0;   // readings overwriting an earlier one
  std::size_t outside_window = 0;    // readings dropped as out-of-window
};

inline SensorGrid assemble_grid(const std::vector<SensorReading>& readings,
                                const DayWindow& window = DayWindow{},
                                AssembleReport* report = nullptr) {
  if (readings.empty()) fail(ErrorKind::EmptyInput, "no readings");
  int steps_per_day = window.steps_per_day();
  if (steps_per_day < 1)
    fail(ErrorKind::EmptyInput, "day window shorter than one 30 s step");

  const std::int64_t offset_s =
      static_cast<std::int64_t>(window.utc_offset_hours) * 3600;
  const std::int64_t window_start_s =
      static_cast<std::int64_t>(std::llround(window.start_hour * 3600.0));

  auto day_of = [&](std::int64_t t) {
    return floor_div(t + offset_s, 86400);
  };
  auto window_start_of_day = [&](std::int64_t day) {
    return day * 86400 - offset_s + window_start_s;
  };

  // Collect the node set and the day set.
  std::vector<double> mms;
  std::vector<std::int64_t> days;
  int n_lanes = 0;
  AssembleReport local_report;
  for (const auto& r : readings) {
    mms.push_back(r.milemarker);
    n_lanes = std::max(n_lanes, r.lane);
    std::int64_t day = day_of(r.time_unix);
    std::int64_t rel = r.time_unix - window_start_of_day(day);
    if (rel >= 0 && rel < static_cast<std::int64_t>(steps_per_day) * 30)
      days.push_back(day);
  }
  std::sort(mms.begin(), mms.end(), std::greater<double>());
  mms.erase(std::unique(mms.begin(), mms.end()), mms.end());
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  if (days.empty())
    fail(ErrorKind::EmptyInput, "no readings inside the day window");

  SensorGrid grid;
  grid.milemarkers = mms;
  grid.n_lanes = n_lanes;
  grid.steps_per_day = steps_per_day;
  grid.day_numbers = days;
  grid.window = window;
  const int n_nodes = grid.n_nodes();
  const int n_times = steps_per_day * static_cast<int>(days.size());
  grid.times.resize(n_times);
  for (std::size_t d = 0; d < days.size(); ++d) {
    std::int64_t start = window_start_of_day(days[d]);
    for (int s = 0; s < steps_per_day; ++s)
      grid.times[d * steps_per_day + s] = start + 30 * s;
  }
  grid.values.assign(static_cast<std::size_t>(n_times) * n_nodes * kNumFeatures,
                     0.0f);
  grid.missing.assign(grid.values.size(), 1);

  std::map<double, int, std::greater<double>> mm_index;
  for (std::size_t i = 0; i < mms.size(); ++i)
    mm_index[mms[i]] = static_cast<int>(i);

  for (const auto& r : readings) {
    std::int64_t day = day_of(r.time_unix);
    std::int64_t rel = r.time_unix - window_start_of_day(day);
    if (rel < 0 || rel >= static_cast<std::int64_t>(steps_per_day) * 30) {
      ++local_report.outside_window;
      continue;
    }
    if (rel % 30 != 0)
      fail(ErrorKind::InconsistentCadence,
           "timestamp " + std::to_string(r.time_unix) +
               " not on a 30 s tick of the day window");
    auto day_it = std::lower_bound(days.begin(), days.end(), day);
    int day_idx = static_cast<int>(day_it - days.begin());
    int t = day_idx * steps_per_day + static_cast<int>(rel / 30);
    int node = grid.node_id(mm_index[r.milemarker], r.lane);

    bool overwrote = false;
    auto place = [&](Feature f, const std::optional<double>& v) {
      if (!v) return;
      std::size_t i = grid.cell(t, node, static_cast<int>(f));
      if (!grid.missing[i]) overwrote = true;
      grid.values[i] = static_cast<float>(*v);
      grid.missing[i] = 0;
    };
    place(Feature::Speed, r.speed);
    place(Feature::Occupancy, r.occupancy);
    place(Feature::Volume, r.volume);
    if (overwrote) ++local_report.duplicate_cells;
  }

  if (report) *report = local_report;
  return grid;
}

// Flattens a grid back to readings, one per (time, node) with any observed
// channel. Used by serializers and round-trip checks.
inline std::vector<SensorReading> grid_to_readings(const SensorGrid& grid) {
  std::vector<SensorReading> out;
  for (int t = 0; t < grid.n_times(); ++t) {
    for (int node = 0; node < grid.n_nodes(); ++node) {
      bool any = false;
      SensorReading r;
      r.time_unix = grid.times[t];
      r.milemarker = grid.milemarkers[grid.mm_index_of(node)];
      r.lane = grid.lane_of(node);
      auto take = [&](Feature f, std::optional<double>& slot) {
        if (!grid.is_missing(t, node, f)) {
          slot = grid.value(t, node, f);
          any = true;
        }
      };
      take(Feature::Speed, r.speed);
      take(Feature::Volume, r.volume);
      take(Feature::Occupancy, r.occupancy);
      if (any) out.push_back(r);
    }
  }
  return out;
}

}  // namespace ftaed
