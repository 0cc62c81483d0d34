#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ftaed/csv.hpp"
#include "ftaed/errors.hpp"
#include "ftaed/sensor_data.hpp"
#include "ftaed/time_util.hpp"

namespace ftaed {

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Per-feature min-max over the training portion. Applying maps training
// values into [0,1]; values outside the training range extrapolate freely.
struct NormalizationStats {
  std::array<double, kNumFeatures> fmin{};
  std::array<double, kNumFeatures> fmax{};

  double apply(double x, int feature) const {
    return (x - fmin[feature]) / (fmax[feature] - fmin[feature]);
  }
  double invert(double y, int feature) const {
    return y * (fmax[feature] - fmin[feature]) + fmin[feature];
  }
};

// `usable_time` marks grid time indices belonging to the training portion.
inline NormalizationStats fit_normalization(
    const SensorGrid& grid, const std::vector<std::uint8_t>& usable_time) {
  NormalizationStats stats;
  stats.fmin.fill(std::numeric_limits<double>::infinity());
  stats.fmax.fill(-std::numeric_limits<double>::infinity());
  for (int t = 0; t < grid.n_times(); ++t) {
    if (t < static_cast<int>(usable_time.size()) && !usable_time[t]) continue;
    for (int node = 0; node < grid.n_nodes(); ++node) {
      for (int f = 0; f < kNumFeatures; ++f) {
        std::size_t i = grid.cell(t, node, f);
        if (grid.missing[i]) continue;
        double v = grid.values[i];
        stats.fmin[f] = std::min(stats.fmin[f], v);
        stats.fmax[f] = std::max(stats.fmax[f], v);
      }
    }
  }
  for (int f = 0; f < kNumFeatures; ++f) {
    if (!std::isfinite(stats.fmin[f]))
      fail(ErrorKind::EmptyTrainingSet,
           "no observed training cells for feature " + std::to_string(f));
    if (!(stats.fmax[f] > stats.fmin[f]))
      fail(ErrorKind::DegenerateFeature,
           "feature " + std::to_string(f) + " has zero range (" +
               std::to_string(stats.fmin[f]) + ")");
  }
  return stats;
}

inline SensorGrid apply_normalization(const SensorGrid& grid,
                                      const NormalizationStats& stats) {
  SensorGrid out = grid;
  for (int t = 0; t < grid.n_times(); ++t)
    for (int node = 0; node < grid.n_nodes(); ++node)
      for (int f = 0; f < kNumFeatures; ++f) {
        std::size_t i = grid.cell(t, node, f);
        out.values[i] = static_cast<float>(stats.apply(grid.values[i], f));
      }
  return out;
}

inline constexpr const char* kFeatureNames[kNumFeatures] = {"speed",
                                                            "occupancy",
                                                            "volume"};

inline void save_normalization(const std::string& path,
                               const NormalizationStats& stats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "feature,min,max\n";
  for (int f = 0; f < kNumFeatures; ++f)
    out << kFeatureNames[f] << ',' << detail::format_double(stats.fmin[f])
        << ',' << detail::format_double(stats.fmax[f]) << '\n';
}

inline NormalizationStats load_normalization(const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line) || line != "feature,min,max")
    fail(ErrorKind::MissingHeader, path);
  NormalizationStats stats;
  std::vector<std::string_view> fields;
  for (int f = 0; f < kNumFeatures; ++f) {
    if (!reader.next_line(line))
      fail(ErrorKind::MalformedRow, path + ": expected 3 feature rows");
    csv::split_fields(line, fields);
    if (fields.size() != 3 || fields[0] != kFeatureNames[f])
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()) +
               ": expected row for " + kFeatureNames[f]);
    auto lo = csv::parse_double_field(fields[1]);
    auto hi = csv::parse_double_field(fields[2]);
    if (!lo || !hi)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()));
    if (!(*hi > *lo))
      fail(ErrorKind::DegenerateFeature,
           path + ": zero range for " + kFeatureNames[f]);
    stats.fmin[f] = *lo;
    stats.fmax[f] = *hi;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Training mask
// ---------------------------------------------------------------------------

enum class MaskProvenance { CrashWindow, ManualWindow, ExcludedDay };

struct MaskedInterval {
  std::int64_t t_begin = 0;  // inclusive, unix seconds
  std::int64_t t_end = 0;    // inclusive
  MaskProvenance provenance = MaskProvenance::CrashWindow;
};

// Per-time usability for training, with the provenance of every masked
// interval. Times are the grid's time axis.
struct TrainingMask {
  std::vector<std::uint8_t> usable;  // 1 = usable for training
  std::vector<MaskedInterval> intervals;

  std::size_t usable_count() const {
    std::size_t n = 0;
    for (auto u : usable) n += u;
    return n;
  }
};

struct MaskOptions {
  int crash_pre_seconds = 30 * 60;  // reporting can lag the crash
  int post_seconds = 2 * 60 * 60;   // impacts can persist after the report
  bool include_manual_anomalies = false;  // ablation: keep manual windows in
};

inline TrainingMask build_training_mask(
    const IncidentLog& log, const SensorGrid& grid,
    const std::vector<int>& excluded_day_indices,
    const MaskOptions& opts = MaskOptions{}) {
  TrainingMask mask;
  mask.usable.assign(grid.times.size(), 1);

  auto mask_interval = [&](std::int64_t a, std::int64_t b, MaskProvenance p) {
    mask.intervals.push_back(MaskedInterval{a, b, p});
    auto lo = std::lower_bound(grid.times.begin(), grid.times.end(), a);
    auto hi = std::upper_bound(grid.times.begin(), grid.times.end(), b);
    for (auto it = lo; it != hi; ++it)
      mask.usable[it - grid.times.begin()] = 0;
  };

  for (const auto& rec : log.records) {
    if (rec.kind == IncidentKind::Crash) {
      mask_interval(rec.report_time_unix - opts.crash_pre_seconds,
                    rec.report_time_unix + opts.post_seconds,
                    MaskProvenance::CrashWindow);
    } else if (!opts.include_manual_anomalies) {
      mask_interval(rec.report_time_unix,
                    rec.report_time_unix + opts.post_seconds,
                    MaskProvenance::ManualWindow);
    }
  }
  for (int day : excluded_day_indices) {
    if (day < 0 || day >= grid.n_days()) continue;
    int t0 = day * grid.steps_per_day;
    int t1 = t0 + grid.steps_per_day - 1;
    mask.intervals.push_back(MaskedInterval{grid.times[t0], grid.times[t1],
                                            MaskProvenance::ExcludedDay});
    for (int t = t0; t <= t1; ++t) mask.usable[t] = 0;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Day split
// ---------------------------------------------------------------------------

enum class DayRole { Train, Validation, Excluded };

struct SplitSpec {
  int train = 14;
  int validation = 5;
  int excluded = 1;
};

struct DatasetSplit {
  std::vector<DayRole> roles;  // one per grid day

  std::vector<int> days_with(DayRole r) const {
    std::vector<int> out;
    for (std::size_t d = 0; d < roles.size(); ++d)
      if (roles[d] == r) out.push_back(static_cast<int>(d));
    return out;
  }
  std::vector<int> train_days() const { return days_with(DayRole::Train); }
  std::vector<int> validation_days() const {
    return days_with(DayRole::Validation);
  }
  std::vector<int> excluded_days() const {
    return days_with(DayRole::Excluded);
  }
};

// Day-assignment file: one line per day, `YYYY-MM-DD,<train|val|excluded>`.
inline std::map<std::int64_t, DayRole> parse_day_assignment(
    const std::string& path) {
  csv::Reader reader(path);
  std::map<std::int64_t, DayRole> out;
  std::string line;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty() || line[0] == '#') continue;
    csv::split_fields(line, fields);
    if (fields.size() != 2)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()));
    std::int64_t day = parse_date(std::string(fields[0]));
    DayRole role;
    if (fields[1] == "train") role = DayRole::Train;
    else if (fields[1] == "val") role = DayRole::Validation;
    else if (fields[1] == "excluded") role = DayRole::Excluded;
    else
      fail(ErrorKind::UnknownKind,
           path + ":" + std::to_string(reader.line_number()) + ": '" +
               std::string(fields[1]) + "'");
    out[day] = role;
  }
  return out;
}

// Splits whole days into train/validation/excluded. With an assignment map
// the file decides; otherwise days are assigned chronologically (train
// first, then validation, then excluded; leftover days are excluded).
inline DatasetSplit split_days(
    const SensorGrid& grid, const SplitSpec& spec,
    const std::map<std::int64_t, DayRole>* assignment = nullptr) {
  int n_days = grid.n_days();
  DatasetSplit split;
  split.roles.resize(n_days);

  if (assignment) {
    for (int d = 0; d < n_days; ++d) {
      auto it = assignment->find(grid.day_numbers[d]);
      if (it == assignment->end())
        fail(ErrorKind::ConfigError,
             "day " + format_date(grid.day_numbers[d]) +
                 " missing from the day-assignment file");
      split.roles[d] = it->second;
    }
    return split;
  }

  if (n_days < spec.train + spec.validation + spec.excluded)
    fail(ErrorKind::SplitOverflow,
         std::to_string(n_days) + " days cannot satisfy split " +
             std::to_string(spec.train) + "+" + std::to_string(spec.validation) +
             "+" + std::to_string(spec.excluded));
  for (int d = 0; d < n_days; ++d) {
    if (d < spec.train) split.roles[d] = DayRole::Train;
    else if (d < spec.train + spec.validation) split.roles[d] = DayRole::Validation;
    else split.roles[d] = DayRole::Excluded;
  }
  return split;
}

// Times usable for training: masked-in and on a training day.
inline std::vector<std::uint8_t> training_time_mask(const SensorGrid& grid,
                                                    const TrainingMask& mask,
                                                    const DatasetSplit& split) {
  std::vector<std::uint8_t> out(grid.times.size(), 0);
  for (int t = 0; t < grid.n_times(); ++t)
    out[t] = mask.usable[t] &&
             split.roles[grid.day_of_time(t)] == DayRole::Train;
  return out;
}

// Anomaly-free validation times, for validation loss and calibrated FPR.
inline std::vector<std::uint8_t> validation_time_mask(
    const SensorGrid& grid, const TrainingMask& mask,
    const DatasetSplit& split) {
  std::vector<std::uint8_t> out(grid.times.size(), 0);
  for (int t = 0; t < grid.n_times(); ++t)
    out[t] = mask.usable[t] &&
             split.roles[grid.day_of_time(t)] == DayRole::Validation;
  return out;
}

}  // namespace ftaed
