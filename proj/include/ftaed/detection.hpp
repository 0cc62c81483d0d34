#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ftaed/csv.hpp"
#include "ftaed/errors.hpp"
#include "ftaed/inference.hpp"
#include "ftaed/models.hpp"
#include "ftaed/sensor_data.hpp"
#include "ftaed/training.hpp"

namespace ftaed {

// Flags and errors for every grid time. Ticks whose input window is not
// fully available (history reaching before the day start) are marked
// unevaluated and never flag.
struct DetectionResult {
  std::vector<std::int64_t> times;
  int n_nodes = 0;
  double alpha = 1.0;
  std::vector<std::uint8_t> evaluated;        // per tick
  std::vector<std::vector<double>> errors;    // [tick][node] e_i(t)
  std::vector<std::vector<std::uint8_t>> flags;
  std::vector<std::uint8_t> any;              // per tick, OR over nodes
};

// Applies the calibrated thresholds: flag iff e_i(t) > alpha * T[i]
// (strictly), so alpha = 1 reproduces zero flags on the calibration data.
// The grid must be imputed and normalized with the training stats.
inline DetectionResult detect_anomalies(const AutoencoderModel& model,
                                        const SensorGrid& grid_norm,
                                        const ThresholdVector& thresholds,
                                        double alpha) {
  const int n = grid_norm.n_nodes();
  if (static_cast<int>(thresholds.T.size()) != n)
    fail(ErrorKind::MissingThreshold,
         "have " + std::to_string(thresholds.T.size()) + " thresholds for " +
             std::to_string(n) + " nodes");
  const int k = model.config.is_stg() ? model.config.timesteps : 0;
  const int T = static_cast<int>(grid_norm.times.size());

  DetectionResult r;
  r.times = grid_norm.times;
  r.n_nodes = n;
  r.alpha = alpha;
  r.evaluated.assign(T, 0);
  r.errors.assign(T, std::vector<double>(n, 0.0));
  r.flags.assign(T, std::vector<std::uint8_t>(n, 0));
  r.any.assign(T, 0);

  std::vector<std::uint8_t> all(T, 1);
  std::vector<int> ticks = usable_window_ticks(grid_norm, all, k);
  auto errors = reconstruction_errors(model, grid_norm, ticks);
  for (std::size_t s = 0; s < ticks.size(); ++s) {
    const int t = ticks[s];
    r.evaluated[t] = 1;
    r.errors[t] = std::move(errors[s]);
    for (int i = 0; i < n; ++i) {
      if (r.errors[t][i] > alpha * thresholds.T[i]) {
        r.flags[t][i] = 1;
        r.any[t] = 1;
      }
    }
  }
  return r;
}

// Per-tick anomaly score max_i e_i(t)/T[i]; the any-node OR at multiplier a
// is exactly score > a. Zero thresholds map to +inf (any error flags) or 0.
inline std::vector<double> per_time_scores(const DetectionResult& r,
                                           const ThresholdVector& thresholds) {
  if (static_cast<int>(thresholds.T.size()) != r.n_nodes)
    fail(ErrorKind::MissingThreshold, "threshold count mismatch");
  std::vector<double> scores(r.times.size(), 0.0);
  for (std::size_t t = 0; t < r.times.size(); ++t) {
    if (!r.evaluated[t]) continue;
    double best = 0.0;
    for (int i = 0; i < r.n_nodes; ++i) {
      const double e = r.errors[t][i];
      const double T = thresholds.T[i];
      double ratio;
      if (T > 0.0)
        ratio = e / T;
      else
        ratio = e > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
      best = std::max(best, ratio);
    }
    scores[t] = best;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Time-step labeling
// ---------------------------------------------------------------------------

enum class TimeLabel : std::uint8_t { Negative = 0, Positive = 1, Excluded = 2 };

struct LabelOptions {
  std::int64_t pre_report_seconds = 900;     // crash positives start this early
  std::int64_t post_report_seconds = 7200;   // crash impacts last this long
  std::int64_t manual_post_seconds = 7200;
  bool exclude_manual = true;  // drop manual-anomaly windows from scoring
};

// Positive within [t_report - pre, t_report + post] of any crash; excluded
// within a manual-anomaly window unless already positive; negative elsewhere.
inline std::vector<TimeLabel> label_timesteps(const IncidentLog& log,
                                              const std::vector<std::int64_t>& times,
                                              const LabelOptions& opts = {}) {
  std::vector<TimeLabel> labels(times.size(), TimeLabel::Negative);
  for (std::size_t t = 0; t < times.size(); ++t) {
    const std::int64_t tt = times[t];
    bool pos = false, excl = false;
    for (const auto& inc : log.records) {
      if (inc.kind == IncidentKind::Crash) {
        if (tt >= inc.report_time_unix - opts.pre_report_seconds &&
            tt <= inc.report_time_unix + opts.post_report_seconds)
          pos = true;
      } else if (opts.exclude_manual) {
        if (tt >= inc.report_time_unix &&
            tt <= inc.report_time_unix + opts.manual_post_seconds)
          excl = true;
      }
    }
    labels[t] = pos ? TimeLabel::Positive
                    : (excl ? TimeLabel::Excluded : TimeLabel::Negative);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// ROC / AUC over the global threshold multiplier
// ---------------------------------------------------------------------------

struct RocPoint {
  double alpha = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // alpha descending; fpr/tpr non-decreasing
  double auc = 0.0;
};

// Sweeps the multiplier over the distinct per-time scores (descending), plus
// one value below the minimum so the curve closes at (1,1). Prediction at a
// sweep point is score > alpha, matching detect_anomalies. Excluded or
// unevaluated times (mask 0) are ignored.
inline RocCurve roc_auc(const std::vector<double>& scores,
                        const std::vector<TimeLabel>& labels,
                        const std::vector<std::uint8_t>& include) {
  if (scores.size() != labels.size() || scores.size() != include.size())
    fail(ErrorKind::ShapeMismatch, "roc_auc input lengths differ");
  std::vector<std::pair<double, bool>> pts;  // (score, is_positive)
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (!include[t] || labels[t] == TimeLabel::Excluded) continue;
    pts.emplace_back(scores[t], labels[t] == TimeLabel::Positive);
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& p : pts) (p.second ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    fail(ErrorKind::DegenerateLabels,
         "need at least one positive and one negative time (" +
             std::to_string(n_pos) + " pos, " + std::to_string(n_neg) + " neg)");

  std::vector<double> alphas;
  alphas.reserve(pts.size() + 1);
  for (const auto& p : pts) alphas.push_back(p.first);
  std::sort(alphas.begin(), alphas.end(), std::greater<double>());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  const double lowest = alphas.back();
  alphas.push_back(lowest > 0.0 ? 0.0 : lowest - 1.0);

  // Sort once and accumulate the confusion incrementally per sweep value.
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  RocCurve curve;
  std::size_t consumed = 0, tp = 0, fp = 0;
  for (double a : alphas) {
    while (consumed < pts.size() && pts[consumed].first > a) {
      (pts[consumed].second ? tp : fp)++;
      ++consumed;
    }
    curve.points.push_back({a, double(fp) / n_neg, double(tp) / n_pos});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    curve.auc += (curve.points[i].fpr - curve.points[i - 1].fpr) *
                 (curve.points[i].tpr + curve.points[i - 1].tpr) / 2.0;
  return curve;
}

struct AlphaPick {
  double alpha = 0.0;
  double fpr_achieved = 0.0;
  double tpr_achieved = 0.0;
};

// Most sensitive operating point that still respects the FPR budget: the
// smallest swept alpha with FPR <= target (FPR only grows as alpha drops).
inline AlphaPick pick_alpha_for_fpr(const RocCurve& curve, double target) {
  if (curve.points.empty())
    fail(ErrorKind::EmptyInput, "empty ROC curve");
  const RocPoint* chosen = nullptr;
  for (const auto& p : curve.points) {
    if (p.fpr <= target) chosen = &p;  // alpha descends, keep the last fit
  }
  if (!chosen)
    fail(ErrorKind::UnattainableTarget,
         "no swept alpha achieves FPR <= " + std::to_string(target));
  return {chosen->alpha, chosen->fpr, chosen->tpr};
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double fpr() const { return fp + tn ? double(fp) / (fp + tn) : 0.0; }
  double fdr() const { return fp + tp ? double(fp) / (fp + tp) : 0.0; }
  double tpr() const { return tp + fn ? double(tp) / (tp + fn) : 0.0; }
};

inline Confusion confusion_at(const std::vector<double>& scores,
                              const std::vector<TimeLabel>& labels,
                              const std::vector<std::uint8_t>& include,
                              double alpha) {
  Confusion c;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (!include[t] || labels[t] == TimeLabel::Excluded) continue;
    const bool pred = scores[t] > alpha;
    const bool pos = labels[t] == TimeLabel::Positive;
    if (pred && pos)
      ++c.tp;
    else if (pred && !pos)
      ++c.fp;
    else if (!pred && !pos)
      ++c.tn;
    else
      ++c.fn;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Event-level evaluation
// ---------------------------------------------------------------------------

struct MatchOptions {
  std::int64_t pre_seconds = 900;   // 15 min before the report
  std::int64_t post_seconds = 900;  // 15 min after
};

struct EventOutcome {
  std::int64_t report_time = 0;
  bool evaluated = false;  // match window overlaps the detection range
  bool truncated = false;  // window partially outside the range
  bool detected = false;
  std::int64_t detection_time = 0;
  double rrd_minutes = 0.0;  // detection minus report; negative = earlier
};

struct EventEvaluation {
  std::vector<EventOutcome> outcomes;
  std::size_t n_evaluated = 0;
  std::size_t n_detected = 0;
  std::size_t n_missed = 0;
  std::size_t n_truncated = 0;
  double miss_pct = 0.0;
  double rrd_mean = 0.0;  // over detected crashes
  double rrd_std = 0.0;
};

// Matches each crash against the earliest any-node detection inside
// [t_report - pre, t_report + post]. Crashes whose window misses the
// detection range entirely are skipped (not counted as misses).
inline EventEvaluation evaluate_events(const DetectionResult& result,
                                       const IncidentLog& log,
                                       const MatchOptions& opts = {}) {
  EventEvaluation ev;
  std::vector<double> rrds;
  for (const auto& inc : log.records) {
    if (inc.kind != IncidentKind::Crash) continue;
    EventOutcome o;
    o.report_time = inc.report_time_unix;
    const std::int64_t w0 = inc.report_time_unix - opts.pre_seconds;
    const std::int64_t w1 = inc.report_time_unix + opts.post_seconds;
    bool any_tick = false;
    for (std::size_t t = 0; t < result.times.size(); ++t) {
      const std::int64_t tt = result.times[t];
      if (tt < w0 || tt > w1 || !result.evaluated[t]) continue;
      any_tick = true;
      if (!o.detected && result.any[t]) {
        o.detected = true;
        o.detection_time = tt;
        o.rrd_minutes = double(tt - inc.report_time_unix) / 60.0;
      }
    }
    if (!any_tick) {
      ev.outcomes.push_back(o);
      continue;
    }
    o.evaluated = true;
    o.truncated =
        w0 < result.times.front() || w1 > result.times.back();
    ev.outcomes.push_back(o);
    ++ev.n_evaluated;
    if (o.truncated) ++ev.n_truncated;
    if (o.detected) {
      ++ev.n_detected;
      rrds.push_back(o.rrd_minutes);
    } else {
      ++ev.n_missed;
    }
  }
  if (ev.n_evaluated)
    ev.miss_pct = 100.0 * double(ev.n_missed) / double(ev.n_evaluated);
  if (!rrds.empty()) {
    double s = 0.0;
    for (double r : rrds) s += r;
    ev.rrd_mean = s / rrds.size();
    double var = 0.0;
    for (double r : rrds) var += (r - ev.rrd_mean) * (r - ev.rrd_mean);
    ev.rrd_std = std::sqrt(var / rrds.size());
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline const char* kDetectionsCsvHeader =
    "time_unix,node_id,milemarker,lane,error,threshold";

inline void write_detections_csv(const std::string& path,
                                 const DetectionResult& result,
                                 const SensorGrid& grid,
                                 const ThresholdVector& thresholds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << kDetectionsCsvHeader << '\n';
  for (std::size_t t = 0; t < result.times.size(); ++t) {
    if (!result.evaluated[t]) continue;
    for (int i = 0; i < result.n_nodes; ++i) {
      if (!result.flags[t][i]) continue;
      out << result.times[t] << ',' << i << ','
          << detail::format_double(grid.milemarkers[i / grid.n_lanes])
          << ',' << grid.lane_of(i) << ','
          << detail::format_double(result.errors[t][i]) << ','
          << detail::format_double(result.alpha * thresholds.T[i]) << '\n';
    }
  }
}

struct DetectionRow {
  std::int64_t time_unix = 0;
  int node_id = 0;
  double milemarker = 0.0;
  int lane = 0;
  double error = 0.0;
  double threshold = 0.0;
};

inline std::vector<DetectionRow> read_detections_csv(const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line) || line != kDetectionsCsvHeader)
    fail(ErrorKind::MissingHeader, path);
  std::vector<DetectionRow> rows;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != 6)
      fail(ErrorKind::MalformedRow, path + ":" + std::to_string(reader.line_number()));
    DetectionRow r;
    r.time_unix = csv::parse_int_field(fields[0]).value();
    r.node_id = static_cast<int>(csv::parse_int_field(fields[1]).value());
    r.milemarker = csv::parse_double_field(fields[2]).value();
    r.lane = static_cast<int>(csv::parse_int_field(fields[3]).value());
    r.error = csv::parse_double_field(fields[4]).value();
    r.threshold = csv::parse_double_field(fields[5]).value();
    rows.push_back(r);
  }
  return rows;
}

struct MetricsReport {
  double reporting_delay_mean = 0.0;
  double reporting_delay_std = 0.0;
  double miss_pct = 0.0;
  double recon_mse = 0.0;
  double auc = 0.0;
  double fpr_achieved = 0.0;
  double fdr_achieved = 0.0;
  double alpha = 0.0;
};

inline void write_metrics_report(const std::string& path, const MetricsReport& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "reporting_delay_mean=" << detail::format_double(m.reporting_delay_mean) << '\n'
      << "reporting_delay_std=" << detail::format_double(m.reporting_delay_std) << '\n'
      << "miss_pct=" << detail::format_double(m.miss_pct) << '\n'
      << "recon_mse=" << detail::format_double(m.recon_mse) << '\n'
      << "auc=" << detail::format_double(m.auc) << '\n'
      << "fpr_achieved=" << detail::format_double(m.fpr_achieved) << '\n'
      << "fdr_achieved=" << detail::format_double(m.fdr_achieved) << '\n'
      << "alpha=" << detail::format_double(m.alpha) << '\n';
}

inline std::map<std::string, double> read_metrics_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  std::map<std::string, double> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::MalformedRow, path + ": '" + line + "'");
    kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace ftaed
