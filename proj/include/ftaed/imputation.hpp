#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftaed/errors.hpp"
#include "ftaed/sensor_data.hpp"

namespace ftaed {

// Kernel smoothing parameters. The two characteristic speeds describe how
// information travels: with traffic when free flowing, slowly upstream when
// congested. Values are the classic ASM literature defaults in mph/miles.
struct AsmParams {
  double sigma_miles = 0.37;        // spatial kernel width
  double tau_seconds = 66.0;        // temporal kernel width
  double c_free_mph = 50.0;         // free-flow characteristic (with traffic)
  double c_cong_mph = -9.3;         // congested wave (against traffic)
  double v_crit_mph = 37.0;         // crossover speed for the blend
  double delta_v_mph = 12.4;        // blend transition width
  double neighborhood_miles = 1.11;    // truncation radius, 3 sigma
  double neighborhood_seconds = 198.0; // truncation radius, 3 tau
  bool preserve_observed = true;    // only fill gaps, never resmooth
};

inline void validate_asm_params(const AsmParams& p) {
  if (!(p.sigma_miles > 0.0) || !(p.tau_seconds > 0.0) || !(p.delta_v_mph > 0.0))
    fail(ErrorKind::OutOfRangeValue, "sigma, tau, delta_v must be positive");
  if (!(p.c_free_mph > 0.0) || !(p.c_cong_mph < 0.0))
    fail(ErrorKind::OutOfRangeValue, "need c_free > 0 > c_cong");
  if (!(p.neighborhood_miles > 0.0) || !(p.neighborhood_seconds > 0.0))
    fail(ErrorKind::OutOfRangeValue, "neighborhood radii must be positive");
}

struct IsolatedCellRecord {
  int t = 0;
  int node = 0;
  Feature feature = Feature::Speed;
};

struct ImputeReport {
  std::size_t n_imputed = 0;
  std::size_t n_fallback = 0;  // isolated cells resolved via means
  std::vector<IsolatedCellRecord> isolated;
};

namespace detail {

// Weighted mean accumulated against a reference value so a constant input
// is reproduced exactly; the clamp keeps the result inside the hull of the
// contributing observations.
struct ShiftedMean {
  double ref = 0.0;
  double num = 0.0;
  double den = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;

  void add(double w, double v) {
    if (!any) {
      ref = v;
      lo = hi = v;
      any = true;
    }
    num += w * (v - ref);
    den += w;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double value() const { return std::clamp(ref + num / den, lo, hi); }
};

// Mean of the observed values for (node, feature) over one day; falls back
// to the whole timeline, then to the whole grid. Used when a cell has no
// neighbor inside the kernel support.
inline std::optional<double> fallback_mean(const SensorGrid& grid, int t,
                                           int node, Feature f) {
  const int day = grid.day_of_time(t);
  ShiftedMean day_mean;
  for (int s = day * grid.steps_per_day;
       s < (day + 1) * grid.steps_per_day && s < grid.n_times(); ++s)
    if (!grid.is_missing(s, node, f)) day_mean.add(1.0, grid.value(s, node, f));
  if (day_mean.any) return day_mean.value();
  ShiftedMean node_mean;
  for (int s = 0; s < grid.n_times(); ++s)
    if (!grid.is_missing(s, node, f)) node_mean.add(1.0, grid.value(s, node, f));
  if (node_mean.any) return node_mean.value();
  ShiftedMean grid_mean;
  for (int s = 0; s < grid.n_times(); ++s)
    for (int i = 0; i < grid.n_nodes(); ++i)
      if (!grid.is_missing(s, i, f)) grid_mean.add(1.0, grid.value(s, i, f));
  if (grid_mean.any) return grid_mean.value();
  return std::nullopt;
}

// Kernel-weighted field average along one characteristic. `c_mph` empty
// means no shift (isotropic). Only same-lane speed observations contribute.
// Coordinates: milemarkers descend in the direction of travel, so the travel
// axis is the negated milemarker.
inline ShiftedMean characteristic_field(const SensorGrid& grid, int t, int mm_i,
                                        int lane, const AsmParams& p,
                                        std::optional<double> c_mph) {
  ShiftedMean acc;
  const int day = grid.day_of_time(t);
  const int day_begin = day * grid.steps_per_day;
  const int day_end = std::min(grid.n_times(), day_begin + grid.steps_per_day);
  for (int mm_j = 0; mm_j < grid.n_milemarkers(); ++mm_j) {
    const double dx = grid.milemarkers[mm_j] - grid.milemarkers[mm_i];
    if (std::fabs(dx) > p.neighborhood_miles) continue;
    const double shift = c_mph ? dx / *c_mph * 3600.0 : 0.0;
    const int node_j = grid.node_id(mm_j, lane);
    // |dt - shift| <= R restricts t_j to a short same-day span
    const long long lo = grid.times[t] + static_cast<long long>(
        std::floor(shift - p.neighborhood_seconds));
    const long long hi = grid.times[t] + static_cast<long long>(
        std::ceil(shift + p.neighborhood_seconds));
    auto it0 = std::lower_bound(grid.times.begin() + day_begin,
                                grid.times.begin() + day_end, lo);
    for (auto it = it0; it != grid.times.begin() + day_end && *it <= hi; ++it) {
      const int tj = static_cast<int>(it - grid.times.begin());
      if (grid.is_missing(tj, node_j, Feature::Speed)) continue;
      const double dt = static_cast<double>(grid.times[tj] - grid.times[t]);
      if (std::fabs(dt - shift) > p.neighborhood_seconds) continue;
      const double w = std::exp(-std::fabs(dx) / p.sigma_miles -
                                std::fabs(dt - shift) / p.tau_seconds);
      acc.add(w, grid.value(tj, node_j, Feature::Speed));
    }
  }
  return acc;
}

}  // namespace detail

// Fills missing speed cells by blending a free-flow and a congested
// kernel-smoothed field; the blend weight leans congested when the slower
// field estimate drops below v_crit. Set preserve_observed = false to
// resmooth observed cells as well.
inline SensorGrid asm_impute(const SensorGrid& grid, const AsmParams& params,
                             ImputeReport* report = nullptr) {
  validate_asm_params(params);
  SensorGrid out = grid;
  for (int t = 0; t < grid.n_times(); ++t) {
    for (int node = 0; node < grid.n_nodes(); ++node) {
      const bool observed = !grid.is_missing(t, node, Feature::Speed);
      if (observed && params.preserve_observed) continue;
      const int mm_i = grid.mm_index_of(node);
      const int lane = grid.lane_of(node);
      detail::ShiftedMean free_f = detail::characteristic_field(
          grid, t, mm_i, lane, params, params.c_free_mph);
      detail::ShiftedMean cong_f = detail::characteristic_field(
          grid, t, mm_i, lane, params, params.c_cong_mph);
      double v;
      if (free_f.any && cong_f.any) {
        const double vf = free_f.value();
        const double vc = cong_f.value();
        const double w = 0.5 * (1.0 + std::tanh((params.v_crit_mph -
                                                 std::min(vf, vc)) /
                                                params.delta_v_mph));
        v = vf + w * (vc - vf);
      } else if (free_f.any || cong_f.any) {
        v = free_f.any ? free_f.value() : cong_f.value();
      } else {
        auto fb = detail::fallback_mean(grid, t, node, Feature::Speed);
        if (!fb)
          fail(ErrorKind::IsolatedCell,
               "no speed observation anywhere for node " + std::to_string(node));
        v = *fb;
        if (report) {
          ++report->n_fallback;
          report->isolated.push_back({t, node, Feature::Speed});
        }
      }
      out.set_value(t, node, Feature::Speed, static_cast<float>(v));
      if (report && !observed) ++report->n_imputed;
    }
  }
  return out;
}

// Single-field variant with no characteristic shift; a comparison baseline
// for the anisotropy property.
inline SensorGrid isotropic_impute(const SensorGrid& grid, const AsmParams& params,
                                   ImputeReport* report = nullptr) {
  validate_asm_params(params);
  SensorGrid out = grid;
  for (int t = 0; t < grid.n_times(); ++t) {
    for (int node = 0; node < grid.n_nodes(); ++node) {
      const bool observed = !grid.is_missing(t, node, Feature::Speed);
      if (observed && params.preserve_observed) continue;
      detail::ShiftedMean acc = detail::characteristic_field(
          grid, t, grid.mm_index_of(node), grid.lane_of(node), params,
          std::nullopt);
      double v;
      if (acc.any) {
        v = acc.value();
      } else {
        auto fb = detail::fallback_mean(grid, t, node, Feature::Speed);
        if (!fb)
          fail(ErrorKind::IsolatedCell,
               "no speed observation anywhere for node " + std::to_string(node));
        v = *fb;
        if (report) {
          ++report->n_fallback;
          report->isolated.push_back({t, node, Feature::Speed});
        }
      }
      out.set_value(t, node, Feature::Speed, static_cast<float>(v));
      if (report && !observed) ++report->n_imputed;
    }
  }
  return out;
}

// Occupancy/volume gaps: mean over a small space-time box in the same lane,
// then all lanes at the milemarker, then the day/node mean fallback chain.
inline SensorGrid local_average_impute(const SensorGrid& grid, int space_cells,
                                       int time_steps,
                                       ImputeReport* report = nullptr) {
  if (space_cells < 0 || time_steps < 0)
    fail(ErrorKind::OutOfRangeValue, "radii must be non-negative");
  SensorGrid out = grid;
  const Feature targets[] = {Feature::Occupancy, Feature::Volume};
  for (int t = 0; t < grid.n_times(); ++t) {
    const int day = grid.day_of_time(t);
    const int t_lo = std::max(day * grid.steps_per_day, t - time_steps);
    const int t_hi = std::min({grid.n_times() - 1,
                               (day + 1) * grid.steps_per_day - 1,
                               t + time_steps});
    for (int node = 0; node < grid.n_nodes(); ++node) {
      const int mm_i = grid.mm_index_of(node);
      const int lane = grid.lane_of(node);
      for (Feature f : targets) {
        if (!grid.is_missing(t, node, f)) continue;
        detail::ShiftedMean acc;
        for (int mm_j = std::max(0, mm_i - space_cells);
             mm_j <= std::min(grid.n_milemarkers() - 1, mm_i + space_cells);
             ++mm_j) {
          const int nj = grid.node_id(mm_j, lane);
          for (int tj = t_lo; tj <= t_hi; ++tj)
            if (!(tj == t && nj == node) && !grid.is_missing(tj, nj, f))
              acc.add(1.0, grid.value(tj, nj, f));
        }
        if (!acc.any) {
          // cross-lane fallback at this milemarker
          for (int lj = 1; lj <= grid.n_lanes; ++lj) {
            if (lj == lane) continue;
            const int nj = grid.node_id(mm_i, lj);
            for (int tj = t_lo; tj <= t_hi; ++tj)
              if (!grid.is_missing(tj, nj, f))
                acc.add(1.0, grid.value(tj, nj, f));
          }
        }
        double v;
        if (acc.any) {
          v = acc.value();
        } else {
          auto fb = detail::fallback_mean(grid, t, node, f);
          if (!fb)
            fail(ErrorKind::IsolatedCell,
                 "no observation anywhere for node " + std::to_string(node) +
                     " feature " + std::to_string(static_cast<int>(f)));
          v = *fb;
          if (report) {
            ++report->n_fallback;
            report->isolated.push_back({t, node, f});
          }
        }
        out.set_value(t, node, f, static_cast<float>(v));
        if (report) ++report->n_imputed;
      }
    }
  }
  return out;
}

// Full gap fill: characteristic smoothing for speed, local averaging for
// occupancy and volume.
inline SensorGrid impute_grid(const SensorGrid& grid, const AsmParams& params,
                              int space_cells, int time_steps,
                              ImputeReport* report = nullptr) {
  SensorGrid speed_done = asm_impute(grid, params, report);
  return local_average_impute(speed_done, space_cells, time_steps, report);
}

}  // namespace ftaed
