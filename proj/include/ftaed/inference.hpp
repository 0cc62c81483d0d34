#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ftaed/errors.hpp"
#include "ftaed/models.hpp"
#include "ftaed/preprocessing.hpp"
#include "ftaed/sensor_data.hpp"

namespace ftaed {

// A tick t is usable as a model input when the whole window [t-k, t] lies in
// one day and every tick of it is marked usable. Static models have k = 0.
inline bool window_ok(const SensorGrid& grid, const std::vector<std::uint8_t>& usable,
                      int t, int k) {
  if (t - k < 0) return false;
  const int day = grid.day_of_time(t);
  for (int s = t - k; s <= t; ++s) {
    if (!usable[s]) return false;
    if (grid.day_of_time(s) != day) return false;
  }
  return true;
}

inline std::vector<int> usable_window_ticks(const SensorGrid& grid,
                                            const std::vector<std::uint8_t>& usable,
                                            int k) {
  std::vector<int> ticks;
  const int T = static_cast<int>(grid.times.size());
  for (int t = 0; t < T; ++t)
    if (window_ok(grid, usable, t, k)) ticks.push_back(t);
  return ticks;
}

// Stacks the windows for `ticks` into one [B * n_all x 3] input, slice-major
// with the oldest slice first, plus the current-slice targets [B * n_base x 3].
// The grid must already be normalized.
struct BatchInput {
  ad::Tensor x;
  ad::Tensor target;
};

inline BatchInput assemble_batch(const SensorGrid& grid,
                                 const std::vector<int>& ticks, int k) {
  const int n_base = grid.n_nodes();
  const int n_all = (k + 1) * n_base;
  const int B = static_cast<int>(ticks.size());
  BatchInput b{ad::Tensor(B * n_all, kNumFeatures),
               ad::Tensor(B * n_base, kNumFeatures)};
  for (int s = 0; s < B; ++s) {
    const int t = ticks[s];
    for (int sl = 0; sl <= k; ++sl) {
      const int src_t = t - k + sl;
      for (int i = 0; i < n_base; ++i) {
        const int row = s * n_all + sl * n_base + i;
        for (int f = 0; f < kNumFeatures; ++f)
          b.x.at(row, f) = grid.value(src_t, i, static_cast<Feature>(f));
      }
    }
    for (int i = 0; i < n_base; ++i)
      for (int f = 0; f < kNumFeatures; ++f)
        b.target.at(s * n_base + i, f) =
            grid.value(t, i, static_cast<Feature>(f));
  }
  return b;
}

// Per-node reconstruction error e_i(t): squared error summed over the three
// features, in normalized units. Returns one row per requested tick. Windows
// are evaluated in batches; per-tick results do not depend on the batching.
inline std::vector<std::vector<double>> reconstruction_errors(
    const AutoencoderModel& model, const SensorGrid& grid_norm,
    const std::vector<int>& ticks, int batch_hint = 64) {
  const int k = model.config.is_stg() ? model.config.timesteps : 0;
  const int n_base = grid_norm.n_nodes();
  if (model.n_base_nodes() != n_base)
    fail(ErrorKind::ConfigMismatch, "model topology does not match grid");
  std::vector<std::vector<double>> errors(ticks.size(),
                                          std::vector<double>(n_base, 0.0));
  std::vector<ForwardPlan> plans;  // one per distinct batch size used
  auto plan_for = [&](int B) -> const ForwardPlan& {
    for (const auto& p : plans)
      if (p.batch == B) return p;
    plans.push_back(build_forward_plan(model, B));
    return plans.back();
  };
  ad::Tape tape;  // reset per batch; storage is recycled across batches
  for (std::size_t pos = 0; pos < ticks.size();) {
    const int B = static_cast<int>(
        std::min<std::size_t>(batch_hint, ticks.size() - pos));
    std::vector<int> chunk(ticks.begin() + pos, ticks.begin() + pos + B);
    BatchInput in = assemble_batch(grid_norm, chunk, k);
    tape.reset();
    ad::Var x = tape.leaf(in.x);
    ForwardVars fv =
        model_forward_tape(model, tape, x, plan_for(B), false, nullptr);
    const std::vector<double>& recon = tape.shadow(fv.recon);
    for (int s = 0; s < B; ++s)
      for (int i = 0; i < n_base; ++i) {
        double e = 0.0;
        for (int f = 0; f < kNumFeatures; ++f) {
          const double d =
              recon[(static_cast<std::size_t>(s) * n_base + i) * kNumFeatures + f] -
              in.target.at(s * n_base + i, f);
          e += d * d;
        }
        errors[pos + s][i] = e;
      }
    pos += B;
  }
  return errors;
}

// Mean reconstruction error in loss units: per-node squared error summed
// over features, averaged over nodes and ticks.
inline double mean_recon_mse(const std::vector<std::vector<double>>& errors) {
  if (errors.empty()) return 0.0;
  double acc = 0.0;
  std::size_t cells = 0;
  for (const auto& row : errors) {
    for (double e : row) acc += e;
    cells += row.size();
  }
  return cells ? acc / static_cast<double>(cells) : 0.0;
}

}  // namespace ftaed
