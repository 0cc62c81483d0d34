#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ftaed/csv.hpp"
#include "ftaed/errors.hpp"
#include "ftaed/inference.hpp"
#include "ftaed/models.hpp"
#include "ftaed/preprocessing.hpp"

namespace ftaed {

struct TrainConfig {
  double learning_rate = 0.0;  // 0 means take the model's tuned rate
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;  // epochs without validation improvement before stopping
  std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.batch_size < 1)
    fail(ErrorKind::ConfigMismatch, "batch_size must be >= 1");
  if (c.max_epochs < 1)
    fail(ErrorKind::ConfigMismatch, "max_epochs must be >= 1");
  if (c.patience < 1 || c.patience >= c.max_epochs)
    fail(ErrorKind::ConfigMismatch, "patience must be in [1, max_epochs)");
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const std::vector<NamedTensor>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.t.size(), 0.0);
      s.v.emplace_back(p.t.size(), 0.0);
    }
    return s;
  }
};

// One bias-corrected update over all parameters. Moments are held in double
// so repeated runs are bit-identical; parameters stay float32.
inline void adam_step(std::vector<NamedTensor>& params,
                      const std::vector<ad::Tensor>& grads, AdamState& state,
                      double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    fail(ErrorKind::ShapeMismatch, "adam_step parameter/gradient count");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& theta = params[p].t;
    const auto& g = grads[p];
    if (g.rows != theta.rows || g.cols != theta.cols)
      fail(ErrorKind::ShapeMismatch, "adam_step gradient shape for " + params[p].name);
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g.data[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      theta.data[i] = static_cast<float>(double(theta.data[i]) -
                                         lr * mh / (std::sqrt(vh) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLoss {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  AutoencoderModel model;  // parameters from the best validation epoch
  NormalizationStats stats;
  std::vector<EpochLoss> history;
  int best_epoch = 0;
  double best_val_mse = 0.0;
};

inline void write_loss_history(const std::string& path,
                               const std::vector<EpochLoss>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "epoch,train_mse,val_mse\n";
  for (const auto& e : history)
    out << e.epoch << ',' << detail::format_double(e.train_mse) << ','
        << detail::format_double(e.val_mse) << '\n';
}

inline std::vector<EpochLoss> read_loss_history(const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line) || line != "epoch,train_mse,val_mse")
    fail(ErrorKind::MissingHeader, path);
  std::vector<EpochLoss> out;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != 3)
      fail(ErrorKind::MalformedRow, path + ":" + std::to_string(reader.line_number()));
    EpochLoss e;
    e.epoch = static_cast<int>(csv::parse_int_field(fields[0]).value());
    e.train_mse = csv::parse_double_field(fields[1]).value();
    e.val_mse = csv::parse_double_field(fields[2]).value();
    out.push_back(e);
  }
  return out;
}

namespace detail {

inline double eval_mse(const AutoencoderModel& model, const SensorGrid& grid_norm,
                       const std::vector<int>& ticks) {
  if (ticks.empty()) return 0.0;
  return mean_recon_mse(reconstruction_errors(model, grid_norm, ticks));
}

}  // namespace detail

// Minimizes the per-node squared error summed over the three features and
// averaged over nodes (loss = 3 x elementwise MSE). The grid is the imputed
// physical-unit grid; normalization is fitted on the usable training times
// and applied internally. Deterministic for a fixed seed.
inline TrainResult train_model(AutoencoderModel model, const SensorGrid& grid,
                               const std::vector<std::uint8_t>& train_usable,
                               const std::vector<std::uint8_t>& val_usable,
                               const TrainConfig& config) {
  validate_train_config(config);
  const int k = model.config.is_stg() ? model.config.timesteps : 0;

  TrainResult result;
  result.stats = fit_normalization(grid, train_usable);
  SensorGrid norm = apply_normalization(grid, result.stats);

  std::vector<int> train_ticks = usable_window_ticks(norm, train_usable, k);
  std::vector<int> val_ticks = usable_window_ticks(norm, val_usable, k);
  if (train_ticks.empty())
    fail(ErrorKind::EmptyTrainingSet, "no usable training windows");
  if (val_ticks.empty())
    fail(ErrorKind::EmptyTrainingSet, "no usable validation windows");

  const double lr =
      config.learning_rate > 0.0 ? config.learning_rate : model.config.learning_rate;
  AdamState adam = AdamState::for_params(model.params);
  std::mt19937_64 rng(config.seed);

  std::vector<ForwardPlan> plans;
  auto plan_for = [&](int B) -> const ForwardPlan& {
    for (const auto& p : plans)
      if (p.batch == B) return p;
    plans.push_back(build_forward_plan(model, B));
    return plans.back();
  };

  std::vector<NamedTensor> best_params = model.params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_best = 0;

  ad::Tape tape;  // reset per batch; storage is recycled across batches
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(train_ticks.begin(), train_ticks.end(), rng);
    double loss_acc = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t pos = 0; pos < train_ticks.size();
         pos += config.batch_size) {
      const int B = static_cast<int>(std::min<std::size_t>(
          config.batch_size, train_ticks.size() - pos));
      std::vector<int> chunk(train_ticks.begin() + pos,
                             train_ticks.begin() + pos + B);
      BatchInput in = assemble_batch(norm, chunk, k);
      tape.reset();
      ad::Var x = tape.leaf(in.x);
      DropoutState drop;
      drop.enabled = model.config.dropout > 0.0;
      drop.p = model.config.dropout;
      drop.seed = config.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^
                  (pos * 0x9e3779b97f4a7c15ull);
      ForwardVars fv =
          model_forward_tape(model, tape, x, plan_for(B), true, &drop);
      ad::Var target = tape.leaf(in.target);
      ad::Var loss =
          tape.mul(tape.mse(fv.recon, target), tape.scalar(kNumFeatures));
      const double loss_val = tape.value_scalar(loss);
      if (!std::isfinite(loss_val))
        fail(ErrorKind::DivergedLoss,
             "non-finite training loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      std::vector<ad::Tensor> grads;
      grads.reserve(fv.params.size());
      for (auto v : fv.params) grads.push_back(tape.grad(v));
      adam_step(model.params, grads, adam, lr);
      loss_acc += loss_val * B;
      loss_n += B;
    }
    EpochLoss ep;
    ep.epoch = epoch;
    ep.train_mse = loss_acc / static_cast<double>(loss_n);
    ep.val_mse = detail::eval_mse(model, norm, val_ticks);
    if (!std::isfinite(ep.val_mse))
      fail(ErrorKind::DivergedLoss,
           "non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(ep);

    if (ep.val_mse < best_val) {
      best_val = ep.val_mse;
      best_epoch = epoch;
      best_params = model.params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  model.params = std::move(best_params);
  result.model = std::move(model);
  result.best_epoch = best_epoch;
  result.best_val_mse = best_val;
  return result;
}

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

struct ThresholdVector {
  std::vector<double> T;  // per base node, normalized squared-error units
  double alpha = 1.0;
};

// T[i] = max over the usable training windows of e_i(t). With alpha = 1 and
// the strict comparison in detection, no training sample is flagged.
inline ThresholdVector calibrate_thresholds(
    const AutoencoderModel& model, const SensorGrid& grid,
    const NormalizationStats& stats,
    const std::vector<std::uint8_t>& train_usable) {
  const int k = model.config.is_stg() ? model.config.timesteps : 0;
  SensorGrid norm = apply_normalization(grid, stats);
  std::vector<int> ticks = usable_window_ticks(norm, train_usable, k);
  if (ticks.empty())
    fail(ErrorKind::EmptyTrainingSet, "no usable windows to calibrate on");
  auto errors = reconstruction_errors(model, norm, ticks);
  ThresholdVector tv;
  tv.T.assign(norm.n_nodes(), 0.0);
  for (const auto& row : errors)
    for (int i = 0; i < norm.n_nodes(); ++i)
      tv.T[i] = std::max(tv.T[i], row[i]);
  return tv;
}

inline void save_thresholds(const std::string& path, const ThresholdVector& tv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "node_id,threshold\n";
  for (std::size_t i = 0; i < tv.T.size(); ++i)
    out << i << ',' << detail::format_double(tv.T[i]) << '\n';
}

inline ThresholdVector load_thresholds(const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line) || line != "node_id,threshold")
    fail(ErrorKind::MissingHeader, path);
  ThresholdVector tv;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != 2)
      fail(ErrorKind::MalformedRow, path + ":" + std::to_string(reader.line_number()));
    const auto id = csv::parse_int_field(fields[0]);
    const auto thr = csv::parse_double_field(fields[1]);
    if (!id || !thr || *id != static_cast<long long>(tv.T.size()))
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()) +
               ": node ids must be dense from 0");
    if (*thr < 0.0)
      fail(ErrorKind::OutOfRangeValue, "negative threshold at node " +
                                           std::to_string(*id));
    tv.T.push_back(*thr);
  }
  if (tv.T.empty()) fail(ErrorKind::EmptyInput, path);
  return tv;
}

}  // namespace ftaed
