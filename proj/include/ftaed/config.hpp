#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ftaed/errors.hpp"

namespace ftaed {

// One flat configuration for every pipeline stage. Keys are `section.name`;
// every key has a default, unknown keys are rejected. Negative model.* values
// mean "use the architecture's own default".
struct PipelineConfig {
  std::uint64_t seed = 1;

  int synth_n_milemarkers = 49;
  int synth_n_lanes = 4;
  int synth_n_days = 6;
  int synth_steps_per_day = 960;
  double synth_free_speed = 65.0;
  double synth_congested_speed = 18.0;
  int synth_rush_start_step = 210;
  int synth_rush_end_step = 600;
  double synth_wave_speed = -12.0;
  double synth_noise_std = 1.0;
  double synth_milemarker_start = 54.0;
  double synth_milemarker_spacing = 0.5;
  int synth_n_incidents = 8;
  double synth_incident_severity = 0.85;
  int synth_incident_duration_seconds = 900;
  int synth_report_delay_min_seconds = 300;
  int synth_report_delay_max_seconds = 720;

  double impute_sigma_miles = 0.37;
  double impute_tau_seconds = 66.0;
  double impute_c_free = 50.0;
  double impute_c_cong = -9.3;
  double impute_v_crit = 37.0;
  double impute_delta_v = 12.4;
  double impute_neighborhood_miles = 1.11;
  double impute_neighborhood_seconds = 198.0;
  int impute_space_cells = 2;
  int impute_time_steps = 4;

  int mask_crash_pre_seconds = 1800;
  int mask_post_seconds = 7200;
  bool mask_include_manual_anomalies = false;

  int split_train_days = 14;
  int split_val_days = 5;
  int split_test_days = 1;

  double model_dropout = -1.0;
  int model_hidden_dim = -1;
  int model_latent_dim = -1;
  double model_learning_rate = -1.0;
  int model_n_layers = -1;
  int model_window_k = -1;
  int model_heads = -1;

  int train_batch_size = 32;
  int train_max_epochs = 100;
  int train_patience = 10;

  int label_pre_report_seconds = 900;
  int label_post_report_seconds = 7200;
  int label_manual_post_seconds = 7200;
  bool label_exclude_manual = true;

  int match_pre_seconds = 900;
  int match_post_seconds = 900;

  double detect_alpha = 1.0;
  double eval_target_fpr = 0.05;
};

namespace detail {

inline double config_double(std::string_view v, const std::string& key) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::ConfigError, key + ": not a number: '" + std::string(v) + "'");
  return out;
}

inline std::int64_t config_int(std::string_view v, const std::string& key) {
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::ConfigError,
         key + ": not an integer: '" + std::string(v) + "'");
  return out;
}

inline bool config_bool(std::string_view v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::ConfigError,
       key + ": expected true/false, got '" + std::string(v) + "'");
}

inline std::string_view config_trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  return s;
}

struct ConfigKey {
  const char* name;
  std::function<void(PipelineConfig&, std::string_view)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  auto d = [](double PipelineConfig::*f, const char* n) {
    return ConfigKey{n, [f, n](PipelineConfig& c, std::string_view v) {
                       c.*f = config_double(v, n);
                     }};
  };
  auto i = [](int PipelineConfig::*f, const char* n) {
    return ConfigKey{n, [f, n](PipelineConfig& c, std::string_view v) {
                       c.*f = static_cast<int>(config_int(v, n));
                     }};
  };
  auto b = [](bool PipelineConfig::*f, const char* n) {
    return ConfigKey{n, [f, n](PipelineConfig& c, std::string_view v) {
                       c.*f = config_bool(v, n);
                     }};
  };
  static const std::vector<ConfigKey> keys = {
      {"seed",
       [](PipelineConfig& c, std::string_view v) {
         std::int64_t s = config_int(v, "seed");
         if (s < 0) fail(ErrorKind::ConfigError, "seed: must be non-negative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      i(&PipelineConfig::synth_n_milemarkers, "synth.n_milemarkers"),
      i(&PipelineConfig::synth_n_lanes, "synth.n_lanes"),
      i(&PipelineConfig::synth_n_days, "synth.n_days"),
      i(&PipelineConfig::synth_steps_per_day, "synth.steps_per_day"),
      d(&PipelineConfig::synth_free_speed, "synth.free_speed"),
      d(&PipelineConfig::synth_congested_speed, "synth.congested_speed"),
      i(&PipelineConfig::synth_rush_start_step, "synth.rush_start_step"),
      i(&PipelineConfig::synth_rush_end_step, "synth.rush_end_step"),
      d(&PipelineConfig::synth_wave_speed, "synth.wave_speed"),
      d(&PipelineConfig::synth_noise_std, "synth.noise_std"),
      d(&PipelineConfig::synth_milemarker_start, "synth.milemarker_start"),
      d(&PipelineConfig::synth_milemarker_spacing, "synth.milemarker_spacing"),
      i(&PipelineConfig::synth_n_incidents, "synth.n_incidents"),
      d(&PipelineConfig::synth_incident_severity, "synth.incident_severity"),
      i(&PipelineConfig::synth_incident_duration_seconds,
        "synth.incident_duration_seconds"),
      i(&PipelineConfig::synth_report_delay_min_seconds,
        "synth.report_delay_min_seconds"),
      i(&PipelineConfig::synth_report_delay_max_seconds,
        "synth.report_delay_max_seconds"),
      d(&PipelineConfig::impute_sigma_miles, "impute.sigma_miles"),
      d(&PipelineConfig::impute_tau_seconds, "impute.tau_seconds"),
      d(&PipelineConfig::impute_c_free, "impute.c_free"),
      d(&PipelineConfig::impute_c_cong, "impute.c_cong"),
      d(&PipelineConfig::impute_v_crit, "impute.v_crit"),
      d(&PipelineConfig::impute_delta_v, "impute.delta_v"),
      d(&PipelineConfig::impute_neighborhood_miles,
        "impute.neighborhood_miles"),
      d(&PipelineConfig::impute_neighborhood_seconds,
        "impute.neighborhood_seconds"),
      i(&PipelineConfig::impute_space_cells, "impute.space_cells"),
      i(&PipelineConfig::impute_time_steps, "impute.time_steps"),
      i(&PipelineConfig::mask_crash_pre_seconds, "mask.crash_pre_seconds"),
      i(&PipelineConfig::mask_post_seconds, "mask.post_seconds"),
      b(&PipelineConfig::mask_include_manual_anomalies,
        "mask.include_manual_anomalies"),
      i(&PipelineConfig::split_train_days, "split.train_days"),
      i(&PipelineConfig::split_val_days, "split.val_days"),
      i(&PipelineConfig::split_test_days, "split.test_days"),
      d(&PipelineConfig::model_dropout, "model.dropout"),
      i(&PipelineConfig::model_hidden_dim, "model.hidden_dim"),
      i(&PipelineConfig::model_latent_dim, "model.latent_dim"),
      d(&PipelineConfig::model_learning_rate, "model.learning_rate"),
      i(&PipelineConfig::model_n_layers, "model.n_layers"),
      i(&PipelineConfig::model_window_k, "model.window_k"),
      i(&PipelineConfig::model_heads, "model.heads"),
      i(&PipelineConfig::train_batch_size, "train.batch_size"),
      i(&PipelineConfig::train_max_epochs, "train.max_epochs"),
      i(&PipelineConfig::train_patience, "train.patience"),
      i(&PipelineConfig::label_pre_report_seconds, "label.pre_report_seconds"),
      i(&PipelineConfig::label_post_report_seconds,
        "label.post_report_seconds"),
      i(&PipelineConfig::label_manual_post_seconds,
        "label.manual_post_seconds"),
      b(&PipelineConfig::label_exclude_manual, "label.exclude_manual"),
      i(&PipelineConfig::match_pre_seconds, "match.pre_seconds"),
      i(&PipelineConfig::match_post_seconds, "match.post_seconds"),
      d(&PipelineConfig::detect_alpha, "detect.alpha"),
      d(&PipelineConfig::eval_target_fpr, "eval.target_fpr"),
  };
  return keys;
}

}  // namespace detail

inline void apply_config_line(PipelineConfig& config, std::string_view line,
                              int line_number) {
  auto hash = line.find('#');
  if (hash != std::string_view::npos) line = line.substr(0, hash);
  line = detail::config_trim(line);
  if (line.empty()) return;
  auto eq = line.find('=');
  if (eq == std::string_view::npos)
    fail(ErrorKind::ConfigError,
         "line " + std::to_string(line_number) + ": expected key=value");
  std::string_view key = detail::config_trim(line.substr(0, eq));
  std::string_view value = detail::config_trim(line.substr(eq + 1));
  for (const auto& k : detail::config_keys()) {
    if (key == k.name) {
      k.set(config, value);
      return;
    }
  }
  fail(ErrorKind::ConfigError, "unknown key '" + std::string(key) + "'");
}

inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) apply_config_line(config, line, ++n);
  return config;
}

// FTAED_SEED in the environment overrides the configured seed.
inline void apply_seed_override(PipelineConfig& config) {
  const char* env = std::getenv("FTAED_SEED");
  if (!env) return;
  std::string_view v(env);
  std::int64_t s = detail::config_int(v, "FTAED_SEED");
  if (s < 0) fail(ErrorKind::ConfigError, "FTAED_SEED: must be non-negative");
  config.seed = static_cast<std::uint64_t>(s);
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  PipelineConfig config = parse_config_text(buf.str());
  apply_seed_override(config);
  return config;
}

inline PipelineConfig default_pipeline_config() {
  PipelineConfig config;
  apply_seed_override(config);
  return config;
}

}  // namespace ftaed
