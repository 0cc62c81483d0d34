#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ftaed/config.hpp"
#include "ftaed/detection.hpp"
#include "ftaed/grid_io.hpp"
#include "ftaed/imputation.hpp"
#include "ftaed/models.hpp"
#include "ftaed/preprocessing.hpp"
#include "ftaed/svg.hpp"
#include "ftaed/synthetic.hpp"
#include "ftaed/training.hpp"

namespace fs = std::filesystem;
using namespace ftaed;

namespace {

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? default_pipeline_config() : load_pipeline_config(path);
}

SynthConfig synth_config_of(const PipelineConfig& pc) {
  SynthConfig sc;
  sc.n_milemarkers = pc.synth_n_milemarkers;
  sc.n_lanes = pc.synth_n_lanes;
  sc.n_days = pc.synth_n_days;
  sc.steps_per_day = pc.synth_steps_per_day;
  sc.free_speed = pc.synth_free_speed;
  sc.congested_speed = pc.synth_congested_speed;
  sc.rush_start_step = pc.synth_rush_start_step;
  sc.rush_end_step = pc.synth_rush_end_step;
  sc.wave_speed = pc.synth_wave_speed;
  sc.noise_std = pc.synth_noise_std;
  sc.seed = pc.seed;
  sc.milemarker_start = pc.synth_milemarker_start;
  sc.milemarker_spacing = pc.synth_milemarker_spacing;
  return sc;
}

AsmParams asm_params_of(const PipelineConfig& pc) {
  AsmParams p;
  p.sigma_miles = pc.impute_sigma_miles;
  p.tau_seconds = pc.impute_tau_seconds;
  p.c_free_mph = pc.impute_c_free;
  p.c_cong_mph = pc.impute_c_cong;
  p.v_crit_mph = pc.impute_v_crit;
  p.delta_v_mph = pc.impute_delta_v;
  p.neighborhood_miles = pc.impute_neighborhood_miles;
  p.neighborhood_seconds = pc.impute_neighborhood_seconds;
  return p;
}

MaskOptions mask_options_of(const PipelineConfig& pc) {
  MaskOptions m;
  m.crash_pre_seconds = pc.mask_crash_pre_seconds;
  m.post_seconds = pc.mask_post_seconds;
  m.include_manual_anomalies = pc.mask_include_manual_anomalies;
  return m;
}

SplitSpec split_spec_of(const PipelineConfig& pc) {
  return SplitSpec{pc.split_train_days, pc.split_val_days, pc.split_test_days};
}

LabelOptions label_options_of(const PipelineConfig& pc) {
  LabelOptions l;
  l.pre_report_seconds = pc.label_pre_report_seconds;
  l.post_report_seconds = pc.label_post_report_seconds;
  l.manual_post_seconds = pc.label_manual_post_seconds;
  l.exclude_manual = pc.label_exclude_manual;
  return l;
}

MatchOptions match_options_of(const PipelineConfig& pc) {
  return MatchOptions{pc.match_pre_seconds, pc.match_post_seconds};
}

ModelConfig model_config_of(const std::string& name, const PipelineConfig& pc) {
  ModelConfig mc = ModelConfig::defaults_for(parse_model_kind(name));
  if (pc.model_dropout >= 0.0) mc.dropout = pc.model_dropout;
  if (pc.model_hidden_dim > 0) mc.hidden_dim = pc.model_hidden_dim;
  if (pc.model_latent_dim > 0) mc.latent_dim = pc.model_latent_dim;
  if (pc.model_learning_rate > 0.0) mc.learning_rate = pc.model_learning_rate;
  if (pc.model_n_layers > 0) mc.n_layers = pc.model_n_layers;
  if (mc.is_stg() && pc.model_window_k > 0) mc.timesteps = pc.model_window_k;
  if (mc.architecture == ModelKind::StgGat && pc.model_heads > 0)
    mc.gat_heads = pc.model_heads;
  validate_config(mc);
  return mc;
}

// Deterministic incident schedule: spread over days and lanes, epicenters in
// the middle of the corridor, report delays uniform in the configured range.
std::vector<InjectedIncident> plan_incidents(const SensorGrid& grid,
                                             const SynthConfig& sc,
                                             const PipelineConfig& pc) {
  std::vector<InjectedIncident> out;
  if (pc.synth_n_incidents <= 0) return out;
  std::mt19937_64 rng(pc.seed * 0x9e3779b97f4a7c15ull + 17);
  const int margin = std::max(1, sc.steps_per_day / 8);
  std::uniform_int_distribution<int> step_dist(
      margin, std::max(margin, sc.steps_per_day - 2 * margin));
  std::uniform_int_distribution<int> mm_dist(sc.n_milemarkers / 6,
                                             sc.n_milemarkers - 1 -
                                                 sc.n_milemarkers / 6);
  std::uniform_int_distribution<int> delay_dist(
      pc.synth_report_delay_min_seconds, pc.synth_report_delay_max_seconds);
  for (int i = 0; i < pc.synth_n_incidents; ++i) {
    InjectedIncident inc;
    const int day = i % sc.n_days;
    inc.true_time = grid.times[day * sc.steps_per_day + step_dist(rng)];
    inc.epicenter_milemarker = grid.milemarkers[mm_dist(rng)];
    inc.epicenter_lane = 1 + i % sc.n_lanes;
    inc.severity = pc.synth_incident_severity;
    inc.duration_seconds = pc.synth_incident_duration_seconds;
    inc.backprop_speed = sc.wave_speed;
    inc.report_delay_seconds = delay_dist(rng);
    out.push_back(inc);
  }
  return out;
}

void require_file(const std::string& path, ErrorKind kind, const char* hint) {
  if (!fs::exists(path))
    fail(kind, path + " not found; " + hint);
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  PipelineConfig pc = load_config(config_path);
  SynthConfig sc = synth_config_of(pc);
  Scenario nominal = generate_nominal(sc);
  Scenario final_sc =
      inject_incidents(nominal.grid, sc, plan_incidents(nominal.grid, sc, pc));
  fs::create_directories(out_dir);
  write_sensor_csv(out_dir + "/sensors.csv", grid_to_readings(final_sc.grid));
  write_incident_csv(out_dir + "/incidents.csv", final_sc.log);
  write_ground_truth_csv(out_dir + "/ground_truth.csv", final_sc.truth);
  std::printf("wrote %s/{sensors,incidents,ground_truth}.csv (%d days, %d nodes, %zu incidents)\n",
              out_dir.c_str(), final_sc.grid.n_days(), final_sc.grid.n_nodes(),
              final_sc.truth.size());
  return 0;
}

int cmd_ingest(const std::string& sensors, double window_start,
               double window_end, int utc_offset, const std::string& out) {
  DayWindow window{window_start, window_end, utc_offset};
  AssembleReport report;
  SensorGrid grid = assemble_grid(parse_sensor_csv(sensors), window, &report);
  write_grid(out, grid);
  std::printf("wrote %s: %d days x %d steps, %d nodes, %zu duplicate cells, %zu readings outside window\n",
              out.c_str(), grid.n_days(), grid.steps_per_day, grid.n_nodes(),
              report.duplicate_cells, report.outside_window);
  return 0;
}

int cmd_impute(const std::string& config_path, const std::string& in,
               const std::string& out) {
  PipelineConfig pc = load_config(config_path);
  SensorGrid grid = read_grid(in);
  ImputeReport report;
  SensorGrid filled = impute_grid(grid, asm_params_of(pc), pc.impute_space_cells,
                                  pc.impute_time_steps, &report);
  write_grid(out, filled);
  std::printf("wrote %s: %zu cells imputed, %zu via fallback means\n",
              out.c_str(), report.n_imputed, report.n_fallback);
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& model_name,
              const std::string& grid_path, const std::string& incidents_path,
              const std::string& out_dir) {
  PipelineConfig pc = load_config(config_path);
  SensorGrid grid = read_grid(grid_path);
  IncidentLog log;
  if (!incidents_path.empty()) log = parse_incident_csv(incidents_path);

  DatasetSplit split = split_days(grid, split_spec_of(pc));
  TrainingMask mask = build_training_mask(log, grid, split.excluded_days(),
                                          mask_options_of(pc));
  auto train_use = training_time_mask(grid, mask, split);
  auto val_use = validation_time_mask(grid, mask, split);

  ModelConfig mc = model_config_of(model_name, pc);
  AutoencoderModel model = init_model(
      mc, build_static_topology(grid.n_milemarkers(), grid.n_lanes), pc.seed);
  TrainConfig tc;
  tc.batch_size = pc.train_batch_size;
  tc.max_epochs = pc.train_max_epochs;
  tc.patience = pc.train_patience;
  tc.seed = pc.seed;
  if (pc.model_learning_rate > 0.0) tc.learning_rate = pc.model_learning_rate;
  TrainResult result = train_model(model, grid, train_use, val_use, tc);

  fs::create_directories(out_dir);
  save_model(out_dir + "/model.ftm", result.model);
  write_loss_history(out_dir + "/loss_history.csv", result.history);
  save_normalization(out_dir + "/normalization.csv", result.stats);
  std::printf("wrote %s/{model.ftm,loss_history.csv,normalization.csv}; best epoch %d val mse %.6f\n",
              out_dir.c_str(), result.best_epoch, result.best_val_mse);
  return 0;
}

int cmd_calibrate(const std::string& config_path, const std::string& model_path,
                  const std::string& norm_path, const std::string& grid_path,
                  const std::string& incidents_path, const std::string& out) {
  PipelineConfig pc = load_config(config_path);
  AutoencoderModel model = load_model(model_path);
  NormalizationStats stats = load_normalization(norm_path);
  SensorGrid grid = read_grid(grid_path);
  IncidentLog log;
  if (!incidents_path.empty()) log = parse_incident_csv(incidents_path);

  DatasetSplit split = split_days(grid, split_spec_of(pc));
  TrainingMask mask = build_training_mask(log, grid, split.excluded_days(),
                                          mask_options_of(pc));
  auto train_use = training_time_mask(grid, mask, split);
  ThresholdVector tv = calibrate_thresholds(model, grid, stats, train_use);
  save_thresholds(out, tv);
  double mx = 0.0;
  for (double v : tv.T) mx = std::max(mx, v);
  std::printf("wrote %s: %zu per-node thresholds, max %.6g\n", out.c_str(),
              tv.T.size(), mx);
  return 0;
}

int cmd_detect(const std::string& model_path, const std::string& norm_path,
               const std::string& thresholds_path, const std::string& grid_path,
               double alpha, const std::string& out) {
  require_file(thresholds_path, ErrorKind::MissingThreshold,
               "run `ftaed calibrate` first");
  AutoencoderModel model = load_model(model_path);
  NormalizationStats stats = load_normalization(norm_path);
  ThresholdVector tv = load_thresholds(thresholds_path);
  SensorGrid grid = read_grid(grid_path);
  SensorGrid norm = apply_normalization(grid, stats);
  DetectionResult det = detect_anomalies(model, norm, tv, alpha);
  write_detections_csv(out, det, grid, tv);
  std::size_t n_flags = 0;
  for (std::size_t t = 0; t < det.times.size(); ++t)
    if (det.evaluated[t])
      for (int i = 0; i < det.n_nodes; ++i) n_flags += det.flags[t][i];
  std::printf("wrote %s: %zu node-time flags at alpha %.4g\n", out.c_str(),
              n_flags, alpha);
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& model_path,
                 const std::string& norm_path,
                 const std::string& thresholds_path,
                 const std::string& grid_path,
                 const std::string& incidents_path, double target_fpr,
                 const std::string& out_dir) {
  PipelineConfig pc = load_config(config_path);
  require_file(thresholds_path, ErrorKind::MissingThreshold,
               "run `ftaed calibrate` first");
  AutoencoderModel model = load_model(model_path);
  NormalizationStats stats = load_normalization(norm_path);
  ThresholdVector tv = load_thresholds(thresholds_path);
  SensorGrid grid = read_grid(grid_path);
  IncidentLog log = parse_incident_csv(incidents_path);
  SensorGrid norm = apply_normalization(grid, stats);

  DetectionResult det = detect_anomalies(model, norm, tv, 1.0);
  std::vector<double> scores = per_time_scores(det, tv);
  std::vector<TimeLabel> labels =
      label_timesteps(log, det.times, label_options_of(pc));

  DatasetSplit split = split_days(grid, split_spec_of(pc));
  std::vector<std::uint8_t> include(det.times.size(), 0);
  for (std::size_t t = 0; t < det.times.size(); ++t)
    include[t] = det.evaluated[t] &&
                 split.roles[grid.day_of_time(static_cast<int>(t))] ==
                     DayRole::Validation;

  RocCurve curve = roc_auc(scores, labels, include);
  AlphaPick pick = pick_alpha_for_fpr(curve, target_fpr);
  Confusion conf = confusion_at(scores, labels, include, pick.alpha);

  DetectionResult det_at = detect_anomalies(model, norm, tv, pick.alpha);
  EventEvaluation events =
      evaluate_events(det_at, log, match_options_of(pc));

  TrainingMask mask = build_training_mask(log, grid, split.excluded_days(),
                                          mask_options_of(pc));
  auto val_use = validation_time_mask(grid, mask, split);
  const int k = model.config.is_stg() ? model.config.timesteps : 0;
  std::vector<int> val_ticks = usable_window_ticks(norm, val_use, k);
  double recon =
      val_ticks.empty()
          ? 0.0
          : mean_recon_mse(reconstruction_errors(model, norm, val_ticks));

  MetricsReport report;
  report.reporting_delay_mean = events.rrd_mean;
  report.reporting_delay_std = events.rrd_std;
  report.miss_pct = events.miss_pct;
  report.recon_mse = recon;
  report.auc = curve.auc;
  report.fpr_achieved = pick.fpr_achieved;
  report.fdr_achieved = conf.fdr();
  report.alpha = pick.alpha;

  fs::create_directories(out_dir);
  write_metrics_report(out_dir + "/metrics_report.txt", report);
  write_detections_csv(out_dir + "/detections.csv", det_at, grid, tv);
  {
    std::ofstream roc(out_dir + "/roc.csv", std::ios::binary);
    if (!roc) fail(ErrorKind::IoError, "cannot write " + out_dir + "/roc.csv");
    roc << "alpha,fpr,tpr\n";
    for (const auto& p : curve.points)
      roc << detail::format_double(p.alpha) << ','
          << detail::format_double(p.fpr) << ','
          << detail::format_double(p.tpr) << '\n';
  }
  std::printf("wrote %s/{metrics_report.txt,detections.csv,roc.csv}\n",
              out_dir.c_str());
  std::printf("alpha=%.6g fpr=%.4f auc=%.4f miss=%.1f%% rrd=%.2f min\n",
              pick.alpha, pick.fpr_achieved, curve.auc, events.miss_pct,
              events.rrd_mean);
  return 0;
}

int cmd_heatmap(const std::string& grid_path, int lane, int day,
                const std::string& detections_path, const std::string& out) {
  SensorGrid grid = read_grid(grid_path);
  std::vector<std::pair<int, int>> flags;
  if (!detections_path.empty()) {
    for (const auto& row : read_detections_csv(detections_path)) {
      auto it = std::lower_bound(grid.times.begin(), grid.times.end(),
                                 row.time_unix);
      if (it == grid.times.end() || *it != row.time_unix) continue;
      flags.emplace_back(static_cast<int>(it - grid.times.begin()),
                         row.node_id);
    }
  }
  HeatmapOptions options;
  if (day >= 0) {
    if (day >= grid.n_days())
      fail(ErrorKind::OutOfBounds, "day " + std::to_string(day) + " of " +
                                       std::to_string(grid.n_days()));
    options.t_begin = day * grid.steps_per_day;
    options.t_end = options.t_begin + grid.steps_per_day;
  }
  write_heatmap_svg(out, grid, lane, flags, options);
  std::printf("wrote %s (%zu flag markers)\n", out.c_str(), flags.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lane-level freeway traffic anomaly detection pipeline"};
  app.require_subcommand(1);
  std::string config_path;

  auto* synth = app.add_subcommand("synth", "generate a synthetic scenario as CSV");
  std::string synth_out = "synth_out";
  synth->add_option("--config", config_path, "pipeline config file")
      ->capture_default_str();
  synth->add_option("--out-dir", synth_out, "output directory")
      ->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "validate sensor CSV into a grid archive");
  std::string ingest_sensors, ingest_out = "grid.bin";
  double win_start = 4.0, win_end = 12.0;
  int utc_offset = 0;
  ingest->add_option("--sensors", ingest_sensors, "sensor CSV path")->required();
  ingest->add_option("--window-start", win_start, "day window start hour")
      ->capture_default_str();
  ingest->add_option("--window-end", win_end, "day window end hour")
      ->capture_default_str();
  ingest->add_option("--utc-offset", utc_offset, "UTC offset hours of local time")
      ->capture_default_str();
  ingest->add_option("--out", ingest_out, "grid archive path")
      ->capture_default_str();

  auto* impute = app.add_subcommand("impute", "fill missing cells in a grid archive");
  std::string impute_in, impute_out = "grid_imputed.bin";
  impute->add_option("--config", config_path, "pipeline config file")
      ->capture_default_str();
  impute->add_option("--in", impute_in, "input grid archive")->required();
  impute->add_option("--out", impute_out, "output grid archive")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "train an autoencoder on nominal traffic");
  std::string train_model_name = "gcn", train_grid, train_incidents,
              train_out = "train_out";
  train->add_option("--config", config_path, "pipeline config file")
      ->capture_default_str();
  train->add_option("--model", train_model_name,
                    "architecture: mlp|gcn|stg_gcn|stg_gat|stg_rgcn")
      ->capture_default_str();
  train->add_option("--grid", train_grid, "imputed grid archive")->required();
  train->add_option("--incidents", train_incidents,
                    "incident CSV for anomaly masking")
      ->capture_default_str();
  train->add_option("--out-dir", train_out, "output directory")
      ->capture_default_str();

  auto* calibrate = app.add_subcommand("calibrate", "per-node max-error thresholds");
  std::string cal_model = "train_out/model.ftm",
              cal_norm = "train_out/normalization.csv", cal_grid,
              cal_incidents, cal_out = "thresholds.csv";
  calibrate->add_option("--config", config_path, "pipeline config file")
      ->capture_default_str();
  calibrate->add_option("--model", cal_model, "model checkpoint")
      ->capture_default_str();
  calibrate->add_option("--norm", cal_norm, "normalization stats CSV")
      ->capture_default_str();
  calibrate->add_option("--grid", cal_grid, "imputed grid archive")->required();
  calibrate->add_option("--incidents", cal_incidents,
                        "incident CSV for anomaly masking")
      ->capture_default_str();
  calibrate->add_option("--out", cal_out, "thresholds CSV path")
      ->capture_default_str();

  auto* detect = app.add_subcommand("detect", "flag anomalies at a threshold multiplier");
  std::string det_model = "train_out/model.ftm",
              det_norm = "train_out/normalization.csv",
              det_thresholds = "thresholds.csv", det_grid,
              det_out = "detections.csv";
  double det_alpha = 1.0;
  detect->add_option("--model", det_model, "model checkpoint")
      ->capture_default_str();
  detect->add_option("--norm", det_norm, "normalization stats CSV")
      ->capture_default_str();
  detect->add_option("--thresholds", det_thresholds, "calibrated thresholds CSV")
      ->capture_default_str();
  detect->add_option("--grid", det_grid, "imputed grid archive")->required();
  detect->add_option("--alpha", det_alpha, "threshold multiplier")
      ->capture_default_str();
  detect->add_option("--out", det_out, "detections CSV path")
      ->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "ROC, alpha selection, and event metrics");
  std::string eval_model = "train_out/model.ftm",
              eval_norm = "train_out/normalization.csv",
              eval_thresholds = "thresholds.csv", eval_grid, eval_incidents,
              eval_out = "eval_out";
  double target_fpr = 0.05;
  evaluate->add_option("--config", config_path, "pipeline config file")
      ->capture_default_str();
  evaluate->add_option("--model", eval_model, "model checkpoint")
      ->capture_default_str();
  evaluate->add_option("--norm", eval_norm, "normalization stats CSV")
      ->capture_default_str();
  evaluate->add_option("--thresholds", eval_thresholds,
                       "calibrated thresholds CSV")
      ->capture_default_str();
  evaluate->add_option("--grid", eval_grid, "imputed grid archive")->required();
  evaluate->add_option("--incidents", eval_incidents, "incident CSV")
      ->required();
  evaluate->add_option("--target-fpr", target_fpr,
                       "validation false-positive-rate budget")
      ->capture_default_str();
  evaluate->add_option("--out-dir", eval_out, "output directory")
      ->capture_default_str();

  auto* heatmap = app.add_subcommand("heatmap", "time-space SVG speed diagram");
  std::string hm_grid, hm_detections, hm_out = "heatmap.svg";
  int hm_lane = 1, hm_day = -1;
  heatmap->add_option("--grid", hm_grid, "grid archive")->required();
  heatmap->add_option("--lane", hm_lane, "lane to render")
      ->capture_default_str();
  heatmap->add_option("--day", hm_day, "restrict to one day index (-1 = all)")
      ->capture_default_str();
  heatmap->add_option("--detections", hm_detections,
                      "detections CSV to overlay")
      ->capture_default_str();
  heatmap->add_option("--out", hm_out, "SVG path")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(config_path, synth_out);
    if (ingest->parsed())
      return cmd_ingest(ingest_sensors, win_start, win_end, utc_offset,
                        ingest_out);
    if (impute->parsed()) return cmd_impute(config_path, impute_in, impute_out);
    if (train->parsed())
      return cmd_train(config_path, train_model_name, train_grid,
                       train_incidents, train_out);
    if (calibrate->parsed())
      return cmd_calibrate(config_path, cal_model, cal_norm, cal_grid,
                           cal_incidents, cal_out);
    if (detect->parsed())
      return cmd_detect(det_model, det_norm, det_thresholds, det_grid,
                        det_alpha, det_out);
    if (evaluate->parsed())
      return cmd_evaluate(config_path, eval_model, eval_norm, eval_thresholds,
                          eval_grid, eval_incidents, target_fpr, eval_out);
    if (heatmap->parsed())
      return cmd_heatmap(hm_grid, hm_lane, hm_day, hm_detections, hm_out);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
