// Command-line front end: graph building, dataset preparation, synthetic data,
// training, evaluation, forecasting and the ablation sweeps.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "stgcrnn/data.hpp"
#include "stgcrnn/errors.hpp"
#include "stgcrnn/graph.hpp"
#include "stgcrnn/metrics.hpp"
#include "stgcrnn/model.hpp"
#include "stgcrnn/rng.hpp"
#include "stgcrnn/runconfig.hpp"
#include "stgcrnn/train.hpp"

namespace fs = std::filesystem;
using namespace stgcrnn;

namespace {

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// Append-only run directories: never reuse an existing one.
fs::path make_run_dir(const fs::path& parent, std::uint64_t seed) {
  fs::create_directories(parent);
  const std::string base = utc_stamp() + "-seed" + std::to_string(seed);
  fs::path dir = parent / base;
  for (int k = 1; fs::exists(dir); ++k) dir = parent / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

graph::StationGraph load_graph_for(const RunConfig& config) {
  if (config.graph.empty()) throw ConfigError("graph: no graph file configured");
  graph::StationGraph sg = graph::load_graph(config.graph);
  if (!sg.dist_km.empty()) {
    // distances available: the adjacency is rebuilt under the configured epsilon
    sg.W = graph::build_adjacency(sg.dist_km, config.epsilon, sg.node_ids);
  } else if (sg.W.empty()) {
    throw IoError(config.graph + ": graph has neither W nor distances");
  }
  return sg;
}

struct PreparedData {
  graph::StationGraph graph;
  data::NormalizationStats stats;
  data::WindowSet fit_windows;
  data::WindowSet valid_windows;
  data::WindowSet test_windows;
  std::size_t input_dim = 0;
  std::vector<data::FeatureInfo> features;
};

PreparedData prepare(const RunConfig& config) {
  PreparedData out;
  out.graph = load_graph_for(config);

  if (config.dataset.empty()) throw ConfigError("dataset: no dataset file configured");
  const auto seq = data::load_dataset(config.dataset);
  if (seq.node_ids != out.graph.node_ids) {
    throw ConfigError("dataset/graph node sets differ; graph has " +
                      std::to_string(out.graph.num_nodes()) + " nodes, dataset has " +
                      std::to_string(seq.num_nodes()));
  }
  out.input_dim = seq.num_features();
  out.features = seq.features;

  std::int64_t boundary;
  if (!config.split_boundary.empty()) {
    boundary = data::parse_timestamp(config.split_boundary);
  } else {
    const auto cut = static_cast<std::size_t>(static_cast<double>(seq.steps()) *
                                              (1.0 - config.test_fraction));
    if (cut == 0 || cut > seq.steps())
      throw ConfigError("test_fraction: splits must both be non-empty");
    boundary = cut == seq.steps() ? seq.timestamps.back() + data::kHourSeconds
                                  : seq.timestamps[cut];
  }
  const auto [train_seq, test_seq] = data::split_by_time(seq, boundary);
  if (train_seq.steps() == 0) throw ConfigError("split: empty training region");

  out.stats = data::compute_stats(train_seq, config.normalization_mode());
  const auto train_norm = data::normalize(train_seq, out.stats);

  data::WindowSpec spec;
  spec.history = config.history;
  spec.horizon = config.horizon;
  spec.stride = config.stride;
  spec.target_feature = config.target_feature;
  const auto all = data::make_windows(train_norm, spec);
  if (all.size() < 2)
    throw ConfigError("training region too short for history+horizon windows");

  std::size_t n_valid = static_cast<std::size_t>(
      std::llround(static_cast<double>(all.size()) * config.validation_fraction));
  n_valid = std::max<std::size_t>(1, std::min(n_valid, all.size() - 1));
  out.fit_windows = all;
  out.valid_windows = all;
  out.fit_windows.starts.assign(all.starts.begin(), all.starts.end() - n_valid);
  out.valid_windows.starts.assign(all.starts.end() - n_valid, all.starts.end());

  if (test_seq.steps() > 0) {
    const auto test_norm = data::normalize(test_seq, out.stats);
    data::WindowSpec test_spec = spec;
    test_spec.stride = 1;
    out.test_windows = data::make_windows(test_norm, test_spec);
  }
  return out;
}

std::string checkpoint_extra(const RunConfig& config, const PreparedData& prep) {
  nlohmann::json extra;
  extra["stats"] = nlohmann::json::parse(prep.stats.to_json());
  extra["target_feature"] = config.target_feature;
  extra["units"] = config.units;
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : prep.features)
    feats.push_back({{"name", f.name}, {"group", data::to_string(f.group)}});
  extra["features"] = std::move(feats);
  return extra.dump();
}

struct TrainArtifacts {
  fs::path run_dir;
  train::FitResult result;
  metrics::EvalReport test_report;
  metrics::PersistenceBaseline baseline;
  bool has_test = false;
};

TrainArtifacts run_training(const RunConfig& config, const fs::path& out_parent,
                            bool quiet = false) {
  config.validate();
  if (config.max_epochs == 0) throw ConfigError("max_epochs: nothing to train");

  PreparedData prep = prepare(config);
  auto model = model::make_model(config.model_config(prep.input_dim), prep.graph.W,
                                 prep.graph.node_ids, config.seed);

  TrainArtifacts artifacts;
  artifacts.run_dir = make_run_dir(out_parent, config.seed);
  write_text(artifacts.run_dir / "resolved_config.json", config.to_json() + "\n");

  std::ofstream history(artifacts.run_dir / "history.jsonl", std::ios::binary);
  if (!history) throw IoError("cannot write history.jsonl");

  train::FitOptions options;
  options.checkpoint_path = artifacts.run_dir / "checkpoint.json";
  options.checkpoint_extra_json = checkpoint_extra(config, prep);
  options.on_epoch = [&](const train::EpochRecord& rec) {
    nlohmann::json line;
    line["epoch"] = rec.epoch;
    line["train_loss"] = rec.train_loss;
    line["valid_rmse"] = rec.valid_rmse;
    line["lr"] = rec.lr;
    line["seconds"] = rec.seconds;
    history << line.dump() << "\n";
    history.flush();
    if (!quiet)
      std::cout << "epoch " << rec.epoch << "  train " << rec.train_loss << "  valid "
                << rec.valid_rmse << "  lr " << rec.lr << "  (" << rec.seconds << " s)\n";
  };

  artifacts.result =
      train::fit(model, prep.fit_windows, prep.valid_windows, config.train_config(), options);

  nlohmann::json summary;
  summary["best_epoch"] = artifacts.result.best_epoch;
  summary["best_valid_rmse"] = artifacts.result.best_valid_rmse;
  summary["epochs_run"] = artifacts.result.history.size();
  summary["early_stopped"] = artifacts.result.early_stopped;
  summary["parameters"] = model::count_parameters(model);

  if (prep.test_windows.size() > 0) {
    artifacts.has_test = true;
    artifacts.test_report =
        metrics::evaluate(model, prep.test_windows, prep.stats, false, config.batch_size);
    artifacts.test_report.units = config.units;
    artifacts.baseline = metrics::persistence_rmse(prep.test_windows, prep.stats);
    summary["test"] = nlohmann::json::parse(artifacts.test_report.to_json());
    summary["persistence_overall_rmse"] = artifacts.baseline.overall_rmse;
  }
  write_text(artifacts.run_dir / "metrics.json", summary.dump(2) + "\n");

  if (!quiet) {
    std::cout << "run dir: " << artifacts.run_dir.string() << "\n";
    std::cout << "best validation RMSE " << artifacts.result.best_valid_rmse << " at epoch "
              << artifacts.result.best_epoch << "\n";
    if (artifacts.has_test)
      std::cout << "test RMSE " << artifacts.test_report.overall_rmse << " (persistence "
                << artifacts.baseline.overall_rmse << ")\n";
  }
  return artifacts;
}

RunConfig load_config_arg(const std::string& config_path, std::uint64_t seed_override,
                          bool has_seed) {
  RunConfig config =
      config_path.empty() ? RunConfig{} : load_run_config(config_path, /*apply_env=*/true);
  if (config_path.empty()) apply_env_overrides(config);
  if (has_seed) config.seed = seed_override;
  return config;
}

// ---- commands -------------------------------------------------------------------

int cmd_build_graph(const std::string& stations, const std::string& distances,
                    double epsilon, const std::string& out_path) {
  graph::StationGraph sg = !stations.empty() ? graph::stations_from_csv(stations)
                                             : graph::distances_from_csv(distances);
  sg.W = graph::build_adjacency(sg.dist_km, epsilon, sg.node_ids);
  graph::save_graph(sg, out_path);

  std::size_t edges = 0;
  double min_deg = std::numeric_limits<double>::infinity(), max_deg = 0.0, sum_deg = 0.0;
  for (std::size_t i = 0; i < sg.num_nodes(); ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < sg.num_nodes(); ++j) {
      deg += sg.W(i, j);
      if (j > i && sg.W(i, j) > 0.0) ++edges;
    }
    min_deg = std::min(min_deg, deg);
    max_deg = std::max(max_deg, deg);
    sum_deg += deg;
  }
  std::cout << "graph: " << sg.num_nodes() << " nodes, " << edges
            << " undirected edges (epsilon " << epsilon << ")\n";
  std::cout << "degree min/mean/max: " << min_deg << " / "
            << sum_deg / static_cast<double>(sg.num_nodes()) << " / " << max_deg << "\n";
  if (sg.num_nodes() == 2) std::cout << "edge weight " << sg.W(0, 1) << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_synth(const std::string& graph_path, std::size_t nodes, double extent_km,
              double epsilon, std::size_t steps, std::uint64_t seed,
              const data::SynthParams& params, const std::string& out_graph,
              const std::string& out_data) {
  graph::StationGraph sg;
  if (!graph_path.empty()) {
    sg = graph::load_graph(graph_path);
    if (sg.W.empty()) {
      if (sg.dist_km.empty()) throw IoError(graph_path + ": graph has no W or distances");
      sg.W = graph::build_adjacency(sg.dist_km, epsilon, sg.node_ids);
    }
  } else {
    // random station layout in a square box
    Rng rng(seed ^ 0xa5a5a5a5ULL);
    for (std::size_t i = 0; i < nodes; ++i) {
      sg.node_ids.push_back("s" + std::to_string(i));
      sg.coords_m.push_back(
          {rng.uniform(0.0, extent_km * 1000.0), rng.uniform(0.0, extent_km * 1000.0)});
    }
    sg.dist_km = Mat(nodes, nodes);
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t j = i + 1; j < nodes; ++j) {
        const double km = std::hypot(sg.coords_m[i][0] - sg.coords_m[j][0],
                                     sg.coords_m[i][1] - sg.coords_m[j][1]) /
                          1000.0;
        sg.dist_km(i, j) = km;
        sg.dist_km(j, i) = km;
      }
    sg.W = graph::build_adjacency(sg.dist_km, epsilon, sg.node_ids);
  }

  const auto seq = data::synthetic_generate(sg.W, steps, seed, params);
  if (!out_graph.empty()) {
    graph::save_graph(sg, out_graph);
    std::cout << "wrote " << out_graph << "\n";
  }
  data::save_dataset(seq, out_data);
  std::cout << "wrote " << out_data << " (" << seq.steps() << " steps, " << seq.num_nodes()
            << " nodes, " << seq.num_features() << " features)\n";
  return 0;
}

int cmd_prepare_data(const std::string& graph_path,
                     const std::vector<std::pair<data::FactorGroup, std::string>>& csvs,
                     const std::string& out_path) {
  const auto sg = graph::load_graph(graph_path);
  std::vector<data::GraphSignalSequence> groups;
  for (const auto& [group, path] : csvs)
    groups.push_back(data::factor_from_csv(path, group, sg.node_ids));
  const auto fused = data::fuse_factors(std::move(groups));
  data::save_dataset(fused, out_path);
  std::cout << "wrote " << out_path << " (" << fused.steps() << " steps, "
            << fused.num_features() << " features)\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             bool with_sp, std::size_t horizon, const std::string& out_dir) {
  auto cp = model::load_checkpoint(checkpoint_path);
  if (cp.extra_json.empty())
    throw IoError(checkpoint_path + ": checkpoint carries no evaluation metadata");
  const nlohmann::json extra = nlohmann::json::parse(cp.extra_json);
  const auto stats = data::NormalizationStats::from_json(extra.at("stats").dump());
  const std::string target = extra.at("target_feature").get<std::string>();

  const auto seq = data::load_dataset(dataset_path);
  if (seq.node_ids != cp.model.node_ids)
    throw ConfigError("dataset node set does not match the checkpoint graph");
  if (extra.contains("features")) {
    bool mismatch = seq.features.size() != extra.at("features").size();
    for (std::size_t f = 0; !mismatch && f < seq.features.size(); ++f)
      mismatch =
          seq.features[f].name != extra.at("features")[f].at("name").get<std::string>();
    if (mismatch) {
      std::string expected, found;
      for (const auto& fj : extra.at("features"))
        expected += fj.at("name").get<std::string>() + " ";
      for (const auto& fi : seq.features) found += fi.name + " ";
      throw ConfigError("feature schema mismatch: checkpoint expects [" + expected +
                        "], dataset has [" + found + "]");
    }
  }

  const auto norm = data::normalize(seq, stats);
  data::WindowSpec spec;
  spec.history = cp.model.config.history;
  spec.horizon = horizon > 0 ? horizon : cp.model.config.horizon;
  spec.stride = 1;
  spec.target_feature = target;
  const auto windows = data::make_windows(norm, spec);
  if (windows.size() == 0) throw ConfigError("dataset too short for evaluation windows");

  auto report = metrics::evaluate(cp.model, windows, stats, with_sp);
  if (extra.contains("units")) report.units = extra.at("units").get<std::string>();

  std::cout << "windows: " << windows.size() << ", span "
            << data::format_timestamp(seq.timestamps.front()) << " .. "
            << data::format_timestamp(seq.timestamps.back()) << "\n";
  std::cout << "horizon  RMSE (" << report.units << ")\n";
  for (std::size_t h = 0; h < report.per_horizon_rmse.size(); ++h)
    std::cout << "  " << h + 1 << "  " << report.per_horizon_rmse[h] << "\n";
  std::cout << "overall RMSE " << report.overall_rmse << ", R2 " << report.r2 << "\n";
  if (report.sp_rmse) std::cout << "spRMSE " << *report.sp_rmse << "\n";

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "report.json", report.to_json() + "\n");
    std::string csv = "horizon,rmse\r\n";
    for (std::size_t h = 0; h < report.per_horizon_rmse.size(); ++h)
      csv += std::to_string(h + 1) + "," + std::to_string(report.per_horizon_rmse[h]) +
             "\r\n";
    write_text(fs::path(out_dir) / "horizon_rmse.csv", csv);
    std::cout << "wrote " << out_dir << "/report.json and horizon_rmse.csv\n";
  }
  return 0;
}

int cmd_forecast(const std::string& checkpoint_path, const std::string& dataset_path,
                 std::size_t horizon, const std::string& at, const std::string& out_dir) {
  auto cp = model::load_checkpoint(checkpoint_path);
  const nlohmann::json extra = nlohmann::json::parse(cp.extra_json);
  const auto stats = data::NormalizationStats::from_json(extra.at("stats").dump());
  const std::string target = extra.at("target_feature").get<std::string>();

  auto seq = data::load_dataset(dataset_path);
  if (seq.node_ids != cp.model.node_ids)
    throw ConfigError("dataset node set does not match the checkpoint graph");
  const auto tf = seq.feature_index(target);
  if (!tf) throw ConfigError("target feature '" + target + "' not in dataset");

  const std::int64_t at_ts = at.empty() ? seq.timestamps.back() : data::parse_timestamp(at);
  std::size_t end = 0;
  while (end < seq.steps() && seq.timestamps[end] != at_ts) ++end;
  if (end == seq.steps()) throw ConfigError("timestamp " + at + " not in dataset");
  const std::size_t history = cp.model.config.history;
  if (end + 1 < history) throw ConfigError("not enough history before the chosen timestamp");

  const auto norm = data::impute_forward_fill(data::normalize(seq, stats));
  std::vector<ad::Tensor> inputs;
  const std::size_t nf = norm.num_features();
  const std::size_t nodes = norm.num_nodes();
  for (std::size_t t = end + 1 - history; t <= end; ++t) {
    std::vector<double> buf(nodes * nf);
    const double* src = norm.values.data() + norm.index(t, 0, 0);
    std::copy(src, src + nodes * nf, buf.data());
    inputs.push_back(ad::Tensor::leaf(nodes, nf, std::move(buf)));
  }
  const std::size_t steps = horizon > 0 ? horizon : cp.model.config.horizon;
  ad::Tape tape(false);
  const auto preds =
      model::forward(tape, cp.model, inputs, model::DecodeMode::autoregressive, {}, steps);

  std::string csv = "timestamp,station_id,prediction\r\n";
  for (std::size_t h = 0; h < preds.size(); ++h) {
    const std::int64_t ts = at_ts + static_cast<std::int64_t>(h + 1) * data::kHourSeconds;
    for (std::size_t n = 0; n < nodes; ++n)
      csv += data::format_timestamp(ts) + "," + seq.node_ids[n] + "," +
             std::to_string(stats.invert(preds[h].at(n, 0), *tf)) + "\r\n";
  }
  const fs::path out =
      out_dir.empty() ? fs::path("forecast.csv") : fs::path(out_dir) / "forecast.csv";
  if (!out_dir.empty()) fs::create_directories(out_dir);
  write_text(out, csv);
  std::cout << "wrote " << out.string() << " (" << steps << " hours from "
            << data::format_timestamp(at_ts) << ")\n";
  return 0;
}

int cmd_ablate(const RunConfig& base, const std::string& axis, const fs::path& out_dir) {
  struct Row {
    std::string setting;
    double valid_rmse = 0.0;
    double secs_per_epoch = 0.0;
    std::string status = "ok";
  };
  std::vector<std::pair<std::string, RunConfig>> runs;
  if (axis == "k") {
    for (int k = 1; k <= 4; ++k) {
      RunConfig c = base;
      c.order = k;
      runs.emplace_back("K=" + std::to_string(k), c);
    }
  } else if (axis == "epsilon") {
    for (const double eps : {0.1, 0.01, 0.0}) {
      RunConfig c = base;
      c.epsilon = eps;
      runs.emplace_back("epsilon=" + std::to_string(eps), c);
    }
  } else if (axis == "conv") {
    for (const std::string kind : {"spectral", "diffusion_rw", "diffusion_dual"}) {
      RunConfig c = base;
      c.conv_kind = kind;
      runs.emplace_back(kind, c);
    }
  } else {
    throw ConfigError("axis: expected k, epsilon or conv, got '" + axis + "'");
  }

  fs::create_directories(out_dir);
  std::vector<Row> rows;
  for (const auto& [name, config] : runs) {
    Row row;
    row.setting = name;
    std::cout << "== ablation run " << name << "\n";
    try {
      const auto artifacts = run_training(config, out_dir / "runs", /*quiet=*/true);
      row.valid_rmse = artifacts.result.best_valid_rmse;
      double secs = 0.0;
      for (const auto& r : artifacts.result.history) secs += r.seconds;
      row.secs_per_epoch = secs / static_cast<double>(artifacts.result.history.size());
      std::cout << "   valid RMSE " << row.valid_rmse << ", " << row.secs_per_epoch
                << " s/epoch\n";
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      std::cout << "   failed: " << e.what() << "\n";
    }
    rows.push_back(row);
  }

  const auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (const char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::string csv = "setting,valid_rmse,train_seconds_per_epoch,status\r\n";
  for (const auto& r : rows)
    csv += r.setting + "," + (r.status == "ok" ? std::to_string(r.valid_rmse) : "") + "," +
           (r.status == "ok" ? std::to_string(r.secs_per_epoch) : "") + "," +
           quote(r.status) + "\r\n";
  const fs::path out = out_dir / ("ablation_" + axis + ".csv");
  write_text(out, csv);
  std::cout << "wrote " << out.string() << "\n";
  for (const auto& r : rows)
    if (r.status != "ok") return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal graph-convolutional GRU forecasting for sensor networks"};
  app.require_subcommand(1);

  // build-graph
  auto* build = app.add_subcommand("build-graph", "Build the station graph from CSV");
  std::string stations_csv, distances_csv, graph_out = "graph.json";
  double epsilon = 0.01;
  build->add_option("--stations", stations_csv, "CSV station_id,x_meters,y_meters");
  build->add_option("--distances", distances_csv, "CSV from_id,to_id,km");
  build->add_option("--epsilon", epsilon, "adjacency weight threshold");
  build->add_option("--out", graph_out, "output graph JSON");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_graph, synth_out_graph, synth_out = "synthetic.jsonl";
  std::size_t synth_nodes = 20, synth_steps = 4000;
  std::uint64_t synth_seed = 0;
  double synth_extent = 30.0, synth_eps = 0.01;
  data::SynthParams synth_params;
  synth->add_option("--graph", synth_graph, "existing graph JSON (otherwise generated)");
  synth->add_option("--nodes", synth_nodes, "node count for a generated layout");
  synth->add_option("--extent-km", synth_extent, "box size for the generated layout");
  synth->add_option("--epsilon", synth_eps, "adjacency threshold for the generated graph");
  synth->add_option("--steps", synth_steps, "hourly steps");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--alpha", synth_params.alpha, "diffusion mixing coefficient");
  synth->add_option("--season-amp", synth_params.season_amp, "seasonal amplitude");
  synth->add_option("--noise-std", synth_params.noise_std, "innovation noise std");
  synth->add_option("--exo", synth_params.exo_channels, "exogenous channel count");
  synth->add_option("--out-graph", synth_out_graph, "where to write the generated graph");
  synth->add_option("--out", synth_out, "output dataset cache");

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "Fuse factor CSVs into a dataset cache");
  std::string prep_graph, prep_air, prep_meteo, prep_traffic, prep_speed, prep_external;
  std::string prep_out = "dataset.jsonl";
  prep->add_option("--graph", prep_graph, "graph JSON")->required();
  prep->add_option("--air", prep_air, "air-quality factor CSV")->required();
  prep->add_option("--meteo", prep_meteo, "meteorology factor CSV");
  prep->add_option("--traffic", prep_traffic, "traffic-volume factor CSV");
  prep->add_option("--speed", prep_speed, "driving-speed factor CSV");
  prep->add_option("--external", prep_external, "external air-pollution factor CSV");
  prep->add_option("--out", prep_out, "output dataset cache");

  // train
  auto* tr = app.add_subcommand("train", "Train a model from a run config");
  std::string train_config_path, train_out = "runs";
  std::uint64_t train_seed = 0;
  bool train_has_seed = false;
  tr->add_option("--config", train_config_path, "run config JSON")->required();
  tr->add_option("--seed", train_seed, "seed override")
      ->each([&train_has_seed](const std::string&) { train_has_seed = true; });
  tr->add_option("--out", train_out, "parent directory for run artifacts");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_out;
  std::size_t eval_horizon = 0;
  bool eval_sp = false;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint JSON")->required();
  ev->add_option("--dataset", eval_data, "dataset cache")->required();
  ev->add_flag("--sp-rmse", eval_sp, "also compute the leave-one-node-out spRMSE");
  ev->add_option("--horizon", eval_horizon, "override the forecast horizon");
  ev->add_option("--out", eval_out, "directory for report.json and horizon_rmse.csv");

  // forecast
  auto* fc = app.add_subcommand("forecast", "Forecast from the end of a dataset");
  std::string fc_ckpt, fc_data, fc_at, fc_out;
  std::size_t fc_horizon = 0;
  fc->add_option("--checkpoint", fc_ckpt, "checkpoint JSON")->required();
  fc->add_option("--dataset", fc_data, "dataset cache")->required();
  fc->add_option("--at", fc_at, "forecast origin timestamp (default: last)");
  fc->add_option("--horizon", fc_horizon, "hours ahead (default: model horizon)");
  fc->add_option("--out", fc_out, "output directory");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Sweep K, epsilon or the conv operator");
  std::string ab_config_path, ab_axis, ab_out = "ablation";
  std::uint64_t ab_seed = 0;
  bool ab_has_seed = false;
  ab->add_option("--config", ab_config_path, "base run config JSON")->required();
  ab->add_option("--axis", ab_axis, "k | epsilon | conv")->required();
  ab->add_option("--seed", ab_seed, "seed override")
      ->each([&ab_has_seed](const std::string&) { ab_has_seed = true; });
  ab->add_option("--out", ab_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      if (stations_csv.empty() == distances_csv.empty())
        throw ConfigError("build-graph: give exactly one of --stations or --distances");
      return cmd_build_graph(stations_csv, distances_csv, epsilon, graph_out);
    }
    if (synth->parsed())
      return cmd_synth(synth_graph, synth_nodes, synth_extent, synth_eps, synth_steps,
                       synth_seed, synth_params, synth_out_graph, synth_out);
    if (prep->parsed()) {
      std::vector<std::pair<data::FactorGroup, std::string>> csvs;
      csvs.emplace_back(data::FactorGroup::air, prep_air);
      if (!prep_meteo.empty()) csvs.emplace_back(data::FactorGroup::meteo, prep_meteo);
      if (!prep_traffic.empty())
        csvs.emplace_back(data::FactorGroup::traffic_volume, prep_traffic);
      if (!prep_speed.empty()) csvs.emplace_back(data::FactorGroup::speed, prep_speed);
      if (!prep_external.empty())
        csvs.emplace_back(data::FactorGroup::external, prep_external);
      return cmd_prepare_data(prep_graph, csvs, prep_out);
    }
    if (tr->parsed()) {
      const RunConfig config = load_config_arg(train_config_path, train_seed, train_has_seed);
      run_training(config, train_out);
      return 0;
    }
    if (ev->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_sp, eval_horizon, eval_out);
    if (fc->parsed()) return cmd_forecast(fc_ckpt, fc_data, fc_horizon, fc_at, fc_out);
    if (ab->parsed()) {
      const RunConfig config = load_config_arg(ab_config_path, ab_seed, ab_has_seed);
      return cmd_ablate(config, ab_axis, ab_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
