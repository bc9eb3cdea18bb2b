#include "stgcrnn/metrics.hpp"

#include <cmath>

#include <json.hpp>

#include "stgcrnn/errors.hpp"

namespace stgcrnn::metrics {

double rmse(std::span<const double> pred, std::span<const double> truth,
            std::span<const std::uint8_t> valid) {
  if (pred.size() != truth.size())
    throw ShapeError("rmse: prediction and truth sizes disagree: " +
                     std::to_string(pred.size()) + " vs " + std::to_string(truth.size()));
  if (!valid.empty() && valid.size() != pred.size())
    throw ShapeError("rmse: mask size disagrees with data");
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid.empty() && valid[i] == 0) continue;
    const double d = pred[i] - truth[i];
    sq += d * d;
    ++count;
  }
  if (count == 0) throw UndefinedMetricError("rmse: no valid entries");
  return std::sqrt(sq / static_cast<double>(count));
}

double r_squared(std::span<const double> pred, std::span<const double> truth,
                 std::span<const std::uint8_t> valid) {
  if (pred.size() != truth.size())
    throw ShapeError("r_squared: prediction and truth sizes disagree");
  if (!valid.empty() && valid.size() != pred.size())
    throw ShapeError("r_squared: mask size disagrees with data");

  double mean = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!valid.empty() && valid[i] == 0) continue;
    mean += truth[i];
    ++count;
  }
  if (count < 2) throw UndefinedMetricError("r_squared: fewer than two valid points");
  mean /= static_cast<double>(count);

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!valid.empty() && valid[i] == 0) continue;
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot <= 0.0) throw UndefinedMetricError("r_squared: truth variance is zero");
  return 1.0 - ss_res / ss_tot;
}

PersistenceBaseline persistence_rmse(const data::WindowSet& windows,
                                     const data::NormalizationStats& stats) {
  const std::size_t horizon = windows.spec.horizon;
  const std::size_t nodes = windows.num_nodes();
  const std::size_t tf = windows.target_feature;
  std::vector<double> sq(horizon, 0.0);
  std::vector<std::size_t> count(horizon, 0);
  const auto& seq = *windows.seq;
  for (const std::size_t s : windows.starts) {
    for (std::size_t n = 0; n < nodes; ++n) {
      const double last = stats.invert(seq.at(s + windows.spec.history - 1, n, tf), tf);
      for (std::size_t h = 0; h < horizon; ++h) {
        const double truth = stats.invert(seq.at(s + windows.spec.history + h, n, tf), tf);
        sq[h] += (last - truth) * (last - truth);
        ++count[h];
      }
    }
  }
  PersistenceBaseline base;
  double total_sq = 0.0;
  std::size_t total_count = 0;
  for (std::size_t h = 0; h < horizon; ++h) {
    if (count[h] == 0) throw UndefinedMetricError("persistence_rmse: no windows");
    base.per_horizon_rmse.push_back(std::sqrt(sq[h] / static_cast<double>(count[h])));
    total_sq += sq[h];
    total_count += count[h];
  }
  base.overall_rmse = std::sqrt(total_sq / static_cast<double>(total_count));
  return base;
}

namespace {

std::vector<std::size_t> batch_indices(std::size_t start, std::size_t end) {
  std::vector<std::size_t> idx(end - start);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
  return idx;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["per_horizon_rmse"] = per_horizon_rmse;
  j["overall_rmse"] = overall_rmse;
  j["r2"] = r2;
  if (sp_rmse) {
    j["sp_rmse"] = *sp_rmse;
    j["sp_fill_policy"] = sp_fill_policy;
    j["sp_excluded_nodes"] = sp_excluded_nodes;
  }
  j["points"] = points;
  j["units"] = units;
  return j.dump();
}

EvalReport evaluate(const model::GCRNNModel& model, const data::WindowSet& windows,
                    const data::NormalizationStats& stats, bool with_sp_rmse,
                    std::size_t batch_size) {
  if (windows.size() == 0) throw ContractError("evaluate: no windows");
  const std::size_t horizon = windows.spec.horizon;
  const std::size_t tf = windows.target_feature;

  std::vector<double> preds_all, truth_all;
  std::vector<double> sq(horizon, 0.0);
  std::vector<std::size_t> count(horizon, 0);
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const auto idx = batch_indices(start, std::min(start + batch_size, windows.size()));
    const data::Batch batch = data::materialize_batch(windows, idx);
    ad::Tape tape(false);
    const auto preds =
        model::forward(tape, model, batch.inputs, model::DecodeMode::autoregressive);
    for (std::size_t h = 0; h < horizon; ++h) {
      const auto& p = preds[h].values();
      const auto& y = batch.targets[h].values();
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double pd = stats.invert(p[k], tf);
        const double yd = stats.invert(y[k], tf);
        preds_all.push_back(pd);
        truth_all.push_back(yd);
        sq[h] += (pd - yd) * (pd - yd);
        ++count[h];
      }
    }
  }

  EvalReport report;
  double total_sq = 0.0;
  std::size_t total = 0;
  for (std::size_t h = 0; h < horizon; ++h) {
    report.per_horizon_rmse.push_back(std::sqrt(sq[h] / static_cast<double>(count[h])));
    total_sq += sq[h];
    total += count[h];
  }
  report.overall_rmse = std::sqrt(total_sq / static_cast<double>(total));
  report.r2 = r_squared(preds_all, truth_all);
  report.points = total;
  if (with_sp_rmse) {
    report.sp_fill_policy = "air channels of the probed node set to 0 (normalized) across the full input history";
    report.sp_rmse = sp_rmse(model, windows, stats, batch_size, &report.sp_excluded_nodes);
  }
  return report;
}

double sp_rmse(const model::GCRNNModel& model, const data::WindowSet& windows,
               const data::NormalizationStats& stats, std::size_t batch_size,
               std::vector<std::string>* excluded_nodes) {
  if (windows.size() == 0) throw ContractError("sp_rmse: no windows");
  const std::size_t nodes = windows.num_nodes();
  const std::size_t tf = windows.target_feature;
  const auto& features = windows.seq->features;

  std::vector<std::size_t> air_features;
  for (std::size_t f = 0; f < features.size(); ++f)
    if (features[f].group == data::FactorGroup::air) air_features.push_back(f);
  if (air_features.empty()) throw ContractError("sp_rmse: no air-tagged features to blank");

  double node_rmse_sum = 0.0;
  std::size_t node_count = 0;
  for (std::size_t node = 0; node < nodes; ++node) {
    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
      const auto idx = batch_indices(start, std::min(start + batch_size, windows.size()));
      data::Batch batch = data::materialize_batch(windows, idx);
      const std::size_t nf = windows.num_features();
      for (auto& step : batch.inputs) {
        auto& v = step.values();
        for (std::size_t k = 0; k < idx.size(); ++k)
          for (const std::size_t f : air_features) v[(k * nodes + node) * nf + f] = 0.0;
      }
      ad::Tape tape(false);
      const auto preds = model::forward(tape, model, batch.inputs,
                                        model::DecodeMode::autoregressive, {}, 1);
      const auto& p = preds[0].values();
      const auto& y = batch.targets[0].values();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const double pd = stats.invert(p[k * nodes + node], tf);
        const double yd = stats.invert(y[k * nodes + node], tf);
        sq += (pd - yd) * (pd - yd);
        ++count;
      }
    }
    if (count == 0) {
      if (excluded_nodes) excluded_nodes->push_back(windows.seq->node_ids[node]);
      continue;
    }
    node_rmse_sum += std::sqrt(sq / static_cast<double>(count));
    ++node_count;
  }
  if (node_count == 0) throw UndefinedMetricError("sp_rmse: no nodes with valid targets");
  return node_rmse_sum / static_cast<double>(node_count);
}

}  // namespace stgcrnn::metrics
