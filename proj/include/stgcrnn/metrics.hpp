#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgcrnn/data.hpp"
#include "stgcrnn/model.hpp"

namespace stgcrnn::metrics {

/// sqrt of the masked mean squared error; valid[i] != 0 marks usable truth.
/// An empty mask span means every entry is valid.
double rmse(std::span<const double> pred, std::span<const double> truth,
            std::span<const std::uint8_t> valid = {});

/// 1 - SS_res / SS_tot around the truth mean over valid entries. Needs at
/// least two valid points and positive truth variance.
double r_squared(std::span<const double> pred, std::span<const double> truth,
                 std::span<const std::uint8_t> valid = {});

struct PersistenceBaseline {
  double overall_rmse = 0.0;
  std::vector<double> per_horizon_rmse;
};

/// Persistence forecaster on denormalized values: the last observed value of
/// the target channel predicts every horizon.
PersistenceBaseline persistence_rmse(const data::WindowSet& windows,
                                     const data::NormalizationStats& stats);

struct EvalReport {
  std::vector<double> per_horizon_rmse;  ///< denormalized, length T'
  double overall_rmse = 0.0;
  double r2 = 0.0;
  std::optional<double> sp_rmse;
  std::vector<std::string> sp_excluded_nodes;
  std::size_t points = 0;
  std::string units = "dimensionless";
  std::string sp_fill_policy;

  std::string to_json() const;
};

/// Autoregressive evaluation over a window set; metrics on denormalized
/// values.
EvalReport evaluate(const model::GCRNNModel& model, const data::WindowSet& windows,
                    const data::NormalizationStats& stats, bool with_sp_rmse,
                    std::size_t batch_size = 64);

/// Leave-one-node-out spatiotemporal RMSE at horizon 1: for each node, blank
/// its air-channel history (to the normalized imputation value 0), predict,
/// and score that node only; the result is the mean of the node RMSEs.
double sp_rmse(const model::GCRNNModel& model, const data::WindowSet& windows,
               const data::NormalizationStats& stats, std::size_t batch_size = 64,
               std::vector<std::string>* excluded_nodes = nullptr);

}  // namespace stgcrnn::metrics
