#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgcrnn/autodiff.hpp"
#include "stgcrnn/mat.hpp"

namespace stgcrnn::data {

constexpr std::int64_t kHourSeconds = 3600;

/// Epoch seconds for "YYYY-MM-DDTHH:MM[:SS][Z]" (UTC, T or space separator).
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t epoch_seconds);

enum class FactorGroup { air, meteo, traffic_volume, speed, external };

FactorGroup factor_group_from_string(const std::string& s);
std::string to_string(FactorGroup g);

struct FeatureInfo {
  std::string name;
  FactorGroup group = FactorGroup::air;
};

/// Time-ordered graph signals: values[t][n][f] with an explicit missing mask.
/// Timestamps are uniform hourly; gaps must appear as missing entries.
struct GraphSignalSequence {
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> node_ids;
  std::vector<FeatureInfo> features;
  std::vector<double> values;        ///< row-major [t][n][f]
  std::vector<std::uint8_t> missing; ///< same layout, 1 = missing

  std::size_t steps() const { return timestamps.size(); }
  std::size_t num_nodes() const { return node_ids.size(); }
  std::size_t num_features() const { return features.size(); }

  std::size_t index(std::size_t t, std::size_t n, std::size_t f) const {
    return (t * num_nodes() + n) * num_features() + f;
  }
  double at(std::size_t t, std::size_t n, std::size_t f) const {
    return values[index(t, n, f)];
  }
  double& at(std::size_t t, std::size_t n, std::size_t f) { return values[index(t, n, f)]; }
  bool is_missing(std::size_t t, std::size_t n, std::size_t f) const {
    return missing[index(t, n, f)] != 0;
  }

  std::optional<std::size_t> feature_index(const std::string& name) const;

  /// Hourly spacing, strictly increasing timestamps, layout sizes.
  void validate() const;
};

/// Feature-axis concatenation in the fixed factor order (air, meteo, traffic
/// volume, speed, external). Groups must share timestamps and node sets.
GraphSignalSequence fuse_factors(std::vector<GraphSignalSequence> groups);

enum class NormalizationMode { minmax, zscore };

/// Per-feature statistics from the training split only.
struct NormalizationStats {
  NormalizationMode mode = NormalizationMode::minmax;
  std::vector<double> min, max, mean, stddev;

  std::string to_json() const;
  static NormalizationStats from_json(const std::string& text);
  double apply(double x, std::size_t feature) const;
  double invert(double x, std::size_t feature) const;
};

/// Statistics over non-missing entries.
NormalizationStats compute_stats(const GraphSignalSequence& seq,
                                 NormalizationMode mode = NormalizationMode::minmax);

/// x' = (x - min)/(max - min), constant features map to 0 (or the z-score
/// analogue). Missing entries are transformed like any other value.
GraphSignalSequence normalize(const GraphSignalSequence& seq, const NormalizationStats& stats);

/// Forward-fill per node/feature up to max_gap_hours, then fill_value.
/// Non-missing entries are never altered; the mask is retained.
GraphSignalSequence impute_forward_fill(const GraphSignalSequence& seq,
                                        std::size_t max_gap_hours = 3,
                                        double fill_value = 0.0);

struct WindowSpec {
  std::size_t history = 12;  ///< T
  std::size_t horizon = 12;  ///< T'
  std::size_t stride = 1;
  std::string target_feature;
};

/// Sliding (input, target) windows over an imputed copy of the sequence.
/// A window starting at s covers inputs [s, s+T) and targets [s+T, s+T+T');
/// windows with any missing target value of the predicted channel are dropped.
struct WindowSet {
  std::shared_ptr<const GraphSignalSequence> seq;  ///< imputed values
  WindowSpec spec;
  std::size_t target_feature = 0;
  std::vector<std::size_t> starts;

  std::size_t size() const { return starts.size(); }
  std::size_t num_nodes() const { return seq->num_nodes(); }
  std::size_t num_features() const { return seq->num_features(); }
};

/// Builds the window set. `seq` must already be normalized; inputs are imputed
/// with forward-fill (<= 3 h) then 0.
WindowSet make_windows(const GraphSignalSequence& seq, const WindowSpec& spec);

/// One window materialized as T matrices [N x F] and T' matrices [N x 1].
struct WindowPair {
  std::vector<Mat> inputs;
  std::vector<Mat> targets;
};
WindowPair materialize(const WindowSet& set, std::size_t idx);

/// A batch as stacked leaf tensors: inputs are T tensors [(B*N) x F], targets
/// T' tensors [(B*N) x 1], blocks ordered like `which`.
struct Batch {
  std::vector<ad::Tensor> inputs;
  std::vector<ad::Tensor> targets;
  std::size_t batch_size = 0;
};
Batch materialize_batch(const WindowSet& set, std::span<const std::size_t> which);

/// Strict partition at the boundary timestamp: train < boundary <= test.
std::pair<GraphSignalSequence, GraphSignalSequence> split_by_time(
    const GraphSignalSequence& seq, std::int64_t boundary);

// ---- grid assignment --------------------------------------------------------

struct GridSpec {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  std::size_t rows = 32, cols = 32;
};

struct GridAssignment {
  GridSpec spec;
  std::vector<std::size_t> cell_of_station;            ///< flattened row*cols+col
  std::vector<std::size_t> occupied_cells;             ///< one per new node, ascending
  std::vector<std::vector<std::size_t>> stations_in_cell;  ///< parallel to occupied_cells
};

/// Uniform spatial bucketing; stations on the max edge fall in the last cell.
/// Throws BoundsError when a station lies outside the bounds.
GridAssignment assign_grid(const std::vector<std::array<double, 2>>& coords_m,
                           const GridSpec& spec);

/// Cells with >= 1 station become nodes; multi-station cells average their
/// readings (an entry is missing only when all member readings are missing).
GraphSignalSequence aggregate_by_cell(const GraphSignalSequence& seq,
                                      const GridAssignment& grid);

/// Center coordinates of each occupied cell, in node order.
std::vector<std::array<double, 2>> cell_centers(const GridAssignment& grid);

/// For each target node, index of the nearest source coordinate.
std::vector<std::size_t> nearest_source(const std::vector<std::array<double, 2>>& sources,
                                        const std::vector<std::array<double, 2>>& targets);

// ---- synthetic --------------------------------------------------------------

struct SynthParams {
  double alpha = 0.7;          ///< diffusion mixing in [0, 1]
  double season_amp = 1.0;     ///< scale of the 24-hour seasonal component
  double noise_std = 0.05;
  std::size_t exo_channels = 0;  ///< extra channels, lagged transforms of the signal
  std::int64_t t0 = 1420070400;  ///< 2015-01-01T00:00Z
};

struct SynthNodeParams {
  double amplitude = 0.0;
  double phase_hours = 0.0;
};

/// Per-node seasonal parameters derived from the seed (amplitude in
/// [0.5, 1.5) * season_amp, phase in [0, 24) hours).
std::vector<SynthNodeParams> synthetic_node_params(std::size_t num_nodes, std::uint64_t seed,
                                                   const SynthParams& params);

/// x_{t+1} = alpha * P * x_t + (1 - alpha) * s(t) + eta_t with P = D^-1 W,
/// s_i(t) = A_i sin(2 pi (t + phi_i) / 24), eta ~ N(0, noise_std^2), and
/// x_0 = s(0). Deterministic given the seed.
GraphSignalSequence synthetic_generate(const Mat& W, std::size_t t_total, std::uint64_t seed,
                                       const SynthParams& params);

// ---- files --------------------------------------------------------------------

/// Factor CSV: header timestamp,station_id,<feature...>; ISO-8601 hourly
/// timestamps; missing values as empty fields. The sequence spans the full
/// hourly range found in the file. When node_ids is empty the node set is
/// taken from the file in first-appearance order.
GraphSignalSequence factor_from_csv(const std::filesystem::path& path, FactorGroup group,
                                    std::vector<std::string> node_ids = {});

/// Versioned JSON-lines dataset cache with embedded feature names and mask.
void save_dataset(const GraphSignalSequence& seq, const std::filesystem::path& path);
GraphSignalSequence load_dataset(const std::filesystem::path& path);

}  // namespace stgcrnn::data
