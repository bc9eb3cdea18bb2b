#include "stgcrnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

#include "csv_util.hpp"
#include "stgcrnn/errors.hpp"
#include "stgcrnn/graph.hpp"
#include "stgcrnn/rng.hpp"

namespace stgcrnn::data {

// ---- timestamps --------------------------------------------------------------

namespace {

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<int>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n < 6 || (sep != 'T' && sep != ' '))
    throw IoError("cannot parse timestamp: '" + text + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
      s < 0 || s > 60)
    throw IoError("timestamp out of range: '" + text + "'");
  return days_from_civil(y, mo, d) * 86400LL + h * 3600LL + mi * 60LL + (n >= 7 ? s : 0);
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60));
  return buf;
}

// ---- factor groups -------------------------------------------------------------

FactorGroup factor_group_from_string(const std::string& s) {
  if (s == "air") return FactorGroup::air;
  if (s == "meteo") return FactorGroup::meteo;
  if (s == "traffic_volume") return FactorGroup::traffic_volume;
  if (s == "speed") return FactorGroup::speed;
  if (s == "external") return FactorGroup::external;
  throw ConfigError("unknown factor group: " + s);
}

std::string to_string(FactorGroup g) {
  switch (g) {
    case FactorGroup::air: return "air";
    case FactorGroup::meteo: return "meteo";
    case FactorGroup::traffic_volume: return "traffic_volume";
    case FactorGroup::speed: return "speed";
    case FactorGroup::external: return "external";
  }
  return "?";
}

// ---- GraphSignalSequence --------------------------------------------------------

std::optional<std::size_t> GraphSignalSequence::feature_index(const std::string& name) const {
  for (std::size_t f = 0; f < features.size(); ++f)
    if (features[f].name == name) return f;
  return std::nullopt;
}

void GraphSignalSequence::validate() const {
  const std::size_t expected = steps() * num_nodes() * num_features();
  if (values.size() != expected || missing.size() != expected)
    throw ContractError("sequence: value/mask sizes disagree with dimensions");
  for (std::size_t t = 1; t < timestamps.size(); ++t)
    if (timestamps[t] - timestamps[t - 1] != kHourSeconds)
      throw ContractError("sequence: timestamps not uniform hourly at step " +
                          std::to_string(t) + " (" + format_timestamp(timestamps[t - 1]) +
                          " -> " + format_timestamp(timestamps[t]) + ")");
}

GraphSignalSequence fuse_factors(std::vector<GraphSignalSequence> groups) {
  if (groups.empty()) throw ContractError("fuse_factors: no groups");
  for (const auto& g : groups) {
    g.validate();
    for (const auto& f : g.features)
      if (f.group != g.features[0].group)
        throw AlignmentError("fuse_factors: group '" + to_string(g.features[0].group) +
                             "' sequence mixes factor groups");
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const GraphSignalSequence& a, const GraphSignalSequence& b) {
                     return static_cast<int>(a.features[0].group) <
                            static_cast<int>(b.features[0].group);
                   });

  const GraphSignalSequence& first = groups.front();
  for (const auto& g : groups) {
    if (g.timestamps != first.timestamps)
      throw AlignmentError("fuse_factors: group '" + to_string(g.features[0].group) +
                           "' timestamps disagree with group '" +
                           to_string(first.features[0].group) + "'");
    if (g.node_ids != first.node_ids)
      throw AlignmentError("fuse_factors: group '" + to_string(g.features[0].group) +
                           "' node set disagrees with group '" +
                           to_string(first.features[0].group) + "'");
  }

  GraphSignalSequence out;
  out.timestamps = first.timestamps;
  out.node_ids = first.node_ids;
  std::size_t total_f = 0;
  for (const auto& g : groups) {
    total_f += g.num_features();
    out.features.insert(out.features.end(), g.features.begin(), g.features.end());
  }
  const std::size_t steps = first.steps();
  const std::size_t nodes = first.num_nodes();
  out.values.assign(steps * nodes * total_f, 0.0);
  out.missing.assign(steps * nodes * total_f, 0);
  std::size_t offset = 0;
  for (const auto& g : groups) {
    const std::size_t gf = g.num_features();
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t n = 0; n < nodes; ++n)
        for (std::size_t f = 0; f < gf; ++f) {
          out.values[out.index(t, n, offset + f)] = g.at(t, n, f);
          out.missing[out.index(t, n, offset + f)] = g.missing[g.index(t, n, f)];
        }
    offset += gf;
  }
  return out;
}

// ---- normalization ----------------------------------------------------------------

std::string NormalizationStats::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == NormalizationMode::minmax ? "minmax" : "zscore";
  j["min"] = min;
  j["max"] = max;
  j["mean"] = mean;
  j["stddev"] = stddev;
  return j.dump();
}

NormalizationStats NormalizationStats::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NormalizationStats s;
  s.mode = j.at("mode") == "zscore" ? NormalizationMode::zscore : NormalizationMode::minmax;
  s.min = j.at("min").get<std::vector<double>>();
  s.max = j.at("max").get<std::vector<double>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  return s;
}

double NormalizationStats::apply(double x, std::size_t f) const {
  if (mode == NormalizationMode::minmax) {
    const double range = max[f] - min[f];
    return range > 0.0 ? (x - min[f]) / range : 0.0;
  }
  return stddev[f] > 0.0 ? (x - mean[f]) / stddev[f] : 0.0;
}

double NormalizationStats::invert(double x, std::size_t f) const {
  if (mode == NormalizationMode::minmax) {
    const double range = max[f] - min[f];
    return range > 0.0 ? x * range + min[f] : min[f];
  }
  return stddev[f] > 0.0 ? x * stddev[f] + mean[f] : mean[f];
}

NormalizationStats compute_stats(const GraphSignalSequence& seq, NormalizationMode mode) {
  const std::size_t nf = seq.num_features();
  NormalizationStats s;
  s.mode = mode;
  s.min.assign(nf, 0.0);
  s.max.assign(nf, 0.0);
  s.mean.assign(nf, 0.0);
  s.stddev.assign(nf, 0.0);
  for (std::size_t f = 0; f < nf; ++f) {
    double lo = 0.0, hi = 0.0, sum = 0.0, sum2 = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < seq.steps(); ++t)
      for (std::size_t n = 0; n < seq.num_nodes(); ++n) {
        if (seq.is_missing(t, n, f)) continue;
        const double x = seq.at(t, n, f);
        if (count == 0) {
          lo = hi = x;
        } else {
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
        sum += x;
        sum2 += x * x;
        ++count;
      }
    if (count > 0) {
      s.min[f] = lo;
      s.max[f] = hi;
      s.mean[f] = sum / static_cast<double>(count);
      const double var = sum2 / static_cast<double>(count) - s.mean[f] * s.mean[f];
      s.stddev[f] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
  }
  return s;
}

GraphSignalSequence normalize(const GraphSignalSequence& seq, const NormalizationStats& stats) {
  if (stats.min.size() != seq.num_features())
    throw ContractError("normalize: stats cover " + std::to_string(stats.min.size()) +
                        " features, sequence has " + std::to_string(seq.num_features()));
  GraphSignalSequence out = seq;
  const std::size_t nf = seq.num_features();
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = stats.apply(out.values[i], i % nf);
  return out;
}

GraphSignalSequence impute_forward_fill(const GraphSignalSequence& seq,
                                        std::size_t max_gap_hours, double fill_value) {
  GraphSignalSequence out = seq;
  for (std::size_t n = 0; n < seq.num_nodes(); ++n) {
    for (std::size_t f = 0; f < seq.num_features(); ++f) {
      double last = 0.0;
      std::size_t age = max_gap_hours + 1;  // nothing seen yet
      for (std::size_t t = 0; t < seq.steps(); ++t) {
        if (!seq.is_missing(t, n, f)) {
          last = seq.at(t, n, f);
          age = 0;
          continue;
        }
        ++age;
        out.at(t, n, f) = age <= max_gap_hours ? last : fill_value;
      }
    }
  }
  return out;
}

// ---- windows -----------------------------------------------------------------------

WindowSet make_windows(const GraphSignalSequence& seq, const WindowSpec& spec) {
  seq.validate();
  if (spec.history < 1 || spec.horizon < 1 || spec.stride < 1)
    throw ContractError("make_windows: history, horizon and stride must be >= 1");
  const auto target = seq.feature_index(spec.target_feature);
  if (!target)
    throw ConfigError("make_windows: target feature '" + spec.target_feature +
                      "' not present");

  WindowSet set;
  set.seq = std::make_shared<GraphSignalSequence>(impute_forward_fill(seq));
  set.spec = spec;
  set.target_feature = *target;

  const std::size_t need = spec.history + spec.horizon;
  if (seq.steps() >= need) {
    for (std::size_t s = 0; s + need <= seq.steps(); s += spec.stride) {
      bool ok = true;
      for (std::size_t t = s + spec.history; ok && t < s + need; ++t)
        for (std::size_t n = 0; ok && n < seq.num_nodes(); ++n)
          ok = !seq.is_missing(t, n, *target);
      if (ok) set.starts.push_back(s);
    }
  }
  return set;
}

WindowPair materialize(const WindowSet& set, std::size_t idx) {
  const auto& seq = *set.seq;
  const std::size_t s = set.starts.at(idx);
  const std::size_t nodes = seq.num_nodes();
  const std::size_t nf = seq.num_features();
  WindowPair pair;
  for (std::size_t t = 0; t < set.spec.history; ++t) {
    Mat m(nodes, nf);
    for (std::size_t n = 0; n < nodes; ++n)
      for (std::size_t f = 0; f < nf; ++f) m(n, f) = seq.at(s + t, n, f);
    pair.inputs.push_back(std::move(m));
  }
  for (std::size_t t = 0; t < set.spec.horizon; ++t) {
    Mat m(nodes, 1);
    for (std::size_t n = 0; n < nodes; ++n)
      m(n, 0) = seq.at(s + set.spec.history + t, n, set.target_feature);
    pair.targets.push_back(std::move(m));
  }
  return pair;
}

Batch materialize_batch(const WindowSet& set, std::span<const std::size_t> which) {
  const auto& seq = *set.seq;
  const std::size_t nodes = seq.num_nodes();
  const std::size_t nf = seq.num_features();
  const std::size_t b = which.size();

  Batch batch;
  batch.batch_size = b;
  for (std::size_t t = 0; t < set.spec.history; ++t) {
    std::vector<double> buf(b * nodes * nf);
    for (std::size_t k = 0; k < b; ++k) {
      const std::size_t s = set.starts.at(which[k]);
      const double* src = seq.values.data() + seq.index(s + t, 0, 0);
      std::copy(src, src + nodes * nf, buf.data() + k * nodes * nf);
    }
    batch.inputs.push_back(ad::Tensor::leaf(b * nodes, nf, std::move(buf)));
  }
  for (std::size_t t = 0; t < set.spec.horizon; ++t) {
    std::vector<double> buf(b * nodes);
    for (std::size_t k = 0; k < b; ++k) {
      const std::size_t s = set.starts.at(which[k]);
      for (std::size_t n = 0; n < nodes; ++n)
        buf[k * nodes + n] = seq.at(s + set.spec.history + t, n, set.target_feature);
    }
    batch.targets.push_back(ad::Tensor::leaf(b * nodes, 1, std::move(buf)));
  }
  return batch;
}

std::pair<GraphSignalSequence, GraphSignalSequence> split_by_time(
    const GraphSignalSequence& seq, std::int64_t boundary) {
  seq.validate();
  std::size_t cut = 0;
  while (cut < seq.steps() && seq.timestamps[cut] < boundary) ++cut;

  const auto slice = [&seq](std::size_t from, std::size_t to) {
    GraphSignalSequence out;
    out.node_ids = seq.node_ids;
    out.features = seq.features;
    out.timestamps.assign(seq.timestamps.begin() + static_cast<std::ptrdiff_t>(from),
                          seq.timestamps.begin() + static_cast<std::ptrdiff_t>(to));
    const std::size_t stride = seq.num_nodes() * seq.num_features();
    out.values.assign(seq.values.begin() + static_cast<std::ptrdiff_t>(from * stride),
                      seq.values.begin() + static_cast<std::ptrdiff_t>(to * stride));
    out.missing.assign(seq.missing.begin() + static_cast<std::ptrdiff_t>(from * stride),
                       seq.missing.begin() + static_cast<std::ptrdiff_t>(to * stride));
    return out;
  };
  return {slice(0, cut), slice(cut, seq.steps())};
}

// ---- grid ---------------------------------------------------------------------------

GridAssignment assign_grid(const std::vector<std::array<double, 2>>& coords_m,
                           const GridSpec& spec) {
  if (spec.x_max <= spec.x_min || spec.y_max <= spec.y_min)
    throw ContractError("assign_grid: empty bounds");
  if (spec.rows == 0 || spec.cols == 0)
    throw ContractError("assign_grid: grid must have positive shape");

  GridAssignment out;
  out.spec = spec;
  const double cell_w = (spec.x_max - spec.x_min) / static_cast<double>(spec.cols);
  const double cell_h = (spec.y_max - spec.y_min) / static_cast<double>(spec.rows);

  std::map<std::size_t, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < coords_m.size(); ++i) {
    const auto [x, y] = coords_m[i];
    if (x < spec.x_min || x > spec.x_max || y < spec.y_min || y > spec.y_max)
      throw BoundsError("assign_grid: station " + std::to_string(i) + " at (" +
                        std::to_string(x) + ", " + std::to_string(y) + ") outside bounds");
    std::size_t col = static_cast<std::size_t>((x - spec.x_min) / cell_w);
    std::size_t row = static_cast<std::size_t>((y - spec.y_min) / cell_h);
    col = std::min(col, spec.cols - 1);
    row = std::min(row, spec.rows - 1);
    const std::size_t cell = row * spec.cols + col;
    out.cell_of_station.push_back(cell);
    cells[cell].push_back(i);
  }
  for (auto& [cell, stations] : cells) {
    out.occupied_cells.push_back(cell);
    out.stations_in_cell.push_back(std::move(stations));
  }
  return out;
}

GraphSignalSequence aggregate_by_cell(const GraphSignalSequence& seq,
                                      const GridAssignment& grid) {
  if (grid.cell_of_station.size() != seq.num_nodes())
    throw ContractError("aggregate_by_cell: grid covers " +
                        std::to_string(grid.cell_of_station.size()) + " stations, sequence has " +
                        std::to_string(seq.num_nodes()));
  GraphSignalSequence out;
  out.timestamps = seq.timestamps;
  out.features = seq.features;
  for (const std::size_t cell : grid.occupied_cells)
    out.node_ids.push_back("cell_r" + std::to_string(cell / grid.spec.cols) + "_c" +
                           std::to_string(cell % grid.spec.cols));

  const std::size_t steps = seq.steps();
  const std::size_t nf = seq.num_features();
  const std::size_t cells = grid.occupied_cells.size();
  out.values.assign(steps * cells * nf, 0.0);
  out.missing.assign(steps * cells * nf, 1);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t f = 0; f < nf; ++f) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const std::size_t s : grid.stations_in_cell[c]) {
          if (seq.is_missing(t, s, f)) continue;
          sum += seq.at(t, s, f);
          ++count;
        }
        if (count > 0) {
          out.values[out.index(t, c, f)] = sum / static_cast<double>(count);
          out.missing[out.index(t, c, f)] = 0;
        }
      }
  return out;
}

std::vector<std::array<double, 2>> cell_centers(const GridAssignment& grid) {
  const auto& spec = grid.spec;
  const double cell_w = (spec.x_max - spec.x_min) / static_cast<double>(spec.cols);
  const double cell_h = (spec.y_max - spec.y_min) / static_cast<double>(spec.rows);
  std::vector<std::array<double, 2>> centers;
  for (const std::size_t cell : grid.occupied_cells) {
    const double col = static_cast<double>(cell % spec.cols);
    const double row = static_cast<double>(cell / spec.cols);
    centers.push_back({spec.x_min + (col + 0.5) * cell_w, spec.y_min + (row + 0.5) * cell_h});
  }
  return centers;
}

std::vector<std::size_t> nearest_source(const std::vector<std::array<double, 2>>& sources,
                                        const std::vector<std::array<double, 2>>& targets) {
  if (sources.empty()) throw ContractError("nearest_source: no sources");
  std::vector<std::size_t> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const double dx = sources[s][0] - t[0];
      const double dy = sources[s][1] - t[1];
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = s;
      }
    }
    out.push_back(best);
  }
  return out;
}

// ---- synthetic -----------------------------------------------------------------------

std::vector<SynthNodeParams> synthetic_node_params(std::size_t num_nodes, std::uint64_t seed,
                                                   const SynthParams& params) {
  Rng rng(seed);
  std::vector<SynthNodeParams> out(num_nodes);
  for (auto& p : out) {
    p.amplitude = params.season_amp * (0.5 + rng.uniform());
    p.phase_hours = 24.0 * rng.uniform();
  }
  return out;
}

GraphSignalSequence synthetic_generate(const Mat& W, std::size_t t_total, std::uint64_t seed,
                                       const SynthParams& params) {
  if (params.alpha < 0.0 || params.alpha > 1.0)
    throw ContractError("synthetic_generate: alpha must lie in [0, 1]");
  if (t_total == 0) throw ContractError("synthetic_generate: t_total must be >= 1");

  const auto transitions = graph::transition_set(W, graph::TransitionMode::random_walk);
  const Mat& p = transitions.matrices[0];
  const std::size_t n = W.rows();

  // node parameters first, then the noise stream, one Rng
  Rng rng(seed);
  std::vector<SynthNodeParams> node(n);
  for (auto& np : node) {
    np.amplitude = params.season_amp * (0.5 + rng.uniform());
    np.phase_hours = 24.0 * rng.uniform();
  }
  const auto seasonal = [&node](std::size_t i, std::size_t t) {
    return node[i].amplitude *
           std::sin(2.0 * std::numbers::pi * (static_cast<double>(t) + node[i].phase_hours) /
                    24.0);
  };

  GraphSignalSequence seq;
  const std::size_t nf = 1 + params.exo_channels;
  seq.features.push_back({"pm25", FactorGroup::air});
  for (std::size_t k = 1; k <= params.exo_channels; ++k)
    seq.features.push_back({"exo" + std::to_string(k), FactorGroup::meteo});
  for (std::size_t i = 0; i < n; ++i) seq.node_ids.push_back("s" + std::to_string(i));
  for (std::size_t t = 0; t < t_total; ++t)
    seq.timestamps.push_back(params.t0 + static_cast<std::int64_t>(t) * kHourSeconds);
  seq.values.assign(t_total * n * nf, 0.0);
  seq.missing.assign(t_total * n * nf, 0);

  std::vector<double> x(n), next(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = seasonal(i, 0);
  for (std::size_t t = 0; t < t_total; ++t) {
    for (std::size_t i = 0; i < n; ++i) seq.values[seq.index(t, i, 0)] = x[i];
    for (std::size_t i = 0; i < n; ++i) {
      double mixed = 0.0;
      for (std::size_t j = 0; j < n; ++j) mixed += p(i, j) * x[j];
      next[i] = params.alpha * mixed + (1.0 - params.alpha) * seasonal(i, t);
      if (params.noise_std > 0.0) next[i] += rng.normal(0.0, params.noise_std);
    }
    x.swap(next);
  }

  // exogenous channels: lagged, attenuated copies of the signal
  for (std::size_t k = 1; k <= params.exo_channels; ++k) {
    const std::size_t lag = 3 * k;
    const double scale = std::pow(0.8, static_cast<double>(k));
    for (std::size_t t = 0; t < t_total; ++t)
      for (std::size_t i = 0; i < n; ++i)
        seq.values[seq.index(t, i, k)] =
            scale * seq.values[seq.index(t >= lag ? t - lag : 0, i, 0)];
  }
  return seq;
}

// ---- files ------------------------------------------------------------------------------

GraphSignalSequence factor_from_csv(const std::filesystem::path& path, FactorGroup group,
                                    std::vector<std::string> node_ids) {
  const auto table = csvutil::read_table(path);
  if (table.header.size() < 3 || table.header[0] != "timestamp" ||
      table.header[1] != "station_id")
    throw IoError(path.string() + ": expected header timestamp,station_id,<feature...>");
  const std::size_t nf = table.header.size() - 2;

  std::map<std::string, std::size_t> node_index;
  const bool fixed_nodes = !node_ids.empty();
  for (std::size_t i = 0; i < node_ids.size(); ++i) node_index.emplace(node_ids[i], i);

  struct Reading {
    std::int64_t ts;
    std::size_t node;
    std::vector<std::pair<std::size_t, double>> present;  // (feature, value)
  };
  std::vector<Reading> readings;
  std::int64_t ts_min = 0, ts_max = 0;
  bool any = false;
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw IoError(path.string() + ": row has " + std::to_string(row.size()) +
                    " fields, header has " + std::to_string(table.header.size()));
    Reading r;
    r.ts = parse_timestamp(row[0]);
    const auto it = node_index.find(row[1]);
    if (it == node_index.end()) {
      if (fixed_nodes)
        throw IoError(path.string() + ": unknown station '" + row[1] + "'");
      r.node = node_ids.size();
      node_index.emplace(row[1], r.node);
      node_ids.push_back(row[1]);
    } else {
      r.node = it->second;
    }
    for (std::size_t f = 0; f < nf; ++f) {
      const std::string& field = row[2 + f];
      if (!field.empty()) r.present.emplace_back(f, std::stod(field));
    }
    if (!any) {
      ts_min = ts_max = r.ts;
      any = true;
    } else {
      ts_min = std::min(ts_min, r.ts);
      ts_max = std::max(ts_max, r.ts);
    }
    readings.push_back(std::move(r));
  }
  if (!any) throw IoError(path.string() + ": no data rows");
  if ((ts_max - ts_min) % kHourSeconds != 0)
    throw IoError(path.string() + ": timestamps not hour-aligned");

  GraphSignalSequence seq;
  seq.node_ids = std::move(node_ids);
  for (std::size_t f = 0; f < nf; ++f) seq.features.push_back({table.header[2 + f], group});
  const std::size_t steps = static_cast<std::size_t>((ts_max - ts_min) / kHourSeconds) + 1;
  for (std::size_t t = 0; t < steps; ++t)
    seq.timestamps.push_back(ts_min + static_cast<std::int64_t>(t) * kHourSeconds);
  seq.values.assign(steps * seq.num_nodes() * nf, 0.0);
  seq.missing.assign(steps * seq.num_nodes() * nf, 1);
  for (const auto& r : readings) {
    if ((r.ts - ts_min) % kHourSeconds != 0)
      throw IoError(path.string() + ": timestamp not on the hour: " + format_timestamp(r.ts));
    const std::size_t t = static_cast<std::size_t>((r.ts - ts_min) / kHourSeconds);
    for (const auto& [f, v] : r.present) {
      seq.values[seq.index(t, r.node, f)] = v;
      seq.missing[seq.index(t, r.node, f)] = 0;
    }
  }
  return seq;
}

void save_dataset(const GraphSignalSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());

  nlohmann::json head;
  head["format"] = "stgcrnn-dataset";
  head["version"] = 1;
  head["t0"] = seq.timestamps.empty() ? 0 : seq.timestamps.front();
  head["dt"] = kHourSeconds;
  head["steps"] = seq.steps();
  head["node_ids"] = seq.node_ids;
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : seq.features)
    feats.push_back({{"name", f.name}, {"group", to_string(f.group)}});
  head["features"] = std::move(feats);
  out << head.dump() << "\n";

  const std::size_t stride = seq.num_nodes() * seq.num_features();
  for (std::size_t t = 0; t < seq.steps(); ++t) {
    nlohmann::json line;
    line["x"] = std::vector<double>(seq.values.begin() + static_cast<std::ptrdiff_t>(t * stride),
                                    seq.values.begin() +
                                        static_cast<std::ptrdiff_t>((t + 1) * stride));
    std::vector<std::size_t> miss;
    for (std::size_t i = 0; i < stride; ++i)
      if (seq.missing[t * stride + i]) miss.push_back(i);
    if (!miss.empty()) line["m"] = miss;
    out << line.dump() << "\n";
  }
}

GraphSignalSequence load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty dataset file");
  nlohmann::json head = nlohmann::json::parse(line);
  if (head.value("format", "") != "stgcrnn-dataset")
    throw IoError(path.string() + ": not a dataset cache file");

  GraphSignalSequence seq;
  seq.node_ids = head.at("node_ids").get<std::vector<std::string>>();
  for (const auto& f : head.at("features"))
    seq.features.push_back(
        {f.at("name").get<std::string>(), factor_group_from_string(f.at("group"))});
  const std::int64_t t0 = head.at("t0").get<std::int64_t>();
  const std::size_t steps = head.at("steps").get<std::size_t>();
  for (std::size_t t = 0; t < steps; ++t)
    seq.timestamps.push_back(t0 + static_cast<std::int64_t>(t) * kHourSeconds);

  const std::size_t stride = seq.num_nodes() * seq.num_features();
  seq.values.reserve(steps * stride);
  seq.missing.assign(steps * stride, 0);
  std::size_t t = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (t >= steps) throw IoError(path.string() + ": more data lines than declared steps");
    nlohmann::json rec = nlohmann::json::parse(line);
    const auto x = rec.at("x").get<std::vector<double>>();
    if (x.size() != stride)
      throw IoError(path.string() + ": line " + std::to_string(t + 2) + " has " +
                    std::to_string(x.size()) + " values, expected " + std::to_string(stride));
    seq.values.insert(seq.values.end(), x.begin(), x.end());
    if (rec.contains("m"))
      for (const std::size_t i : rec.at("m").get<std::vector<std::size_t>>())
        seq.missing[t * stride + i] = 1;
    ++t;
  }
  if (t != steps)
    throw IoError(path.string() + ": expected " + std::to_string(steps) + " data lines, got " +
                  std::to_string(t));
  seq.validate();
  return seq;
}

}  // namespace stgcrnn::data
