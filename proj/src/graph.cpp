#include "stgcrnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "csv_util.hpp"
#include "stgcrnn/errors.hpp"
#include "stgcrnn/rng.hpp"

namespace stgcrnn::graph {

namespace {

void require_square(const Mat& m, const char* what) {
  if (m.rows() == 0 || m.rows() != m.cols())
    throw ShapeError(std::string(what) + ": matrix must be square and non-empty, got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

void require_valid_distances(const Mat& dist) {
  require_square(dist, "build_adjacency");
  const std::size_t n = dist.rows();
  for (std::size_t i = 0; i < n; ++i) {
    if (dist(i, i) != 0.0)
      throw ContractError("build_adjacency: nonzero diagonal at node " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) {
      if (dist(i, j) < 0.0 || !std::isfinite(dist(i, j)))
        throw ContractError("build_adjacency: invalid distance at (" + std::to_string(i) +
                            "," + std::to_string(j) + ")");
      if (dist(i, j) != dist(j, i))
        throw ContractError("build_adjacency: distance matrix is not symmetric");
    }
  }
}

std::vector<double> degrees(const Mat& w) {
  std::vector<double> d(w.rows(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) d[i] += w(i, j);
  return d;
}

void require_nonnegative(const Mat& w, const char* what) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w.vec()[i] < 0.0 || !std::isfinite(w.vec()[i]))
      throw ContractError(std::string(what) + ": adjacency must be non-negative and finite");
}

}  // namespace

LaplacianKind laplacian_kind_from_string(const std::string& s) {
  if (s == "combinatorial") return LaplacianKind::combinatorial;
  if (s == "sym_normalized") return LaplacianKind::sym_normalized;
  if (s == "rw_normalized") return LaplacianKind::rw_normalized;
  throw ConfigError("unknown laplacian kind: " + s);
}

std::string to_string(LaplacianKind k) {
  switch (k) {
    case LaplacianKind::combinatorial: return "combinatorial";
    case LaplacianKind::sym_normalized: return "sym_normalized";
    case LaplacianKind::rw_normalized: return "rw_normalized";
  }
  return "?";
}

Mat build_adjacency(const Mat& dist_km, double epsilon) {
  return build_adjacency(dist_km, epsilon, {});
}

Mat build_adjacency(const Mat& dist_km, double epsilon,
                    const std::vector<std::string>& node_ids) {
  require_valid_distances(dist_km);
  if (epsilon < 0.0 || epsilon >= 1.0)
    throw ContractError("build_adjacency: epsilon must lie in [0, 1), got " +
                        std::to_string(epsilon));
  const std::size_t n = dist_km.rows();

  // sigma over off-diagonal distances only; the zero diagonal would bias it.
  double mean = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        mean += dist_km(i, j);
        ++count;
      }
  if (count == 0) throw IsolatedNodeError("build_adjacency: single-node graph",
                                          node_ids.empty() ? "0" : node_ids[0]);
  mean /= static_cast<double>(count);
  double var = 0.0;
  double max_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        const double d = dist_km(i, j) - mean;
        var += d * d;
        max_dist = std::max(max_dist, dist_km(i, j));
      }
  const double sigma = std::sqrt(var / static_cast<double>(count));

  if (sigma == 0.0 && max_dist > 0.0)
    throw DegenerateGraphError("build_adjacency: all pairwise distances identical (" +
                               std::to_string(mean) + " km); kernel width undefined");

  Mat w(n, n);
  const double s2 = sigma * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = dist_km(i, j);
      const double value = d == 0.0 ? 1.0 : std::exp(-(d * d) / s2);
      w(i, j) = value < epsilon ? 0.0 : value;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    bool connected = false;
    for (std::size_t j = 0; j < n; ++j) connected = connected || w(i, j) > 0.0;
    if (!connected) {
      const std::string id = i < node_ids.size() ? node_ids[i] : std::to_string(i);
      throw IsolatedNodeError(
          "build_adjacency: node " + id + " isolated after thresholding at epsilon=" +
              std::to_string(epsilon),
          id);
    }
  }
  return w;
}

LaplacianBundle laplacian(const Mat& W, LaplacianKind kind) {
  require_square(W, "laplacian");
  require_nonnegative(W, "laplacian");
  const std::size_t n = W.rows();
  const auto deg = degrees(W);

  if (kind != LaplacianKind::combinatorial) {
    for (std::size_t i = 0; i < n; ++i)
      if (deg[i] <= 0.0)
        throw DivisionDomainError("laplacian: node " + std::to_string(i) +
                                  " has zero degree; normalized kind undefined");
  }

  LaplacianBundle bundle;
  bundle.kind = kind;
  bundle.L = Mat(n, n);
  switch (kind) {
    case LaplacianKind::combinatorial:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          bundle.L(i, j) = (i == j ? deg[i] : 0.0) - W(i, j);
      break;
    case LaplacianKind::sym_normalized:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double lw = (i == j ? deg[i] : 0.0) - W(i, j);
          bundle.L(i, j) = lw / std::sqrt(deg[i] * deg[j]);
        }
      break;
    case LaplacianKind::rw_normalized:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double lw = (i == j ? deg[i] : 0.0) - W(i, j);
          bundle.L(i, j) = lw / deg[i];
        }
      break;
  }
  return bundle;
}

double largest_eigenvalue(const Mat& L) {
  require_square(L, "largest_eigenvalue");
  const std::size_t n = L.rows();

  Rng rng(0x5eedc0de);
  std::vector<double> v(n);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.uniform(-1.0, 1.0);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;

  std::vector<double> w(n, 0.0);
  double lambda_prev = std::numeric_limits<double>::quiet_NaN();
  constexpr int kMaxIters = 10000;
  double lambda = 0.0;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += L(i, j) * v[j];
      w[i] = s;
    }
    lambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) lambda += v[i] * w[i];  // Rayleigh quotient
    if (!std::isnan(lambda_prev) && std::abs(lambda - lambda_prev) < 1e-9) return lambda;
    lambda_prev = lambda;

    norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) return 0.0;  // iterate fell into the nullspace
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
  }
  throw EigenEstimationError("largest_eigenvalue: no convergence after 10000 iterations",
                             lambda);
}

void finalize_bundle(LaplacianBundle& bundle, LambdaMaxMode mode) {
  bundle.lambda_max =
      mode == LambdaMaxMode::fixed_two ? 2.0 : largest_eigenvalue(bundle.L);
  if (bundle.lambda_max <= 0.0)
    throw DivisionDomainError("finalize_bundle: lambda_max must be positive, got " +
                              std::to_string(bundle.lambda_max));
  const std::size_t n = bundle.L.rows();
  bundle.L_scaled = Mat(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      bundle.L_scaled(i, j) =
          2.0 * bundle.L(i, j) / bundle.lambda_max - (i == j ? 1.0 : 0.0);
}

LaplacianBundle make_bundle(const Mat& W, LaplacianKind kind, LambdaMaxMode mode) {
  LaplacianBundle bundle = laplacian(W, kind);
  finalize_bundle(bundle, mode);
  return bundle;
}

std::vector<Mat> chebyshev_apply(const Mat& l_scaled, const Mat& x, int order,
                                 ChebRecurrence rec) {
  require_square(l_scaled, "chebyshev_apply");
  if (order < 0) throw ContractError("chebyshev_apply: order must be >= 0");
  if (x.rows() != l_scaled.rows())
    throw ShapeError("chebyshev_apply: signal has " + std::to_string(x.rows()) +
                     " rows, operator is " + std::to_string(l_scaled.rows()) + "x" +
                     std::to_string(l_scaled.cols()));

  std::vector<Mat> terms;
  terms.reserve(static_cast<std::size_t>(order) + 1);
  terms.push_back(x);
  if (order >= 1) terms.push_back(matmul(l_scaled, x));
  const double factor = rec == ChebRecurrence::standard ? 2.0 : 1.0;
  for (int k = 2; k <= order; ++k) {
    Mat t = matmul(l_scaled, terms[static_cast<std::size_t>(k - 1)]);
    const Mat& prev2 = terms[static_cast<std::size_t>(k - 2)];
    for (std::size_t i = 0; i < t.size(); ++i)
      t.vec()[i] = factor * t.vec()[i] - prev2.vec()[i];
    terms.push_back(std::move(t));
  }
  return terms;
}

TransitionSet transition_set(const Mat& W, TransitionMode mode) {
  require_square(W, "transition_set");
  require_nonnegative(W, "transition_set");
  const std::size_t n = W.rows();

  const auto out_deg = degrees(W);
  for (std::size_t i = 0; i < n; ++i)
    if (out_deg[i] <= 0.0)
      throw DivisionDomainError("transition_set: node " + std::to_string(i) +
                                " has zero out-degree");

  TransitionSet set;
  set.mode = mode;
  Mat fwd(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) fwd(i, j) = W(i, j) / out_deg[i];
  set.matrices.push_back(std::move(fwd));

  if (mode == TransitionMode::dual_random_walk) {
    std::vector<double> in_deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) in_deg[i] += W(j, i);
    for (std::size_t i = 0; i < n; ++i)
      if (in_deg[i] <= 0.0)
        throw DivisionDomainError("transition_set: node " + std::to_string(i) +
                                  " has zero in-degree");
    Mat rev(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) rev(i, j) = W(j, i) / in_deg[i];
    set.matrices.push_back(std::move(rev));
  }
  return set;
}

// ---- files ------------------------------------------------------------------

StationGraph stations_from_csv(const std::filesystem::path& path) {
  const auto table = csvutil::read_table(path);
  if (table.header.size() != 3 || table.header[0] != "station_id" ||
      table.header[1] != "x_meters" || table.header[2] != "y_meters")
    throw IoError(path.string() + ": expected header station_id,x_meters,y_meters");

  StationGraph g;
  for (const auto& row : table.rows) {
    if (row.size() != 3) throw IoError(path.string() + ": malformed station row");
    g.node_ids.push_back(row[0]);
    g.coords_m.push_back({std::stod(row[1]), std::stod(row[2])});
  }
  const std::size_t n = g.node_ids.size();
  g.dist_km = Mat(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = g.coords_m[i][0] - g.coords_m[j][0];
      const double dy = g.coords_m[i][1] - g.coords_m[j][1];
      const double km = std::hypot(dx, dy) / 1000.0;
      g.dist_km(i, j) = km;
      g.dist_km(j, i) = km;
    }
  }
  return g;
}

StationGraph distances_from_csv(const std::filesystem::path& path) {
  const auto table = csvutil::read_table(path);
  if (table.header.size() != 3 || table.header[0] != "from_id" ||
      table.header[1] != "to_id" || table.header[2] != "km")
    throw IoError(path.string() + ": expected header from_id,to_id,km");

  StationGraph g;
  std::map<std::string, std::size_t> index;
  const auto id_of = [&](const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    const std::size_t id = g.node_ids.size();
    index.emplace(name, id);
    g.node_ids.push_back(name);
    return id;
  };

  std::vector<std::tuple<std::size_t, std::size_t, double>> entries;
  for (const auto& row : table.rows) {
    if (row.size() != 3) throw IoError(path.string() + ": malformed distance row");
    const std::size_t from = id_of(row[0]);
    const std::size_t to = id_of(row[1]);
    entries.emplace_back(from, to, std::stod(row[2]));
  }
  const std::size_t n = g.node_ids.size();
  g.dist_km = Mat(n, n, -1.0);
  for (std::size_t i = 0; i < n; ++i) g.dist_km(i, i) = 0.0;
  for (const auto& [i, j, km] : entries) {
    g.dist_km(i, j) = km;
    g.dist_km(j, i) = km;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (g.dist_km(i, j) < 0.0)
        throw IoError(path.string() + ": missing distance between " + g.node_ids[i] +
                      " and " + g.node_ids[j]);
  return g;
}

std::string graph_to_json(const StationGraph& g) {
  nlohmann::json doc;
  doc["format"] = "stgcrnn-graph";
  doc["version"] = 1;
  doc["node_ids"] = g.node_ids;
  doc["num_nodes"] = g.num_nodes();
  doc["W"] = g.W.vec();
  if (!g.dist_km.empty()) doc["dist_km"] = g.dist_km.vec();
  return doc.dump();
}

StationGraph graph_from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  if (doc.value("format", "") != "stgcrnn-graph")
    throw IoError("graph file: missing or wrong format field");
  StationGraph g;
  g.node_ids = doc.at("node_ids").get<std::vector<std::string>>();
  const std::size_t n = g.node_ids.size();
  g.W = Mat(n, n, doc.at("W").get<std::vector<double>>());
  if (doc.contains("dist_km"))
    g.dist_km = Mat(n, n, doc.at("dist_km").get<std::vector<double>>());
  return g;
}

void save_graph(const StationGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << graph_to_json(g) << "\n";
}

StationGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return graph_from_json(ss.str());
}

}  // namespace stgcrnn::graph
