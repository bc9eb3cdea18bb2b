#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stgcrnn/mat.hpp"

namespace stgcrnn::graph {

/// Sensor-station graph: nodes with planar coordinates, pairwise distances in
/// kilometers, and the thresholded Gaussian-kernel adjacency.
struct StationGraph {
  std::vector<std::string> node_ids;
  std::vector<std::array<double, 2>> coords_m;  ///< projected meters; may be empty
  Mat dist_km;                                  ///< N x N symmetric, zero diagonal
  Mat W;                                        ///< N x N weighted adjacency in [0, 1]

  std::size_t num_nodes() const { return node_ids.size(); }
};

/// W_ij = exp(-dist_ij^2 / sigma^2) with sigma the standard deviation of all
/// off-diagonal distances; entries below epsilon are zeroed, the diagonal is
/// forced to zero. Throws DegenerateGraphError when sigma is zero with any
/// nonzero distance and IsolatedNodeError (with the node index as id) when
/// thresholding disconnects a node.
Mat build_adjacency(const Mat& dist_km, double epsilon);
Mat build_adjacency(const Mat& dist_km, double epsilon,
                    const std::vector<std::string>& node_ids);

enum class LaplacianKind { combinatorial, sym_normalized, rw_normalized };
enum class LambdaMaxMode { power_iteration, fixed_two };
enum class ChebRecurrence { standard, as_printed };

LaplacianKind laplacian_kind_from_string(const std::string& s);
std::string to_string(LaplacianKind k);

struct LaplacianBundle {
  LaplacianKind kind = LaplacianKind::sym_normalized;
  Mat L;
  double lambda_max = 0.0;  ///< 0 until filled
  Mat L_scaled;             ///< 2L/lambda_max - I; empty until finalized
};

/// L from the selected formula; lambda_max and L_scaled left unfilled.
LaplacianBundle laplacian(const Mat& W, LaplacianKind kind);

/// Dominant eigenvalue by power iteration: stops when successive Rayleigh
/// quotients differ by < 1e-9, throws EigenEstimationError (carrying the last
/// iterate) after 10,000 iterations.
double largest_eigenvalue(const Mat& L);

/// Fill lambda_max (power iteration or the fixed upper bound 2) and L_scaled.
void finalize_bundle(LaplacianBundle& bundle,
                     LambdaMaxMode mode = LambdaMaxMode::power_iteration);

/// Convenience: laplacian + finalize.
LaplacianBundle make_bundle(const Mat& W, LaplacianKind kind,
                            LambdaMaxMode mode = LambdaMaxMode::power_iteration);

/// Chebyshev basis applied to a graph signal: [T_0(L)X, ..., T_K(L)X] by the
/// three-term recurrence T_0 = X, T_1 = LX. `standard` uses
/// T_k = 2 L T_{k-1} - T_{k-2}; `as_printed` drops the factor 2.
std::vector<Mat> chebyshev_apply(const Mat& l_scaled, const Mat& x, int order,
                                 ChebRecurrence rec = ChebRecurrence::standard);

enum class TransitionMode { random_walk, dual_random_walk };

/// Row-stochastic diffusion transition matrices: {D^-1 W} for random_walk,
/// {D_O^-1 W, D_I^-1 W^T} for dual_random_walk.
struct TransitionSet {
  TransitionMode mode = TransitionMode::random_walk;
  std::vector<Mat> matrices;
};

TransitionSet transition_set(const Mat& W, TransitionMode mode);

// ---- files ----------------------------------------------------------------

/// CSV with header station_id,x_meters,y_meters; fills node_ids, coords_m and
/// the Euclidean distance matrix in km. W left empty.
StationGraph stations_from_csv(const std::filesystem::path& path);

/// CSV with header from_id,to_id,km (symmetric closure applied).
StationGraph distances_from_csv(const std::filesystem::path& path);

std::string graph_to_json(const StationGraph& g);
StationGraph graph_from_json(const std::string& text);
void save_graph(const StationGraph& g, const std::filesystem::path& path);
StationGraph load_graph(const std::filesystem::path& path);

}  // namespace stgcrnn::graph
