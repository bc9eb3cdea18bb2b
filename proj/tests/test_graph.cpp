#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "stgcrnn/errors.hpp"
#include "stgcrnn/graph.hpp"
#include "stgcrnn/rng.hpp"

using namespace stgcrnn;
namespace g = stgcrnn::graph;

namespace {

Mat line_distances(const std::vector<double>& pos_km) {
  const std::size_t n = pos_km.size();
  Mat d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = std::abs(pos_km[i] - pos_km[j]);
  return d;
}

Mat random_distances(std::size_t n, Rng& rng, double extent_km = 20.0) {
  std::vector<std::array<double, 2>> pts(n);
  for (auto& p : pts) p = {rng.uniform(0.0, extent_km), rng.uniform(0.0, extent_km)};
  Mat d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double km = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
      d(i, j) = km;
      d(j, i) = km;
    }
  return d;
}

std::size_t nonzeros(const Mat& m) {
  std::size_t k = 0;
  for (const double v : m.vec()) k += v != 0.0;
  return k;
}

}  // namespace

TEST_CASE("build_adjacency matches the direct Gaussian-kernel formula") {
  // three nodes on a line with off-diagonal distances {1, 2, 3}
  const Mat dist = line_distances({0.0, 1.0, 3.0});
  CHECK(dist(0, 1) == 1.0);
  CHECK(dist(1, 2) == 2.0);
  CHECK(dist(0, 2) == 3.0);
  const Mat w = g::build_adjacency(dist, 0.0);

  // independent scalar evaluation: sigma over {1,2,3,1,2,3}
  const double mean = 2.0;
  double var = 0.0;
  for (const double d : {1.0, 2.0, 3.0, 1.0, 2.0, 3.0}) var += (d - mean) * (d - mean);
  var /= 6.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double want = i == j ? 0.0 : std::exp(-dist(i, j) * dist(i, j) / var);
      CHECK(w(i, j) == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("build_adjacency: co-located stations get weight 1") {
  const Mat dist = Mat::from_rows({{0, 0}, {0, 0}});
  const Mat w = g::build_adjacency(dist, 0.5);
  CHECK(w(0, 1) == 1.0);
  CHECK(w(1, 0) == 1.0);
  CHECK(w(0, 0) == 0.0);
}

TEST_CASE("build_adjacency: thresholding zeroes small weights") {
  const Mat dist = line_distances({0.0, 1.0, 2.0, 3.0});
  const Mat w0 = g::build_adjacency(dist, 0.0);
  CHECK(w0(0, 3) > 0.0);
  const Mat w = g::build_adjacency(dist, 0.01);
  CHECK(w(0, 3) == 0.0);  // exp(-9/sigma^2) is far below 0.01
  CHECK(w(0, 1) > 0.01);
}

TEST_CASE("build_adjacency error contracts") {
  SUBCASE("identical nonzero distances leave sigma undefined") {
    const Mat dist = Mat::from_rows({{0, 5}, {5, 0}});
    CHECK_THROWS_AS(g::build_adjacency(dist, 0.0), DegenerateGraphError);
  }
  SUBCASE("aggressive threshold isolates a node and names it") {
    // weights to the far node are ~2.5e-3 and ~1.4e-6, both below 0.01
    const Mat dist = line_distances({0.0, 1.0, 3.0});
    try {
      g::build_adjacency(dist, 0.01, {"a", "b", "far"});
      FAIL("expected IsolatedNodeError");
    } catch (const IsolatedNodeError& e) {
      CHECK(e.node_id == "far");
    }
  }
  SUBCASE("epsilon outside [0, 1)") {
    const Mat dist = line_distances({0.0, 1.0, 3.0});
    CHECK_THROWS_AS(g::build_adjacency(dist, 1.0), ContractError);
    CHECK_THROWS_AS(g::build_adjacency(dist, -0.1), ContractError);
  }
}

TEST_CASE("thresholding monotonicity: larger epsilon never adds nonzeros") {
  Rng rng(11);
  const Mat dist = random_distances(9, rng);
  std::size_t prev = SIZE_MAX;
  for (const double eps : {0.0, 0.01, 0.05, 0.1, 0.3}) {
    std::size_t count = 0;
    try {
      count = nonzeros(g::build_adjacency(dist, eps));
    } catch (const IsolatedNodeError&) {
      break;  // graph fell apart; monotonicity held up to here
    }
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("laplacian: two-node trivial cases") {
  const Mat w = Mat::from_rows({{0, 1}, {1, 0}});
  const Mat want = Mat::from_rows({{1, -1}, {-1, 1}});
  CHECK(max_abs_diff(g::laplacian(w, g::LaplacianKind::combinatorial).L, want) == 0.0);
  CHECK(max_abs_diff(g::laplacian(w, g::LaplacianKind::sym_normalized).L, want) == 0.0);
  CHECK(max_abs_diff(g::laplacian(w, g::LaplacianKind::rw_normalized).L, want) == 0.0);
}

TEST_CASE("laplacian: combinatorial rows sum to zero") {
  Rng rng(3);
  const Mat w = g::build_adjacency(random_distances(6, rng), 0.0);
  const Mat l = g::laplacian(w, g::LaplacianKind::combinatorial).L;
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sum += l(i, j);
    CHECK(std::abs(sum) < 1e-12);
  }
}

TEST_CASE("laplacian: zero-degree node rejected for normalized kinds") {
  const Mat w = Mat::from_rows({{0, 1, 0}, {1, 0, 0}, {0, 0, 0}});
  CHECK_THROWS_AS(g::laplacian(w, g::LaplacianKind::sym_normalized), DivisionDomainError);
  CHECK_THROWS_AS(g::laplacian(w, g::LaplacianKind::rw_normalized), DivisionDomainError);
  CHECK_NOTHROW(g::laplacian(w, g::LaplacianKind::combinatorial));
}

TEST_CASE("largest_eigenvalue: known spectra") {
  CHECK(g::largest_eigenvalue(Mat::from_rows({{1, -1}, {-1, 1}})) ==
        doctest::Approx(2.0).epsilon(1e-9));
  CHECK(g::largest_eigenvalue(Mat::identity(4)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("largest_eigenvalue matches the dense eigensolver oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Mat a(8, 8);
    for (auto& v : a.vec()) v = rng.uniform(-1.0, 1.0);
    // PSD via A^T A
    Mat psd(8, 8);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 8; ++k) s += a(k, i) * a(k, j);
        psd(i, j) = s;
      }
    const double got = g::largest_eigenvalue(psd);
    const auto eig = oracle::eig_sym(psd);
    CHECK(std::abs(got - eig.values.back()) < 1e-6);
  }
}

TEST_CASE("scaled Laplacian has spectral radius at most 1 (+tolerance)") {
  Rng rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat w = g::build_adjacency(random_distances(7, rng), 0.0);
    const auto bundle = g::make_bundle(w, g::LaplacianKind::sym_normalized);
    const auto eig = oracle::eig_sym(bundle.L_scaled);
    for (const double lam : eig.values) CHECK(std::abs(lam) <= 1.0 + 1e-6);
  }
}

TEST_CASE("lambda_max fallback mode fixes the value at 2") {
  const Mat w = Mat::from_rows({{0, 1}, {1, 0}});
  const auto bundle =
      g::make_bundle(w, g::LaplacianKind::sym_normalized, g::LambdaMaxMode::fixed_two);
  CHECK(bundle.lambda_max == 2.0);
  // L_scaled = L - I for lambda_max = 2
  CHECK(bundle.L_scaled(0, 0) == doctest::Approx(0.0));
  CHECK(bundle.L_scaled(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("chebyshev_apply: base cases and the K=2 oracle") {
  Rng rng(31);
  Mat x(5, 2);
  for (auto& v : x.vec()) v = rng.uniform(-1.0, 1.0);
  const Mat w = g::build_adjacency(random_distances(5, rng), 0.0);
  const auto bundle = g::make_bundle(w, g::LaplacianKind::sym_normalized);

  SUBCASE("K = 0 returns [X]") {
    const auto terms = g::chebyshev_apply(bundle.L_scaled, x, 0);
    REQUIRE(terms.size() == 1);
    CHECK(max_abs_diff(terms[0], x) == 0.0);
  }
  SUBCASE("K = 1 with identity operator returns [X, X]") {
    const auto terms = g::chebyshev_apply(Mat::identity(5), x, 1);
    REQUIRE(terms.size() == 2);
    CHECK(max_abs_diff(terms[1], x) == 0.0);
  }
  SUBCASE("standard recurrence: T_2 X = 2 L(LX) - X") {
    const auto terms = g::chebyshev_apply(bundle.L_scaled, x, 2);
    REQUIRE(terms.size() == 3);
    const Mat lx = oracle::naive_matmul(bundle.L_scaled, x);
    Mat want = oracle::naive_matmul(bundle.L_scaled, lx);
    for (std::size_t i = 0; i < want.size(); ++i)
      want.vec()[i] = 2.0 * want.vec()[i] - x.vec()[i];
    CHECK(max_abs_diff(terms[2], want) < 1e-12);
  }
  SUBCASE("as-printed recurrence drops the factor 2") {
    const auto terms =
        g::chebyshev_apply(bundle.L_scaled, x, 2, g::ChebRecurrence::as_printed);
    const Mat lx = oracle::naive_matmul(bundle.L_scaled, x);
    Mat want = oracle::naive_matmul(bundle.L_scaled, lx);
    for (std::size_t i = 0; i < want.size(); ++i) want.vec()[i] -= x.vec()[i];
    CHECK(max_abs_diff(terms[2], want) < 1e-12);
  }
}

TEST_CASE("spectral identity: polynomial in L equals its eigendecomposition route") {
  Rng rng(37);
  for (std::size_t n = 4; n <= 8; ++n) {
    const Mat w = g::build_adjacency(random_distances(n, rng), 0.0);
    const Mat l = g::laplacian(w, g::LaplacianKind::sym_normalized).L;
    Mat x(n, 3);
    for (auto& v : x.vec()) v = rng.uniform(-1.0, 1.0);
    const std::vector<double> coeffs = {0.3, -0.5, 0.8, 0.1};
    const Mat direct = oracle::poly_in_laplacian_direct(l, coeffs, x);
    const Mat modal = oracle::poly_in_laplacian_eigen(l, coeffs, x);
    CHECK(max_abs_diff(direct, modal) < 1e-8);
  }
}

TEST_CASE("transition_set: trivial and structural properties") {
  SUBCASE("unit-degree swap") {
    const Mat w = Mat::from_rows({{0, 1}, {1, 0}});
    const auto set = g::transition_set(w, g::TransitionMode::random_walk);
    REQUIRE(set.matrices.size() == 1);
    CHECK(max_abs_diff(set.matrices[0], w) == 0.0);
  }
  SUBCASE("symmetric W: the dual transitions coincide") {
    Rng rng(41);
    const Mat w = g::build_adjacency(random_distances(6, rng), 0.0);
    const auto set = g::transition_set(w, g::TransitionMode::dual_random_walk);
    REQUIRE(set.matrices.size() == 2);
    CHECK(max_abs_diff(set.matrices[0], set.matrices[1]) < 1e-15);
  }
  SUBCASE("asymmetric W: rows are stochastic") {
    Rng rng(43);
    Mat w(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        if (i != j) w(i, j) = rng.uniform(0.1, 1.0);
    const auto set = g::transition_set(w, g::TransitionMode::dual_random_walk);
    for (const auto& p : set.matrices)
      for (std::size_t i = 0; i < 4; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) sum += p(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
  SUBCASE("zero-degree node rejected") {
    const Mat w = Mat::from_rows({{0, 0}, {1, 0}});
    CHECK_THROWS_AS(g::transition_set(w, g::TransitionMode::random_walk),
                    DivisionDomainError);
  }
}

TEST_CASE("station CSV, distance CSV and graph JSON round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "stgcrnn_graph_test";
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "stations.csv");
    out << "station_id,x_meters,y_meters\n";
    out << "a,0,0\n";
    out << "b,3000,4000\n";
    out << "c,0,8000\n";
  }
  auto sg = g::stations_from_csv(dir / "stations.csv");
  REQUIRE(sg.node_ids == std::vector<std::string>{"a", "b", "c"});
  CHECK(sg.dist_km(0, 1) == doctest::Approx(5.0));
  CHECK(sg.dist_km(0, 2) == doctest::Approx(8.0));
  CHECK(sg.dist_km(1, 0) == sg.dist_km(0, 1));

  sg.W = g::build_adjacency(sg.dist_km, 0.0, sg.node_ids);
  g::save_graph(sg, dir / "graph.json");
  const auto loaded = g::load_graph(dir / "graph.json");
  CHECK(loaded.node_ids == sg.node_ids);
  CHECK(loaded.W.vec() == sg.W.vec());        // bit-exact round trip
  CHECK(loaded.dist_km.vec() == sg.dist_km.vec());

  {
    std::ofstream out(dir / "dist.csv");
    out << "from_id,to_id,km\n";
    out << "x,y,2.5\n";
    out << "x,z,1.5\n";
    out << "y,z,2.0\n";
  }
  const auto dg = g::distances_from_csv(dir / "dist.csv");
  CHECK(dg.node_ids == std::vector<std::string>{"x", "y", "z"});
  CHECK(dg.dist_km(1, 0) == 2.5);

  {
    std::ofstream out(dir / "incomplete.csv");
    out << "from_id,to_id,km\n";
    out << "x,y,2.5\n";
    out << "x,z,1.5\n";
  }
  CHECK_THROWS_AS(g::distances_from_csv(dir / "incomplete.csv"), IoError);
  std::filesystem::remove_all(dir);
}
