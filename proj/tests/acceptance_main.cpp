// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 8 shells out to the CLI binary given via --cli.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "stgcrnn/data.hpp"
#include "stgcrnn/errors.hpp"
#include "stgcrnn/graph.hpp"
#include "stgcrnn/metrics.hpp"
#include "stgcrnn/model.hpp"
#include "stgcrnn/rng.hpp"
#include "stgcrnn/train.hpp"

namespace fs = std::filesystem;
using namespace stgcrnn;

namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << name;
  if (!detail.empty()) std::cout << "  (" << detail << ")";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

template <typename F>
void guarded(int id, const std::string& name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Station layout identical to the CLI `synth` generator.
graph::StationGraph synth_layout(std::size_t nodes, double extent_km, std::uint64_t seed) {
  graph::StationGraph sg;
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
  return sg;
}

Mat random_adjacency(std::size_t n, Rng& rng, double extent_km = 15.0) {
  std::vector<std::array<double, 2>> pts(n);
  for (auto& p : pts) p = {rng.uniform(0.0, extent_km), rng.uniform(0.0, extent_km)};
  Mat d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double km = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
      d(i, j) = km;
      d(j, i) = km;
    }
  return graph::build_adjacency(d, 0.0);
}

Mat path_adjacency(std::size_t n) {
  Mat w(n, n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    w(i, i + 1) = 1.0;
    w(i + 1, i) = 1.0;
  }
  return w;
}

std::size_t path_distance(std::size_t i, std::size_t j) { return i > j ? i - j : j - i; }

// ---- criterion 1 --------------------------------------------------------------

void criterion_1() {
  const double t0 = now_s();
  double worst = 0.0;
  std::string worst_case;
  Rng rng(1407);
  const Mat w = random_adjacency(5, rng);
  for (const auto kind : {conv::ConvKind::spectral, conv::ConvKind::diffusion_rw,
                          conv::ConvKind::diffusion_dual}) {
    for (const int order : {1, 2}) {
      model::ModelConfig mc;
      mc.kind = kind;
      mc.order = order;
      mc.input_dim = 1;
      mc.hidden_dim = 3;
      mc.num_layers = 2;
      mc.history = 2;
      mc.horizon = 2;
      auto model = model::make_model(mc, w, {}, 1407 + static_cast<std::uint64_t>(order));

      std::vector<ad::Tensor> inputs, targets;
      Rng drng(99 + static_cast<std::uint64_t>(order));
      for (int t = 0; t < 2; ++t) {
        std::vector<double> xi(5), yi(5);
        for (auto& v : xi) v = drng.uniform(-1.0, 1.0);
        for (auto& v : yi) v = drng.uniform(-1.0, 1.0);
        inputs.push_back(ad::Tensor::leaf(5, 1, xi));
        targets.push_back(ad::Tensor::leaf(5, 1, yi));
      }
      const auto f = [&](ad::Tape& t) {
        const auto preds =
            model::forward(t, model, inputs, model::DecodeMode::teacher_forcing, targets);
        return train::rmse_loss(t, preds, targets);
      };
      const auto params = model.parameters();
      const double err = ad::gradient_check(f, params, 1e-5);
      if (err > worst) {
        worst = err;
        worst_case = conv::to_string(kind) + " K=" + std::to_string(order);
      }
    }
  }
  const double dt = now_s() - t0;
  report(1, "full-model gradient check vs central differences", worst < 1e-4 && dt < 60.0,
         "max rel err " + fmt(worst) + " [" + worst_case + "], " + fmt(dt) + " s");
}

// ---- criterion 2 --------------------------------------------------------------

void criterion_2() {
  Rng rng(2025);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(trial) % 5;  // 4..8
    const Mat w = random_adjacency(n, rng);
    const auto op = conv::make_graph_operator(
        w, conv::ConvKind::spectral, graph::LaplacianKind::sym_normalized,
        graph::LambdaMaxMode::power_iteration, graph::ChebRecurrence::standard);
    const int order = trial % 4;  // 0..3
    const std::size_t f_in = 1 + static_cast<std::size_t>(trial) % 3;
    auto filter = conv::make_filter(conv::ConvKind::spectral, order, f_in, 2, rng);
    for (auto& b : filter.bias.values()) b = rng.uniform(-0.5, 0.5);
    std::vector<double> xv(n * f_in);
    for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
    const ad::Tensor x = ad::Tensor::leaf(n, f_in, xv);

    ad::Tape tape;
    const ad::Tensor y = conv::spectral_gconv(tape, op, filter, x);
    const Mat l = graph::laplacian(w, graph::LaplacianKind::sym_normalized).L;
    const Mat want =
        oracle::spectral_filter_eigen(l, op.lambda_max, x.to_mat(), filter.theta.to_mat(),
                                      filter.bias.values(), order, true);
    worst = std::max(worst, max_abs_diff(y.to_mat(), want));
  }
  report(2, "spectral operator equals the eigendecomposition evaluation", worst < 1e-8,
         "max |diff| " + fmt(worst) + " over 100 cases");
}

// ---- criterion 3 --------------------------------------------------------------

void criterion_3() {
  bool single_ok = true;     // single conv application: zero effect beyond K hops
  bool stated_ok = true;     // the stated bound: s*K hops after s cell steps
  bool gated_cone_ok = true; // the bound the gate equations actually obey: (2s-1)*K
  std::size_t worst_stated_leak = 0;

  for (const std::size_t n : {std::size_t{8}, std::size_t{12}}) {
    const Mat w = path_adjacency(n);
    for (const auto kind : {conv::ConvKind::spectral, conv::ConvKind::diffusion_rw}) {
      for (const int order : {1, 2}) {
        const std::size_t k = static_cast<std::size_t>(order);
        model::ModelConfig mc;
        mc.kind = kind;
        mc.order = order;
        mc.input_dim = 1;
        mc.hidden_dim = 2;
        mc.num_layers = 1;
        auto model = model::make_model(mc, w, {}, 33);
        const auto& cell = model.encoder[0];

        Rng drng(n * 17 + k);
        std::vector<double> base(n);
        for (auto& v : base) v = drng.uniform(-1.0, 1.0);
        std::vector<double> bumped = base;
        const std::size_t j = n - 1;  // perturbed node
        bumped[j] += 0.37;

        // single conv application
        {
          ad::Tape tape(false);
          auto filter = conv::make_filter(kind, order, 1, 2, drng);
          const ad::Tensor y0 =
              conv::gconv(tape, model.op, filter, ad::Tensor::leaf(n, 1, base));
          const ad::Tensor y1 =
              conv::gconv(tape, model.op, filter, ad::Tensor::leaf(n, 1, bumped));
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t f = 0; f < 2; ++f)
              if (path_distance(i, j) > k && y0.at(i, f) != y1.at(i, f)) single_ok = false;
        }

        // s cell steps from a zero state (the perturbed input is fed every step)
        for (std::size_t steps = 1; steps <= 3; ++steps) {
          ad::Tape tape(false);
          ad::Tensor h0 = ad::Tensor::zeros(n, 2);
          ad::Tensor h1 = ad::Tensor::zeros(n, 2);
          for (std::size_t s = 0; s < steps; ++s) {
            h0 = model::cell_step(tape, model.op, cell, ad::Tensor::leaf(n, 1, base), h0);
            h1 = model::cell_step(tape, model.op, cell, ad::Tensor::leaf(n, 1, bumped), h1);
          }
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t f = 0; f < 2; ++f) {
              if (h0.at(i, f) == h1.at(i, f)) continue;
              const std::size_t dist = path_distance(i, j);
              if (dist > steps * k) {
                stated_ok = false;
                worst_stated_leak = std::max(worst_stated_leak, dist - steps * k);
              }
              // reset-gate nesting: the candidate convolves [X, r (*) H] where r
              // is itself K-hop, so a step reaches 2K; from a zero state the
              // cone after s steps is (2s-1)K
              if (dist > (2 * steps - 1) * k) gated_cone_ok = false;
            }
          }
        }
      }
    }
  }
  report(3, "K-hop locality exact on path graphs", single_ok && stated_ok,
         std::string("single conv within K hops: ") + (single_ok ? "yes" : "NO") +
             "; cells within s*K: " + (stated_ok ? "yes" : "NO") +
             "; cells within (2s-1)*K: " + (gated_cone_ok ? "yes" : "NO") +
             (stated_ok ? ""
                        : " - the gated candidate convolves the reset-gated state a "
                          "second time, so each step reaches 2K hops; the stated s*K "
                          "bound cannot hold for these gate equations (worst excess " +
                              std::to_string(worst_stated_leak) + " hops)"));
}

// ---- criterion 4 --------------------------------------------------------------

void criterion_4() {
  train::TrainConfig c;
  const bool pass = train::lr_schedule(c, 0) == 0.001 && train::lr_schedule(c, 10) == 1e-4 &&
                    train::lr_schedule(c, 50) == 2e-6 && train::lr_schedule(c, 100) == 2e-6;
  report(4, "learning-rate schedule fidelity (exact)", pass,
         "0.001 @0, 1e-4 @10, clamp 2e-6 @50");
}

// ---- criterion 5 --------------------------------------------------------------

void criterion_5() {
  Rng rng(55);
  const Mat w = random_adjacency(8, rng);
  bool pass = true;
  std::string detail;
  std::size_t paper_like = 0;
  for (const auto kind : {conv::ConvKind::diffusion_dual, conv::ConvKind::spectral}) {
    model::ModelConfig mc;
    mc.kind = kind;
    mc.order = 2;
    mc.input_dim = 1;
    mc.hidden_dim = 64;
    mc.num_layers = 2;
    auto model = model::make_model(mc, w, {}, 5);
    std::size_t enumerated = 0;
    for (const auto& p : model.parameters()) enumerated += p.size();
    const std::size_t closed = model::count_parameters(model);
    if (enumerated != closed) {
      pass = false;
      detail = conv::to_string(kind) + ": closed form " + std::to_string(closed) +
               " != enumeration " + std::to_string(enumerated);
    }
    if (kind == conv::ConvKind::diffusion_dual) paper_like = closed;
  }
  if (paper_like < 100000 || paper_like > 1000000) {
    pass = false;
    detail = "paper-like count " + std::to_string(paper_like) + " outside [1e5, 1e6]";
  }
  if (pass) detail = "paper-like config: " + std::to_string(paper_like) + " parameters";
  report(5, "parameter accounting matches enumeration", pass, detail);
}

// ---- criterion 6 --------------------------------------------------------------

void criterion_6() {
  Rng rng(66);
  double worst_rmse = 0.0, worst_r2 = 0.0, worst_sp = 0.0;

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.bounded(15));
    std::vector<double> pred(n), truth(n);
    std::vector<std::uint8_t> mask(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform(-20.0, 20.0);
      truth[i] = rng.uniform(-20.0, 20.0);
      if (n > 4) mask[i] = rng.uniform() < 0.85 ? 1 : 0;
    }
    std::size_t valid = 0;
    for (const auto m : mask) valid += m;
    if (valid < 2) continue;
    worst_rmse = std::max(worst_rmse, std::abs(metrics::rmse(pred, truth, mask) -
                                               oracle::naive_rmse(pred, truth, mask)));
    worst_r2 = std::max(worst_r2, std::abs(metrics::r_squared(pred, truth, mask) -
                                           oracle::naive_r2(pred, truth, mask)));
  }

  // spRMSE vs a brute-force double loop on small instances
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial) % 3;  // 2..4 nodes
    const std::size_t horizon = 1 + static_cast<std::size_t>(trial) % 3;
    Rng trng(1000 + static_cast<std::uint64_t>(trial));
    Mat w(n, n);  // direct random symmetric weights (2 nodes defeat the kernel builder)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        w(i, j) = trng.uniform(0.2, 1.0);
        w(j, i) = w(i, j);
      }

    data::GraphSignalSequence seq;
    for (std::size_t i = 0; i < n; ++i) seq.node_ids.push_back("n" + std::to_string(i));
    seq.features = {{"pm25", data::FactorGroup::air}};
    const std::size_t steps = 14;
    for (std::size_t t = 0; t < steps; ++t)
      seq.timestamps.push_back(1420070400 + static_cast<std::int64_t>(t) * 3600);
    seq.values.resize(steps * n);
    seq.missing.assign(steps * n, 0);
    for (auto& v : seq.values) v = trng.uniform(0.0, 1.0);

    data::WindowSpec spec;
    spec.history = 3;
    spec.horizon = horizon;
    spec.target_feature = "pm25";
    const auto windows = data::make_windows(seq, spec);
    const data::NormalizationStats stats = data::compute_stats(seq);

    model::ModelConfig mc;
    mc.kind = conv::ConvKind::diffusion_rw;
    mc.order = 1;
    mc.input_dim = 1;
    mc.hidden_dim = 2;
    mc.num_layers = 1;
    mc.history = 3;
    mc.horizon = horizon;
    auto model = model::make_model(mc, w, seq.node_ids, 2000 + static_cast<std::uint64_t>(trial));

    const double got = metrics::sp_rmse(model, windows, stats, 8);

    double node_sum = 0.0;
    for (std::size_t node = 0; node < n; ++node) {
      double sq = 0.0;
      std::size_t count = 0;
      for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        auto pair = data::materialize(windows, wi);
        std::vector<ad::Tensor> inputs;
        for (auto& m : pair.inputs) {
          m(node, 0) = 0.0;
          inputs.push_back(ad::Tensor::from_mat(m));
        }
        ad::Tape tape(false);
        const auto preds =
            model::forward(tape, model, inputs, model::DecodeMode::autoregressive, {}, 1);
        const double pd = stats.invert(preds[0].at(node, 0), 0);
        const double yd = stats.invert(pair.targets[0](node, 0), 0);
        sq += (pd - yd) * (pd - yd);
        ++count;
      }
      node_sum += std::sqrt(sq / static_cast<double>(count));
    }
    worst_sp = std::max(worst_sp, std::abs(got - node_sum / static_cast<double>(n)));
  }

  const bool pass = worst_rmse < 1e-12 && worst_r2 < 1e-12 && worst_sp < 1e-12;
  report(6, "metric oracles (rmse, r2, spRMSE) match naive loops", pass,
         "max |diff| rmse " + fmt(worst_rmse) + ", r2 " + fmt(worst_r2) + ", sp " +
             fmt(worst_sp));
}

// ---- criteria 7 and 9 (shared synthetic pipeline) ------------------------------

struct SynthRun {
  graph::StationGraph sg;  // distances; generation uses the unthresholded kernel
  Mat w_model;             // model adjacency at the default epsilon 0.01
  data::NormalizationStats stats;
  data::WindowSet fit_windows, valid_windows, test_windows;
};

SynthRun build_synth_run() {
  SynthRun run;
  run.sg = synth_layout(20, 30.0, 7);
  // the generator diffuses over the full Gaussian kernel; the model sees the
  // default-thresholded graph
  const Mat w_gen = graph::build_adjacency(run.sg.dist_km, 0.0, run.sg.node_ids);
  run.w_model = graph::build_adjacency(run.sg.dist_km, 0.01, run.sg.node_ids);

  data::SynthParams params;
  params.noise_std = 0.05;
  const auto seq = data::synthetic_generate(w_gen, 4000, 7, params);

  const std::size_t cut = static_cast<std::size_t>(4000 * 0.85);
  const auto [train_seq, test_seq] = data::split_by_time(seq, seq.timestamps[cut]);
  run.stats = data::compute_stats(train_seq);

  data::WindowSpec spec;
  spec.history = 12;
  spec.horizon = 12;
  spec.target_feature = "pm25";
  const auto all = data::make_windows(data::normalize(train_seq, run.stats), spec);
  const std::size_t n_valid = all.size() / 10;
  run.fit_windows = all;
  run.valid_windows = all;
  run.fit_windows.starts.assign(all.starts.begin(), all.starts.end() - n_valid);
  run.valid_windows.starts.assign(all.starts.end() - n_valid, all.starts.end());
  run.test_windows = data::make_windows(data::normalize(test_seq, run.stats), spec);
  return run;
}

struct TrainedVariant {
  model::GCRNNModel model;
  train::FitResult result;
  double min_epoch_seconds = 0.0;
};

TrainedVariant train_variant(const SynthRun& run, conv::ConvKind kind, int order,
                             std::size_t epochs) {
  model::ModelConfig mc;
  mc.kind = kind;
  mc.order = order;
  mc.input_dim = 1;
  mc.hidden_dim = 64;
  mc.num_layers = 2;
  mc.history = 12;
  mc.horizon = 12;
  TrainedVariant v{model::make_model(mc, run.w_model, run.sg.node_ids, 7), {}, 0.0};

  train::TrainConfig tc;  // defaults: lr 1e-3 with step decay, batch 64, Adam
  tc.max_epochs = epochs;
  tc.seed = 7;
  v.result = train::fit(v.model, run.fit_windows, run.valid_windows, tc);
  v.min_epoch_seconds = std::numeric_limits<double>::infinity();
  for (const auto& r : v.result.history)
    v.min_epoch_seconds = std::min(v.min_epoch_seconds, r.seconds);
  return v;
}

constexpr std::size_t kHeadlineEpochs = 2;
constexpr std::size_t kComparisonEpochs = 6;

void criteria_7_and_9() {
  const SynthRun run = build_synth_run();
  const auto baseline = metrics::persistence_rmse(run.test_windows, run.stats);

  // headline: defaults (dual diffusion, K=2) against the persistence baseline
  const double t0 = now_s();
  auto dual = train_variant(run, conv::ConvKind::diffusion_dual, 2, kHeadlineEpochs);
  const auto dual_report = metrics::evaluate(dual.model, run.test_windows, run.stats, true);
  const double wall = now_s() - t0;

  const bool beats = dual_report.overall_rmse <= 0.8 * baseline.overall_rmse;
  const bool in_budget = wall < 600.0 && dual.result.history.size() <= 50;

  // Fig. 5 direction: equal-budget runs compared on best validation RMSE
  auto k1 = train_variant(run, conv::ConvKind::diffusion_dual, 1, kComparisonEpochs);
  auto k2 = train_variant(run, conv::ConvKind::diffusion_dual, 2, kComparisonEpochs);
  const bool k_direction = k2.result.best_valid_rmse < k1.result.best_valid_rmse;

  // timing direction: seconds/epoch strictly increasing in K (min over epochs)
  auto k3 = train_variant(run, conv::ConvKind::diffusion_dual, 3, 1);
  const bool time_direction = k1.min_epoch_seconds < k2.min_epoch_seconds &&
                              k2.min_epoch_seconds < k3.min_epoch_seconds;

  report(7, "end-to-end learning on the synthetic network",
         beats && in_budget && k_direction && time_direction,
         "test RMSE " + fmt(dual_report.overall_rmse) + " vs persistence " +
             fmt(baseline.overall_rmse) + " in " + fmt(wall) + " s; best valid K2 " +
             fmt(k2.result.best_valid_rmse) + (k_direction ? " < " : " >= ") + "K1 " +
             fmt(k1.result.best_valid_rmse) + "; s/epoch " + fmt(k1.min_epoch_seconds) +
             " < " + fmt(k2.min_epoch_seconds) + " < " + fmt(k3.min_epoch_seconds));

  // criterion 9: blanking a node's history cannot help, for both conv kinds
  auto spectral = train_variant(run, conv::ConvKind::spectral, 2, kHeadlineEpochs);
  const auto spec_report =
      metrics::evaluate(spectral.model, run.test_windows, run.stats, true);
  const bool dual_ok =
      dual_report.sp_rmse && *dual_report.sp_rmse >= dual_report.overall_rmse;
  const bool spec_ok =
      spec_report.sp_rmse && *spec_report.sp_rmse >= spec_report.overall_rmse;
  report(9, "spRMSE >= overall RMSE for both conv kinds", dual_ok && spec_ok,
         "dual " + fmt(dual_report.sp_rmse.value_or(-1)) + " >= " +
             fmt(dual_report.overall_rmse) + "; spectral " +
             fmt(spec_report.sp_rmse.value_or(-1)) + " >= " + fmt(spec_report.overall_rmse));
}

// ---- criterion 8 --------------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// history files must agree on everything except the wall-time field
bool histories_equal_modulo_time(const fs::path& a, const fs::path& b, std::string& why) {
  std::ifstream fa(a), fb(b);
  std::string la, lb;
  std::size_t line = 0;
  while (true) {
    const bool ga = static_cast<bool>(std::getline(fa, la));
    const bool gb = static_cast<bool>(std::getline(fb, lb));
    if (ga != gb) {
      why = "different history lengths";
      return false;
    }
    if (!ga) return true;
    ++line;
    auto ja = nlohmann::json::parse(la);
    auto jb = nlohmann::json::parse(lb);
    ja.erase("seconds");
    jb.erase("seconds");
    if (ja != jb) {
      why = "epoch record " + std::to_string(line) + " differs";
      return false;
    }
  }
}

void criterion_8(const std::string& cli) {
  if (cli.empty()) {
    report(8, "reproducibility of identical train invocations", false,
           "no --cli path given");
    return;
  }
  const fs::path dir = fs::temp_directory_path() / "stgcrnn_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const std::string synth = cli + " synth --nodes 8 --steps 300 --seed 11 --out-graph " +
                            (dir / "g.json").string() + " --out " +
                            (dir / "data.jsonl").string() + " > /dev/null";
  if (std::system(synth.c_str()) != 0) {
    report(8, "reproducibility of identical train invocations", false, "synth failed");
    return;
  }
  nlohmann::json cfg;
  cfg["graph"] = (dir / "g.json").string();
  cfg["dataset"] = (dir / "data.jsonl").string();
  cfg["history"] = 4;
  cfg["horizon"] = 2;
  cfg["hidden_units"] = 8;
  cfg["num_layers"] = 1;
  cfg["order"] = 1;
  cfg["max_epochs"] = 2;
  cfg["batch_size"] = 16;
  cfg["seed"] = 11;
  std::ofstream(dir / "cfg.json") << cfg.dump();

  for (const char* out : {"runA", "runB"}) {
    const std::string cmd = cli + " train --config " + (dir / "cfg.json").string() +
                            " --out " + (dir / out).string() + " > /dev/null";
    if (std::system(cmd.c_str()) != 0) {
      report(8, "reproducibility of identical train invocations", false, "train failed");
      return;
    }
  }
  const auto find_run = [&](const char* out) {
    for (const auto& e : fs::directory_iterator(dir / out)) return e.path();
    return fs::path();
  };
  const fs::path run_a = find_run("runA");
  const fs::path run_b = find_run("runB");

  const bool ckpt_equal =
      read_file(run_a / "checkpoint.json") == read_file(run_b / "checkpoint.json");
  std::string why;
  const bool hist_equal =
      histories_equal_modulo_time(run_a / "history.jsonl", run_b / "history.jsonl", why);
  report(8, "reproducibility of identical train invocations", ckpt_equal && hist_equal,
         ckpt_equal ? (hist_equal ? "checkpoints byte-identical, histories match"
                                  : "history mismatch: " + why)
                    : "checkpoint files differ");
  fs::remove_all(dir);
}

// ---- criterion 10 ---------------------------------------------------------------

void criterion_10() {
  Rng rng(1010);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(rng.bounded(17));
    const Mat w = random_adjacency(n, rng);  // symmetric by construction
    const auto set = graph::transition_set(w, graph::TransitionMode::dual_random_walk);
    worst = std::max(worst, max_abs_diff(set.matrices[0], set.matrices[1]));
  }
  report(10, "dual transitions coincide elementwise on symmetric W", worst < 1e-15,
         "max |D_O^-1 W - D_I^-1 W^T| = " + fmt(worst));
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli, only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--cli") cli = argv[i + 1];
    if (std::string(argv[i]) == "--only") only = std::string(",") + argv[i + 1] + ",";
  }
  const auto wanted = [&only](int id) {
    return only.empty() ||
           only.find("," + std::to_string(id) + ",") != std::string::npos;
  };

  std::cout << "acceptance suite" << std::endl;
  if (wanted(1)) guarded(1, "full-model gradient check vs central differences", criterion_1);
  if (wanted(2))
    guarded(2, "spectral operator equals the eigendecomposition evaluation", criterion_2);
  if (wanted(3)) guarded(3, "K-hop locality exact on path graphs", criterion_3);
  if (wanted(4)) guarded(4, "learning-rate schedule fidelity (exact)", criterion_4);
  if (wanted(5)) guarded(5, "parameter accounting matches enumeration", criterion_5);
  if (wanted(6))
    guarded(6, "metric oracles (rmse, r2, spRMSE) match naive loops", criterion_6);
  if (wanted(7) || wanted(9))
    guarded(7, "end-to-end learning on the synthetic network (with criterion 9)",
            [] { criteria_7_and_9(); });
  if (wanted(8))
    guarded(8, "reproducibility of identical train invocations", [&] { criterion_8(cli); });
  if (wanted(10))
    guarded(10, "dual transitions coincide elementwise on symmetric W", criterion_10);

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED"
                                : std::to_string(g_failures) + " CRITERIA FAILED")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
