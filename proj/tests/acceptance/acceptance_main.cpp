// Acceptance suite: end-to-end checks with pinned tolerances, one pass/fail
// line per criterion. Optional argv: criterion numbers to run (default all).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "trajrecon/association.hpp"
#include "trajrecon/benchmark.hpp"
#include "trajrecon/config.hpp"
#include "trajrecon/evaluation.hpp"
#include "trajrecon/jsonl.hpp"
#include "trajrecon/pipeline.hpp"
#include "trajrecon/rectification.hpp"

using namespace trajrecon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "trajrecon_acceptance";
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- criterion 1
Outcome criterion_1_batch_optimality() {
  std::mt19937_64 rng(2024);
  const auto params = fixtures::stream_params();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 8)(rng);
    const auto frags = fixtures::random_fragments(rng, n);
    CirculationGraph g(frags, params);
    g.solve();
    const double got = g.total_cost();
    const double want = oracles::enumerate_min_cost(frags, params);
    worst = std::max(worst, std::abs(got - want));
    if (std::abs(got - want) > 1e-9) {
      std::ostringstream msg;
      msg << "trial " << trial << ": batch cost " << got << " vs enumeration " << want;
      return {false, msg.str()};
    }
  }
  std::ostringstream msg;
  msg << "100 instances, max |cost difference| " << worst;
  return {true, msg.str()};
}

// ---------------------------------------------------------------- criterion 2
Outcome criterion_2_online_equals_batch() {
  std::mt19937_64 rng(77);
  const auto params = fixtures::stream_params();
  double worst = 0.0;
  for (int stream = 0; stream < 20; ++stream) {
    const auto frags = fixtures::random_fragments(rng, 1000);
    AssociationState st(params);  // infinite horizon
    for (const auto& f : frags) st.add(f);

    CirculationGraph batch(frags, params);
    batch.solve();

    const double online_cost = st.graph().flow_cost();
    const double batch_cost = batch.total_cost();
    worst = std::max(worst, std::abs(online_cost - batch_cost));
    if (std::abs(online_cost - batch_cost) > 1e-9) {
      std::ostringstream msg;
      msg << "stream " << stream << ": online cost " << online_cost << " vs batch "
          << batch_cost;
      return {false, msg.str()};
    }
    std::vector<std::vector<std::string>> online;
    for (const auto& c : st.chains()) online.push_back(c.ids());
    std::sort(online.begin(), online.end());
    if (online != batch.chains())
      return {false, "stream " + std::to_string(stream) + ": chain sets differ"};
  }
  std::ostringstream msg;
  msg << "20 streams of 1000 fragments, max |cost difference| " << worst;
  return {true, msg.str()};
}

// ---------------------------------------------------------------- criterion 3
Outcome criterion_3_rectification_oracle() {
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> N01(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst_rel = 0.0, worst_con = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20 + static_cast<std::size_t>(U(rng) * 30);  // N <= 50
    RectificationProblem p;
    p.n = n;
    p.dt = 0.04;
    p.nonneg_speed = trial % 2 == 0;
    const double speed = 5.0 + 90.0 * U(rng);
    std::vector<double> z;
    for (std::size_t i = 0; i < n; ++i) {
      const bool interior = i > 0 && i + 1 < n;
      if (interior && U(rng) < 0.3) continue;  // random mask
      double v = speed * 0.04 * static_cast<double>(i) + N01(rng);
      if (U(rng) < 0.06) v += (10.0 + 40.0 * U(rng)) * (U(rng) < 0.5 ? 1.0 : -1.0);
      p.observed.push_back(i);
      z.push_back(v);
    }
    p.z = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());

    const auto sol = rectify_axis(p);
    const auto ref = oracles::admm_rectify(p.z, p.observed, p.n, p.dt, p.lambda1, p.lambda2,
                                           p.lambda3, p.a_max, p.j_max, p.nonneg_speed, +1);
    if (!ref.converged)
      return {false, "oracle failed to converge on trial " + std::to_string(trial)};
    const double rel =
        std::abs(sol.objective - ref.objective) / std::max(1e-12, std::abs(ref.objective));
    worst_rel = std::max(worst_rel, rel);
    worst_con = std::max(worst_con, sol.constraint_residual);
    if (rel > 1e-5 || sol.constraint_residual > 1e-6) {
      std::ostringstream msg;
      msg << "trial " << trial << ": relative objective gap " << rel << ", constraint residual "
          << sol.constraint_residual;
      return {false, msg.str()};
    }
    // internal consistency: derivative series from the same arithmetic
    std::vector<double> xs(sol.x.data(), sol.x.data() + sol.x.size());
    const auto v = apply_difference(xs, 1, p.dt);
    double xi = xs.front();
    for (std::size_t i = 0; i < v.size(); ++i) xi += v[i] * p.dt;
    if (std::abs(xi - xs.back()) > 1e-9 * std::max(1.0, std::abs(xs.back())))
      return {false, "integration round trip drifted on trial " + std::to_string(trial)};
  }
  std::ostringstream msg;
  msg << "50 instances, max relative objective gap " << worst_rel
      << ", max constraint residual " << worst_con;
  return {true, msg.str()};
}

// ---------------------------------------------------------------- criterion 4
Outcome criterion_4_constant_velocity() {
  RectificationProblem p;
  p.n = 120;
  p.dt = 0.04;
  p.nonneg_speed = true;
  p.z.resize(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    p.observed.push_back(i);
    p.z[i] = 10.0 * (0.04 * static_cast<double>(i));
  }
  const auto sol = rectify_axis(p);
  double max_err = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) max_err = std::max(max_err, std::abs(sol.x[i] - p.z[i]));
  std::ostringstream msg;
  msg << "max |x - z| " << max_err;
  return {max_err <= 1e-6, msg.str()};
}

// ---------------------------------------------------------------- criterion 5
struct BenchmarkArtifacts {
  std::vector<Fragment> gt;
  std::vector<Fragment> raw;
  std::string gt_path, raw_path;
};

ScenarioSpec benchmark_scenario() {
  ScenarioSpec s;
  s.corridor_length = 2000.0;
  s.duration = 900.0;
  s.lane_count = 4;
  s.demand = {{0.0, 180.0, 600.0},
              {180.0, 360.0, 1200.0},
              {360.0, 540.0, 1800.0},
              {540.0, 720.0, 1200.0},
              {720.0, 900.0, 600.0}};
  s.bottleneck = Bottleneck{1, 800.0, 60.0, 210.0};
  return s;
}

std::vector<SpaceTimeMask> benchmark_masks() {
  return {{100.0, 300.0, 300.0, 600.0},
          {1550.0, 1700.0, 0.0, 900.0},
          {380.0, 430.0, 100.0, 500.0},
          {1000.0, 1050.0, 400.0, 800.0}};
}

CameraLayout benchmark_cameras() {
  return {{{0.0, 700.0}, {600.0, 1400.0}, {1300.0, 2000.0}}};
}

CostModelParams benchmark_cost_params() {
  CostModelParams p;
  p.alpha = 2.0;
  p.beta = 0.5;
  p.p_enter = 0.08;
  p.p_exit = 0.08;
  p.fp_prob = 0.08;
  p.max_gap = 15.0;
  p.max_transition_cost = 5.0;
  p.nominal_speed = 100.0;
  return p;
}

BenchmarkArtifacts make_benchmark_data() {
  BenchmarkArtifacts a;
  a.gt = generate_ground_truth(benchmark_scenario(), 20240521);
  NoiseSpec noise;
  noise.sigma = 1.0;
  noise.outlier_rate = 0.003;
  noise.seed = 77;
  a.raw = perturb(a.gt, benchmark_masks(), benchmark_cameras(), noise);
  const auto dir = work_dir();
  a.gt_path = (dir / "bench_gt.jsonl").string();
  a.raw_path = (dir / "bench_raw.jsonl").string();
  write_fragments(a.gt_path, a.gt);
  write_fragments(a.raw_path, a.raw);
  return a;
}

Outcome criterion_5_benchmark_trend() {
  const auto data = make_benchmark_data();
  std::ostringstream msg;
  msg << data.gt.size() << " gt trajectories, " << data.raw.size() << " raw fragments; ";
  if (data.gt.size() < 500 || data.gt.size() > 1100)
    return {false, msg.str() + "ground truth volume out of range"};

  const auto gt_eval = EvalDataset::from_fragments(data.gt, 0.04);
  const auto raw_eval = EvalDataset::from_fragments(data.raw, 0.04);
  const EvalReport raw_report = evaluate(gt_eval, raw_eval);

  PipelineConfig cfg;
  cfg.input = data.raw_path;
  cfg.output = (work_dir() / "bench_rec.jsonl").string();
  cfg.partitions = {0.0, 2000.0};
  cfg.cost = benchmark_cost_params();
  cfg.eviction_horizon = 300.0;
  cfg.threads = 2;
  const auto summary = run_pipeline(cfg);

  const auto rec = read_trajectories(cfg.output);
  const auto rec_eval = EvalDataset::from_trajectories(rec, 0.04);
  const EvalReport rec_report = evaluate(gt_eval, rec_eval);

  msg << summary.trajectories << " rec trajectories; "
      << "raw P/R " << raw_report.precision << "/" << raw_report.recall << ", rec P/R "
      << rec_report.precision << "/" << rec_report.recall << "; Fgmt/GT " << raw_report.fgmt_per_gt
      << " -> " << rec_report.fgmt_per_gt << "; accel stdev " << raw_report.pred_stats.accel.stdev
      << " -> " << rec_report.pred_stats.accel.stdev << "; mean length "
      << raw_report.pred_stats.length.mean << " -> " << rec_report.pred_stats.length.mean;

  bool ok = true;
  std::ostringstream why;
  if (!(raw_report.fgmt_per_gt >= 3.0 && raw_report.fgmt_per_gt <= 7.0)) {
    ok = false;
    why << " [raw Fgmt/GT outside 3..7]";
  }
  if (!(rec_report.fgmt_per_gt <= 0.2 * raw_report.fgmt_per_gt)) {
    ok = false;
    why << " [fragmentation reduction below 80%]";
  }
  if (!(rec_report.precision >= raw_report.precision + 0.10)) {
    ok = false;
    why << " [precision gain below 10 points]";
  }
  if (!(rec_report.recall >= raw_report.recall + 0.10)) {
    ok = false;
    why << " [recall gain below 10 points]";
  }
  if (!(rec_report.pred_stats.accel.stdev <= 5.0)) {
    ok = false;
    why << " [rec accel stdev above 5]";
  }
  if (!(raw_report.pred_stats.accel.stdev >= 100.0)) {
    ok = false;
    why << " [raw accel stdev below 100]";
  }
  if (!(rec_report.pred_stats.length.mean >= 3.0 * raw_report.pred_stats.length.mean)) {
    ok = false;
    why << " [mean length gain below 3x]";
  }
  return {ok, msg.str() + why.str()};
}

// ---------------------------------------------------------------- criterion 6
Outcome criterion_6_throughput() {
  // Synthetic stream: configured arrival rate 90 fragments/s of data time,
  // thinned ~12%, single fragments across 24 lanes of a long corridor.
  const double configured_rate = 90.0;
  const double horizon = 60.0;
  const std::size_t target = 50000;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  std::vector<Fragment> stream;
  stream.reserve(target);
  double t = 0.0;
  std::size_t made = 0, slot = 0;
  while (made < target) {
    t = static_cast<double>(slot++) / configured_rate;
    if (U(rng) > 0.88) continue;  // thinning keeps realized rate under the configured one
    const double t0 = std::round(t / 0.04) * 0.04;
    const double speed = 30.0 + 80.0 * U(rng);
    const double lane = 6.0 + 12.0 * std::floor(U(rng) * 24.0);
    Fragment f = fixtures::line_fragment("s" + std::to_string(made), t0, t0 + 0.6 + U(rng),
                                         U(rng) * 20000.0, speed, lane);
    for (auto& p : f.points) {
      p.x += 0.5 * (U(rng) - 0.5);
      p.y += 0.5 * (U(rng) - 0.5);
    }
    stream.push_back(std::move(f));
    ++made;
  }
  std::sort(stream.begin(), stream.end(), [](const Fragment& a, const Fragment& b) {
    if (a.last_t() != b.last_t()) return a.last_t() < b.last_t();
    return a.id < b.id;
  });

  CostModelParams params = fixtures::stream_params();
  AssociationState st(params, horizon);
  const double t_begin = now_seconds();
  std::size_t emitted = 0;
  std::size_t since = 0;
  for (auto& f : stream) {
    st.add(std::move(f));
    if (++since >= 16) {
      since = 0;
      emitted += st.evict().size();
    }
  }
  emitted += st.flush().size();
  const double elapsed = now_seconds() - t_begin;

  const double rate = static_cast<double>(target) / elapsed;
  const double bound = horizon * configured_rate;
  std::ostringstream msg;
  msg << rate << " fragments/s over " << target << " fragments (" << elapsed << " s), "
      << emitted << " chains, peak resident " << st.peak_resident_fragments() << " vs bound "
      << bound;
  const bool ok = rate >= 139.0 && static_cast<double>(st.peak_resident_fragments()) < bound;
  return {ok, msg.str()};
}

// ---------------------------------------------------------------- criterion 7
Outcome criterion_7_clearmot_fixture() {
  const auto track = [](std::string id, std::int64_t f0,
                        std::vector<std::pair<double, double>> pos) {
    EvalTrack t;
    t.id = std::move(id);
    t.first_frame = f0;
    for (auto [x, y] : pos) {
      t.present.push_back(1);
      t.x.push_back(x);
      t.y.push_back(y);
    }
    t.length = 16.0;
    t.width = 6.0;
    t.direction = +1;
    return t;
  };
  const auto g1 = [](int f) { return std::pair{100.0 + 4.0 * f, 6.0}; };
  const auto g2 = [](int f) { return std::pair{200.0 + 4.0 * f, 18.0}; };
  EvalDataset gt;
  gt.tracks = {track("gt1", 0, {g1(0), g1(1), g1(2)}), track("gt2", 0, {g2(0), g2(1), g2(2)})};
  EvalDataset pred;
  pred.tracks = {track("pA", 0, {g1(0), g2(1), g2(2)}), track("pB", 1, {g1(1), g1(2)}),
                 track("pC", 0, {g2(0)})};

  const auto report = compute_metrics(match_frames(gt, pred, 0.3), gt, pred);
  std::ostringstream msg;
  msg << "precision " << report.precision << ", recall " << report.recall << ", Sw/GT "
      << report.sw_per_gt << ", MOTA " << report.mota;
  const bool ok = report.precision == 1.0 && report.recall == 1.0 && report.sw_per_gt == 0.5 &&
                  std::abs(report.mota - 5.0 / 6.0) < 1e-15;
  return {ok, msg.str()};
}

// ---------------------------------------------------------------- criterion 8
Outcome criterion_8_partition_equivalence() {
  const auto dir = work_dir();
  const std::string raw_path = (dir / "bench_raw.jsonl").string();
  if (!fs::exists(raw_path)) {
    const auto data = make_benchmark_data();
    (void)data;
  }

  PipelineConfig cfg;
  cfg.input = raw_path;
  cfg.cost = benchmark_cost_params();
  // equal regression windows at both association levels so worker-level and
  // master-level link costs coincide
  cfg.cost.fit_window = 0.75;
  cfg.cost.eval_window = 0.75;
  cfg.master_cost = cfg.cost;
  cfg.eviction_horizon = 300.0;
  cfg.threads = 2;

  cfg.partitions = {0.0, 2000.0};
  cfg.output = (dir / "eq_one.jsonl").string();
  run_pipeline(cfg);
  const auto one = read_trajectories(cfg.output);

  cfg.partitions = {0.0, 470.0, 1480.0, 2000.0};
  cfg.output = (dir / "eq_three.jsonl").string();
  const auto summary = run_pipeline(cfg);
  const auto three = read_trajectories(cfg.output);

  std::vector<std::vector<std::string>> a, b;
  for (const auto& t : one) a.push_back(t.fragment_ids);
  for (const auto& t : three) b.push_back(t.fragment_ids);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());

  std::size_t common = 0;
  std::set<std::vector<std::string>> bs(b.begin(), b.end());
  for (const auto& c : a) common += bs.count(c);
  std::ostringstream msg;
  msg << a.size() << " vs " << b.size() << " chains, " << common << " identical, "
      << summary.master_merges << " master merges";
  return {a == b, msg.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "batch circulation cost equals exhaustive enumeration", criterion_1_batch_optimality},
      {2, "online association equals batch", criterion_2_online_equals_batch},
      {3, "rectification matches the independent solver", criterion_3_rectification_oracle},
      {4, "constant velocity recovered exactly", criterion_4_constant_velocity},
      {5, "benchmark trend: rectified beats raw", criterion_5_benchmark_trend},
      {6, "streaming throughput and bounded memory", criterion_6_throughput},
      {7, "hand-computed tracking fixture", criterion_7_clearmot_fixture},
      {8, "partitioned pipeline equals single partition", criterion_8_partition_equivalence},
  };

  int failures = 0;
  for (const auto& e : entries) {
    if (!want(e.id)) continue;
    const double t0 = now_seconds();
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out = {false, std::string("exception: ") + ex.what()};
    }
    const double dt = now_seconds() - t0;
    std::printf("[%s] criterion %d: %s (%.1f s) %s\n", out.pass ? "PASS" : "FAIL", e.id, e.name,
                dt, out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures;
}
