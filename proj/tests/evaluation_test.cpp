#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "support/fixtures.hpp"
#include "trajrecon/evaluation.hpp"

using namespace trajrecon;

namespace {

EvalTrack make_track(std::string id, std::int64_t first_frame,
                     std::vector<std::pair<double, double>> pos, double len = 16.0,
                     double wid = 6.0) {
  EvalTrack t;
  t.id = std::move(id);
  t.first_frame = first_frame;
  for (auto [x, y] : pos) {
    t.present.push_back(1);
    t.x.push_back(x);
    t.y.push_back(y);
  }
  t.length = len;
  t.width = wid;
  t.direction = +1;
  return t;
}

EvalDataset dataset(std::vector<EvalTrack> tracks) {
  EvalDataset d;
  d.tracks = std::move(tracks);
  std::sort(d.tracks.begin(), d.tracks.end(),
            [](const EvalTrack& a, const EvalTrack& b) { return a.id < b.id; });
  return d;
}

/// Two vehicles fully covered for three frames; one predicted track jumps
/// from vehicle 1 to vehicle 2 at frame 1 while fresh tracks cover the
/// leftovers. Exactly one identity switch.
std::pair<EvalDataset, EvalDataset> swap_fixture() {
  const auto g1 = [](int f) { return std::pair{100.0 + 4.0 * f, 6.0}; };
  const auto g2 = [](int f) { return std::pair{200.0 + 4.0 * f, 18.0}; };
  EvalDataset gt = dataset({make_track("gt1", 0, {g1(0), g1(1), g1(2)}),
                            make_track("gt2", 0, {g2(0), g2(1), g2(2)})});
  EvalDataset pred = dataset({make_track("pA", 0, {g1(0), g2(1), g2(2)}),
                              make_track("pB", 1, {g1(1), g1(2)}),
                              make_track("pC", 0, {g2(0)})});
  return {gt, pred};
}

}  // namespace

TEST_CASE("footprint iou") {
  const Footprint a{0, 10, 0, 4};
  const Footprint b{5, 15, 0, 4};
  CHECK(footprint_iou(a, a) == 1.0);
  CHECK(footprint_iou(a, Footprint{20, 30, 0, 4}) == 0.0);
  CHECK_THAT(footprint_iou(a, b), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
  CHECK(footprint_iou(b, a) == footprint_iou(a, b));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-10, 10);
  for (int i = 0; i < 50; ++i) {
    Footprint p{U(rng), 0, U(rng), 0};
    p.x1 = p.x0 + 5 + U(rng) / 2;
    p.y1 = p.y0 + 3 + U(rng) / 4;
    Footprint q{U(rng), 0, U(rng), 0};
    q.x1 = q.x0 + 5 + U(rng) / 2;
    q.y1 = q.y0 + 3 + U(rng) / 4;
    const double iou = footprint_iou(p, q);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    CHECK(footprint_iou(q, p) == iou);
  }
}

TEST_CASE("matching identical prediction is perfect") {
  auto [gt, pred] = swap_fixture();
  const auto matches = match_frames(gt, gt, 0.3);
  REQUIRE(matches.size() == 3);
  for (const auto& fm : matches) {
    CHECK(fm.matches.size() == 2);
    CHECK(fm.unmatched_gt.empty());
    CHECK(fm.unmatched_pred.empty());
    for (const auto& m : fm.matches) CHECK(m.iou == 1.0);
  }
}

TEST_CASE("empty prediction leaves every ground truth unmatched") {
  auto [gt, pred] = swap_fixture();
  const auto matches = match_frames(gt, EvalDataset{}, 0.3);
  std::size_t fn = 0;
  for (const auto& fm : matches) fn += fm.unmatched_gt.size();
  CHECK(fn == 6);
}

TEST_CASE("the swap fixture logs exactly one identity switch") {
  auto [gt, pred] = swap_fixture();
  const auto matches = match_frames(gt, pred, 0.3);
  const auto report = compute_metrics(matches, gt, pred);
  CHECK(report.switches == 1);
  CHECK(report.tp == 6);
  CHECK(report.fp == 0);
  CHECK(report.fn == 0);
  CHECK(report.precision == 1.0);
  CHECK(report.recall == 1.0);
  CHECK_THAT(report.mota, Catch::Matchers::WithinAbs(5.0 / 6.0, 1e-12));
  CHECK_THAT(report.sw_per_gt, Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK(report.fragmentations == 0);
}

TEST_CASE("perfect prediction scores perfectly") {
  auto [gt, pred] = swap_fixture();
  const auto report = compute_metrics(match_frames(gt, gt, 0.3), gt, gt);
  CHECK(report.precision == 1.0);
  CHECK(report.recall == 1.0);
  CHECK(report.mota == 1.0);
  CHECK(report.motp == 1.0);
  CHECK(report.fgmt_per_gt == 0.0);
  CHECK(report.sw_per_gt == 0.0);
}

TEST_CASE("half the detections missing halves recall only") {
  auto [gt, ignored] = swap_fixture();
  // keep gt1 entirely, drop gt2: 3 of 6 detections
  EvalDataset pred = dataset({gt.tracks[0]});
  pred.tracks[0].id = "p1";
  const auto report = compute_metrics(match_frames(gt, pred, 0.3), gt, pred);
  CHECK(report.precision == 1.0);
  CHECK_THAT(report.recall, Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("missing ground truth is an error") {
  EvalDataset gt;  // empty
  EvalDataset pred = dataset({make_track("p", 0, {{0, 6}})});
  CHECK_THROWS_WITH(compute_metrics(match_frames(gt, pred, 0.3), gt, pred),
                    Catch::Matchers::ContainsSubstring("no ground truth"));
}

TEST_CASE("metrics are invariant under prediction id permutation") {
  auto [gt, pred] = swap_fixture();
  const auto base = compute_metrics(match_frames(gt, pred, 0.3), gt, pred);

  EvalDataset renamed = pred;
  for (auto& t : renamed.tracks) t.id = "zz_" + t.id;
  std::swap(renamed.tracks[0].id, renamed.tracks[2].id);
  std::sort(renamed.tracks.begin(), renamed.tracks.end(),
            [](const EvalTrack& a, const EvalTrack& b) { return a.id < b.id; });
  const auto permuted = compute_metrics(match_frames(gt, renamed, 0.3), gt, renamed);
  CHECK(permuted.precision == base.precision);
  CHECK(permuted.recall == base.recall);
  CHECK(permuted.mota == base.mota);
  CHECK(permuted.motp == base.motp);
  CHECK(permuted.switches == base.switches);
  CHECK(permuted.fragmentations == base.fragmentations);
}

TEST_CASE("mota is one exactly when nothing is wrong") {
  auto [gt, pred] = swap_fixture();
  const auto perfect = compute_metrics(match_frames(gt, gt, 0.3), gt, gt);
  CHECK(perfect.mota == 1.0);
  const auto flawed = compute_metrics(match_frames(gt, pred, 0.3), gt, pred);
  CHECK(flawed.mota < 1.0);
  CHECK(flawed.fn + flawed.fp + flawed.switches > 0);
}

TEST_CASE("fragmentation counts tracked-to-untracked transitions") {
  // gt present frames 0..4; pred covers 0..1 and 3..4: one fragmentation
  EvalDataset gt = dataset({make_track(
      "g", 0, {{0, 6}, {4, 6}, {8, 6}, {12, 6}, {16, 6}})});
  EvalTrack p1 = make_track("p1", 0, {{0, 6}, {4, 6}});
  EvalTrack p2 = make_track("p2", 3, {{12, 6}, {16, 6}});
  EvalDataset pred = dataset({p1, p2});
  const auto report = compute_metrics(match_frames(gt, pred, 0.3), gt, pred);
  CHECK(report.fragmentations == 1);
  CHECK(report.fn == 1);
  // a fresh id taking over is a fragmentation, not a switch: neither
  // predicted track ever maps to more than one vehicle
  CHECK(report.switches == 0);
}

TEST_CASE("kinematic statistics") {
  SECTION("constant velocity set") {
    EvalTrack t = make_track("a", 0, {});
    for (int i = 0; i < 50; ++i) {
      t.present.push_back(1);
      t.x.push_back(57.8 * 0.04 * i);
      t.y.push_back(6.0);
    }
    EvalDataset d = dataset({t});
    const auto stats = kinematic_stats(d);
    CHECK_THAT(stats.speed.mean, Catch::Matchers::WithinAbs(57.8, 1e-9));
    CHECK(stats.speed.stdev < 1e-9);
    CHECK(std::abs(stats.accel.max) < 1e-9);
    CHECK(std::abs(stats.accel.min) < 1e-9);
    CHECK_THAT(stats.length.mean, Catch::Matchers::WithinAbs(57.8 * 0.04 * 49, 1e-9));
  }
  SECTION("two point track gives one speed sample") {
    EvalDataset d = dataset({make_track("a", 0, {{0, 0}, {4, 0}})});
    const auto stats = kinematic_stats(d);
    CHECK(stats.speed.count == 1);
    CHECK_THAT(stats.speed.mean, Catch::Matchers::WithinAbs(100.0, 1e-9));
    CHECK(stats.accel.count == 0);
  }
  SECTION("noise inflates the acceleration spread") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 1.0);
    EvalTrack clean = make_track("c", 0, {});
    EvalTrack dirty = make_track("d", 0, {});
    for (int i = 0; i < 200; ++i) {
      const double x = 50.0 * 0.04 * i;
      clean.present.push_back(1);
      clean.x.push_back(x);
      clean.y.push_back(6.0);
      dirty.present.push_back(1);
      dirty.x.push_back(x + noise(rng));
      dirty.y.push_back(6.0 + noise(rng));
    }
    const auto sc = kinematic_stats(dataset({clean}));
    const auto sd = kinematic_stats(dataset({dirty}));
    CHECK(sd.accel.stdev > 100.0 * std::max(1e-12, sc.accel.stdev));
  }
}
