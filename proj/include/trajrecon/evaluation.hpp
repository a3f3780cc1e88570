#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajrecon/core.hpp"

namespace trajrecon {

inline double footprint_iou(const Footprint& a, const Footprint& b) {
  const double ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
  const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// A track laid out on the frame grid for evaluation.
struct EvalTrack {
  std::string id;
  std::int64_t first_frame = 0;
  std::vector<std::uint8_t> present;
  std::vector<double> x, y;
  double length = 0.0, width = 0.0;
  int direction = +1;

  std::int64_t last_frame() const {
    return first_frame + static_cast<std::int64_t>(present.size()) - 1;
  }
  bool has(std::int64_t frame) const {
    const std::int64_t k = frame - first_frame;
    return k >= 0 && k < static_cast<std::int64_t>(present.size()) && present[k];
  }
  Footprint footprint(std::int64_t frame) const {
    const std::size_t k = static_cast<std::size_t>(frame - first_frame);
    return footprint_of(x[k], y[k], length, width, direction);
  }
  double spatial_extent() const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < present.size(); ++k) {
      if (!present[k]) continue;
      lo = std::min(lo, x[k]);
      hi = std::max(hi, x[k]);
    }
    return hi > lo ? hi - lo : 0.0;
  }
};

struct EvalDataset {
  std::vector<EvalTrack> tracks;
  double dt = 0.04;

  std::int64_t first_frame() const {
    std::int64_t f = std::numeric_limits<std::int64_t>::max();
    for (const auto& t : tracks) f = std::min(f, t.first_frame);
    return f;
  }
  std::int64_t last_frame() const {
    std::int64_t f = std::numeric_limits<std::int64_t>::min();
    for (const auto& t : tracks) f = std::max(f, t.last_frame());
    return f;
  }

  static EvalDataset from_fragments(std::span<const Fragment> fragments, double dt) {
    EvalDataset d;
    d.dt = dt;
    for (const Fragment& f : fragments) {
      const GridSeries g = resample_to_grid(f.points, dt);
      EvalTrack t;
      t.id = f.id;
      t.first_frame = g.first_frame;
      t.present = g.mask;
      t.x = g.x;
      t.y = g.y;
      t.length = f.length;
      t.width = f.width;
      t.direction = f.direction;
      d.tracks.push_back(std::move(t));
    }
    sort_tracks(d);
    return d;
  }

  /// Rectified trajectories: every grid slot counts as a detection,
  /// including imputed ones.
  static EvalDataset from_trajectories(std::span<const Trajectory> trajectories, double dt) {
    EvalDataset d;
    d.dt = dt;
    for (const Trajectory& tr : trajectories) {
      EvalTrack t;
      t.id = tr.id;
      t.first_frame = frame_index(tr.t.front(), dt);
      t.present.assign(tr.t.size(), 1);
      t.x = tr.x;
      t.y = tr.y;
      t.length = tr.length;
      t.width = tr.width;
      t.direction = tr.direction;
      d.tracks.push_back(std::move(t));
    }
    sort_tracks(d);
    return d;
  }

 private:
  static void sort_tracks(EvalDataset& d) {
    std::sort(d.tracks.begin(), d.tracks.end(),
              [](const EvalTrack& a, const EvalTrack& b) { return a.id < b.id; });
  }
};

/// One frame's correspondence: one-to-one pairs at IOU >= threshold plus
/// the leftovers on both sides.
struct FrameMatch {
  std::int64_t frame = 0;
  struct Pair {
    int gt = -1;
    int pred = -1;
    double iou = 0.0;
  };
  std::vector<Pair> matches;
  std::vector<int> unmatched_gt;
  std::vector<int> unmatched_pred;
};

namespace detail {

/// Square min-cost assignment (Jonker-Volgenant style potentials).
inline std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] >= 1) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

/// Per-frame one-to-one matching. Pairs standing in the previous frame
/// persist whenever they still clear the threshold; the rest is assigned by
/// optimal bipartite matching on IOU.
inline std::vector<FrameMatch> match_frames(const EvalDataset& gt, const EvalDataset& pred,
                                            double iou_threshold = 0.3) {
  std::vector<FrameMatch> out;
  if (gt.tracks.empty() && pred.tracks.empty()) return out;
  const std::int64_t f0 = std::min(gt.tracks.empty() ? pred.first_frame() : gt.first_frame(),
                                   pred.tracks.empty() ? gt.first_frame() : pred.first_frame());
  const std::int64_t f1 = std::max(gt.tracks.empty() ? pred.last_frame() : gt.last_frame(),
                                   pred.tracks.empty() ? gt.last_frame() : pred.last_frame());

  std::map<int, int> standing;  // gt index -> pred index from the previous frame
  for (std::int64_t frame = f0; frame <= f1; ++frame) {
    FrameMatch fm;
    fm.frame = frame;
    std::vector<int> gts, preds;
    for (int i = 0; i < static_cast<int>(gt.tracks.size()); ++i)
      if (gt.tracks[i].has(frame)) gts.push_back(i);
    for (int j = 0; j < static_cast<int>(pred.tracks.size()); ++j)
      if (pred.tracks[j].has(frame)) preds.push_back(j);
    if (gts.empty() && preds.empty()) continue;

    std::vector<char> gt_taken(gts.size(), 0), pred_taken(preds.size(), 0);
    std::map<int, int> pred_pos;
    for (std::size_t k = 0; k < preds.size(); ++k) pred_pos[preds[k]] = static_cast<int>(k);

    // continuity first
    for (std::size_t k = 0; k < gts.size(); ++k) {
      const auto it = standing.find(gts[k]);
      if (it == standing.end()) continue;
      const auto pp = pred_pos.find(it->second);
      if (pp == pred_pos.end() || pred_taken[pp->second]) continue;
      const double iou = footprint_iou(gt.tracks[gts[k]].footprint(frame),
                                       pred.tracks[it->second].footprint(frame));
      if (iou >= iou_threshold) {
        fm.matches.push_back({gts[k], it->second, iou});
        gt_taken[k] = 1;
        pred_taken[pp->second] = 1;
      }
    }

    // optimal assignment for the rest
    std::vector<int> rg, rp;
    for (std::size_t k = 0; k < gts.size(); ++k)
      if (!gt_taken[k]) rg.push_back(gts[k]);
    for (std::size_t k = 0; k < preds.size(); ++k)
      if (!pred_taken[k]) rp.push_back(preds[k]);
    if (!rg.empty() && !rp.empty()) {
      const int n = static_cast<int>(std::max(rg.size(), rp.size()));
      std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
      for (std::size_t gi = 0; gi < rg.size(); ++gi) {
        for (std::size_t pj = 0; pj < rp.size(); ++pj) {
          const double iou = footprint_iou(gt.tracks[rg[gi]].footprint(frame),
                                           pred.tracks[rp[pj]].footprint(frame));
          if (iou >= iou_threshold) cost[gi][pj] = -iou;
        }
      }
      const auto assign = detail::min_cost_assignment(cost);
      for (std::size_t gi = 0; gi < rg.size(); ++gi) {
        const int pj = assign[gi];
        if (pj < 0 || pj >= static_cast<int>(rp.size())) continue;
        if (cost[gi][pj] == 0.0) continue;  // below threshold
        fm.matches.push_back({rg[gi], rp[pj], -cost[gi][pj]});
      }
    }

    std::vector<char> gm(gt.tracks.size(), 0), pm(pred.tracks.size(), 0);
    for (const auto& m : fm.matches) {
      gm[m.gt] = 1;
      pm[m.pred] = 1;
    }
    for (int i : gts)
      if (!gm[i]) fm.unmatched_gt.push_back(i);
    for (int j : preds)
      if (!pm[j]) fm.unmatched_pred.push_back(j);

    standing.clear();
    for (const auto& m : fm.matches) standing[m.gt] = m.pred;
    std::sort(fm.matches.begin(), fm.matches.end(),
              [](const FrameMatch::Pair& a, const FrameMatch::Pair& b) { return a.gt < b.gt; });
    out.push_back(std::move(fm));
  }
  return out;
}

struct DistStats {
  double min = 0.0, max = 0.0, mean = 0.0, stdev = 0.0;
  std::size_t count = 0;
};

inline DistStats dist_stats(const std::vector<double>& v) {
  DistStats s;
  s.count = v.size();
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stdev = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

/// Distribution summaries over a dataset: spatial extent per track, speed
/// magnitudes from first differences of positions, signed accelerations
/// from first differences of the speeds.
struct KinematicStats {
  DistStats length;
  DistStats speed;
  DistStats accel;
  std::vector<double> speed_samples;  // retained for histogram export
  std::vector<double> accel_samples;
};

inline KinematicStats kinematic_stats(const EvalDataset& data) {
  KinematicStats out;
  std::vector<double> lengths;
  for (const auto& t : data.tracks) {
    lengths.push_back(t.spatial_extent());
    std::vector<double> ts, xs, ys;
    for (std::size_t k = 0; k < t.present.size(); ++k) {
      if (!t.present[k]) continue;
      ts.push_back(static_cast<double>(t.first_frame + static_cast<std::int64_t>(k)) * data.dt);
      xs.push_back(t.x[k]);
      ys.push_back(t.y[k]);
    }
    std::vector<double> vt, vv;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      const double dt = ts[i + 1] - ts[i];
      const double dx = xs[i + 1] - xs[i], dy = ys[i + 1] - ys[i];
      vt.push_back(ts[i]);
      vv.push_back(std::sqrt(dx * dx + dy * dy) / dt);
    }
    for (std::size_t i = 0; i + 1 < vv.size(); ++i)
      out.accel_samples.push_back((vv[i + 1] - vv[i]) / (vt[i + 1] - vt[i]));
    out.speed_samples.insert(out.speed_samples.end(), vv.begin(), vv.end());
  }
  out.length = dist_stats(lengths);
  out.speed = dist_stats(out.speed_samples);
  out.accel = dist_stats(out.accel_samples);
  return out;
}

/// CLEAR-MOT style scores plus kinematic summaries for the prediction set.
struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double mota = 0.0;
  double motp = 0.0;  // mean matched IOU, target 1
  double fgmt_per_gt = 0.0;
  double sw_per_gt = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t switches = 0, fragmentations = 0;
  std::size_t gt_detections = 0;
  std::size_t gt_tracks = 0, pred_tracks = 0;
  KinematicStats pred_stats;
  KinematicStats gt_stats;
};

/// Aggregates frame matches into the report. Identity switches are counted
/// per prediction: a predicted track that maps to a different ground-truth
/// vehicle than the last one it matched logs one switch. A fragmentation is
/// a ground-truth vehicle falling from matched to unmatched while still
/// present.
inline EvalReport compute_metrics(const std::vector<FrameMatch>& matches, const EvalDataset& gt,
                                  const EvalDataset& pred) {
  EvalReport r;
  r.gt_tracks = gt.tracks.size();
  r.pred_tracks = pred.tracks.size();

  double iou_sum = 0.0;
  std::map<int, int> last_gt_of_pred;
  std::map<int, bool> gt_was_matched;
  for (const auto& fm : matches) {
    r.tp += fm.matches.size();
    r.fn += fm.unmatched_gt.size();
    r.fp += fm.unmatched_pred.size();
    for (const auto& m : fm.matches) {
      iou_sum += m.iou;
      const auto it = last_gt_of_pred.find(m.pred);
      if (it != last_gt_of_pred.end() && it->second != m.gt) ++r.switches;
      last_gt_of_pred[m.pred] = m.gt;
    }
    for (const auto& m : fm.matches) gt_was_matched[m.gt] = true;
    for (int g : fm.unmatched_gt) {
      auto it = gt_was_matched.find(g);
      if (it != gt_was_matched.end() && it->second) ++r.fragmentations;
      gt_was_matched[g] = false;
    }
  }
  r.gt_detections = r.tp + r.fn;
  if (r.gt_detections == 0) throw std::runtime_error("no ground truth detections to score");

  r.precision = (r.tp + r.fp) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 1.0;
  r.recall = static_cast<double>(r.tp) / static_cast<double>(r.gt_detections);
  r.mota = 1.0 - static_cast<double>(r.fn + r.fp + r.switches) / static_cast<double>(r.gt_detections);
  r.motp = r.tp ? iou_sum / static_cast<double>(r.tp) : 0.0;
  r.fgmt_per_gt = gt.tracks.empty() ? 0.0
                                    : static_cast<double>(r.fragmentations) /
                                          static_cast<double>(gt.tracks.size());
  r.sw_per_gt = gt.tracks.empty()
                    ? 0.0
                    : static_cast<double>(r.switches) / static_cast<double>(gt.tracks.size());
  return r;
}

inline EvalReport evaluate(const EvalDataset& gt, const EvalDataset& pred,
                           double iou_threshold = 0.3) {
  auto report = compute_metrics(match_frames(gt, pred, iou_threshold), gt, pred);
  report.gt_stats = kinematic_stats(gt);
  report.pred_stats = kinematic_stats(pred);
  return report;
}

}  // namespace trajrecon
