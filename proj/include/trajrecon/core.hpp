#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajrecon {

/// Frame period of the common time grid, seconds. All timestamps in the
/// system are snapped to integer multiples of dt anchored at t = 0, so that
/// data from different cameras shares frame indices.
struct FrameConfig {
  double dt = 0.04;  // 25 Hz
};

/// One positional measurement in roadway coordinates (feet, seconds).
/// x is longitudinal (direction of travel), y lateral.
struct Point {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// A contiguous partial track of a single vehicle: the atomic unit of
/// association. Timestamps are strictly increasing and grid-aligned.
struct Fragment {
  std::string id;
  std::vector<Point> points;
  double length = 0.0;  // ft
  double width = 0.0;   // ft
  int direction = +1;   // +1: increasing x, -1: decreasing x
  std::string gt_id;    // provenance (empty when unknown)

  double first_t() const { return points.front().t; }
  double last_t() const { return points.back().t; }
  std::size_t size() const { return points.size(); }
};

/// A complete vehicle history: an ordered chain of fragments plus the
/// rectified position series and its derivative series on a uniform grid.
/// The derivative vectors shrink by one entry per order.
struct Trajectory {
  std::string id;
  std::vector<std::string> fragment_ids;
  std::vector<double> t;             // N
  std::vector<double> x, y;          // N
  std::vector<double> vx, vy;        // N-1
  std::vector<double> ax, ay;        // N-2
  std::vector<double> jx, jy;        // N-3
  std::vector<double> theta;         // N-1, radians
  std::vector<double> ex, ey;        // outlier estimates, observed indices
  std::vector<std::size_t> observed; // grid indices backed by measurements
  double length = 0.0;
  double width = 0.0;
  int direction = +1;
  bool solved = true;  // false: too short to rectify, passed through raw

  double first_t() const { return t.front(); }
  double last_t() const { return t.back(); }
};

/// Nearest frame index on the global grid.
inline std::int64_t frame_index(double t, double dt) {
  return std::llround(t / dt);
}

/// A fragment resampled onto the uniform grid. Unobserved slots hold NaN
/// and are flagged 0 in the mask.
struct GridSeries {
  std::int64_t first_frame = 0;
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::uint8_t> mask;  // 1 = observed

  std::size_t size() const { return t.size(); }
  std::size_t observed_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
  }
};

/// Snaps time-ordered points to the global grid. The grid spans the first
/// to the last snapped frame; slots without a measurement are unobserved.
/// Two points snapping to the same frame is a data error.
inline GridSeries resample_to_grid(std::span<const Point> points, double dt) {
  if (points.empty()) throw std::invalid_argument("resample_to_grid: no points");
  if (!(dt > 0.0)) throw std::invalid_argument("resample_to_grid: dt must be positive");

  const std::int64_t i0 = frame_index(points.front().t, dt);
  const std::int64_t i1 = frame_index(points.back().t, dt);
  const std::size_t n = static_cast<std::size_t>(i1 - i0) + 1;

  GridSeries g;
  g.first_frame = i0;
  g.t.resize(n);
  g.x.assign(n, std::numeric_limits<double>::quiet_NaN());
  g.y.assign(n, std::numeric_limits<double>::quiet_NaN());
  g.mask.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) g.t[i] = static_cast<double>(i0 + static_cast<std::int64_t>(i)) * dt;

  std::int64_t prev = i0 - 1;
  for (const Point& p : points) {
    const std::int64_t k = frame_index(p.t, dt);
    if (k == prev) {
      throw std::runtime_error("duplicate frame: two points snap to frame " + std::to_string(k));
    }
    if (k < prev) throw std::runtime_error("resample_to_grid: points not time-ordered");
    const std::size_t idx = static_cast<std::size_t>(k - i0);
    g.x[idx] = p.x;
    g.y[idx] = p.y;
    g.mask[idx] = 1;
    prev = k;
  }
  return g;
}

/// Axis-aligned vehicle footprint in roadway coordinates. The reference
/// point anchors the rear of the box: [x, x + l*dir] x [y - w/2, y + w/2].
struct Footprint {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
};

inline Footprint footprint_of(double x, double y, double length, double width, int direction) {
  Footprint f;
  const double xe = x + length * static_cast<double>(direction);
  f.x0 = std::min(x, xe);
  f.x1 = std::max(x, xe);
  f.y0 = y - width / 2.0;
  f.y1 = y + width / 2.0;
  return f;
}

/// Basic structural checks shared by every producer of fragments.
inline void validate_fragment(const Fragment& f) {
  if (f.points.empty()) throw std::invalid_argument("fragment " + f.id + ": no points");
  if (!(f.length > 0.0) || !(f.width > 0.0))
    throw std::invalid_argument("fragment " + f.id + ": nonpositive dimensions");
  if (f.direction != 1 && f.direction != -1)
    throw std::invalid_argument("fragment " + f.id + ": direction must be +1 or -1");
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    const Point& p = f.points[i];
    if (!(p.t >= 0.0) || !std::isfinite(p.x) || !std::isfinite(p.y))
      throw std::invalid_argument("fragment " + f.id + ": bad point at position " + std::to_string(i));
    if (i > 0 && !(p.t > f.points[i - 1].t))
      throw std::invalid_argument("fragment " + f.id + ": timestamps not strictly increasing");
  }
}

}  // namespace trajrecon
