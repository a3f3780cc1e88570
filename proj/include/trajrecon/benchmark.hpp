#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trajrecon/core.hpp"

namespace trajrecon {

/// A space-time region where tracking data is lost (overpass, packet loss).
struct SpaceTimeMask {
  double x0 = 0.0, x1 = 0.0;  // ft
  double t0 = 0.0, t1 = 0.0;  // s

  bool contains(double t, double x) const { return x >= x0 && x <= x1 && t >= t0 && t <= t1; }
};

struct CameraRange {
  double x0 = 0.0, x1 = 0.0;
};

/// Contiguous camera fields of view; adjacent ranges overlap, and a vehicle
/// inside an overlap is reported by both cameras under different ids.
struct CameraLayout {
  std::vector<CameraRange> cameras;

  void validate(double corridor_length) const {
    if (cameras.empty()) return;
    if (cameras.front().x0 > 0.0 || cameras.back().x1 < corridor_length)
      throw std::invalid_argument("camera layout does not cover the corridor");
    for (std::size_t i = 0; i + 1 < cameras.size(); ++i) {
      if (!(cameras[i + 1].x0 < cameras[i].x1))
        throw std::invalid_argument("adjacent cameras must overlap");
      if (i + 2 < cameras.size() && cameras[i + 2].x0 < cameras[i].x1)
        throw std::invalid_argument("more than two cameras overlap one location");
    }
  }
};

struct NoiseSpec {
  double sigma = 1.0;          // ft, both axes
  double outlier_rate = 0.0;   // per point
  double outlier_min = 10.0;   // ft
  double outlier_max = 50.0;   // ft
  std::uint64_t seed = 0;
};

struct DemandInterval {
  double t0 = 0.0, t1 = 0.0;
  double veh_per_hr_per_lane = 0.0;
};

/// A lane blockage: a standing virtual vehicle at x for the given period.
struct Bottleneck {
  int lane = 1;  // 1-based
  double x = 800.0;
  double t0 = 0.0, t1 = 400.0;
};

struct ScenarioSpec {
  double corridor_length = 2000.0;  // ft
  double duration = 900.0;          // s
  int lane_count = 4;
  double lane_width = 12.0;
  std::vector<DemandInterval> demand;  // piecewise constant per lane
  std::optional<Bottleneck> bottleneck;
  double dt = 0.04;

  // driver model
  double desired_speed = 100.0;  // ft/s
  double headway_time = 1.4;     // s
  double min_gap = 10.0;         // ft
  double max_accel = 4.5;        // ft/s^2
  double comfort_decel = 6.0;    // ft/s^2
  double truck_fraction = 0.07;

  void validate() const {
    if (!(corridor_length > 0) || !(duration > 0) || lane_count < 1 || !(dt > 0))
      throw std::invalid_argument("scenario: nonpositive extents");
  }

  double demand_at(double t) const {
    for (const auto& d : demand)
      if (t >= d.t0 && t < d.t1) return d.veh_per_hr_per_lane;
    return 0.0;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct SimVehicle {
  double x = 0.0;
  double v = 0.0;
  double v0 = 100.0;
  double len = 16.0;
  double wid = 6.5;
  Fragment record;
};

}  // namespace detail

/// Car-following simulation on the corridor. One trajectory per vehicle,
/// fully observed from entry to exit, collision free, no lane changes.
inline std::vector<Fragment> generate_ground_truth(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(detail::splitmix64(seed));
  std::uniform_real_distribution<double> U(0.0, 1.0);

  std::vector<Fragment> done;
  std::vector<std::vector<detail::SimVehicle>> lanes(spec.lane_count);  // front first
  std::vector<double> next_arrival(spec.lane_count, 0.0);
  int vehicle_counter = 0;

  const std::int64_t steps = static_cast<std::int64_t>(std::llround(spec.duration / spec.dt));
  const double sqrt_ab = std::sqrt(spec.max_accel * spec.comfort_decel);

  for (std::int64_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * spec.dt;

    // arrivals
    for (int lane = 0; lane < spec.lane_count; ++lane) {
      const double rate = spec.demand_at(t) / 3600.0;  // veh/s
      if (rate <= 0.0) {
        next_arrival[lane] = t;  // re-arm when demand resumes
        continue;
      }
      if (t < next_arrival[lane]) continue;

      // entry gate: rear vehicle must leave room
      double gap = std::numeric_limits<double>::infinity();
      double lead_v = std::numeric_limits<double>::infinity();
      if (!lanes[lane].empty()) {
        const auto& rear = lanes[lane].back();
        gap = rear.x - rear.len;
        lead_v = rear.v;
      }
      if (gap < spec.min_gap + 4.0) continue;  // blocked, retry next step

      detail::SimVehicle veh;
      const bool truck = U(rng) < spec.truck_fraction;
      veh.len = truck ? 35.0 + 30.0 * U(rng) : 14.0 + 5.0 * U(rng);
      veh.wid = truck ? 8.0 + 0.5 * U(rng) : 6.2 + 1.4 * U(rng);
      veh.v0 = spec.desired_speed * (truck ? 0.9 : 1.0) * (0.92 + 0.16 * U(rng));
      veh.v = std::min({veh.v0, lead_v + 5.0, std::max(5.0, (gap - spec.min_gap) / spec.headway_time)});
      veh.x = 0.0;
      veh.record.id = "g" + std::to_string(100000 + vehicle_counter++).substr(1);
      veh.record.gt_id = veh.record.id;
      veh.record.length = veh.len;
      veh.record.width = veh.wid;
      veh.record.direction = +1;
      lanes[lane].push_back(std::move(veh));

      std::exponential_distribution<double> exp_gap(rate);
      next_arrival[lane] = t + exp_gap(rng);
    }

    // dynamics (updated rear to front is fine since we read old leader state
    // front to rear; iterate front first)
    for (int lane = 0; lane < spec.lane_count; ++lane) {
      auto& q = lanes[lane];
      const bool blocked = spec.bottleneck && spec.bottleneck->lane == lane + 1 &&
                           t >= spec.bottleneck->t0 && t < spec.bottleneck->t1;
      for (std::size_t i = 0; i < q.size(); ++i) {
        detail::SimVehicle& veh = q[i];
        double lead_rear = std::numeric_limits<double>::infinity();
        double lead_v = veh.v0;
        if (i > 0) {
          lead_rear = q[i - 1].x - q[i - 1].len;
          lead_v = q[i - 1].v;
        }
        if (blocked && veh.x < spec.bottleneck->x &&
            spec.bottleneck->x - 0.0 < lead_rear) {
          lead_rear = spec.bottleneck->x;
          lead_v = 0.0;
        }

        double a;
        if (std::isinf(lead_rear)) {
          a = spec.max_accel * (1.0 - std::pow(veh.v / veh.v0, 4));
        } else {
          const double s = std::max(0.1, lead_rear - veh.x);
          const double dv = veh.v - lead_v;
          const double s_star =
              spec.min_gap + std::max(0.0, veh.v * spec.headway_time + veh.v * dv / (2.0 * sqrt_ab));
          a = spec.max_accel *
              (1.0 - std::pow(veh.v / veh.v0, 4) - (s_star / s) * (s_star / s));
        }
        a = std::clamp(a, -15.0, spec.max_accel);
        veh.v = std::max(0.0, veh.v + a * spec.dt);
        double nx = veh.x + veh.v * spec.dt;
        if (!std::isinf(lead_rear) && nx > lead_rear - 0.5) {
          nx = lead_rear - 0.5;  // hard no-collision backstop
          veh.v = std::max(0.0, (nx - veh.x) / spec.dt);
          nx = veh.x + veh.v * spec.dt;
        }
        veh.x = nx;
        if (veh.x <= spec.corridor_length)
          veh.record.points.push_back(
              {t, veh.x, (static_cast<double>(lane) + 0.5) * spec.lane_width});
      }
      // retire vehicles past the corridor end
      while (!q.empty() && q.front().x > spec.corridor_length) {
        if (!q.front().record.points.empty()) done.push_back(std::move(q.front().record));
        q.erase(q.begin());
      }
    }
  }
  for (auto& q : lanes)
    for (auto& veh : q)
      if (!veh.record.points.empty()) done.push_back(std::move(veh.record));

  std::sort(done.begin(), done.end(),
            [](const Fragment& a, const Fragment& b) { return a.id < b.id; });
  return done;
}

/// Applies the corruption protocol to ground-truth trajectories:
/// mask cuts, per-camera splitting with duplicated overlap coverage,
/// Gaussian position noise, and sparse isolated outliers. Every produced
/// piece carries a fresh id and its source gt id.
inline std::vector<Fragment> perturb(std::span<const Fragment> gt,
                                     const std::vector<SpaceTimeMask>& masks,
                                     const CameraLayout& layout, const NoiseSpec& noise) {
  std::vector<Fragment> out;
  int next_id = 0;

  for (std::size_t gi = 0; gi < gt.size(); ++gi) {
    const Fragment& src = gt[gi];
    std::mt19937_64 rng(detail::splitmix64(noise.seed ^ detail::splitmix64(gi + 1)));
    std::normal_distribution<double> gauss(0.0, noise.sigma);
    std::uniform_real_distribution<double> U(0.0, 1.0);

    // 1. delete masked points; contiguous survivors form pieces
    std::vector<std::vector<Point>> pieces;
    std::vector<Point> cur;
    for (const Point& p : src.points) {
      bool masked = false;
      for (const auto& m : masks)
        if (m.contains(p.t, p.x)) {
          masked = true;
          break;
        }
      if (masked) {
        if (!cur.empty()) pieces.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(p);
      }
    }
    if (!cur.empty()) pieces.push_back(std::move(cur));

    // 2. split per camera; overlap points land in both neighbors
    std::vector<std::vector<Point>> views;
    if (layout.cameras.empty()) {
      views = std::move(pieces);
    } else {
      for (const auto& piece : pieces) {
        for (const auto& cam : layout.cameras) {
          std::vector<Point> view;
          for (const Point& p : piece)
            if (p.x >= cam.x0 && p.x <= cam.x1) view.push_back(p);
          if (!view.empty()) views.push_back(std::move(view));
        }
      }
    }

    // 3 + 4. noise, then isolated outliers
    for (auto& view : views) {
      Fragment f;
      f.id = "f" + std::to_string(1000000 + next_id++).substr(1);
      f.gt_id = src.id;
      f.length = src.length;
      f.width = src.width;
      f.direction = src.direction;
      f.points = std::move(view);
      bool prev_outlier = true;  // never corrupt the first point
      for (Point& p : f.points) {
        p.x += gauss(rng);
        p.y += gauss(rng);
        if (!prev_outlier && U(rng) < noise.outlier_rate) {
          const double mag =
              noise.outlier_min + (noise.outlier_max - noise.outlier_min) * U(rng);
          const double ang = 2.0 * 3.14159265358979323846 * U(rng);
          p.x += mag * std::cos(ang);
          p.y += mag * std::sin(ang);
          prev_outlier = true;
        } else {
          prev_outlier = false;
        }
      }
      out.push_back(std::move(f));
    }
  }
  // emitted the way a tracker would produce them: in order of track end
  std::sort(out.begin(), out.end(), [](const Fragment& a, const Fragment& b) {
    if (a.last_t() != b.last_t()) return a.last_t() < b.last_t();
    return a.id < b.id;
  });
  return out;
}

}  // namespace trajrecon
