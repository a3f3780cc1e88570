#pragma once

#include <random>
#include <string>
#include <vector>

#include "trajrecon/core.hpp"
#include "trajrecon/cost_model.hpp"

namespace fixtures {

using trajrecon::CostModelParams;
using trajrecon::Fragment;
using trajrecon::Point;

inline Fragment line_fragment(std::string id, double t0, double t1, double x0, double speed,
                              double y, double dt = 0.04) {
  Fragment f;
  f.id = std::move(id);
  f.length = 16.0;
  f.width = 6.0;
  f.direction = speed >= 0 ? +1 : -1;
  const auto k0 = trajrecon::frame_index(t0, dt);
  const auto k1 = trajrecon::frame_index(t1, dt);
  for (auto k = k0; k <= k1; ++k) {
    const double t = static_cast<double>(k) * dt;
    f.points.push_back({t, x0 + speed * (t - t0), y});
  }
  return f;
}

/// Two vehicles in adjacent lanes, each split into two fragments. The
/// correct association is {f1, f3} and {f2, f4}; indices follow the order
/// of last timestamps.
inline std::vector<Fragment> two_vehicle_fragments() {
  std::vector<Fragment> out;
  out.push_back(line_fragment("f1", 0.0, 1.0, 0.0, 100.0, 6.0));    // ends x=100
  out.push_back(line_fragment("f2", 0.4, 1.4, 20.0, 100.0, 18.0));  // ends x=120
  out.push_back(line_fragment("f3", 1.6, 2.6, 160.0, 100.0, 6.0));  // vehicle 1 resumes
  out.push_back(line_fragment("f4", 2.0, 3.0, 180.0, 100.0, 18.0)); // vehicle 2 resumes
  return out;
}

inline CostModelParams two_vehicle_params() {
  CostModelParams p;
  p.alpha = 4.0;
  p.beta = 2.0;
  p.p_enter = 0.3;
  p.p_exit = 0.3;
  p.fp_prob = 0.05;
  p.max_gap = 15.0;
  p.max_transition_cost = 8.0;
  return p;
}

inline CostModelParams stream_params() {
  CostModelParams p;
  p.alpha = 2.0;
  p.beta = 1.0;
  p.p_enter = 0.2;
  p.p_exit = 0.2;
  p.fp_prob = 0.05;
  p.max_gap = 6.0;
  p.max_transition_cost = 8.0;
  return p;
}

/// Fragments sampled from synthetic constant-velocity vehicles with random
/// interruptions, shuffled vehicles, measurement noise. Sorted by last
/// timestamp when sort_by_last is set.
inline std::vector<Fragment> random_fragments(std::mt19937_64& rng, int count,
                                              bool sort_by_last = true) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<Fragment> out;
  int vehicle = 0;
  while (static_cast<int>(out.size()) < count) {
    const double speed = 20.0 + 90.0 * U(rng);
    const double lane = 6.0 + 12.0 * static_cast<double>(std::uniform_int_distribution<int>(0, 3)(rng));
    double t = U(rng) * static_cast<double>(count) / 8.0;
    double x = U(rng) * 50.0;
    const int pieces = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int p = 0; p < pieces && static_cast<int>(out.size()) < count; ++p) {
      const double duration = 0.2 + 1.0 * U(rng);
      Fragment f = line_fragment("v" + std::to_string(vehicle) + "p" + std::to_string(p),
                                 t, t + duration, x, speed, lane);
      for (auto& pt : f.points) {
        pt.x += 0.5 * (U(rng) - 0.5);
        pt.y += 0.5 * (U(rng) - 0.5);
      }
      out.push_back(std::move(f));
      const double gap = 0.2 + 3.0 * U(rng);
      x += speed * (out.back().last_t() - t + gap);
      t = out.back().last_t() + gap;
    }
    ++vehicle;
  }
  out.resize(count);
  if (sort_by_last) {
    std::sort(out.begin(), out.end(), [](const Fragment& a, const Fragment& b) {
      if (a.last_t() != b.last_t()) return a.last_t() < b.last_t();
      return a.id < b.id;
    });
  }
  return out;
}

}  // namespace fixtures
