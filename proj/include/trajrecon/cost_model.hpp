#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "trajrecon/core.hpp"

namespace trajrecon {

/// Parameters of the edge-cost model for the circulation graph.
///
/// The positional uncertainty of a fragment projected dt seconds past its
/// last measurement has variance alpha + beta*dt (a cone widening linearly
/// with the gap). Entry/exit/false-positive probabilities turn into the
/// node costs of the network.
struct CostModelParams {
  double alpha = 4.0;     // variance offset, ft^2
  double beta = 2.0;      // variance growth, ft^2/s
  double p_enter = 0.1;   // probability a trajectory starts at a fragment
  double p_exit = 0.1;    // probability it ends there
  double fp_prob = 0.1;   // probability a fragment is a false positive
  double max_gap = 15.0;  // max time gap between linked fragments, s
  double max_transition_cost = 8.0;  // edges above this are not created
  double nominal_speed = 100.0;      // fallback slope for 1-point fragments, ft/s

  // Regression / evaluation windows. By default the whole fragment is used;
  // the second association pass over chains narrows both to ~1 s so that a
  // long chain behaves like a local tracklet near its endpoints.
  double fit_window = std::numeric_limits<double>::infinity();
  double eval_window = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("cost model: alpha must be > 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("cost model: beta must be >= 0");
    for (double p : {p_enter, p_exit, fp_prob})
      if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("cost model: probabilities must be in (0,1)");
    if (!(max_gap > 0.0)) throw std::invalid_argument("cost model: max_gap must be > 0");
  }
};

/// Constant-velocity model fitted to a fragment: p(t) = slope * t + intercept.
struct MotionEstimate {
  double vx = 0.0, vy = 0.0;  // slope, ft/s
  double x0 = 0.0, y0 = 0.0;  // intercept at t = 0, ft
};

/// Least-squares line fit of x(t) and y(t) over the fragment's points
/// (restricted to the trailing fit_window seconds). A single point has no
/// slope information, so it falls back to nominal_speed along the travel
/// direction.
inline MotionEstimate fit_motion(const Fragment& frag, const CostModelParams& params) {
  if (frag.points.empty()) throw std::invalid_argument("fit_motion: empty fragment");

  std::size_t begin = 0;
  if (std::isfinite(params.fit_window)) {
    const double cutoff = frag.last_t() - params.fit_window;
    while (begin + 1 < frag.points.size() && frag.points[begin].t < cutoff) ++begin;
    // keep at least two points when the fragment has them
    if (frag.points.size() - begin < 2 && frag.points.size() >= 2) begin = frag.points.size() - 2;
  }
  const std::size_t n = frag.points.size() - begin;

  MotionEstimate est;
  if (n == 1) {
    const Point& p = frag.points[begin];
    est.vx = static_cast<double>(frag.direction) * params.nominal_speed;
    est.vy = 0.0;
    est.x0 = p.x - est.vx * p.t;
    est.y0 = p.y - est.vy * p.t;
    return est;
  }

  // Centered least squares for conditioning.
  double tm = 0.0, xm = 0.0, ym = 0.0;
  for (std::size_t i = begin; i < frag.points.size(); ++i) {
    tm += frag.points[i].t;
    xm += frag.points[i].x;
    ym += frag.points[i].y;
  }
  tm /= static_cast<double>(n);
  xm /= static_cast<double>(n);
  ym /= static_cast<double>(n);

  double stt = 0.0, stx = 0.0, sty = 0.0;
  for (std::size_t i = begin; i < frag.points.size(); ++i) {
    const double dt = frag.points[i].t - tm;
    stt += dt * dt;
    stx += dt * (frag.points[i].x - xm);
    sty += dt * (frag.points[i].y - ym);
  }
  est.vx = stx / stt;
  est.vy = sty / stt;
  est.x0 = xm - est.vx * tm;
  est.y0 = ym - est.vy * tm;
  return est;
}

inline std::pair<double, double> project_position(const MotionEstimate& est, double t) {
  return {est.vx * t + est.x0, est.vy * t + est.y0};
}

/// Negative log likelihood of fragment b under the motion cone fitted to a
/// predecessor whose last timestamp was te:
///
///   (1/2N) sum log(alpha + beta*(t - te))
/// + (1/2N) sum |p_b(t) - p_hat(t)|^2 / (alpha + beta*(t - te))
///
/// summed over b's points within eval_window of its start. Returns nullopt
/// when b does not strictly follow te, the gap exceeds max_gap, or the cost
/// exceeds max_transition_cost.
inline std::optional<double> transition_cost_from(const MotionEstimate& est, double te,
                                                  const Fragment& b,
                                                  const CostModelParams& params) {
  const double gap = b.first_t() - te;
  if (!(gap > 0.0) || gap > params.max_gap) return std::nullopt;

  const double eval_end = b.first_t() + params.eval_window;
  double log_sum = 0.0, res_sum = 0.0;
  std::size_t n = 0;
  for (const Point& p : b.points) {
    if (p.t > eval_end && n > 0) break;
    const double var = params.alpha + params.beta * (p.t - te);
    const auto [px, py] = project_position(est, p.t);
    const double dx = p.x - px, dy = p.y - py;
    log_sum += std::log(var);
    res_sum += (dx * dx + dy * dy) / var;
    ++n;
  }
  const double cost = (log_sum + res_sum) / (2.0 * static_cast<double>(n));
  if (cost > params.max_transition_cost) return std::nullopt;
  return cost;
}

/// Matching cost of linking fragment b after fragment a.
inline std::optional<double> transition_cost(const Fragment& a, const Fragment& b,
                                             const CostModelParams& params) {
  const double te = a.last_t();
  if (!(b.first_t() > te)) return std::nullopt;
  return transition_cost_from(fit_motion(a, params), te, b, params);
}

/// Entry, exit and inclusion costs derived from the model probabilities.
/// Inclusion is negative whenever fp_prob < 0.5, making fragments worth
/// keeping once a cheap enough chain covers their entry/exit overhead.
struct NodeCosts {
  double enter = 0.0;
  double exit = 0.0;
  double include = 0.0;
};

inline NodeCosts node_costs(const CostModelParams& params) {
  params.validate();
  NodeCosts c;
  c.enter = -std::log(params.p_enter);
  c.exit = -std::log(params.p_exit);
  c.include = -std::log((1.0 - params.fp_prob) / params.fp_prob);
  return c;
}

}  // namespace trajrecon
