#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "trajrecon/association.hpp"
#include "trajrecon/core.hpp"
#include "trajrecon/qp_solver.hpp"

namespace trajrecon {

/// Rectifier weights and bounds. Tuned for Euler-forward discretization at
/// 25 Hz; weights are shared between the longitudinal and lateral axes.
///
/// lambda1 sets the soft threshold (lambda1 / 2, in feet) past which a
/// residual is explained as an outlier instead of being smoothed; it sits
/// at 2.5x the nominal 1 ft measurement noise. Anything much smaller lets
/// the outlier vector bypass the quadratic fit and swallow real dynamics.
struct RectifierConfig {
  double lambda1 = 5.0;      // outlier sparsity (l1 on e)
  double lambda2 = 1.67e-2;  // acceleration smoothness
  double lambda3 = 1.67e-7;  // jerk smoothness
  double a_max = 10.0;       // ft/s^2
  double j_max = 10.0;       // ft/s^3
  double dt = 0.04;          // s
  double tol = 1e-6;         // certified KKT residual bound
  int max_iter = 100;

  void validate() const {
    if (!(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0))
      throw std::invalid_argument("rectifier: lambdas must be nonnegative");
    if (!(a_max > 0 && j_max > 0)) throw std::invalid_argument("rectifier: bounds must be positive");
    if (!(dt > 0)) throw std::invalid_argument("rectifier: dt must be positive");
  }
};

/// k-th order forward-difference operator, (n-k) x n, scaled by dt^-k.
/// Row stencils: k=1 -> (-1, 1), k=2 -> (1, -2, 1), k=3 -> (-1, 3, -3, 1).
inline Eigen::SparseMatrix<double> difference_operator(int k, int n, double dt) {
  if (k < 1) throw std::invalid_argument("difference_operator: order must be >= 1");
  if (n <= k) throw std::invalid_argument("series too short: need more than " + std::to_string(k) +
                                          " samples for order " + std::to_string(k));
  std::vector<double> stencil(k + 1);
  double binom = 1.0;
  for (int j = 0; j <= k; ++j) {
    stencil[j] = (((k - j) % 2) ? -1.0 : 1.0) * binom;
    binom = binom * (k - j) / (j + 1);
  }
  const double scale = std::pow(dt, -k);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n - k) * (k + 1));
  for (int r = 0; r < n - k; ++r)
    for (int j = 0; j <= k; ++j) trip.emplace_back(r, r + j, stencil[j] * scale);
  Eigen::SparseMatrix<double> d(n - k, n);
  d.setFromTriplets(trip.begin(), trip.end());
  return d;
}

/// Canonical finite differencing used to derive speed/acceleration/jerk
/// from a solved position series. Iterated first differences; the same
/// arithmetic everywhere keeps the derivative series internally consistent.
inline std::vector<double> apply_difference(std::vector<double> x, int k, double dt) {
  for (int pass = 0; pass < k; ++pass) {
    if (x.size() < 2) throw std::invalid_argument("series too short");
    for (std::size_t i = 0; i + 1 < x.size(); ++i) x[i] = (x[i + 1] - x[i]) / dt;
    x.pop_back();
  }
  return x;
}

/// One-axis instance of the rectification program:
///
///   min  |z - Hx - e|^2 + l2 |D2 x|^2 + l3 |D3 x|^2 + l1 |e|_1
///   s.t. dir * D1 x >= 0        (longitudinal axis only)
///        |D2 x| <= a_max, |D3 x| <= j_max
struct RectificationProblem {
  Eigen::VectorXd z;                  // observed positions, length M
  std::vector<std::size_t> observed;  // strictly increasing grid indices
  std::size_t n = 0;                  // grid length N
  double dt = 0.04;
  double lambda1 = 5.0, lambda2 = 1.67e-2, lambda3 = 1.67e-7;
  double a_max = 10.0, j_max = 10.0;
  bool nonneg_speed = false;
  int direction = +1;
  double tol = 1e-6;
  int max_iter = 100;

  void validate() const {
    const std::size_t m = observed.size();
    if (m == 0 || static_cast<std::size_t>(z.size()) != m)
      throw std::invalid_argument("rectification: measurement/index size mismatch");
    if (m > n) throw std::invalid_argument("rectification: more measurements than grid slots");
    if (n < 4) throw std::invalid_argument("rectification: grid too short");
    for (std::size_t i = 0; i < m; ++i) {
      if (observed[i] >= n || (i > 0 && observed[i] <= observed[i - 1]))
        throw std::invalid_argument("rectification: observed indices must be strictly increasing");
    }
  }
};

struct AxisSolution {
  Eigen::VectorXd x;  // length N
  Eigen::VectorXd e;  // length M
  double objective = 0.0;
  double constraint_residual = 0.0;
  double stationarity_residual = 0.0;
  int iterations = 0;
};

namespace detail {

/// Least-squares line through the observations: a warm start with zero
/// curvature, so the derivative bounds hold at the initial point even when
/// the raw data carries spikes.
inline Eigen::VectorXd line_warm_start(const Eigen::VectorXd& z,
                                       const std::vector<std::size_t>& observed, std::size_t n,
                                       double dt) {
  const std::size_t m = observed.size();
  double tm = 0.0, zm = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    tm += static_cast<double>(observed[i]) * dt;
    zm += z[i];
  }
  tm /= static_cast<double>(m);
  zm /= static_cast<double>(m);
  double stt = 0.0, stz = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = static_cast<double>(observed[i]) * dt - tm;
    stt += d * d;
    stz += d * (z[i] - zm);
  }
  const double slope = stt > 0.0 ? stz / stt : 0.0;
  Eigen::VectorXd x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = zm + slope * (static_cast<double>(i) * dt - tm);
  return x;
}

}  // namespace detail

/// Solves the one-axis program. The l1 outlier term is handled by the
/// nonnegative split e = ep - em, turning the objective into a quadratic
/// with linear terms. Throws when the solver cannot certify the requested
/// residual levels.
inline AxisSolution rectify_axis(const RectificationProblem& p) {
  p.validate();
  const int N = static_cast<int>(p.n);
  const int M = static_cast<int>(p.observed.size());
  const int nv = N + 2 * M;

  // Shift positions so the decision variables stay small.
  const double shift = p.z[0];
  Eigen::VectorXd z = p.z.array() - shift;

  const auto D1 = difference_operator(1, N, p.dt);
  const auto D2 = difference_operator(2, N, p.dt);
  const auto D3 = difference_operator(3, N, p.dt);

  // Objective: 0.5 x' P x + q' x with P = 2 (Mb'Mb + R), Mb = [H I -I].
  std::vector<Eigen::Triplet<double>> ptrip;
  for (int i = 0; i < M; ++i) {
    const int gi = static_cast<int>(p.observed[i]);
    ptrip.emplace_back(gi, gi, 2.0);
    ptrip.emplace_back(gi, N + i, 2.0);
    ptrip.emplace_back(N + i, gi, 2.0);
    ptrip.emplace_back(gi, N + M + i, -2.0);
    ptrip.emplace_back(N + M + i, gi, -2.0);
    ptrip.emplace_back(N + i, N + i, 2.0);
    ptrip.emplace_back(N + M + i, N + M + i, 2.0);
    ptrip.emplace_back(N + i, N + M + i, -2.0);
    ptrip.emplace_back(N + M + i, N + i, -2.0);
  }
  const Eigen::SparseMatrix<double> R2 = D2.transpose() * D2;
  const Eigen::SparseMatrix<double> R3 = D3.transpose() * D3;
  for (int c = 0; c < R2.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(R2, c); it; ++it)
      ptrip.emplace_back(static_cast<int>(it.row()), c, 2.0 * p.lambda2 * it.value());
  for (int c = 0; c < R3.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(R3, c); it; ++it)
      ptrip.emplace_back(static_cast<int>(it.row()), c, 2.0 * p.lambda3 * it.value());

  qp::Problem prob;
  prob.P.resize(nv, nv);
  prob.P.setFromTriplets(ptrip.begin(), ptrip.end());
  prob.q = Eigen::VectorXd::Zero(nv);
  for (int i = 0; i < M; ++i) {
    const int gi = static_cast<int>(p.observed[i]);
    prob.q[gi] += -2.0 * z[i];
    prob.q[N + i] = -2.0 * z[i] + p.lambda1;
    prob.q[N + M + i] = 2.0 * z[i] + p.lambda1;
  }

  // Constraints G xi <= h.
  const int n_speed = p.nonneg_speed ? (N - 1) : 0;
  const int rows = n_speed + 2 * (N - 2) + 2 * (N - 3) + 2 * M;
  std::vector<Eigen::Triplet<double>> gtrip;
  Eigen::VectorXd h(rows);
  int r0 = 0;
  if (p.nonneg_speed) {
    const double dir = static_cast<double>(p.direction);
    for (int c = 0; c < D1.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(D1, c); it; ++it)
        gtrip.emplace_back(r0 + static_cast<int>(it.row()), c, -dir * it.value());
    h.segment(r0, N - 1).setZero();
    r0 += N - 1;
  }
  for (int sign = 0; sign < 2; ++sign) {
    const double sg = sign ? -1.0 : 1.0;
    for (int c = 0; c < D2.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(D2, c); it; ++it)
        gtrip.emplace_back(r0 + static_cast<int>(it.row()), c, sg * it.value());
    h.segment(r0, N - 2).setConstant(p.a_max);
    r0 += N - 2;
  }
  for (int sign = 0; sign < 2; ++sign) {
    const double sg = sign ? -1.0 : 1.0;
    for (int c = 0; c < D3.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(D3, c); it; ++it)
        gtrip.emplace_back(r0 + static_cast<int>(it.row()), c, sg * it.value());
    h.segment(r0, N - 3).setConstant(p.j_max);
    r0 += N - 3;
  }
  for (int i = 0; i < 2 * M; ++i) {
    gtrip.emplace_back(r0 + i, N + i, -1.0);
    h[r0 + i] = 0.0;
  }
  prob.G.resize(rows, nv);
  prob.G.setFromTriplets(gtrip.begin(), gtrip.end());
  prob.h = h;

  qp::Settings qs;
  qs.tol = std::min(1e-8, p.tol * 1e-2);
  qs.max_iter = p.max_iter;

  Eigen::VectorXd warm = Eigen::VectorXd::Zero(nv);
  warm.head(N) = detail::line_warm_start(z, p.observed, p.n, p.dt);
  const qp::Result qr = qp::solve(prob, qs, &warm);

  AxisSolution out;
  out.iterations = qr.iterations;
  out.x = qr.x.head(N).array() + shift;
  out.e = qr.x.segment(N, M) - qr.x.segment(N + M, M);
  {
    double fit = 0.0;
    for (int i = 0; i < M; ++i) {
      const double r = p.z[i] - out.x[static_cast<long>(p.observed[i])] - out.e[i];
      fit += r * r;
    }
    out.objective = fit + p.lambda2 * (D2 * out.x).squaredNorm() +
                    p.lambda3 * (D3 * out.x).squaredNorm() + p.lambda1 * out.e.lpNorm<1>();
  }
  out.constraint_residual = ((prob.G * qr.x - prob.h).cwiseMax(0.0)).lpNorm<Eigen::Infinity>();
  out.stationarity_residual = qr.dual_residual;

  // Certified contract: every constraint satisfied to the absolute
  // tolerance, and the solver's (scale-aware) optimality test met. The
  // stationarity residual is reported for diagnostics.
  if (!qr.converged || out.constraint_residual > p.tol) {
    std::ostringstream msg;
    msg << "rectification did not certify the requested tolerance: "
        << "constraint residual " << out.constraint_residual << ", stationarity "
        << out.stationarity_residual << ", gap " << qr.comp_gap << ", iterations "
        << qr.iterations;
    throw std::runtime_error(msg.str());
  }
  return out;
}

/// Steering angle per step: atan2 of the lateral and longitudinal
/// displacements. Zero displacement on both axes holds the previous angle
/// (0 at the first step). Range (-pi, pi].
inline std::vector<double> steering_angles(const std::vector<double>& x,
                                           const std::vector<double>& y, double dt) {
  (void)dt;
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("steering_angles: need two aligned samples");
  std::vector<double> theta(x.size() - 1);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double dx = x[i + 1] - x[i];
    const double dy = y[i + 1] - y[i];
    if (dx == 0.0 && dy == 0.0) {
      theta[i] = (i == 0) ? 0.0 : theta[i - 1];
      continue;
    }
    double th = std::atan2(dy, dx);
    if (th <= -std::numbers::pi) th = std::numbers::pi;
    theta[i] = th;
  }
  return theta;
}

/// Rectifies a whole chain: both axes solved on the common grid spanning
/// the chain, gaps between fragments imputed, derivatives and steering
/// derived from the solved positions, dimensions as the member medians.
/// Grids shorter than 4 frames skip the solve and pass through with the
/// unsolved flag.
inline Trajectory rectify_trajectory(const Chain& chain, const RectifierConfig& cfg,
                                     std::string id = {}) {
  cfg.validate();
  if (chain.fragments.empty()) throw std::invalid_argument("rectify_trajectory: empty chain");
  for (std::size_t i = 1; i < chain.fragments.size(); ++i)
    if (!(chain.fragments[i].first_t() > chain.fragments[i - 1].last_t()))
      throw std::invalid_argument("rectify_trajectory: fragment time spans overlap");

  std::vector<Point> merged;
  for (const Fragment& f : chain.fragments)
    merged.insert(merged.end(), f.points.begin(), f.points.end());
  const GridSeries grid = resample_to_grid(merged, cfg.dt);

  Trajectory traj;
  traj.id = std::move(id);
  traj.direction = chain.fragments.front().direction;
  for (const Fragment& f : chain.fragments) traj.fragment_ids.push_back(f.id);
  {
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t k = v.size() / 2;
      return (v.size() % 2) ? v[k] : 0.5 * (v[k - 1] + v[k]);
    };
    std::vector<double> ls, ws;
    for (const Fragment& f : chain.fragments) {
      ls.push_back(f.length);
      ws.push_back(f.width);
    }
    traj.length = median(ls);
    traj.width = median(ws);
  }

  const std::size_t N = grid.size();
  traj.t = grid.t;
  for (std::size_t i = 0; i < N; ++i)
    if (grid.mask[i]) traj.observed.push_back(i);

  if (N < 4) {
    // Too short for the convex program; interpolate gaps and pass through.
    traj.solved = false;
    traj.x = grid.x;
    traj.y = grid.y;
    for (std::size_t i = 0; i < N; ++i) {
      if (!grid.mask[i]) {
        std::size_t lo = i, hi = i;
        while (lo > 0 && !grid.mask[lo]) --lo;
        while (hi + 1 < N && !grid.mask[hi]) ++hi;
        const double w = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
        traj.x[i] = (1 - w) * grid.x[lo] + w * grid.x[hi];
        traj.y[i] = (1 - w) * grid.y[lo] + w * grid.y[hi];
      }
    }
    traj.ex.assign(traj.observed.size(), 0.0);
    traj.ey.assign(traj.observed.size(), 0.0);
  } else {
    RectificationProblem base;
    base.observed = traj.observed;
    base.n = N;
    base.dt = cfg.dt;
    base.lambda1 = cfg.lambda1;
    base.lambda2 = cfg.lambda2;
    base.lambda3 = cfg.lambda3;
    base.a_max = cfg.a_max;
    base.j_max = cfg.j_max;
    base.tol = cfg.tol;
    base.max_iter = cfg.max_iter;

    const std::size_t M = traj.observed.size();
    RectificationProblem px = base;
    px.z.resize(M);
    px.nonneg_speed = true;
    px.direction = traj.direction;
    RectificationProblem py = base;
    py.z.resize(M);
    for (std::size_t i = 0; i < M; ++i) {
      px.z[i] = grid.x[traj.observed[i]];
      py.z[i] = grid.y[traj.observed[i]];
    }
    const AxisSolution sx = rectify_axis(px);
    const AxisSolution sy = rectify_axis(py);

    traj.x.assign(sx.x.data(), sx.x.data() + N);
    traj.y.assign(sy.x.data(), sy.x.data() + N);
    traj.ex.assign(sx.e.data(), sx.e.data() + M);
    traj.ey.assign(sy.e.data(), sy.e.data() + M);
  }

  if (N >= 2) {
    traj.vx = apply_difference(traj.x, 1, cfg.dt);
    traj.vy = apply_difference(traj.y, 1, cfg.dt);
    traj.theta = steering_angles(traj.x, traj.y, cfg.dt);
  }
  if (N >= 3) {
    traj.ax = apply_difference(traj.x, 2, cfg.dt);
    traj.ay = apply_difference(traj.y, 2, cfg.dt);
  }
  if (N >= 4) {
    traj.jx = apply_difference(traj.x, 3, cfg.dt);
    traj.jy = apply_difference(traj.y, 3, cfg.dt);
  }
  return traj;
}

}  // namespace trajrecon
