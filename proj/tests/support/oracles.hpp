#pragma once

// Independent reference implementations used only by tests: an exhaustive
// chain-partition enumerator for small association instances and a dense
// ADMM solver for the rectification program. Both build their inputs from
// first principles so they share no solve path with the library.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajrecon/core.hpp"
#include "trajrecon/cost_model.hpp"

namespace oracles {

/// Minimum total circulation cost over every valid partition of (a subset
/// of) the fragments into feasible ordered chains. Exponential; keep the
/// instance size small.
inline double enumerate_min_cost(std::span<const trajrecon::Fragment> fragments,
                                 const trajrecon::CostModelParams& params,
                                 std::vector<std::vector<std::string>>* best_chains = nullptr) {
  using trajrecon::Fragment;
  const auto costs = trajrecon::node_costs(params);

  std::vector<int> order(fragments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (fragments[a].last_t() != fragments[b].last_t())
      return fragments[a].last_t() < fragments[b].last_t();
    return fragments[a].id < fragments[b].id;
  });

  // Pairwise link costs, indexed by original fragment index.
  const std::size_t n = fragments.size();
  std::vector<std::vector<std::optional<double>>> link(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) link[i][j] = trajrecon::transition_cost(fragments[i], fragments[j], params);

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> chains;  // open chains as index lists
  std::vector<std::vector<int>> best_assignment;

  const std::function<void(std::size_t, double)> rec = [&](std::size_t k, double cost) {
    if (k == order.size()) {
      if (cost < best) {
        best = cost;
        best_assignment = chains;
      }
      return;
    }
    const int f = order[k];
    // exclude
    rec(k + 1, cost);
    // start a new chain
    chains.push_back({f});
    rec(k + 1, cost + costs.enter + costs.include + costs.exit);
    chains.pop_back();
    // append to an open chain
    for (auto& chain : chains) {
      const int tail = chain.back();
      if (!link[tail][f]) continue;
      chain.push_back(f);
      rec(k + 1, cost + *link[tail][f] + costs.include);
      chain.pop_back();
    }
  };
  rec(0, 0.0);

  if (best_chains) {
    best_chains->clear();
    for (const auto& c : best_assignment) {
      std::vector<std::string> ids;
      for (int idx : c) ids.push_back(fragments[idx].id);
      best_chains->push_back(std::move(ids));
    }
    std::sort(best_chains->begin(), best_chains->end());
  }
  return best;
}

/// Dense ADMM reference for the one-axis rectification program
///
///   min |z - Hx - e|^2 + l2 |D2 x|^2 + l3 |D3 x|^2 + l1 |e|_1
///   s.t. dir * D1 x >= 0 (optional), |D2 x| <= a_max, |D3 x| <= j_max
///
/// Variables [x; e]; the l1 term and the derivative boxes are handled by
/// the splitting, with a soft-threshold proximal step for e.
struct AdmmSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd e;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
};

inline Eigen::MatrixXd dense_difference(int k, int n, double dt) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n - k, n);
  // iterated first differences
  Eigen::MatrixXd cur = Eigen::MatrixXd::Identity(n, n);
  for (int pass = 1; pass <= k; ++pass) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(n - pass, n);
    for (int r = 0; r < n - pass; ++r) next.row(r) = (cur.row(r + 1) - cur.row(r)) / dt;
    cur = next;
  }
  d = cur;
  return d;
}

inline AdmmSolution admm_rectify(const Eigen::VectorXd& z, const std::vector<std::size_t>& observed,
                                 std::size_t n_grid, double dt, double l1, double l2, double l3,
                                 double a_max, double j_max, bool nonneg_speed, int direction,
                                 int max_iter = 200000, double eps = 1e-9) {
  const int N = static_cast<int>(n_grid);
  const int M = static_cast<int>(observed.size());
  const int nv = N + M;

  const Eigen::MatrixXd D1 = dense_difference(1, N, dt);
  const Eigen::MatrixXd D2 = dense_difference(2, N, dt);
  const Eigen::MatrixXd D3 = dense_difference(3, N, dt);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(M, N);
  for (int i = 0; i < M; ++i) H(i, static_cast<int>(observed[i])) = 1.0;

  // Quadratic part: |z - Hx - e|^2 + l2|D2 x|^2 + l3|D3 x|^2.
  Eigen::MatrixXd HE(M, nv);
  HE << H, Eigen::MatrixXd::Identity(M, M);
  Eigen::MatrixXd P = 2.0 * HE.transpose() * HE;
  P.topLeftCorner(N, N) += 2.0 * l2 * D2.transpose() * D2 + 2.0 * l3 * D3.transpose() * D3;
  Eigen::VectorXd q = -2.0 * HE.transpose() * z;

  // Constraint stack: [D1 (optional); D2; D3] on x, identity on e.
  const int n_speed = nonneg_speed ? (N - 1) : 0;
  const int mc = n_speed + (N - 2) + (N - 3) + M;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(mc, nv);
  Eigen::VectorXd lo(mc), hi(mc);
  int r = 0;
  const double inf = std::numeric_limits<double>::infinity();
  if (nonneg_speed) {
    A.block(r, 0, N - 1, N) = static_cast<double>(direction) * D1;
    lo.segment(r, N - 1).setZero();
    hi.segment(r, N - 1).setConstant(inf);
    r += N - 1;
  }
  A.block(r, 0, N - 2, N) = D2;
  lo.segment(r, N - 2).setConstant(-a_max);
  hi.segment(r, N - 2).setConstant(a_max);
  r += N - 2;
  A.block(r, 0, N - 3, N) = D3;
  lo.segment(r, N - 3).setConstant(-j_max);
  hi.segment(r, N - 3).setConstant(j_max);
  r += N - 3;
  const int e_row0 = r;
  A.block(r, N, M, M).setIdentity();
  lo.segment(r, M).setConstant(-inf);
  hi.segment(r, M).setConstant(inf);

  // Row equilibration of the constraint blocks (exact for box rows).
  Eigen::VectorXd row_scale = Eigen::VectorXd::Ones(mc);
  for (int i = 0; i < e_row0; ++i) {
    const double s = A.row(i).cwiseAbs().maxCoeff();
    if (s > 0) {
      row_scale[i] = 1.0 / s;
      A.row(i) *= row_scale[i];
      if (std::isfinite(lo[i])) lo[i] *= row_scale[i];
      if (std::isfinite(hi[i])) hi[i] *= row_scale[i];
    }
  }

  double rho = 1.0;
  const double sigma = 1e-6;
  Eigen::LLT<Eigen::MatrixXd> llt;
  const auto factor = [&]() {
    Eigen::MatrixXd K = P + sigma * Eigen::MatrixXd::Identity(nv, nv) + rho * A.transpose() * A;
    llt.compute(K);
  };
  factor();

  Eigen::VectorXd xi = Eigen::VectorXd::Zero(nv);
  for (int i = 0; i < M; ++i) xi[static_cast<int>(observed[i])] = z[i];
  Eigen::VectorXd zeta = A * xi;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(mc);

  AdmmSolution out;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd rhs = -q + sigma * xi + rho * A.transpose() * (zeta - u);
    xi = llt.solve(rhs);
    const Eigen::VectorXd axi = A * xi;
    const Eigen::VectorXd v = axi + u;
    Eigen::VectorXd zeta_next(mc);
    for (int i = 0; i < e_row0; ++i) zeta_next[i] = std::clamp(v[i], lo[i], hi[i]);
    for (int i = e_row0; i < mc; ++i) {
      const double thr = l1 / rho;
      const double w = v[i];
      zeta_next[i] = (w > thr) ? (w - thr) : ((w < -thr) ? (w + thr) : 0.0);
    }
    const double r_dual = (rho * A.transpose() * (zeta_next - zeta)).lpNorm<Eigen::Infinity>();
    zeta = zeta_next;
    u += axi - zeta;
    const double r_prim = (axi - zeta).lpNorm<Eigen::Infinity>();

    if (it % 100 == 99) {
      // residual-balancing rho updates
      if (r_prim > 10 * r_dual && rho < 1e6) {
        rho *= 10;
        u /= 10;
        factor();
      } else if (r_dual > 10 * r_prim && rho > 1e-6) {
        rho /= 10;
        u *= 10;
        factor();
      }
    }
    if (r_prim <= eps && r_dual <= eps) {
      out.converged = true;
      out.iterations = it + 1;
      break;
    }
    out.iterations = it + 1;
  }

  out.x = xi.head(N);
  out.e = xi.tail(M);
  // objective evaluated from its own pieces
  const Eigen::VectorXd fit = z - H * out.x - out.e;
  out.objective = fit.squaredNorm() + l2 * (D2 * out.x).squaredNorm() +
                  l3 * (D3 * out.x).squaredNorm() + l1 * out.e.lpNorm<1>();
  return out;
}

}  // namespace oracles
