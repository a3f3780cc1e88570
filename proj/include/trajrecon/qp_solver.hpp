#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace trajrecon::qp {

/// Sparse convex quadratic program
///
///   minimize    0.5 x' P x + q' x
///   subject to  G x <= h
///
/// P symmetric positive semidefinite.
struct Problem {
  Eigen::SparseMatrix<double> P;
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> G;
  Eigen::VectorXd h;
};

struct Settings {
  double tol = 1e-8;   // target residual levels (absolute)
  int max_iter = 100;
  bool polish = true;
  double reg = 1e-9;   // static KKT regularization
};

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd z;  // multipliers for G x <= h
  Eigen::VectorXd s;  // slacks, h - G x at the solution
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool polished = false;
  double dual_residual = std::numeric_limits<double>::infinity();
  double primal_residual = std::numeric_limits<double>::infinity();  // max violation
  double comp_gap = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Lower-triangular view of the KKT matrix [P + dI, G'; G, -(W + dI)].
inline Eigen::SparseMatrix<double> kkt_lower(const Eigen::SparseMatrix<double>& P,
                                             const Eigen::SparseMatrix<double>& G,
                                             const Eigen::VectorXd& w, double reg) {
  const int n = static_cast<int>(P.rows());
  const int m = static_cast<int>(G.rows());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(P.nonZeros() + G.nonZeros() + n + m));
  for (int c = 0; c < P.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(P, c); it; ++it)
      if (it.row() >= it.col()) trip.emplace_back(static_cast<int>(it.row()), c, it.value());
  for (int i = 0; i < n; ++i) trip.emplace_back(i, i, reg);
  for (int c = 0; c < G.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(G, c); it; ++it)
      trip.emplace_back(n + static_cast<int>(it.row()), c, it.value());
  for (int i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -(w[i] + reg));
  Eigen::SparseMatrix<double> K(n + m, n + m);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

/// Equality-constrained solve on a trial active set, refined a few rounds
/// by swapping in violated rows and dropping negative multipliers. The
/// linear algebra runs on the scaled problem; candidate points are mapped
/// back through the scalings (x = D x', z = E z') and judged against the
/// original-problem residuals. Overwrites the result when the polished
/// point beats the incoming residuals.
inline bool polish(const Problem& scaled, const Problem& orig, const Eigen::VectorXd& D,
                   const Eigen::VectorXd& E, std::vector<char> active, const Settings& settings,
                   Result& res) {
  const int n = static_cast<int>(scaled.P.rows());
  const int m = static_cast<int>(scaled.G.rows());

  for (int round = 0; round < 5; ++round) {
    std::vector<int> rows;
    for (int i = 0; i < m; ++i)
      if (active[i]) rows.push_back(i);
    const int ma = static_cast<int>(rows.size());

    Eigen::SparseMatrix<double> Ga(ma, n);
    {
      std::vector<int> row_map(m, -1);
      for (int r = 0; r < ma; ++r) row_map[rows[r]] = r;
      std::vector<Eigen::Triplet<double>> gtrip;
      for (int c = 0; c < scaled.G.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(scaled.G, c); it; ++it)
          if (row_map[it.row()] >= 0)
            gtrip.emplace_back(row_map[static_cast<int>(it.row())], c, it.value());
      Ga.setFromTriplets(gtrip.begin(), gtrip.end());
    }

    std::vector<Eigen::Triplet<double>> trip;
    for (int c = 0; c < scaled.P.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(scaled.P, c); it; ++it)
        if (it.row() >= it.col()) trip.emplace_back(static_cast<int>(it.row()), c, it.value());
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, settings.reg);
    for (int c = 0; c < Ga.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Ga, c); it; ++it)
        trip.emplace_back(n + static_cast<int>(it.row()), c, it.value());
    for (int i = 0; i < ma; ++i) trip.emplace_back(n + i, n + i, -settings.reg);
    Eigen::SparseMatrix<double> K(n + ma, n + ma);
    K.setFromTriplets(trip.begin(), trip.end());

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;
    chol.compute(K);
    if (chol.info() != Eigen::Success) return false;

    Eigen::VectorXd rhs(n + ma);
    rhs.head(n) = -scaled.q;
    for (int r = 0; r < ma; ++r) rhs[n + r] = scaled.h[rows[r]];
    Eigen::VectorXd sol = chol.solve(rhs);
    for (int itref = 0; itref < 2; ++itref) {
      Eigen::VectorXd resid(n + ma);
      resid.head(n) = rhs.head(n) - (scaled.P * sol.head(n) + Ga.transpose() * sol.tail(ma));
      resid.tail(ma) = rhs.tail(ma) - Ga * sol.head(n);
      sol += chol.solve(resid);
    }

    const Eigen::VectorXd xp = sol.head(n).cwiseProduct(D);
    Eigen::VectorXd zp = Eigen::VectorXd::Zero(m);
    for (int r = 0; r < ma; ++r) zp[rows[r]] = sol[n + r] * E[rows[r]];
    const Eigen::VectorXd slack = orig.h - orig.G * xp;

    bool clean = true;
    for (int i = 0; i < m; ++i) {
      if (!active[i] && slack[i] < -settings.tol) {
        active[i] = 1;  // violated: bring in
        clean = false;
      } else if (active[i] && zp[i] < -settings.tol * E[i]) {
        active[i] = 0;  // wrong sign: drop
        clean = false;
      }
    }
    if (!clean) continue;

    const double prim = (-slack).cwiseMax(0.0).lpNorm<Eigen::Infinity>();
    const double dual =
        (orig.P * xp + orig.q + orig.G.transpose() * zp.cwiseMax(0.0)).lpNorm<Eigen::Infinity>();
    double gap = 0.0;
    for (int i = 0; i < m; ++i) gap += std::abs(std::max(slack[i], 0.0) * std::max(zp[i], 0.0));
    gap /= m;
    const bool better = prim <= std::max(res.primal_residual, settings.tol) &&
                        dual <= std::max(res.dual_residual, settings.tol) &&
                        gap <= std::max(res.comp_gap, settings.tol);
#ifdef TRAJRECON_QP_DEBUG
    std::fprintf(stderr, "polish round %d: active %d prim %.3e dual %.3e gap %.3e better %d\n",
                 round, ma, prim, dual, gap, (int)better);
#endif
    if (!better) return false;
    res.x = xp;
    res.z = zp.cwiseMax(0.0);
    res.s = slack.cwiseMax(0.0);
    res.primal_residual = prim;
    res.dual_residual = dual;
    res.comp_gap = gap;
    res.polished = true;
    return true;
  }
  return false;
}

}  // namespace detail

namespace detail {

/// Modified Ruiz equilibration of the stacked KKT structure: diagonal
/// variable scaling D and constraint-row scaling E so the scaled problem
/// has roughly unit row/column norms. Returns the scaled problem.
inline Problem equilibrate(const Problem& prob, Eigen::VectorXd& D, Eigen::VectorXd& E,
                           int iterations = 5) {
  const int n = static_cast<int>(prob.P.rows());
  const int m = static_cast<int>(prob.G.rows());
  Problem s = prob;
  D = Eigen::VectorXd::Ones(n);
  E = Eigen::VectorXd::Ones(m);
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
    for (int c = 0; c < s.P.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator jt(s.P, c); jt; ++jt)
        col[c] = std::max(col[c], std::abs(jt.value()));
    for (int c = 0; c < s.G.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator jt(s.G, c); jt; ++jt)
        col[c] = std::max(col[c], std::abs(jt.value()));
    Eigen::VectorXd d(n);
    for (int j = 0; j < n; ++j)
      d[j] = std::clamp(1.0 / std::sqrt(std::max(col[j], 1e-12)), 1e-6, 1e6);
    s.P = d.asDiagonal() * s.P * d.asDiagonal();
    s.q = s.q.cwiseProduct(d);
    s.G = s.G * d.asDiagonal();
    D = D.cwiseProduct(d);

    Eigen::VectorXd row = Eigen::VectorXd::Zero(m);
    for (int c = 0; c < s.G.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator jt(s.G, c); jt; ++jt)
        row[jt.row()] = std::max(row[jt.row()], std::abs(jt.value()));
    Eigen::VectorXd e(m);
    for (int i = 0; i < m; ++i)
      e[i] = std::clamp(1.0 / std::sqrt(std::max(row[i], 1e-12)), 1e-6, 1e6);
    s.G = e.asDiagonal() * s.G;
    s.h = s.h.cwiseProduct(e);
    E = E.cwiseProduct(e);
  }
  return s;
}

}  // namespace detail

/// Primal-dual interior point (Mehrotra predictor-corrector) on the Ruiz
/// equilibrated problem, with static regularization, iterative refinement
/// against the unregularized KKT system, and an active-set polish pass.
/// Residuals are reported for the original (unscaled) problem.
inline Result solve_scaled(const Problem& prob, const Settings& settings,
                           const Eigen::VectorXd* warm_x);

inline Result solve(const Problem& orig, const Settings& settings = {},
                    const Eigen::VectorXd* warm_orig = nullptr) {
  const int n = static_cast<int>(orig.P.rows());
  const int m = static_cast<int>(orig.G.rows());
  if (orig.q.size() != n || orig.h.size() != m || orig.G.cols() != n)
    throw std::invalid_argument("qp::solve: dimension mismatch");
  if (m == 0) return solve_scaled(orig, settings, warm_orig);

  Eigen::VectorXd D, E;
  const Problem scaled = detail::equilibrate(orig, D, E);
  Eigen::VectorXd warm;
  const Eigen::VectorXd* warm_ptr = nullptr;
  if (warm_orig && warm_orig->size() == n) {
    warm = warm_orig->cwiseQuotient(D);
    warm_ptr = &warm;
  }

  Result res;
  Settings attempt = settings;
  for (int pass = 0; pass < 2; ++pass) {
    res = solve_scaled(scaled, attempt, warm_ptr);

    // active-set guess from the balanced space, where z and s are comparable
    std::vector<char> active(m, 0);
    for (int i = 0; i < m; ++i) active[i] = res.z[i] > res.s[i] ? 1 : 0;

    res.x = res.x.cwiseProduct(D);
    res.z = res.z.cwiseProduct(E);
    res.s = (orig.h - orig.G * res.x).cwiseMax(0.0);
    res.dual_residual =
        (orig.P * res.x + orig.q + orig.G.transpose() * res.z).lpNorm<Eigen::Infinity>();
    res.primal_residual = (orig.G * res.x - orig.h).cwiseMax(0.0).lpNorm<Eigen::Infinity>();
    double gap = 0.0;
    for (int i = 0; i < m; ++i) gap += res.s[i] * res.z[i];
    res.comp_gap = gap / m;

    // unscaling amplifies the scaled-space residuals; a polish round
    // restores them (scaled linear algebra, original-space evaluation)
    if (settings.polish && res.comp_gap <= std::max(1e-5, 1e3 * attempt.tol))
      detail::polish(scaled, orig, D, E, std::move(active), attempt, res);

    res.objective = 0.5 * res.x.dot(orig.P * res.x) + orig.q.dot(res.x);
    const double scale_d = std::max({1.0, (orig.P * res.x).lpNorm<Eigen::Infinity>(),
                                     orig.q.lpNorm<Eigen::Infinity>(),
                                     (orig.G.transpose() * res.z).lpNorm<Eigen::Infinity>()});
    res.converged = res.dual_residual <= 100.0 * settings.tol * scale_d &&
                    res.primal_residual <= 10.0 * settings.tol &&
                    res.comp_gap <= 100.0 * settings.tol * scale_d;
    if (res.converged) break;
    // one retry at tighter tolerance with a longer budget
    attempt.tol = std::max(1e-12, attempt.tol * 1e-3);
    attempt.max_iter = settings.max_iter * 2;
  }
  return res;
}

inline Result solve_scaled(const Problem& prob, const Settings& settings,
                           const Eigen::VectorXd* warm_x) {
  const int n = static_cast<int>(prob.P.rows());
  const int m = static_cast<int>(prob.G.rows());

  Result res;
  res.x = (warm_x && warm_x->size() == n) ? *warm_x : Eigen::VectorXd::Zero(n);

  if (m == 0) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;
    Eigen::SparseMatrix<double> Preg = prob.P;
    for (int i = 0; i < n; ++i) Preg.coeffRef(i, i) += settings.reg;
    chol.compute(Preg);
    res.x = chol.solve(-prob.q);
    res.z.resize(0);
    res.s.resize(0);
    res.objective = 0.5 * res.x.dot(prob.P * res.x) + prob.q.dot(res.x);
    res.dual_residual = (prob.P * res.x + prob.q).lpNorm<Eigen::Infinity>();
    res.primal_residual = 0.0;
    res.comp_gap = 0.0;
    res.converged = res.dual_residual <= 1e-6;
    return res;
  }

  Eigen::VectorXd s = (prob.h - prob.G * res.x).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;
  bool analyzed = false;
  double reg = settings.reg;

  // Exact KKT product for refinement (no regularization terms).
  const auto kkt_apply = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
    Eigen::VectorXd out(n + m);
    const auto dx = v.head(n);
    const auto dz = v.tail(m);
    out.head(n) = prob.P * dx + prob.G.transpose() * dz;
    out.tail(m) = prob.G * dx - w.cwiseProduct(dz);
    return out;
  };
  const auto solve_refined = [&](const Eigen::VectorXd& rhs, const Eigen::VectorXd& w) {
    Eigen::VectorXd sol = chol.solve(rhs);
    for (int it = 0; it < 2; ++it) {
      Eigen::VectorXd r = rhs - kkt_apply(sol, w);
      sol += chol.solve(r);
    }
    return sol;
  };
  const auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
      if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
  };

  bool interior_converged = false;
  int extra_after_converged = 3;  // keep centering a little past the test
  for (int iter = 0; iter < settings.max_iter; ++iter) {
    res.iterations = iter;
    const Eigen::VectorXd px = prob.P * res.x;
    const Eigen::VectorXd gtz = prob.G.transpose() * z;
    const Eigen::VectorXd gx = prob.G * res.x;
    Eigen::VectorXd rd = px + prob.q + gtz;
    Eigen::VectorXd rp = gx + s - prob.h;
    const double mu = s.dot(z) / m;
    const double scale_d = std::max({1.0, px.lpNorm<Eigen::Infinity>(),
                                     prob.q.lpNorm<Eigen::Infinity>(),
                                     gtz.lpNorm<Eigen::Infinity>()});
    const double scale_p = std::max({1.0, gx.lpNorm<Eigen::Infinity>(),
                                     s.lpNorm<Eigen::Infinity>(),
                                     prob.h.lpNorm<Eigen::Infinity>()});

    if (rd.lpNorm<Eigen::Infinity>() <= settings.tol * scale_d &&
        rp.lpNorm<Eigen::Infinity>() <= settings.tol * scale_p && mu <= settings.tol * scale_d) {
      interior_converged = true;
      if (extra_after_converged-- <= 0 || mu < 1e-13) break;
    }
    // fully degenerate pairs underflow the scaling ratio; stop before they do
    if (mu < 1e-14) break;

    Eigen::VectorXd w = s.cwiseQuotient(z).cwiseMax(1e-16).cwiseMin(1e16);
    Eigen::SparseMatrix<double> K = detail::kkt_lower(prob.P, prob.G, w, reg);
    if (!analyzed) {
      chol.analyzePattern(K);
      analyzed = true;
    }
    chol.factorize(K);
    if (chol.info() != Eigen::Success) {
      reg *= 100.0;
      K = detail::kkt_lower(prob.P, prob.G, w, reg);
      chol.factorize(K);
      if (chol.info() != Eigen::Success) break;
    }

    // Affine (predictor) direction.
    Eigen::VectorXd rc = s.cwiseProduct(z);
    Eigen::VectorXd rhs(n + m);
    rhs.head(n) = -rd;
    rhs.tail(m) = -rp + rc.cwiseQuotient(z);
    Eigen::VectorXd sol = solve_refined(rhs, w);
    Eigen::VectorXd dz_a = sol.tail(m);
    Eigen::VectorXd ds_a = -(rc + s.cwiseProduct(dz_a)).cwiseQuotient(z);

    const double ap_aff = max_step(s, ds_a);
    const double ad_aff = max_step(z, dz_a);
    const double mu_aff = (s + ap_aff * ds_a).dot(z + ad_aff * dz_a) / m;
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3), 0.0, 1.0);

    // Corrector.
    rc = s.cwiseProduct(z) + ds_a.cwiseProduct(dz_a) -
         Eigen::VectorXd::Constant(m, sigma * mu);
    rhs.head(n) = -rd;
    rhs.tail(m) = -rp + rc.cwiseQuotient(z);
    sol = solve_refined(rhs, w);
    Eigen::VectorXd dx = sol.head(n);
    Eigen::VectorXd dz = sol.tail(m);
    Eigen::VectorXd ds = -(rc + s.cwiseProduct(dz)).cwiseQuotient(z);

    const double eta = std::max(0.99, 1.0 - 10.0 * mu);
    const double ap = std::min(1.0, eta * max_step(s, ds));
    const double ad = std::min(1.0, eta * max_step(z, dz));
    if (!std::isfinite(ap) || !std::isfinite(ad) || std::max(ap, ad) < 1e-10) break;
    res.x += ap * dx;
    s += ap * ds;
    z += ad * dz;
  }

  // Residuals for the point actually returned; the reported primal residual
  // is the true constraint violation.
  res.s = s;
  res.z = z;
  res.dual_residual =
      (prob.P * res.x + prob.q + prob.G.transpose() * z).lpNorm<Eigen::Infinity>();
  res.primal_residual = (prob.G * res.x - prob.h).cwiseMax(0.0).lpNorm<Eigen::Infinity>();
  res.comp_gap = s.dot(z) / m;

  const double scale_d = std::max({1.0, (prob.P * res.x).lpNorm<Eigen::Infinity>(),
                                   prob.q.lpNorm<Eigen::Infinity>(),
                                   (prob.G.transpose() * res.z).lpNorm<Eigen::Infinity>()});
  res.converged = interior_converged ||
                  (res.dual_residual <= 10.0 * settings.tol * scale_d &&
                   res.primal_residual <= 10.0 * settings.tol &&
                   res.comp_gap <= 10.0 * settings.tol * scale_d);
  res.objective = 0.5 * res.x.dot(prob.P * res.x) + prob.q.dot(res.x);
  return res;
}

}  // namespace trajrecon::qp
