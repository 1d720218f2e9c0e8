// Copyright 2026 The lctrace Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Exact global solver for the trust-region subproblem over a polyhedron
//
//     min  f0 + g's + 1/2 s'Hs   s.t.  A s <= b,  ||s|| <= delta
//
// and for its regularized form without the ball constraint. The solver
// enumerates subsets of the linear rows treated as equalities, reduces each
// face to an equality-constrained trust-region kernel (secular equation in
// the eigenbasis, including the hard case), and selects the global minimum
// among all stationary candidates that are feasible for the remaining rows.
// Exponential in m by construction; m is capped.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lctrace/errors.hpp"
#include "lctrace/problem.hpp"

namespace lctrace {

struct SolveOptions {
  int face_cap = 12;             // max number of linear rows (2^m subsets)
  double tau_feas = 1e-9;        // feasibility slack per row
  double tau_kkt = 1e-8;         // KKT residual acceptance
  double tau_tie = 1e-9;         // objective-value tie window
  int max_root_iterations = 200; // secular root refinement cap
  bool collect_candidates = false;
};

/// q(s) = f0 + g's + 1/2 s'Hs with symmetric H.
struct QuadraticModel {
  double f0 = 0.0;
  Vector g;
  Matrix h;

  double value(const Vector& s) const {
    return f0 + g.dot(s) + 0.5 * s.dot(h * s);
  }

  static QuadraticModel at_point(const ObjectiveModel& model, const Vector& x) {
    return QuadraticModel{model.value(x), model.gradient(x), model.hessian(x)};
  }
};

struct KktResiduals {
  double stationarity = 0.0;
  double comp_lin = 0.0;
  double comp_tr = 0.0;

  double max_residual() const {
    return std::max(stationarity, std::max(comp_lin, comp_tr));
  }
};

/// Residuals of the first-order conditions for the ball-constrained
/// subproblem, computed fresh from the given primal-dual data.
inline KktResiduals kkt_residual(const Vector& s, double lambda_tr,
                                 const Vector& lambda_lin,
                                 const QuadraticModel& model,
                                 const Polyhedron& poly, double delta) {
  KktResiduals r;
  Vector grad = model.g + model.h * s + lambda_tr * s;
  if (poly.rows() > 0 && lambda_lin.size() == poly.rows())
    grad += poly.a_matrix().transpose() * lambda_lin;
  r.stationarity = grad.norm();
  if (poly.rows() > 0 && lambda_lin.size() == poly.rows()) {
    const Vector slack = poly.slack(s);
    for (Eigen::Index i = 0; i < poly.rows(); ++i)
      r.comp_lin = std::max(r.comp_lin, std::abs(lambda_lin[i] * slack[i]));
  }
  r.comp_tr = std::abs(lambda_tr * (delta * delta - s.squaredNorm()));
  return r;
}

/// One stationary point of the reduced quadratic on (or inside) a sphere.
struct TrsStationaryPoint {
  Vector y;
  double multiplier = 0.0;  // nu with (H + nu I) y = -g; any sign
  double value = 0.0;
  bool hard_case = false;
};

/// All stationary points of  min g'y + 1/2 y'Hy  on ||y|| = radius, plus the
/// interior Newton point when H is positive definite and the point is
/// strictly inside the ball.
struct EqualityTrsResult {
  std::vector<TrsStationaryPoint> boundary;
  std::optional<TrsStationaryPoint> interior;
};

namespace detail {

inline bool lex_less(const Vector& a, const Vector& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Secular equation machinery (in the eigenbasis of the reduced Hessian).
// phi(nu) = sum_i c_i^2/(lam_i+nu)^2 - r^2 over the coefficients that carry
// mass. phi is convex on every interval between poles.
// ---------------------------------------------------------------------------

struct SecularFunction {
  const Vector* lam;
  const Vector* c;
  const std::vector<int>* live;
  double r2;

  double phi(double nu) const {
    double s = -r2;
    for (int i : *live) {
      const double d = (*lam)[i] + nu;
      const double t = (*c)[i] / d;
      s += t * t;
    }
    return s;
  }

  double dphi(double nu) const {
    double s = 0.0;
    for (int i : *live) {
      const double d = (*lam)[i] + nu;
      const double ci = (*c)[i];
      s += -2.0 * ci * ci / (d * d * d);
    }
    return s;
  }
};

// Safeguarded Newton/bisection on a sign-changing bracket.
inline double secular_root(const SecularFunction& f, double lo, double hi,
                           double flo, double fhi, double tol_phi,
                           int max_iter) {
  double a = lo, b = hi, fa = flo;
  (void)fhi;
  double x = 0.5 * (a + b);
  for (int it = 0; it < max_iter; ++it) {
    const double fx = f.phi(x);
    if (std::abs(fx) <= tol_phi) return x;
    if ((fx < 0.0) == (fa < 0.0)) {
      a = x;
      fa = fx;
    } else {
      b = x;
    }
    if (b - a <= 1e-16 * (std::abs(a) + std::abs(b) + 1.0)) return 0.5 * (a + b);
    const double dx = f.dphi(x);
    double xn = (dx != 0.0) ? x - fx / dx : 0.5 * (a + b);
    if (!(xn > a && xn < b)) xn = 0.5 * (a + b);
    x = xn;
  }
  const double mid = 0.5 * (a + b);
  if (std::abs(f.phi(mid)) <= 1e4 * tol_phi) return mid;
  throw RootFindError("secular root refinement did not converge");
}

// Smallest offset from a pole (halving from h0) where phi is positive.
inline std::optional<double> walk_in(const SecularFunction& f, double pole,
                                     double dir, double h0) {
  double h = h0;
  for (int i = 0; i < 90; ++i) {
    const double x = pole + dir * h;
    const double v = f.phi(x);
    if (std::isfinite(v) ? v > 0.0 : true) {
      if (std::isfinite(v)) return x;
    }
    h *= 0.5;
    if (h <= 0.0) break;
  }
  return std::nullopt;
}

struct SphereZPoint {
  Vector z;
  double nu = 0.0;
  bool hard_case = false;
};

inline Vector z_from_nu(const Vector& lam, const Vector& c, double nu) {
  Vector z(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    const double d = lam[i] + nu;
    z[i] = (std::abs(d) > 1e-300) ? -c[i] / d : 0.0;
  }
  return z;
}

// All stationary points of the reduced quadratic on the sphere ||z|| = r,
// expressed in the eigenbasis (lam ascending, c the rotated gradient).
inline std::vector<SphereZPoint> sphere_stationary_points(
    const Vector& lam, const Vector& c, double r, const SolveOptions& opts) {
  std::vector<SphereZPoint> out;
  const int d = static_cast<int>(lam.size());
  if (d == 0 || r <= 0.0) return out;
  const double r2 = r * r;
  const double c_tol = 1e-11 * std::max(1.0, c.norm());
  const double grp_tol = 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff());

  // group equal eigenvalues
  std::vector<std::pair<int, int>> groups;  // [first, last]
  for (int i = 0; i < d;) {
    int j = i;
    while (j + 1 < d && lam[j + 1] - lam[i] <= grp_tol) ++j;
    groups.emplace_back(i, j);
    i = j + 1;
  }

  std::vector<int> live;
  for (int i = 0; i < d; ++i)
    if (std::abs(c[i]) > c_tol) live.push_back(i);

  // poles at nu = -lam_group for groups with gradient mass
  std::vector<double> poles;
  std::vector<int> massless_groups;
  for (int gi = 0; gi < static_cast<int>(groups.size()); ++gi) {
    double mass = 0.0;
    for (int i = groups[gi].first; i <= groups[gi].second; ++i)
      mass += c[i] * c[i];
    if (std::sqrt(mass) > c_tol)
      poles.push_back(-lam[groups[gi].first]);
    else
      massless_groups.push_back(gi);
  }
  std::sort(poles.begin(), poles.end());

  const SecularFunction f{&lam, &c, &live, r2};
  const double tol_phi = 1e-13 * r2;

  std::vector<double> roots;
  if (!poles.empty()) {
    double cn = 0.0;
    for (int i : live) cn += c[i] * c[i];
    cn = std::sqrt(cn);
    const double span = cn / r + 1.0;

    // left outer interval
    {
      const double lo = poles.front() - span;
      const auto hi = walk_in(f, poles.front(), -1.0,
                              0.5 * std::min(span, 1.0 + std::abs(poles.front())));
      if (hi && f.phi(lo) < 0.0 && f.phi(*hi) > 0.0)
        roots.push_back(secular_root(f, lo, *hi, f.phi(lo), f.phi(*hi), tol_phi,
                                     opts.max_root_iterations));
    }
    // interior intervals
    for (size_t k = 0; k + 1 < poles.size(); ++k) {
      const double pl = poles[k], pr = poles[k + 1];
      const double gap = pr - pl;
      if (gap <= 0.0) continue;
      const auto a = walk_in(f, pl, +1.0, 0.25 * gap);
      const auto b = walk_in(f, pr, -1.0, 0.25 * gap);
      if (!a || !b || !(*a < *b)) continue;
      // convex on the interval: locate the minimizer via derivative bisection
      double ml = *a, mh = *b;
      if (f.dphi(ml) >= 0.0)
        mh = ml;
      else if (f.dphi(mh) <= 0.0)
        ml = mh;
      for (int it = 0; it < 140 && (mh - ml) > 1e-15 * (1.0 + std::abs(ml) + std::abs(mh)); ++it) {
        const double mid = 0.5 * (ml + mh);
        if (f.dphi(mid) < 0.0)
          ml = mid;
        else
          mh = mid;
      }
      const double numin = 0.5 * (ml + mh);
      const double fmin = f.phi(numin);
      if (fmin > tol_phi) continue;
      if (fmin > -tol_phi) {
        roots.push_back(numin);  // tangent (double) root
        continue;
      }
      if (f.phi(*a) > 0.0)
        roots.push_back(secular_root(f, *a, numin, f.phi(*a), fmin, tol_phi,
                                     opts.max_root_iterations));
      if (f.phi(*b) > 0.0)
        roots.push_back(secular_root(f, numin, *b, fmin, f.phi(*b), tol_phi,
                                     opts.max_root_iterations));
    }
    // right outer interval
    {
      const double hi = poles.back() + span;
      const auto lo = walk_in(f, poles.back(), +1.0,
                              0.5 * std::min(span, 1.0 + std::abs(poles.back())));
      if (lo && f.phi(hi) < 0.0 && f.phi(*lo) > 0.0)
        roots.push_back(secular_root(f, *lo, hi, f.phi(*lo), f.phi(hi), tol_phi,
                                     opts.max_root_iterations));
    }
  }

  for (double nu : roots) {
    SphereZPoint p;
    p.nu = nu;
    p.z = z_from_nu(lam, c, nu);
    out.push_back(std::move(p));
  }

  // hard case: nu pinned at a massless eigenvalue, eigenvector padding
  for (int gi : massless_groups) {
    const double lam_star = lam[groups[gi].first];
    double fixed_sq = 0.0;
    Vector base = Vector::Zero(d);
    bool ok = true;
    for (int i = 0; i < d; ++i) {
      if (i >= groups[gi].first && i <= groups[gi].second) continue;
      const double dl = lam[i] - lam_star;
      if (std::abs(dl) <= 0.5 * grp_tol) {
        ok = false;  // another group numerically coincides; skip
        break;
      }
      base[i] = -c[i] / dl;
      fixed_sq += base[i] * base[i];
    }
    if (!ok) continue;
    if (fixed_sq > r2 * (1.0 + 1e-10)) continue;
    const double pad = std::sqrt(std::max(0.0, r2 - fixed_sq));
    for (int j = groups[gi].first; j <= groups[gi].second; ++j) {
      SphereZPoint p;
      p.nu = -lam_star;
      p.hard_case = true;
      p.z = base;
      p.z[j] += pad;
      out.push_back(p);
      if (pad > 1e-13 * r) {
        SphereZPoint q;
        q.nu = -lam_star;
        q.hard_case = true;
        q.z = base;
        q.z[j] -= pad;
        out.push_back(q);
      }
    }
  }

  // dedup by z
  std::vector<SphereZPoint> uniq;
  for (auto& p : out) {
    bool dup = false;
    for (const auto& q : uniq)
      if ((p.z - q.z).lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + r)) {
        dup = true;
        break;
      }
    if (!dup) uniq.push_back(std::move(p));
  }
  return uniq;
}

// Minimum-norm solution of Lam z = -c; nullopt when inconsistent.
inline std::optional<Vector> minimum_norm_stationary(const Vector& lam,
                                                     const Vector& c) {
  const double sing_tol = 1e-11 * std::max(1.0, lam.cwiseAbs().maxCoeff());
  const double incons_tol = 1e-9 * std::max(1.0, c.norm());
  Vector z = Vector::Zero(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (std::abs(lam[i]) > sing_tol) {
      z[i] = -c[i] / lam[i];
    } else if (std::abs(c[i]) > incons_tol) {
      return std::nullopt;
    }
  }
  return z;
}

}  // namespace detail

inline EqualityTrsResult solve_equality_trs(const Matrix& h, const Vector& g,
                                            double radius,
                                            const SolveOptions& opts = {}) {
  if (!(radius > 0.0)) throw Error("solve_equality_trs: radius must be > 0");
  EqualityTrsResult res;
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success)
    throw Error("solve_equality_trs: eigendecomposition failed");
  const Vector lam = es.eigenvalues();
  const Matrix q = es.eigenvectors();
  const Vector c = q.transpose() * g;

  for (const auto& zp : detail::sphere_stationary_points(lam, c, radius, opts)) {
    TrsStationaryPoint p;
    p.y = q * zp.z;
    p.multiplier = zp.nu;
    p.hard_case = zp.hard_case;
    p.value = g.dot(p.y) + 0.5 * p.y.dot(h * p.y);
    res.boundary.push_back(std::move(p));
  }
  std::sort(res.boundary.begin(), res.boundary.end(),
            [](const TrsStationaryPoint& a, const TrsStationaryPoint& b) {
              if (a.value != b.value) return a.value < b.value;
              return detail::lex_less(a.y, b.y);
            });

  const double pd_tol = 1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff());
  if (lam.size() > 0 && lam[0] > pd_tol) {
    Vector z(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) z[i] = -c[i] / lam[i];
    if (z.norm() < radius * (1.0 - 1e-12)) {
      TrsStationaryPoint p;
      p.y = q * z;
      p.multiplier = 0.0;
      p.value = g.dot(p.y) + 0.5 * p.y.dot(h * p.y);
      res.interior = std::move(p);
    }
  }
  return res;
}

/// One stationary candidate from the face enumeration.
struct FaceCandidate {
  std::vector<int> face_rows;  // rows forced to equality in this branch
  bool ball_active = false;
  bool hard_case = false;
  bool repaired = false;  // moved within a stationary continuum to regain feasibility
  Vector s;
  double s_norm = 0.0;
  double q_value = 0.0;
  double lambda_tr = 0.0;
  Vector lambda_lin;
  std::vector<int> active_set;
  KktResiduals kkt;
  bool kkt_valid = false;
};

enum class SubproblemStatus { kOptimal, kUnbounded };

struct SubproblemSolution {
  SubproblemStatus status = SubproblemStatus::kOptimal;
  Vector s;
  double lambda_tr = 0.0;
  Vector lambda_lin;
  std::vector<int> active_set;
  double q_value = 0.0;
  KktResiduals kkt;
  bool tie_fired = false;
  std::vector<Vector> tied_points;
  int candidates_evaluated = 0;
  bool best_candidate_invalid = false;  // a lower-q candidate failed KKT recovery
  std::vector<FaceCandidate> candidates;  // only with opts.collect_candidates
};

namespace detail {

struct FaceBasisResult {
  Vector p;   // minimum-norm particular solution of A_I s = b_I
  Matrix n;   // orthonormal null-space basis, n x d
  bool independent = false;
};

inline FaceBasisResult face_basis(const Polyhedron& poly,
                                  const std::vector<int>& rows) {
  const int n = static_cast<int>(poly.cols());
  FaceBasisResult fb;
  if (rows.empty()) {
    fb.p = Vector::Zero(n);
    fb.n = Matrix::Identity(n, n);
    fb.independent = true;
    return fb;
  }
  const int k = static_cast<int>(rows.size());
  Matrix ai(k, n);
  Vector bi(k);
  for (int r = 0; r < k; ++r) {
    ai.row(r) = poly.a_matrix().row(rows[r]);
    bi[r] = poly.b_vector()[rows[r]];
  }
  Eigen::JacobiSVD<Matrix> svd(ai, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  const double rank_tol =
      std::max(k, n) * std::numeric_limits<double>::epsilon() * sv[0];
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > rank_tol) ++rank;
  if (rank < k) return fb;  // dependent subset; same face reachable elsewhere
  fb.independent = true;
  const Vector ub = svd.matrixU().leftCols(k).transpose() * bi;
  fb.p = svd.matrixV().leftCols(k) * (ub.array() / sv.head(k).array()).matrix();
  fb.n = svd.matrixV().rightCols(n - k);
  return fb;
}

inline bool feasible_rows(const Polyhedron& poly, const Vector& s, double tau) {
  if (poly.rows() == 0) return true;
  const Vector slack = poly.slack(s);
  for (Eigen::Index i = 0; i < poly.rows(); ++i)
    if (slack[i] < -tau * (1.0 + std::abs(poly.b_vector()[i]))) return false;
  return true;
}

// Least-squares multiplier recovery on a support of rows, with deletion of
// negative entries and re-solve. Optionally solves jointly for the ball
// multiplier (column s appended).
struct RecoveryResult {
  Vector mu;              // over the final support
  std::vector<int> support;
  double lambda_tr = 0.0;
  bool lambda_ok = true;
  bool valid = false;
};

inline RecoveryResult recover_support(const Polyhedron& poly,
                                      const Vector& minus_grad,
                                      std::vector<int> support, const Vector& s,
                                      bool joint_tr, double lambda_tr_in,
                                      double tau_kkt) {
  RecoveryResult out;
  out.lambda_tr = lambda_tr_in;
  const int n = static_cast<int>(minus_grad.size());
  for (int round = 0; round < 2 * static_cast<int>(poly.rows()) + 2; ++round) {
    const int k = static_cast<int>(support.size());
    if (k == 0 && !joint_tr) {
      out.support = support;
      out.mu = Vector::Zero(0);
      out.valid = minus_grad.norm() <= tau_kkt;
      return out;
    }
    Matrix cols(n, k + (joint_tr ? 1 : 0));
    for (int j = 0; j < k; ++j)
      cols.col(j) = poly.a_matrix().row(support[j]).transpose();
    if (joint_tr) cols.col(k) = s;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(cols);
    const Vector sol = cod.solve(minus_grad);
    // drop the most negative multiplier and retry
    int worst = -1;
    double worst_val = -tau_kkt;
    for (int j = 0; j < k; ++j)
      if (sol[j] < worst_val) {
        worst_val = sol[j];
        worst = j;
      }
    if (worst >= 0) {
      support.erase(support.begin() + worst);
      continue;
    }
    out.support = support;
    out.mu = sol.head(k).cwiseMax(0.0);
    if (joint_tr) {
      out.lambda_tr = sol[k];
      out.lambda_ok = sol[k] >= -tau_kkt;
      out.lambda_tr = std::max(out.lambda_tr, 0.0);
    }
    const double resid = (cols * sol - minus_grad).norm();
    out.valid = out.lambda_ok && resid <= tau_kkt;
    return out;
  }
  return out;
}

// Validate one candidate: recover linear multipliers, refresh residuals.
// delta < 0 means "no ball constraint" (residuals use delta = ||s||).
inline void validate_candidate(FaceCandidate& cand, const QuadraticModel& model,
                               const Polyhedron& poly, double delta,
                               const SolveOptions& opts) {
  const int m = static_cast<int>(poly.rows());
  cand.s_norm = cand.s.norm();
  if (cand.ball_active && cand.lambda_tr < -opts.tau_kkt) {
    // sphere stationary point with a negative multiplier: kept as a
    // candidate value but never returnable as the subproblem solution
    cand.lambda_lin = Vector::Zero(m);
    cand.kkt = kkt_residual(cand.s, cand.lambda_tr, cand.lambda_lin, model,
                            poly, delta >= 0.0 ? delta : cand.s_norm);
    cand.kkt_valid = false;
    return;
  }
  cand.lambda_tr = std::max(cand.lambda_tr, 0.0);

  const Vector minus_grad =
      -(model.g + model.h * cand.s + cand.lambda_tr * cand.s);

  // numerically active rows
  std::vector<int> active;
  if (m > 0) {
    const Vector slack = poly.slack(cand.s);
    for (int i = 0; i < m; ++i)
      if (slack[i] <= 1e-10 * (1.0 + std::abs(poly.b_vector()[i])))
        active.push_back(i);
  }
  cand.active_set = active;

  // first the branch rows (independent, usually the exact support), then the
  // full numerically-active set, and finally a joint solve that frees the
  // ball multiplier when the sphere is active at the candidate
  RecoveryResult rec =
      recover_support(poly, minus_grad, cand.face_rows, cand.s,
                      /*joint_tr=*/false, cand.lambda_tr, opts.tau_kkt);
  if (!rec.valid && active != cand.face_rows)
    rec = recover_support(poly, minus_grad, active, cand.s, /*joint_tr=*/false,
                          cand.lambda_tr, opts.tau_kkt);
  bool joint_used = false;
  if (!rec.valid && delta >= 0.0 && cand.s_norm > 0.0 &&
      std::abs(cand.s_norm - delta) <= 1e-9 * (1.0 + delta)) {
    const Vector base = -(model.g + model.h * cand.s);
    RecoveryResult jrec = recover_support(poly, base, active, cand.s,
                                          /*joint_tr=*/true, 0.0, opts.tau_kkt);
    if (jrec.valid) {
      rec = jrec;
      joint_used = true;
    }
  }

  cand.lambda_lin = Vector::Zero(m);
  for (size_t j = 0; j < rec.support.size(); ++j)
    cand.lambda_lin[rec.support[j]] = rec.mu[j];
  if (joint_used) cand.lambda_tr = rec.lambda_tr;

  cand.kkt = kkt_residual(cand.s, cand.lambda_tr, cand.lambda_lin, model, poly,
                          delta >= 0.0 ? delta : cand.s_norm);
  cand.kkt_valid = rec.valid && cand.kkt.max_residual() <= opts.tau_kkt;
}

// Enumerate stationary candidates over all faces. delta < 0 disables the
// ball constraint (regularized form). depth guards the feasibility-repair
// recursion.
inline std::vector<FaceCandidate> enumerate_candidates(
    const QuadraticModel& model, const Polyhedron& poly, double delta,
    const SolveOptions& opts, int depth);

// Minimum-norm feasible point of the stationary continuum s0 + span(dirs),
// where dirs has orthonormal columns orthogonal to s0.
inline std::optional<Vector> repair_in_continuum(const Vector& s0,
                                                 const Matrix& dirs,
                                                 const Polyhedron& poly,
                                                 const SolveOptions& opts) {
  const int k = static_cast<int>(dirs.cols());
  if (k == 0 || poly.rows() == 0) return std::nullopt;
  const Matrix at = poly.a_matrix() * dirs;  // m x k
  const Vector rhs = poly.slack(s0);
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < at.rows(); ++i) {
    if (at.row(i).norm() > 1e-12 * (1.0 + poly.a_matrix().row(i).norm())) {
      keep.push_back(static_cast<int>(i));
    } else if (rhs[i] < -opts.tau_feas * (1.0 + std::abs(poly.b_vector()[i]))) {
      return std::nullopt;  // row violated and unaffected by the continuum
    }
  }
  if (keep.empty()) return std::nullopt;
  Matrix ak(keep.size(), k);
  Vector bk(keep.size());
  for (size_t r = 0; r < keep.size(); ++r) {
    ak.row(r) = at.row(keep[r]);
    bk[r] = rhs[keep[r]];
  }
  QuadraticModel proj{0.0, Vector::Zero(k), Matrix::Identity(k, k)};
  Polyhedron sub(ak, bk);
  auto cands = enumerate_candidates(proj, sub, -1.0, opts, /*depth=*/1);
  const FaceCandidate* pick = nullptr;
  double pick_norm = 0.0;
  for (auto& c : cands) {
    if (!feasible_rows(sub, c.s, opts.tau_feas)) continue;
    validate_candidate(c, proj, sub, -1.0, opts);
    if (!c.kkt_valid) continue;
    const double nn = c.s.norm();
    if (pick == nullptr || nn < pick_norm) {
      pick = &c;
      pick_norm = nn;
    }
  }
  if (pick == nullptr) return std::nullopt;
  return s0 + dirs * pick->s;
}

inline std::vector<FaceCandidate> enumerate_candidates(
    const QuadraticModel& model, const Polyhedron& poly, double delta,
    const SolveOptions& opts, int depth) {
  const int n = static_cast<int>(model.g.size());
  const int m = static_cast<int>(poly.rows());
  const bool has_ball = delta >= 0.0;
  std::vector<FaceCandidate> out;

  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> rows;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) rows.push_back(i);
    if (static_cast<int>(rows.size()) > n) continue;
    const FaceBasisResult fb = face_basis(poly, rows);
    if (!fb.independent) continue;
    const int d = n - static_cast<int>(rows.size());
    const double pnorm = fb.p.norm();
    if (has_ball && pnorm > delta * (1.0 + opts.tau_feas) + opts.tau_feas)
      continue;  // the whole face misses the ball

    auto push = [&](Vector s, bool ball_active, double lambda, bool hard,
                    bool repaired) {
      FaceCandidate c;
      c.face_rows = rows;
      c.ball_active = ball_active;
      c.lambda_tr = lambda;
      c.hard_case = hard;
      c.repaired = repaired;
      c.s = std::move(s);
      out.push_back(std::move(c));
    };

    if (d == 0) {
      push(fb.p, false, 0.0, false, false);
      continue;
    }

    const Vector ghat = fb.n.transpose() * (model.g + model.h * fb.p);
    const Matrix hhat = fb.n.transpose() * model.h * fb.n;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hhat);
    if (es.info() != Eigen::Success)
      throw Error("subproblem: eigendecomposition failed on a face");
    const Vector lam = es.eigenvalues();
    const Matrix q = es.eigenvectors();
    const Vector c = q.transpose() * ghat;

    // stationary point(s) on the affine hull (ball inactive / no ball)
    if (auto z0 = minimum_norm_stationary(lam, c)) {
      const Vector y0 = q * (*z0);
      Vector s = fb.p + fb.n * y0;
      const bool inside =
          !has_ball || s.norm() <= delta * (1.0 + opts.tau_feas) + opts.tau_feas;
      if (inside) {
        if (!feasible_rows(poly, s, opts.tau_feas) && depth == 0) {
          // continuum of stationary points: look for a feasible member
          const double sing_tol = 1e-11 * std::max(1.0, lam.cwiseAbs().maxCoeff());
          std::vector<int> sing;
          for (int i = 0; i < d; ++i)
            if (std::abs(lam[i]) <= sing_tol) sing.push_back(i);
          if (!sing.empty()) {
            Matrix w(d, sing.size());
            for (size_t j = 0; j < sing.size(); ++j) w.col(j) = q.col(sing[j]);
            if (auto rep = repair_in_continuum(s, fb.n * w, poly, opts)) {
              const bool rep_inside =
                  !has_ball ||
                  rep->norm() <= delta * (1.0 + opts.tau_feas) + opts.tau_feas;
              if (rep_inside) push(*rep, false, 0.0, false, true);
            }
          }
        }
        push(std::move(s), false, 0.0, false, false);
      }
    }

    // sphere of the ball constraint intersected with the face
    if (has_ball) {
      const double r2 = delta * delta - pnorm * pnorm;
      if (r2 > -opts.tau_feas * (1.0 + delta)) {
        const double r = std::sqrt(std::max(0.0, r2));
        if (r <= 1e-12 * (1.0 + delta)) {
          // face tangent to the ball: reduced stationarity forces ghat = 0
          if (ghat.norm() <= opts.tau_kkt * (1.0 + model.g.norm()))
            push(fb.p, true, 0.0, false, false);  // joint recovery later
        } else {
          for (const auto& zp : sphere_stationary_points(lam, c, r, opts))
            push(fb.p + fb.n * (q * zp.z), true, zp.nu, zp.hard_case, false);
        }
      }
    }
  }
  return out;
}

// Shared selection: filter feasible candidates, validate, sort, pick winner.
inline SubproblemSolution select_winner(std::vector<FaceCandidate>&& raw,
                                        const QuadraticModel& model,
                                        const Polyhedron& poly, double delta,
                                        const SolveOptions& opts) {
  std::vector<FaceCandidate> cands;
  cands.reserve(raw.size());
  for (auto& c : raw) {
    c.s_norm = c.s.norm();
    if (!feasible_rows(poly, c.s, opts.tau_feas)) continue;
    if (delta >= 0.0 &&
        c.s_norm > delta * (1.0 + opts.tau_feas) + opts.tau_feas)
      continue;
    validate_candidate(c, model, poly, delta, opts);
    c.q_value = model.value(c.s);
    cands.push_back(std::move(c));
  }

  // dedup identical points, prefer a KKT-valid copy
  std::sort(cands.begin(), cands.end(),
            [](const FaceCandidate& a, const FaceCandidate& b) {
              if (a.q_value != b.q_value) return a.q_value < b.q_value;
              if (a.s_norm != b.s_norm) return a.s_norm < b.s_norm;
              if (a.kkt_valid != b.kkt_valid) return a.kkt_valid;
              return lex_less(a.s, b.s);
            });
  std::vector<FaceCandidate> uniq;
  for (auto& c : cands) {
    bool dup = false;
    for (auto& u : uniq)
      if ((c.s - u.s).lpNorm<Eigen::Infinity>() <=
          1e-9 * (1.0 + u.s_norm)) {
        if (c.kkt_valid && !u.kkt_valid) u = c;
        dup = true;
        break;
      }
    if (!dup) uniq.push_back(std::move(c));
  }

  SubproblemSolution sol;
  sol.candidates_evaluated = static_cast<int>(uniq.size());
  if (opts.collect_candidates) sol.candidates = uniq;
  if (uniq.empty()) {
    sol.status = SubproblemStatus::kUnbounded;  // caller refines the meaning
    return sol;
  }

  const double qmin = uniq.front().q_value;
  const FaceCandidate* winner = nullptr;
  for (const auto& c : uniq) {
    if (c.q_value > qmin + opts.tau_tie) break;
    if (c.kkt_valid) {
      winner = &c;
      break;  // tie set already ordered by (norm, lex)
    }
  }
  if (winner == nullptr) {
    for (const auto& c : uniq)
      if (c.kkt_valid) {
        winner = &c;
        sol.best_candidate_invalid = true;
        break;
      }
  }
  if (winner == nullptr) {
    sol.status = SubproblemStatus::kUnbounded;
    return sol;
  }

  sol.s = winner->s;
  sol.lambda_tr = winner->lambda_tr;
  sol.lambda_lin = winner->lambda_lin;
  sol.active_set = winner->active_set;
  sol.q_value = winner->q_value;
  sol.kkt = winner->kkt;
  for (const auto& c : uniq) {
    if (c.q_value > qmin + opts.tau_tie) break;
    sol.tied_points.push_back(c.s);
  }
  sol.tie_fired = sol.tied_points.size() > 1;
  return sol;
}

}  // namespace detail

/// Global minimizer of q over {A s <= b} ∩ {||s|| <= delta} with recovered
/// multipliers. Ties (within tau_tie in value) resolve to the smallest norm,
/// then lexicographically.
inline SubproblemSolution solve_qk(const QuadraticModel& model,
                                   const Polyhedron& poly, double delta,
                                   const SolveOptions& opts = {}) {
  if (!(delta > 0.0)) throw Error("solve_qk: delta must be > 0");
  if (poly.rows() > opts.face_cap)
    throw FaceBudgetError("solve_qk: " + std::to_string(poly.rows()) +
                          " rows exceed the face enumeration cap of " +
                          std::to_string(opts.face_cap));
  if (!(poly.b_vector().array() >= -opts.tau_feas).all())
    throw Error("solve_qk: origin infeasible in the shifted polyhedron");
  auto cands = detail::enumerate_candidates(model, poly, delta, opts, 0);
  SubproblemSolution sol =
      detail::select_winner(std::move(cands), model, poly, delta, opts);
  if (sol.status != SubproblemStatus::kOptimal)
    throw SolverError("solve_qk: no KKT-valid candidate found");
  return sol;
}

/// Global minimizer of the lambda-regularized quadratic over {A s <= b}
/// (no ball constraint). Unboundedness below is reported as a status, not an
/// error. The returned lambda_tr is the regularization weight, which is the
/// valid ball multiplier at the implied radius ||s||.
inline SubproblemSolution solve_qk_lambda(const QuadraticModel& model,
                                          const Polyhedron& poly, double lambda,
                                          const SolveOptions& opts = {}) {
  if (poly.rows() > opts.face_cap)
    throw FaceBudgetError("solve_qk_lambda: " + std::to_string(poly.rows()) +
                          " rows exceed the face enumeration cap of " +
                          std::to_string(opts.face_cap));
  if (!(poly.b_vector().array() >= -opts.tau_feas).all())
    throw Error("solve_qk_lambda: origin infeasible in the shifted polyhedron");

  QuadraticModel reg{model.f0, model.g,
                     model.h + lambda * Matrix::Identity(model.h.rows(),
                                                         model.h.cols())};
  Eigen::SelfAdjointEigenSolver<Matrix> es(reg.h);
  const Vector lam = es.eigenvalues();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  const double pd_tol = 1e-11 * scale;
  const bool strictly_convex = lam.size() > 0 && lam[0] > pd_tol;

  std::vector<Vector> flat_dirs;  // unit recession directions of zero curvature
  if (!strictly_convex) {
    if (poly.rows() == 0) {
      if (lam[0] < -pd_tol) {
        SubproblemSolution sol;
        sol.status = SubproblemStatus::kUnbounded;
        return sol;
      }
      // PSD-singular: unbounded iff the gradient has a null-space component
      const Vector c = es.eigenvectors().transpose() * model.g;
      for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (std::abs(lam[i]) <= pd_tol &&
            std::abs(c[i]) > 1e-9 * std::max(1.0, model.g.norm())) {
          SubproblemSolution sol;
          sol.status = SubproblemStatus::kUnbounded;
          return sol;
        }
    } else {
      // negative curvature over the recession cone {A d <= 0}
      Polyhedron cone(poly.a_matrix(), Vector::Zero(poly.rows()));
      QuadraticModel curv{0.0, Vector::Zero(reg.g.size()), reg.h};
      SolveOptions copts = opts;
      copts.collect_candidates = true;
      const SubproblemSolution rec = solve_qk(curv, cone, 1.0, copts);
      const double curv_tol = 1e-10 * scale;
      if (rec.q_value < -curv_tol) {
        SubproblemSolution sol;
        sol.status = SubproblemStatus::kUnbounded;
        return sol;
      }
      for (const auto& c : rec.candidates)
        if (c.s_norm >= 0.5 && std::abs(c.q_value) <= curv_tol)
          flat_dirs.push_back(c.s / c.s_norm);
    }
  }

  auto cands = detail::enumerate_candidates(reg, poly, -1.0, opts, 0);

  // zero-curvature recession rays: unbounded if the linear rate is negative
  // at any stationary candidate
  if (!flat_dirs.empty()) {
    const double slope_tol = 1e-10 * (1.0 + model.g.norm());
    for (const auto& c : cands) {
      if (!detail::feasible_rows(poly, c.s, opts.tau_feas)) continue;
      const Vector grad = reg.g + reg.h * c.s;
      for (const auto& d : flat_dirs)
        if (grad.dot(d) < -slope_tol) {
          SubproblemSolution sol;
          sol.status = SubproblemStatus::kUnbounded;
          return sol;
        }
    }
  }

  SubproblemSolution sol =
      detail::select_winner(std::move(cands), reg, poly, -1.0, opts);
  if (sol.status != SubproblemStatus::kOptimal) return sol;  // unbounded

  // report multipliers in the ball-constrained convention: the
  // regularization weight is the trust-region multiplier at radius ||s||
  sol.lambda_tr = lambda;
  sol.kkt = kkt_residual(sol.s, lambda, sol.lambda_lin, model, poly,
                         sol.s.norm());
  return sol;
}

}  // namespace lctrace
