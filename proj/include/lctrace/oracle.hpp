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
// Independent brute-force oracles for the property tests, plus evaluators
// for the worst-case iteration budget formulas. The grid oracle exists for
// n <= 4 verification only.

#pragma once

#include <cmath>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

#include "lctrace/config.hpp"
#include "lctrace/problem.hpp"

namespace lctrace {

struct GridResult {
  double value = 0.0;
  Vector point;
  double accuracy_bound = 0.0;  // value* <= value <= value* + bound
  long long evaluated = 0;
};

/// Exhaustive evaluation on the axis-aligned grid of the [-radius, radius]^n
/// box intersected with the membership test. The grid contains the origin.
/// Deterministic under parallel evaluation: per-thread bests merge by
/// (value, lexicographic point).
template <class Objective, class Member>
GridResult grid_minimize(Objective&& objective, Member&& member, int n,
                         double radius, double resolution,
                         double lipschitz_bound) {
  if (n < 1 || n > 4)
    throw Error("grid_minimize: dimension guard (n <= 4) violated");
  if (!(resolution > 0.0)) throw Error("grid_minimize: resolution must be > 0");
  const long long half = static_cast<long long>(std::ceil(radius / resolution));
  const long long per_axis = 2 * half + 1;

  const unsigned n_threads =
      std::max(1u, std::min(4u, std::thread::hardware_concurrency()));

  struct Best {
    double value = std::numeric_limits<double>::infinity();
    Vector point;
    long long evaluated = 0;
  };
  std::vector<Best> bests(n_threads);

  auto run_slab = [&](unsigned tid, long long i0_begin, long long i0_end) {
    Best& best = bests[tid];
    Vector x(n);
    std::vector<long long> idx(n, -half);
    for (long long i0 = i0_begin; i0 < i0_end; ++i0) {
      x[0] = static_cast<double>(i0) * resolution;
      // odometer over the remaining coordinates
      for (int k = 1; k < n; ++k) {
        idx[k] = -half;
        x[k] = static_cast<double>(-half) * resolution;
      }
      for (;;) {
        if (member(x)) {
          ++best.evaluated;
          const double v = objective(x);
          if (v < best.value ||
              (v == best.value && detail::lex_less(x, best.point))) {
            best.value = v;
            best.point = x;
          }
        }
        if (n == 1) break;
        int k = n - 1;
        while (k >= 1) {
          if (++idx[k] <= half) {
            x[k] = static_cast<double>(idx[k]) * resolution;
            break;
          }
          idx[k] = -half;
          x[k] = static_cast<double>(-half) * resolution;
          --k;
        }
        if (k == 0) break;
      }
    }
  };

  std::vector<std::thread> pool;
  const long long chunk = (per_axis + n_threads - 1) / n_threads;
  for (unsigned t = 0; t < n_threads; ++t) {
    const long long b = -half + static_cast<long long>(t) * chunk;
    const long long e = std::min(b + chunk, half + 1);
    if (b >= e) continue;
    pool.emplace_back(run_slab, t, b, e);
  }
  for (auto& th : pool) th.join();

  GridResult res;
  for (const auto& b : bests) {
    res.evaluated += b.evaluated;
    if (b.point.size() == 0) continue;
    if (b.value < res.value ||
        (b.value == res.value && res.point.size() > 0 &&
         detail::lex_less(b.point, res.point)) ||
        res.point.size() == 0) {
      if (b.value < res.value || res.point.size() == 0 ||
          (b.value == res.value && detail::lex_less(b.point, res.point))) {
        res.value = b.value;
        res.point = b.point;
      }
    }
  }
  if (res.point.size() == 0)
    throw Error("grid_minimize: no feasible grid point found");
  res.accuracy_bound = lipschitz_bound * resolution * std::sqrt(double(n));
  return res;
}

/// Grid oracle specialization for a quadratic over polyhedron ∩ ball, with
/// the Lipschitz bound derived from the model on the box.
inline GridResult grid_minimize_quadratic(const QuadraticModel& model,
                                          const Polyhedron& poly, double delta,
                                          double resolution) {
  const int n = static_cast<int>(model.g.size());
  const double hnorm = model.h.norm();
  const double lip = model.g.norm() + hnorm * delta * std::sqrt(double(n));
  return grid_minimize(
      [&](const Vector& s) { return model.value(s); },
      [&](const Vector& s) {
        return s.squaredNorm() <= delta * delta && poly.contains(s, kTauFeas);
      },
      n, delta, resolution, lip);
}

// ---------------------------------------------------------------------------
// Worst-case iteration budgets
// ---------------------------------------------------------------------------

struct ComplexityBudget {
  long long k_sigma = 0;
  long long k_delta = 0;
  long long k_c = 0;
  long long k_c1 = 0;
  long long k_total = 0;
  // inputs snapshot
  double f0 = 0.0, f_min = 0.0, rho = 0.0, h_lip = 0.0, sigma_max = 0.0;
  double delta0 = 0.0, gamma_c = 0.0, gamma_lambda = 0.0;
  double sigma_lower_eps = 0.0, c_min = 0.0, lambda_max = 0.0, lambda0 = 0.0;
  double eps = 0.0;
};

namespace detail {

inline long long ceil_clamped(double v) {
  if (!(v > 0.0)) return 0;
  const double c = std::ceil(v);
  if (c > 4.0e18) return static_cast<long long>(4.0e18);
  return static_cast<long long>(c);
}

inline long long mul_clamped(long long a, long long b) {
  if (a == 0 || b == 0) return 0;
  if (a > 4000000000000000000LL / b) return 4000000000000000000LL;
  return a * b;
}

}  // namespace detail

/// Evaluate every budget formula at threshold eps, re-deriving the ratio
/// lower bound sigma_lower(eps) from the ledger constants.
inline ComplexityBudget evaluate_budgets(const ConstantsLedger& ledger,
                                         const SolverConfig& config,
                                         const InstanceEstimates& est,
                                         double f0, double eps) {
  ComplexityBudget b;
  b.f0 = f0;
  b.f_min = est.f_min_hint;
  b.rho = config.rho;
  b.h_lip = est.h_lip;
  b.sigma_max = ledger.sigma_max_bound;
  b.delta0 = config.big_delta0;
  b.gamma_c = config.gamma_c;
  b.gamma_lambda = config.gamma_lambda;
  b.c_min = ledger.c_min;
  b.lambda_max = ledger.lambda_max;
  b.lambda0 = ledger.lambda0;
  b.eps = eps;

  const double gap = std::max(0.0, f0 - est.f_min_hint);
  const double lam_bound = ledger.lambda_bound();
  b.sigma_lower_eps = eps / (ledger.c_min + lam_bound);

  b.k_sigma = detail::ceil_clamped(gap * std::pow(est.h_lip + b.sigma_max, 1.5) /
                                   (config.rho * std::pow(eps, 1.5)));
  b.k_delta = detail::ceil_clamped(
      gap / (config.rho * std::pow(config.big_delta0, 3.0)));
  {
    const double inner =
        2.0 + std::log(b.sigma_max / b.sigma_lower_eps) /
                  std::log(config.gamma_lambda);
    const double outer = std::log(ledger.delta_cap * (ledger.c_min + lam_bound) /
                                  eps) /
                         std::log(1.0 / config.gamma_c);
    b.k_c = 1 + detail::ceil_clamped(inner * std::max(outer, 0.0));
  }
  {
    const double arg = (ledger.c_min + lam_bound) *
                       (est.h_max + est.g_lip + config.rho * ledger.delta_cap) /
                       (b.sigma_lower_eps * eps);
    b.k_c1 = detail::ceil_clamped(std::log(std::max(arg, 1.0)) /
                                  std::log(config.gamma_lambda));
  }
  b.k_total =
      1 + detail::mul_clamped(b.k_sigma + b.k_delta,
                              1 + detail::mul_clamped(b.k_c, b.k_c1));
  return b;
}

// ---------------------------------------------------------------------------
// Derivative checking
// ---------------------------------------------------------------------------

/// Max relative disagreement between the analytic derivatives and central
/// differences: the gradient against differences of the value, the Hessian
/// against differences of the gradient. Relative with a unit floor.
inline double finite_difference_check(const ObjectiveModel& model,
                                      const std::vector<Vector>& points,
                                      double h = 1e-5) {
  double worst = 0.0;
  const int n = model.dimension();
  for (const Vector& x : points) {
    const Vector g = model.gradient(x);
    const Matrix hess = model.hessian(x);
    for (int i = 0; i < n; ++i) {
      Vector xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd_g = (model.value(xp) - model.value(xm)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd_g - g[i]) / (1.0 + std::abs(g[i])));
      const Vector fd_row = (model.gradient(xp) - model.gradient(xm)) / (2.0 * h);
      for (int j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(fd_row[j] - hess(i, j)) /
                                    (1.0 + std::abs(hess(i, j))));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Log-log scaling fit
// ---------------------------------------------------------------------------

/// Least-squares slope of log(count) against log(1/eps). Constant counts
/// give slope zero.
inline double scaling_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw Error("scaling_fit: need at least 3 (eps, count) samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(points.size());
  for (const auto& [eps, count] : points) {
    const double x = std::log(1.0 / eps);
    const double y = std::log(std::max(count, 1.0));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) throw Error("scaling_fit: need distinct eps values");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace lctrace
