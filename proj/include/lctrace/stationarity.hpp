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
// First- and second-order stationarity measures for  min f over {Ax <= b}:
//
//   chi(x) = - min { <grad f(x), s> : x+s feasible, ||s|| <= 1 }
//   psi(x) = - min { d' hess f(x) d : x+d feasible, ||d|| <= 1,
//                    <grad f(x), d> <= 0 }
//
// Both reduce to the face-enumeration subproblem solver.

#pragma once

#include <cmath>

#include "lctrace/problem.hpp"
#include "lctrace/subproblem.hpp"

namespace lctrace {

struct StationarityReport {
  double chi = 0.0;
  Vector chi_witness;
  double psi = 0.0;
  Vector psi_witness;
  Vector computed_at;
};

struct MeasureResult {
  double value = 0.0;
  Vector witness;
};

/// chi(x): the ball-constrained linearized decrease. Zero gradient returns
/// witness 0 (the solver tie-break picks the smallest-norm minimizer).
inline MeasureResult chi(const ProblemInstance& instance, const Vector& x,
                         const SolveOptions& opts = {}) {
  const Vector g = instance.objective.gradient(x);
  const int n = instance.dimension();
  QuadraticModel model{0.0, g, Matrix::Zero(n, n)};
  const Polyhedron shifted = shifted_constraints(instance.polyhedron, x,
                                                 opts.tau_feas);
  const SubproblemSolution sol = solve_qk(model, shifted, 1.0, opts);
  return MeasureResult{-sol.q_value, sol.s};
}

/// psi(x): negated minimum of the Hessian quadratic form over unit-ball
/// feasible directions that are also non-ascent. The non-ascent halfspace is
/// dropped when the gradient is numerically zero (it would be a zero row).
inline MeasureResult psi(const ProblemInstance& instance, const Vector& x,
                         const SolveOptions& opts = {}) {
  const Vector g = instance.objective.gradient(x);
  const Matrix h = instance.objective.hessian(x);
  const int n = instance.dimension();
  const Polyhedron shifted = shifted_constraints(instance.polyhedron, x,
                                                 opts.tau_feas);

  Matrix a = shifted.a_matrix();
  Vector b = shifted.b_vector();
  if (g.norm() >= 1e-12) {
    a.conservativeResize(a.rows() + 1, n);
    a.row(a.rows() - 1) = g.transpose();
    b.conservativeResize(b.size() + 1);
    b[b.size() - 1] = 0.0;
  }
  Polyhedron constrained(std::move(a), std::move(b));

  // q(d) = 1/2 d' (2 hess) d = d' hess d
  QuadraticModel model{0.0, Vector::Zero(n), 2.0 * h};
  const SubproblemSolution sol = solve_qk(model, constrained, 1.0, opts);
  return MeasureResult{-sol.q_value, sol.s};
}

inline StationarityReport stationarity_report(const ProblemInstance& instance,
                                              const Vector& x,
                                              const SolveOptions& opts = {}) {
  StationarityReport rep;
  rep.computed_at = x;
  const MeasureResult c = chi(instance, x, opts);
  rep.chi = c.value;
  rep.chi_witness = c.witness;
  const MeasureResult p = psi(instance, x, opts);
  rep.psi = p.value;
  rep.psi_witness = p.witness;
  return rep;
}

struct ApproxStationarity {
  bool first_order = false;
  bool second_order = false;
};

inline ApproxStationarity is_approx_stationary(const StationarityReport& report,
                                               double eps_g, double eps_h) {
  ApproxStationarity out;
  out.first_order = report.chi <= eps_g;
  out.second_order = report.chi <= eps_g && report.psi <= eps_h;
  return out;
}

}  // namespace lctrace
