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

#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lctrace/errors.hpp"

namespace lctrace {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute per-row feasibility slack. Subproblem solutions carry KKT
/// residuals around 1e-10, so one order of slack on feasibility tests.
inline constexpr double kTauFeas = 1e-9;

/// One monomial  coeff * prod_i x_i^exponents_i.
struct MonomialTerm {
  double coeff = 0.0;
  std::vector<int> exponents;  // one non-negative entry per coordinate
};

/// A multivariate polynomial objective given as a list of monomials.
/// Value, gradient and Hessian are exact polynomial arithmetic; the Hessian
/// is symmetric by construction.
class ObjectiveModel {
 public:
  ObjectiveModel() = default;
  ObjectiveModel(int dimension, std::vector<MonomialTerm> terms)
      : dimension_(dimension), terms_(std::move(terms)) {
    if (dimension_ <= 0) throw ParseError("dimension: must be a positive integer");
    for (const auto& t : terms_) {
      if (static_cast<int>(t.exponents.size()) != dimension_)
        throw ParseError("objective.terms: exponent vector length != dimension");
      for (int e : t.exponents)
        if (e < 0) throw ParseError("objective.terms: negative exponent");
    }
  }

  int dimension() const { return dimension_; }
  const std::vector<MonomialTerm>& terms() const { return terms_; }

  double value(const Vector& x) const {
    check_dim(x);
    double f = 0.0;
    for (const auto& t : terms_) f += t.coeff * monomial(t.exponents, x);
    return f;
  }

  Vector gradient(const Vector& x) const {
    check_dim(x);
    Vector g = Vector::Zero(dimension_);
    for (const auto& t : terms_)
      for (int i = 0; i < dimension_; ++i) {
        if (t.exponents[i] == 0) continue;
        g[i] += t.coeff * t.exponents[i] * monomial_drop(t.exponents, x, i, -1);
      }
    return g;
  }

  Matrix hessian(const Vector& x) const {
    check_dim(x);
    Matrix h = Matrix::Zero(dimension_, dimension_);
    for (const auto& t : terms_)
      for (int i = 0; i < dimension_; ++i) {
        if (t.exponents[i] == 0) continue;
        // diagonal
        if (t.exponents[i] >= 2)
          h(i, i) += t.coeff * t.exponents[i] * (t.exponents[i] - 1) *
                     monomial_drop(t.exponents, x, i, -2);
        // upper triangle, mirrored below
        for (int j = i + 1; j < dimension_; ++j) {
          if (t.exponents[j] == 0) continue;
          const double v = t.coeff * t.exponents[i] * t.exponents[j] *
                           monomial_drop2(t.exponents, x, i, j);
          h(i, j) += v;
          h(j, i) += v;
        }
      }
    return h;
  }

 private:
  void check_dim(const Vector& x) const {
    if (x.size() != dimension_)
      throw DimensionError("objective evaluation: point has wrong dimension");
  }

  static double ipow(double base, int e) {
    double r = 1.0;
    for (int k = 0; k < e; ++k) r *= base;
    return r;
  }

  static double monomial(const std::vector<int>& e, const Vector& x) {
    double v = 1.0;
    for (int i = 0; i < x.size(); ++i) v *= ipow(x[i], e[i]);
    return v;
  }

  // monomial with exponent of coordinate k lowered by |shift|
  static double monomial_drop(const std::vector<int>& e, const Vector& x, int k,
                              int shift) {
    double v = 1.0;
    for (int i = 0; i < x.size(); ++i)
      v *= ipow(x[i], i == k ? e[i] + shift : e[i]);
    return v;
  }

  static double monomial_drop2(const std::vector<int>& e, const Vector& x,
                               int k1, int k2) {
    double v = 1.0;
    for (int i = 0; i < x.size(); ++i) {
      int ei = e[i];
      if (i == k1 || i == k2) ei -= 1;
      v *= ipow(x[i], ei);
    }
    return v;
  }

  int dimension_ = 0;
  std::vector<MonomialTerm> terms_;
};

/// The feasible set {x : A x <= b}. m = 0 means unconstrained. Zero rows of
/// A are rejected on construction.
class Polyhedron {
 public:
  Polyhedron() = default;
  Polyhedron(Matrix a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() != b_.size())
      throw ParseError("constraints: A row count != length of b");
    for (Eigen::Index i = 0; i < a_.rows(); ++i)
      if (a_.row(i).norm() == 0.0)
        throw ParseError("constraints.A: row " + std::to_string(i) +
                         " is all zeros");
  }

  static Polyhedron unconstrained(int n) {
    return Polyhedron(Matrix::Zero(0, n), Vector::Zero(0));
  }

  Eigen::Index rows() const { return a_.rows(); }
  Eigen::Index cols() const { return a_.cols(); }
  const Matrix& a_matrix() const { return a_; }
  const Vector& b_vector() const { return b_; }

  /// Componentwise slack b - A x (empty for m = 0).
  Vector slack(const Vector& x) const {
    if (a_.rows() == 0) return Vector::Zero(0);
    return b_ - a_ * x;
  }

  bool contains(const Vector& x, double tau = kTauFeas) const {
    if (a_.rows() == 0) return true;
    return (slack(x).array() >= -tau).all();
  }

 private:
  Matrix a_;  // m x n
  Vector b_;  // m
};

/// Shift the polyhedron to the step frame of a feasible point:
/// {s : A s <= b - A x}. The origin is feasible in the result.
inline Polyhedron shifted_constraints(const Polyhedron& poly, const Vector& x,
                                      double tau = kTauFeas) {
  if (poly.rows() == 0)
    return Polyhedron::unconstrained(static_cast<int>(x.size()));
  if (x.size() != poly.cols())
    throw DimensionError("shifted_constraints: point has wrong dimension");
  Vector shifted = poly.slack(x);
  if ((shifted.array() < -tau).any())
    throw Error("shifted_constraints: point is infeasible");
  return Polyhedron(poly.a_matrix(), shifted);
}

/// Largest t >= 0 with A (x + t d) <= b; +infinity when no row bounds t.
/// Returns 0 when x sits on an active row whose slack decreases along d.
inline double max_feasible_stretch(const Polyhedron& poly, const Vector& x,
                                   const Vector& d) {
  double t = std::numeric_limits<double>::infinity();
  if (poly.rows() == 0) return t;
  const Vector slack = poly.slack(x);
  const Vector ad = poly.a_matrix() * d;
  for (Eigen::Index i = 0; i < poly.rows(); ++i) {
    if (ad[i] > 0.0) {
      const double ti = std::max(slack[i], 0.0) / ad[i];
      t = std::min(t, ti);
    }
  }
  return t;
}

/// User-supplied instance constants (all strictly positive) plus a lower
/// bound hint on f used by the complexity budget formulas.
struct InstanceEstimates {
  double g_max = 0.0;
  double h_max = 0.0;
  double g_lip = 0.0;
  double h_lip = 0.0;
  double f_min_hint = 0.0;
};

/// A complete problem: polynomial objective, polyhedron, constants, start.
struct ProblemInstance {
  ObjectiveModel objective;
  Polyhedron polyhedron;
  InstanceEstimates estimates;
  Vector start_point;

  int dimension() const { return objective.dimension(); }

  void validate() const {
    if (polyhedron.rows() > 0 && polyhedron.cols() != dimension())
      throw ParseError("constraints.A: column count != dimension");
    if (start_point.size() != dimension())
      throw ParseError("start: length != dimension");
    if (!polyhedron.contains(start_point))
      throw ParseError("start: point violates constraints");
    if (!(estimates.g_max > 0.0)) throw ParseError("estimates.g_max: must be > 0");
    if (!(estimates.h_max > 0.0)) throw ParseError("estimates.H_max: must be > 0");
    if (!(estimates.g_lip > 0.0)) throw ParseError("estimates.g_lip: must be > 0");
    if (!(estimates.h_lip > 0.0)) throw ParseError("estimates.H_lip: must be > 0");
  }
};

/// Evaluate f, grad f and hess f at x in one call.
struct Evaluation {
  double f = 0.0;
  Vector g;
  Matrix h;
};

inline Evaluation evaluate(const ObjectiveModel& model, const Vector& x) {
  return Evaluation{model.value(x), model.gradient(x), model.hessian(x)};
}

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number())
    throw ParseError(field + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

/// Parse a problem instance from its JSON document. Decimal parsing is the
/// C locale's strtod path (bit-exact round trip, scientific notation ok).
inline ProblemInstance parse_instance(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("instance: expected a JSON object");
  if (!doc.contains("dimension") || !doc["dimension"].is_number_integer())
    throw ParseError("dimension: missing or not an integer");
  const int n = doc["dimension"].get<int>();
  if (n <= 0) throw ParseError("dimension: must be a positive integer");

  if (!doc.contains("objective") || !doc["objective"].contains("terms"))
    throw ParseError("objective.terms: missing");
  std::vector<MonomialTerm> terms;
  for (const auto& jt : doc["objective"]["terms"]) {
    MonomialTerm t;
    if (!jt.contains("coeff")) throw ParseError("objective.terms: missing coeff");
    t.coeff = detail::require_number(jt["coeff"], "objective.terms.coeff");
    if (!jt.contains("exponents") || !jt["exponents"].is_array())
      throw ParseError("objective.terms: missing exponents array");
    for (const auto& je : jt["exponents"]) {
      if (!je.is_number_integer())
        throw ParseError("objective.terms.exponents: expected integers");
      t.exponents.push_back(je.get<int>());
    }
    terms.push_back(std::move(t));
  }

  Matrix a = Matrix::Zero(0, n);
  Vector b = Vector::Zero(0);
  if (doc.contains("constraints")) {
    const auto& jc = doc["constraints"];
    if (!jc.contains("A") || !jc.contains("b"))
      throw ParseError("constraints: need both A and b");
    const auto& ja = jc["A"];
    const auto& jb = jc["b"];
    if (!ja.is_array() || !jb.is_array())
      throw ParseError("constraints: A and b must be arrays");
    const int m = static_cast<int>(ja.size());
    if (static_cast<int>(jb.size()) != m)
      throw ParseError("constraints.b: length != number of rows of A");
    a.resize(m, n);
    b.resize(m);
    for (int i = 0; i < m; ++i) {
      if (!ja[i].is_array() || static_cast<int>(ja[i].size()) != n)
        throw ParseError("constraints.A: row " + std::to_string(i) +
                         " has wrong length");
      for (int j = 0; j < n; ++j)
        a(i, j) = detail::require_number(ja[i][j], "constraints.A");
      b[i] = detail::require_number(jb[i], "constraints.b");
    }
  }

  if (!doc.contains("estimates")) throw ParseError("estimates: missing");
  const auto& je = doc["estimates"];
  InstanceEstimates est;
  auto pick = [&](const char* key) {
    if (!je.contains(key))
      throw ParseError(std::string("estimates.") + key + ": missing");
    return detail::require_number(je[key], std::string("estimates.") + key);
  };
  est.g_max = pick("g_max");
  est.h_max = pick("H_max");
  est.g_lip = pick("g_lip");
  est.h_lip = pick("H_lip");
  est.f_min_hint = pick("f_min_hint");

  if (!doc.contains("start") || !doc["start"].is_array())
    throw ParseError("start: missing or not an array");
  if (static_cast<int>(doc["start"].size()) != n)
    throw ParseError("start: length != dimension");
  Vector start(n);
  for (int i = 0; i < n; ++i)
    start[i] = detail::require_number(doc["start"][i], "start");

  ProblemInstance inst{ObjectiveModel(n, std::move(terms)),
                       Polyhedron(std::move(a), std::move(b)), est,
                       std::move(start)};
  inst.validate();
  return inst;
}

inline ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open instance file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("instance file " + path + ": " + e.what());
  }
  return parse_instance(doc);
}

inline nlohmann::json instance_to_json(const ProblemInstance& inst) {
  nlohmann::json doc;
  doc["dimension"] = inst.dimension();
  doc["objective"]["terms"] = nlohmann::json::array();
  for (const auto& t : inst.objective.terms())
    doc["objective"]["terms"].push_back(
        {{"coeff", t.coeff}, {"exponents", t.exponents}});
  const auto& p = inst.polyhedron;
  doc["constraints"]["A"] = nlohmann::json::array();
  doc["constraints"]["b"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    std::vector<double> row(p.cols());
    for (Eigen::Index j = 0; j < p.cols(); ++j) row[j] = p.a_matrix()(i, j);
    doc["constraints"]["A"].push_back(row);
    doc["constraints"]["b"].push_back(p.b_vector()[i]);
  }
  doc["estimates"] = {{"g_max", inst.estimates.g_max},
                      {"H_max", inst.estimates.h_max},
                      {"g_lip", inst.estimates.g_lip},
                      {"H_lip", inst.estimates.h_lip},
                      {"f_min_hint", inst.estimates.f_min_hint}};
  doc["start"] = std::vector<double>(inst.start_point.data(),
                                     inst.start_point.data() + inst.dimension());
  return doc;
}

}  // namespace lctrace
