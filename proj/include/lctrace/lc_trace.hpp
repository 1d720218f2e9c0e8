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
// The first-order trust-region driver: step classification, the accept /
// expand updates, the CONTRACT subroutine with its lambda escalation, and
// emission of a complete per-iteration trace.

#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lctrace/config.hpp"
#include "lctrace/problem.hpp"
#include "lctrace/stationarity.hpp"
#include "lctrace/subproblem.hpp"
#include "lctrace/trace.hpp"

namespace lctrace {

enum class StepClass { kAcceptDelta, kAcceptSigma, kContract, kExpand };

inline const char* step_class_name(StepClass c) {
  switch (c) {
    case StepClass::kAcceptDelta: return "accept_delta";
    case StepClass::kAcceptSigma: return "accept_sigma";
    case StepClass::kContract: return "contract";
    case StepClass::kExpand: return "expand";
  }
  return "?";
}

/// Relative norm-equality test used wherever the algorithm compares two step
/// norms (exact float equality of two solves is meaningless).
inline bool norms_equal(double a, double b, double tau_eq) {
  return std::abs(a - b) <= tau_eq * std::max(std::abs(a), std::abs(b));
}

/// Classify one iteration. Accepted steps at the radius cap take precedence
/// over the ratio test.
inline StepClass classify_step(double rho_k, double rho_threshold,
                               double lambda_tr, double s_norm, double sigma_k,
                               double big_delta_k, double tau_eq) {
  if (rho_k < rho_threshold) return StepClass::kContract;
  if (std::abs(s_norm - big_delta_k) <= tau_eq * big_delta_k)
    return StepClass::kAcceptDelta;
  if (lambda_tr / s_norm <= sigma_k) return StepClass::kAcceptSigma;
  return StepClass::kExpand;
}

struct AcceptUpdate {
  double big_delta = 0.0;
  double delta = 0.0;
  double sigma = 0.0;
};

inline AcceptUpdate accept_update(double big_delta, double delta, double sigma,
                                  double s_norm, double lambda_tr,
                                  double gamma_e) {
  AcceptUpdate u;
  u.big_delta = std::max(big_delta, gamma_e * s_norm);
  u.delta = std::min(u.big_delta, std::max(delta, gamma_e * s_norm));
  u.sigma = std::max(sigma, lambda_tr / s_norm);
  return u;
}

inline double expand_update(double big_delta_next, double lambda_tr,
                            double sigma) {
  return std::min(big_delta_next, lambda_tr / sigma);
}

struct ContractResult {
  double delta_next = 0.0;
  std::optional<SubproblemSolution> cached;  // reused when delta_next == ||s||
  int branch = 0;       // 1: bounded-ratio branch, 2: escalation branch
  int return_step = 0;  // 5, 8, 21 or 24
  std::vector<double> lambdas_tried;
  int unbounded_retries = 0;
  int solves = 0;
};

namespace detail {

struct LambdaSolver {
  const QuadraticModel* model;
  const Polyhedron* shifted;
  const SolveOptions* opts;
  double gamma_lambda;
  long long cap;
  ContractResult* out;

  // Solve the regularized subproblem; an unbounded status means the weight is
  // too small, so escalate geometrically and retry.
  SubproblemSolution operator()(double& lambda) const {
    for (;;) {
      if (static_cast<long long>(out->lambdas_tried.size()) > cap)
        throw SolverError(
            "contract: lambda escalation exceeded its iteration cap (" +
            std::to_string(cap) + " solves)");
      out->lambdas_tried.push_back(lambda);
      ++out->solves;
      SubproblemSolution sol = solve_qk_lambda(*model, *shifted, lambda, *opts);
      if (sol.status == SubproblemStatus::kOptimal) return sol;
      ++out->unbounded_retries;
      lambda *= gamma_lambda;
    }
  }
};

}  // namespace detail

/// The CONTRACT subroutine. Returns the next radius plus, on the returns that
/// set the radius to a solved step norm, the primal-dual pair to reuse as the
/// next iterate's subproblem solution.
inline ContractResult contract(const QuadraticModel& model,
                               const Polyhedron& shifted, double big_delta_k,
                               const Vector& s_k, double lambda_k, double chi_k,
                               const ConstantsLedger& ledger,
                               const InstanceEstimates& est,
                               const SolverConfig& config,
                               const SolveOptions& opts, long long solve_cap) {
  ContractResult res;
  const double s_norm = s_k.norm();
  const double tau_eq = config.tol.tau_eq;
  detail::LambdaSolver solve{&model, &shifted, &opts, config.gamma_lambda,
                             solve_cap, &res};

  double lambda_bar = lambda_k + ledger.sigma_lower * big_delta_k;
  const SubproblemSolution s_bar = solve(lambda_bar);
  const double s_bar_norm = s_bar.s.norm();

  const bool bar_smaller = !norms_equal(s_bar_norm, s_norm, tau_eq) &&
                           s_bar_norm < s_norm;
  if (bar_smaller && lambda_k < ledger.sigma_lower * s_norm) {
    res.branch = 1;
    double lambda = lambda_bar + est.h_max + std::sqrt(ledger.sigma_lower * chi_k);
    const SubproblemSolution s = solve(lambda);
    const double sn = s.s.norm();
    if (lambda / sn <= ledger.sigma_upper) {
      res.return_step = 5;
      res.delta_next = sn;
      res.cached = s;
    } else {
      res.return_step = 8;
      res.delta_next = s_bar_norm;
      res.cached = s_bar;
    }
    return res;
  }

  res.branch = 2;
  double lambda;
  if (norms_equal(s_bar_norm, s_norm, tau_eq)) {
    lambda = config.gamma_lambda * lambda_bar;
  } else {
    // the escalation seed; a zero incoming dual cannot grow geometrically,
    // fall back to the regularized weight
    lambda = lambda_k > 0.0 ? config.gamma_lambda * lambda_k
                            : config.gamma_lambda * lambda_bar;
  }
  SubproblemSolution s = solve(lambda);
  while (norms_equal(s.s.norm(), s_norm, tau_eq)) {
    lambda *= config.gamma_lambda;
    s = solve(lambda);
  }
  const double sn = s.s.norm();
  if (sn >= config.gamma_c * s_norm) {
    res.return_step = 21;
    res.delta_next = sn;
    res.cached = s;
  } else {
    res.return_step = 24;
    res.delta_next = config.gamma_c * s_norm;
  }
  return res;
}

enum class TerminationReason { kStationary, kIterationCap };

inline const char* termination_reason_name(TerminationReason r) {
  return r == TerminationReason::kStationary ? "stationary" : "iteration_cap";
}

struct RunResult {
  Vector x_final;
  double f_final = 0.0;
  double chi_final = 0.0;
  std::optional<double> psi_final;
  TerminationReason reason = TerminationReason::kIterationCap;
  long long iterations = 0;
  long long subproblem_solves = 0;
  std::map<std::string, long long> step_counts;
  std::optional<ConstantsLedger> ledger;
};

inline nlohmann::json ledger_to_json(const ConstantsLedger& led) {
  nlohmann::json j;
  j["type"] = "ledger";
  j["sigma_lower"] = led.sigma_lower;
  j["sigma_upper"] = led.sigma_upper;
  j["c_min"] = led.c_min;
  j["lambda_max"] = led.lambda_max;
  j["lambda_max_refreshed"] = led.lambda_max_refreshed;
  j["fixed_point_residual"] = led.fixed_point_residual;
  j["g_max_bound"] = led.g_max_bound;
  j["delta_cap"] = led.delta_cap;
  j["h_tilde"] = led.h_tilde;
  j["l_tilde"] = led.l_tilde;
  j["kappa"] = led.kappa;
  j["sigma_max_bound"] = led.sigma_max_bound;
  j["lambda0"] = led.lambda0;
  j["sigma0_effective"] = led.sigma0_effective;
  j["provenance"] = led.provenance;
  return j;
}

inline ConstantsLedger ledger_from_json(const nlohmann::json& j) {
  ConstantsLedger led;
  led.sigma_lower = j.at("sigma_lower").get<double>();
  led.sigma_upper = j.at("sigma_upper").get<double>();
  led.c_min = j.at("c_min").get<double>();
  led.lambda_max = j.at("lambda_max").get<double>();
  led.lambda_max_refreshed = j.at("lambda_max_refreshed").get<double>();
  led.fixed_point_residual = j.at("fixed_point_residual").get<double>();
  led.g_max_bound = j.at("g_max_bound").get<double>();
  led.delta_cap = j.at("delta_cap").get<double>();
  led.h_tilde = j.at("h_tilde").get<double>();
  led.l_tilde = j.at("l_tilde").get<double>();
  led.kappa = j.at("kappa").get<double>();
  led.sigma_max_bound = j.at("sigma_max_bound").get<double>();
  led.lambda0 = j.at("lambda0").get<double>();
  led.sigma0_effective = j.at("sigma0_effective").get<double>();
  return led;
}

inline nlohmann::json config_to_json(const SolverConfig& c) {
  return nlohmann::json{{"rho", c.rho},
                        {"gamma_c", c.gamma_c},
                        {"gamma_e", c.gamma_e},
                        {"gamma_lambda", c.gamma_lambda},
                        {"epsilon", c.epsilon},
                        {"delta0", c.delta0},
                        {"Delta0", c.big_delta0},
                        {"sigma0", c.sigma0},
                        {"max_iterations", c.max_iterations},
                        {"delta_cap", c.effective_delta_cap()},
                        {"kappa", c.kappa},
                        {"face_cap", c.face_cap},
                        {"tau_eq", c.tol.tau_eq},
                        {"tau_feas", c.tol.tau_feas},
                        {"tau_kkt", c.tol.tau_kkt},
                        {"tau_tie", c.tol.tau_tie}};
}

inline SolverConfig config_from_json(const nlohmann::json& j) {
  SolverConfig c;
  c.rho = j.at("rho").get<double>();
  c.gamma_c = j.at("gamma_c").get<double>();
  c.gamma_e = j.at("gamma_e").get<double>();
  c.gamma_lambda = j.at("gamma_lambda").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.delta0 = j.at("delta0").get<double>();
  c.big_delta0 = j.at("Delta0").get<double>();
  c.sigma0 = j.at("sigma0").get<double>();
  c.max_iterations = j.at("max_iterations").get<long long>();
  c.delta_cap = j.at("delta_cap").get<double>();
  c.kappa = j.at("kappa").get<double>();
  c.face_cap = j.at("face_cap").get<int>();
  c.tol.tau_eq = j.at("tau_eq").get<double>();
  c.tol.tau_feas = j.at("tau_feas").get<double>();
  c.tol.tau_kkt = j.at("tau_kkt").get<double>();
  c.tol.tau_tie = j.at("tau_tie").get<double>();
  return c;
}

inline nlohmann::json make_trace_header(const ProblemInstance& instance,
                                        const std::string& instance_label,
                                        const SolverConfig& config,
                                        const std::string& algorithm,
                                        std::optional<double> eps_h =
                                            std::nullopt) {
  nlohmann::json head;
  head["type"] = "header";
  head["schema"] = kTraceSchema;
  head["algorithm"] = algorithm;
  head["instance"] = instance_label;
  head["instance_doc"] = instance_to_json(instance);
  head["dimension"] = instance.dimension();
  head["config"] = config_to_json(config);
  if (eps_h) head["eps_h"] = *eps_h;
  return head;
}

/// Runs the first-order algorithm one loop body at a time so the second-order
/// algorithm can interleave curvature steps. The trust-region state persists
/// across externally injected iterates.
class FirstOrderDriver {
 public:
  FirstOrderDriver(const ProblemInstance& instance, const SolverConfig& config,
                   TraceWriter* writer)
      : inst_(instance), cfg_(config), writer_(writer) {
    cfg_.validate();
    inst_.validate();
    opts_.face_cap = cfg_.face_cap;
    opts_.tau_feas = cfg_.tol.tau_feas;
    opts_.tau_kkt = cfg_.tol.tau_kkt;
    opts_.tau_tie = cfg_.tol.tau_tie;
    x_ = inst_.start_point;
    eval_ = evaluate(inst_.objective, x_);
    delta_ = cfg_.delta0;
    big_delta_ = cfg_.big_delta0;
    sigma_ = cfg_.sigma0;
    clock_start_ = std::chrono::steady_clock::now();
  }

  long long record_index() const { return record_index_; }
  const Vector& x() const { return x_; }
  double f() const { return eval_.f; }
  long long subproblem_solves() const { return solves_total_; }
  const std::map<std::string, long long>& step_counts() const {
    return counts_;
  }
  const std::optional<ConstantsLedger>& ledger() const { return ledger_; }
  const SolveOptions& options() const { return opts_; }

  double chi_current() {
    if (!chi_cache_) chi_cache_ = chi(inst_, x_, opts_);
    return chi_cache_->value;
  }

  /// Finalized ledger, computing it from lambda0 = 0 when no subproblem was
  /// ever solved (zero-iteration runs).
  const ConstantsLedger& ledger_or_finalize() {
    if (!ledger_) {
      ledger_ = finalize_ledger(cfg_, inst_.estimates, 0.0);
      sigma_ = ledger_->sigma0_effective;
      emit_ledger();
    }
    return *ledger_;
  }

  /// Move the iterate from outside (curvature step of the second-order
  /// algorithm). Invalidates the cached subproblem pair.
  void set_iterate(const Vector& x_new, long long extra_record = 1) {
    if (!inst_.polyhedron.contains(x_new, 10.0 * cfg_.tol.tau_feas))
      throw SolverError("set_iterate: infeasible point injected");
    x_ = x_new;
    eval_ = evaluate(inst_.objective, x_);
    chi_cache_.reset();
    pair_.reset();
    record_index_ += extra_record;
  }

  void bump_record_index() { ++record_index_; }

  double wall_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - clock_start_)
        .count();
  }

  /// One loop body of the first-order algorithm. The caller has already
  /// checked the termination condition.
  void step() {
    ensure_pair();
    const double chi_k = chi_current();
    const SubproblemSolution cur = *pair_;
    const bool cur_from_cache = pair_from_cache_;
    const double rho_k = rho_k_;
    const double f_k = eval_.f;
    const double f_trial = f_trial_;
    const double sn = cur.s.norm();
    if (!(sn > 0.0))
      throw SolverError("step: zero trial step before termination");

    const double gs = eval_.g.dot(cur.s);
    const double shs = cur.s.dot(eval_.h * cur.s);

    nlohmann::json rec;
    rec["type"] = "iter";
    rec["kind"] = "first_order";
    rec["k"] = record_index_;
    rec["x"] = vector_to_json(x_);
    rec["f"] = f_k;
    rec["chi"] = chi_k;
    rec["delta"] = delta_;
    rec["Delta"] = big_delta_;
    rec["sigma"] = sigma_;
    rec["s"] = vector_to_json(cur.s);
    rec["s_norm"] = sn;
    rec["lambda"] = cur.lambda_tr;
    rec["rho"] = rho_k;
    rec["gs"] = gs;
    rec["sHs"] = shs;
    rec["f_trial"] = f_trial;
    rec["q_value"] = f_k + gs + 0.5 * shs;
    rec["kkt"] = {{"stationarity", cur.kkt.stationarity},
                  {"comp_lin", cur.kkt.comp_lin},
                  {"comp_tr", cur.kkt.comp_tr}};
    rec["tie_fired"] = cur.tie_fired;
    rec["cache_used"] = pair_from_cache_;
    const bool assume3 = gs >= 0.0 && shs <= 0.0;
    rec["assumption3_flagged"] = assume3;
    if (cur.lambda_tr * sn * sn > 1e-300)
      rec["kappa_empirical"] = -(gs + 0.5 * shs) / (cur.lambda_tr * sn * sn);

    const StepClass cls = classify_step(rho_k, cfg_.rho, cur.lambda_tr, sn,
                                        sigma_, big_delta_, cfg_.tol.tau_eq);
    rec["step_class"] = step_class_name(cls);
    counts_[step_class_name(cls)] += 1;
    long long solves_this_iter = cur_from_cache ? 0 : 1;

    std::optional<SubproblemSolution> next_pair;
    switch (cls) {
      case StepClass::kAcceptDelta:
      case StepClass::kAcceptSigma: {
        const AcceptUpdate u = accept_update(big_delta_, delta_, sigma_, sn,
                                             cur.lambda_tr, cfg_.gamma_e);
        x_ = x_ + cur.s;
        eval_ = evaluate(inst_.objective, x_);
        chi_cache_.reset();
        big_delta_ = u.big_delta;
        delta_ = u.delta;
        sigma_ = u.sigma;
        break;
      }
      case StepClass::kExpand: {
        delta_ = expand_update(big_delta_, cur.lambda_tr, sigma_);
        break;
      }
      case StepClass::kContract: {
        const QuadraticModel model{eval_.f, eval_.g, eval_.h};
        const Polyhedron shifted =
            shifted_constraints(inst_.polyhedron, x_, cfg_.tol.tau_feas);
        const ContractResult cr =
            contract(model, shifted, big_delta_, cur.s, cur.lambda_tr, chi_k,
                     *ledger_, inst_.estimates, cfg_, opts_, contract_cap());
        delta_ = cr.delta_next;
        solves_total_ += cr.solves;
        solves_this_iter += cr.solves;
        nlohmann::json cj;
        cj["branch"] = cr.branch;
        cj["return_step"] = cr.return_step;
        cj["lambdas_tried"] = cr.lambdas_tried;
        cj["unbounded_retries"] = cr.unbounded_retries;
        cj["cache_armed"] = cr.cached.has_value();
        if (cr.cached && cr.cached->s.norm() == delta_) {
          next_pair = cr.cached;
          if (cfg_.debug_verify_cache) {
            const SubproblemSolution fresh = solve_current();
            cj["cache_verify_mismatch"] =
                !norms_equal(fresh.s.norm(), cr.cached->s.norm(),
                             cfg_.tol.tau_eq);
          }
        }
        rec["contract"] = cj;
        break;
      }
    }

    // end-of-body subproblem solve for the next iterate (or the reuse of the
    // pair produced inside CONTRACT)
    pair_.reset();
    pair_from_cache_ = false;
    if (next_pair) {
      install_pair(*next_pair, /*from_cache=*/true);
    } else {
      ensure_pair();
    }
    if (cls == StepClass::kContract) {
      const double nsn = pair_->s.norm();
      if (nsn > 0.0)
        sigma_ = std::max(sigma_, pair_->lambda_tr / nsn);
    }

    rec["solves"] = solves_this_iter;
    rec["wall_ms"] = wall_ms();
    if (writer_) writer_->write(rec);
    ++record_index_;
  }

  void emit_final(TerminationReason reason, std::optional<double> psi_final) {
    ledger_or_finalize();
    nlohmann::json rec;
    rec["type"] = "final";
    rec["k"] = record_index_;
    rec["x"] = vector_to_json(x_);
    rec["f"] = eval_.f;
    rec["chi"] = chi_current();
    if (psi_final) rec["psi"] = *psi_final;
    rec["reason"] = termination_reason_name(reason);
    rec["counts"] = counts_;
    rec["subproblem_solves"] = solves_total_;
    rec["wall_ms"] = wall_ms();
    if (writer_) writer_->write(rec);
  }

  RunResult make_result(TerminationReason reason,
                        std::optional<double> psi_final) {
    RunResult r;
    r.x_final = x_;
    r.f_final = eval_.f;
    r.chi_final = chi_current();
    r.psi_final = psi_final;
    r.reason = reason;
    r.iterations = record_index_;
    r.subproblem_solves = solves_total_;
    r.step_counts = counts_;
    r.ledger = ledger_;
    return r;
  }

 private:
  long long contract_cap() const {
    const ConstantsLedger& led = *ledger_;
    const double arg = (led.c_min + led.lambda_bound()) *
                       (inst_.estimates.h_max + inst_.estimates.g_lip +
                        cfg_.rho * led.delta_cap) /
                       (led.sigma_lower * cfg_.epsilon);
    const double kc1 =
        std::ceil(std::log(std::max(arg, 1.0)) / std::log(cfg_.gamma_lambda));
    return std::max<long long>(60, 4 * static_cast<long long>(kc1));
  }

  SubproblemSolution solve_current() {
    const QuadraticModel model{eval_.f, eval_.g, eval_.h};
    const Polyhedron shifted =
        shifted_constraints(inst_.polyhedron, x_, cfg_.tol.tau_feas);
    return solve_qk(model, shifted, delta_, opts_);
  }

  void install_pair(const SubproblemSolution& sol, bool from_cache) {
    pair_ = sol;
    pair_from_cache_ = from_cache;
    f_trial_ = inst_.objective.value(x_ + sol.s);
    const double sn = sol.s.norm();
    rho_k_ = sn > 0.0 ? (eval_.f - f_trial_) / (sn * sn * sn) : 0.0;
  }

  void ensure_pair() {
    if (pair_) return;
    const SubproblemSolution sol = solve_current();
    ++solves_total_;
    if (!ledger_) {
      ledger_ = finalize_ledger(cfg_, inst_.estimates, sol.lambda_tr);
      sigma_ = ledger_->sigma0_effective;
      emit_ledger();
    }
    install_pair(sol, false);
  }

  void emit_ledger() {
    if (!writer_) return;
    nlohmann::json j = ledger_to_json(*ledger_);
    j["wall_ms"] = wall_ms();
    writer_->write(j);
  }

  ProblemInstance inst_;
  SolverConfig cfg_;
  SolveOptions opts_;
  TraceWriter* writer_;

  Vector x_;
  Evaluation eval_;
  double delta_ = 0.0;
  double big_delta_ = 0.0;
  double sigma_ = 0.0;
  long long record_index_ = 0;
  std::optional<ConstantsLedger> ledger_;
  std::optional<SubproblemSolution> pair_;
  bool pair_from_cache_ = false;
  double rho_k_ = 0.0;
  double f_trial_ = 0.0;
  std::optional<MeasureResult> chi_cache_;
  long long solves_total_ = 0;
  std::map<std::string, long long> counts_;
  std::chrono::steady_clock::time_point clock_start_;
};

/// First-order run: solve, classify, update until chi <= epsilon or the
/// iteration cap. The writer receives header, ledger, one record per
/// iteration and a final record.
inline RunResult run_first_order(const ProblemInstance& instance,
                                 const SolverConfig& config,
                                 TraceWriter* writer = nullptr,
                                 const std::string& instance_label = "") {
  if (writer)
    writer->write(
        make_trace_header(instance, instance_label, config, "first_order"));
  FirstOrderDriver driver(instance, config, writer);
  for (;;) {
    if (driver.record_index() >= config.max_iterations) {
      driver.emit_final(TerminationReason::kIterationCap, std::nullopt);
      return driver.make_result(TerminationReason::kIterationCap, std::nullopt);
    }
    if (driver.chi_current() <= config.epsilon) {
      driver.emit_final(TerminationReason::kStationary, std::nullopt);
      return driver.make_result(TerminationReason::kStationary, std::nullopt);
    }
    driver.step();
  }
}

}  // namespace lctrace
