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
// Second-order driver: interleaves first-order trust-region iterations with
// negative-curvature steps until the iterate is an approximate second-order
// stationary point. The curvature step x + (2 psi / h_tilde) d_hat is clamped
// to the feasible stretch along d_hat; clamp events are logged and excluded
// from the reduction assertion.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lctrace/lc_trace.hpp"

namespace lctrace {

struct SecondOrderConfig {
  double eps_g = 1e-4;
  double eps_h = 1e-2;
  SolverConfig inner;                       // inner.epsilon is forced to eps_g
  std::optional<double> h_tilde_override;

  double h_tilde(const InstanceEstimates& est) const {
    if (h_tilde_override) return *h_tilde_override;
    return std::max(est.h_lip, est.h_max);
  }
};

inline RunResult run_second_order(const ProblemInstance& instance,
                                  const SecondOrderConfig& config,
                                  TraceWriter* writer = nullptr,
                                  const std::string& instance_label = "") {
  SolverConfig inner = config.inner;
  inner.epsilon = config.eps_g;
  if (writer)
    writer->write(make_trace_header(instance, instance_label, inner,
                                    "second_order", config.eps_h));
  FirstOrderDriver driver(instance, inner, writer);
  const double h_tilde = config.h_tilde(instance.estimates);
  long long curvature_steps = 0, clamped_steps = 0;

  for (;;) {
    if (driver.record_index() >= inner.max_iterations) {
      driver.emit_final(TerminationReason::kIterationCap, std::nullopt);
      RunResult r =
          driver.make_result(TerminationReason::kIterationCap, std::nullopt);
      r.step_counts["curvature"] = curvature_steps;
      r.step_counts["clamped_curvature"] = clamped_steps;
      return r;
    }
    const double chi_k = driver.chi_current();
    if (chi_k > config.eps_g) {
      driver.step();
      continue;
    }

    const MeasureResult p = psi(instance, driver.x(), driver.options());
    if (p.value <= config.eps_h) {
      driver.emit_final(TerminationReason::kStationary, p.value);
      RunResult r =
          driver.make_result(TerminationReason::kStationary, p.value);
      r.step_counts["curvature"] = curvature_steps;
      r.step_counts["clamped_curvature"] = clamped_steps;
      return r;
    }

    const double t_nominal = 2.0 * p.value / h_tilde;
    const double stretch =
        max_feasible_stretch(instance.polyhedron, driver.x(), p.witness);
    const double t = std::min(t_nominal, stretch);
    const bool clamped = t < t_nominal;
    const Vector x_next = driver.x() + t * p.witness;
    const double f_next = instance.objective.value(x_next);

    nlohmann::json rec;
    rec["type"] = "iter";
    rec["kind"] = clamped ? "clamped_curvature" : "curvature";
    rec["k"] = driver.record_index();
    rec["x"] = vector_to_json(driver.x());
    rec["f"] = driver.f();
    rec["chi"] = chi_k;
    rec["psi"] = p.value;
    rec["d_hat"] = vector_to_json(p.witness);
    rec["t_nominal"] = t_nominal;
    rec["t"] = t;
    rec["f_next"] = f_next;
    rec["wall_ms"] = driver.wall_ms();
    if (writer) writer->write(rec);

    if (clamped)
      ++clamped_steps;
    else
      ++curvature_steps;
    driver.set_iterate(x_next);
  }
}

/// Replay check of the interleaved reduction bound: for curvature steps and
/// for the iterates that follow a ratio-accepted step while still above the
/// first-order threshold, the two-step decrease f_{k-1} - f_{k+1} must reach
/// the analysis bound. Clamped curvature steps are reported but excluded
/// from the assertion.
struct ReductionEntry {
  long long k = 0;
  std::string kind;
  double decrease = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  bool clamped = false;
  bool asserted = false;
  bool pass = true;
};

struct ReductionReport {
  std::vector<ReductionEntry> entries;
  bool all_pass = true;
  long long asserted_count = 0;
};

inline ReductionReport reduction_check(
    const std::vector<nlohmann::json>& records) {
  ReductionReport rep;
  const auto& head = records.front();
  const SolverConfig cfg = config_from_json(head.at("config"));
  const double eps_g = cfg.epsilon;
  InstanceEstimates est;
  {
    const auto& e = head.at("instance_doc").at("estimates");
    est.g_max = e.at("g_max").get<double>();
    est.h_max = e.at("H_max").get<double>();
    est.g_lip = e.at("g_lip").get<double>();
    est.h_lip = e.at("H_lip").get<double>();
    est.f_min_hint = e.at("f_min_hint").get<double>();
  }
  std::optional<ConstantsLedger> ledger;
  std::vector<const nlohmann::json*> iters;
  const nlohmann::json* final_rec = nullptr;
  for (const auto& r : records) {
    const std::string type = r.at("type").get<std::string>();
    if (type == "ledger") ledger = ledger_from_json(r);
    if (type == "iter") iters.push_back(&r);
    if (type == "final") final_rec = &r;
  }
  if (!ledger) return rep;
  const double h_tilde = ledger->h_tilde;
  const double sigma_max = ledger->sigma_max_bound;

  auto f_at = [&](size_t idx) -> double {
    if (idx < iters.size()) return iters[idx]->at("f").get<double>();
    if (final_rec) return final_rec->at("f").get<double>();
    return iters.back()->at("f").get<double>();
  };

  const double f0 = iters.empty() ? 0.0 : f_at(0);
  const double tau = 1e-8 * (1.0 + std::abs(f0));

  for (size_t i = 1; i < iters.size(); ++i) {
    const auto& r = *iters[i];
    const std::string kind = r.at("kind").get<std::string>();
    const std::string prev_kind = iters[i - 1]->at("kind").get<std::string>();
    const bool is_curvature =
        kind == "curvature" || kind == "clamped_curvature";
    const bool post_accept_sigma =
        prev_kind == "first_order" &&
        iters[i - 1]->at("step_class").get<std::string>() == "accept_sigma" &&
        r.at("chi").get<double>() > eps_g;
    if (!is_curvature && !post_accept_sigma) continue;

    ReductionEntry e;
    e.k = r.at("k").get<long long>();
    e.kind = kind;
    e.clamped = kind == "clamped_curvature";
    const double chi_k = r.at("chi").get<double>();
    double bound =
        cfg.rho * std::pow(chi_k, 1.5) / std::pow(est.h_lip + sigma_max, 1.5);
    if (r.contains("psi")) {
      const double psi_k = r.at("psi").get<double>();
      bound = std::min(bound, 2.0 * psi_k * psi_k * psi_k /
                                  (3.0 * h_tilde * h_tilde));
    }
    e.bound = bound;
    e.decrease = f_at(i - 1) - f_at(i + 1);
    e.margin = e.decrease - bound + tau;
    e.asserted = !e.clamped;
    e.pass = !e.asserted || e.margin >= 0.0;
    if (e.asserted) ++rep.asserted_count;
    if (!e.pass) rep.all_pass = false;
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace lctrace
