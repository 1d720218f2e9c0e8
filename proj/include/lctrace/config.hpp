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

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "lctrace/errors.hpp"
#include "lctrace/problem.hpp"

namespace lctrace {

struct Tolerances {
  double tau_eq = 1e-9;    // relative norm-equality tolerance
  double tau_feas = 1e-9;  // per-row feasibility slack
  double tau_kkt = 1e-8;   // KKT residual acceptance
  double tau_tie = 1e-9;   // objective tie window
};

struct SolverConfig {
  double rho = 0.1;            // acceptance constant, in (0,1)
  double gamma_c = 0.5;        // contraction factor, in (0,1)
  double gamma_e = 2.0;        // expansion factor, > 1
  double gamma_lambda = 2.0;   // dual escalation factor, > 1
  double epsilon = 1e-6;       // first-order termination threshold
  double delta0 = 1.0;
  double big_delta0 = 1.0;     // 0 < delta0 <= big_delta0
  double sigma0 = 1.0;         // raised to sigma_lower once that is known
  long long max_iterations = 1000;
  double delta_cap = 0.0;      // a-posteriori radius bound estimate; 0 = 10*big_delta0
  double kappa = 1.0 / 6.0;    // model-decrease constant, analysis only
  int face_cap = 12;
  bool debug_verify_cache = false;  // re-solve and compare cached contract pairs
  Tolerances tol;

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw ParseError("config.rho: must be in (0,1)");
    if (!(gamma_c > 0.0 && gamma_c < 1.0))
      throw ParseError("config.gamma_c: must be in (0,1)");
    if (!(gamma_e > 1.0)) throw ParseError("config.gamma_e: must be > 1");
    if (!(gamma_lambda > 1.0))
      throw ParseError("config.gamma_lambda: must be > 1");
    if (!(epsilon > 0.0)) throw ParseError("config.epsilon: must be > 0");
    if (!(delta0 > 0.0 && delta0 <= big_delta0))
      throw ParseError("config.delta0: need 0 < delta0 <= Delta0");
    if (!(sigma0 > 0.0)) throw ParseError("config.sigma0: must be > 0");
    if (max_iterations < 0)
      throw ParseError("config.max_iterations: must be >= 0");
    if (!(kappa > 0.0 && kappa <= 1.0))
      throw ParseError("config.kappa: must be in (0,1]");
  }

  double effective_delta_cap() const {
    return delta_cap > 0.0 ? delta_cap : 10.0 * big_delta0;
  }
};

/// All analysis constants, resolved once the first subproblem multiplier is
/// known, each with a provenance note. The sigma_lower/lambda_max circularity
/// is broken by one substitution pass: lambda_max is first evaluated with the
/// provisional sigma_lower = eps/(c_min + lambda0), the final sigma_lower is
/// derived from that lambda_max, and lambda_max is re-evaluated once against
/// the final sigma_lower purely to measure the fixed-point residual.
struct ConstantsLedger {
  double sigma_lower = 0.0;        // lower ratio bound
  double sigma_upper = 0.0;        // upper ratio bound, 2 * delta_cap
  double c_min = 0.0;              // h_max + g_max_bound + g_max
  double lambda_max = 0.0;         // dual bound used to derive sigma_lower
  double lambda_max_refreshed = 0.0;
  double fixed_point_residual = 0.0;
  double g_max_bound = 0.0;        // (h_max + max(lambda0, lambda_max)) * delta_cap
  double delta_cap = 0.0;
  double h_tilde = 0.0;            // max(h_lip, h_max)
  double l_tilde = 0.0;            // max(g_lip, g_max)
  double kappa = 0.0;
  double sigma_max_bound = 0.0;
  double lambda0 = 0.0;
  double sigma0_effective = 0.0;   // max(user sigma0, sigma_lower)
  std::map<std::string, std::string> provenance;

  double lambda_bound() const { return std::max(lambda0, lambda_max); }
};

inline ConstantsLedger finalize_ledger(const SolverConfig& config,
                                       const InstanceEstimates& est,
                                       double lambda0) {
  ConstantsLedger led;
  led.lambda0 = lambda0;
  led.delta_cap = config.effective_delta_cap();
  led.kappa = config.kappa;
  led.h_tilde = std::max(est.h_lip, est.h_max);
  led.l_tilde = std::max(est.g_lip, est.g_max);

  const auto lambda_max_at = [&](double sigma_lower) {
    const double branch_a = est.g_lip + 2.0 * est.h_max +
                            (config.rho + sigma_lower) * led.delta_cap +
                            std::sqrt(sigma_lower * est.g_max);
    const double branch_b =
        config.gamma_lambda * (est.g_lip + est.h_max + config.rho * led.delta_cap);
    return std::max(branch_a, branch_b);
  };

  // provisional pass with the dual bounded by lambda0 alone
  const double g_max0 = (est.h_max + lambda0) * led.delta_cap;
  const double c_min0 = est.h_max + g_max0 + est.g_max;
  const double sigma_lower0 = config.epsilon / (c_min0 + lambda0);
  led.lambda_max = lambda_max_at(sigma_lower0);

  led.g_max_bound = (est.h_max + std::max(lambda0, led.lambda_max)) * led.delta_cap;
  led.c_min = est.h_max + led.g_max_bound + est.g_max;
  led.sigma_lower = config.epsilon / (led.c_min + std::max(led.lambda_max, lambda0));
  if (!(led.sigma_lower > 0.0))
    throw SolverError("finalize_ledger: non-positive sigma_lower");

  led.lambda_max_refreshed = lambda_max_at(led.sigma_lower);
  led.fixed_point_residual =
      std::abs(led.lambda_max_refreshed - led.lambda_max) /
      std::max(1.0, led.lambda_max);

  led.sigma_upper = 2.0 * led.delta_cap;
  led.sigma0_effective = std::max(config.sigma0, led.sigma_lower);
  led.sigma_max_bound = std::max(
      {led.sigma0_effective, led.sigma_upper,
       (config.gamma_lambda / config.gamma_c) * (est.h_lip + 2.0 * config.rho) /
           (2.0 * config.kappa)});

  led.provenance = {
      {"sigma_lower", "epsilon / (c_min + max(lambda_max, lambda0))"},
      {"sigma_upper", "2 * delta_cap"},
      {"c_min", "h_max + g_max_bound + g_max"},
      {"lambda_max",
       "max(g_lip + 2 h_max + (rho + sigma_lower0) delta_cap + "
       "sqrt(sigma_lower0 g_max), gamma_lambda (g_lip + h_max + rho "
       "delta_cap)); sigma_lower0 from the provisional pass"},
      {"lambda_max_refreshed", "same formula at the final sigma_lower"},
      {"g_max_bound", "(h_max + max(lambda0, lambda_max)) * delta_cap"},
      {"delta_cap", config.delta_cap > 0.0 ? "user supplied"
                                           : "default 10 * Delta0"},
      {"h_tilde", "max(h_lip, h_max)"},
      {"l_tilde", "max(g_lip, g_max)"},
      {"kappa", "configured; analysis bounds only, never control flow"},
      {"sigma_max_bound",
       "max(sigma0, sigma_upper, (gamma_lambda/gamma_c)(h_lip + 2 rho)/(2 "
       "kappa))"},
      {"lambda0", "trust-region multiplier of the first subproblem solve"},
  };
  return led;
}

}  // namespace lctrace
