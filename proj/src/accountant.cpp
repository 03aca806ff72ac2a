//
// Copyright 2026 The UeDP-Sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "uedp/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uedp/errors.hpp"

namespace uedp::accountant {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Exact Renyi divergence of the subsampled Gaussian at integer order, via the
// binomial expansion evaluated in log space:
//   (1/(a-1)) ln sum_{k=0..a} C(a,k) (1-q)^(a-k) q^k exp(k(k-1)/(2 z^2))
double rdp_int(double q, double z, int alpha) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms(alpha + 1);
  for (int k = 0; k <= alpha; ++k) {
    double t = log_binomial(alpha, k) + k * (k - 1) / (2.0 * z * z);
    if (k > 0) t += k * log_q;
    if (k < alpha) t += (alpha - k) * log_1mq;
    terms[k] = t;
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  const double log_sum = m + std::log(s);
  // The divergence is nonnegative; clamp tiny negative rounding residue.
  return std::max(0.0, log_sum / (alpha - 1.0));
}

}  // namespace

Strategy strategy_from_name(const std::string& name) {
  if (name == "user_only") return Strategy::kUserOnly;
  if (name == "joint_max") return Strategy::kJointMax;
  if (name == "joint_mixture") return Strategy::kJointMixture;
  throw ConfigError("unknown accounting strategy '" + name + "'");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kUserOnly:
      return "user_only";
    case Strategy::kJointMax:
      return "joint_max";
    case Strategy::kJointMixture:
      return "joint_mixture";
  }
  return "unknown";
}

std::vector<double> default_orders() {
  std::vector<double> orders = {1.5, 2.5, 3.5};
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  std::sort(orders.begin(), orders.end());
  return orders;
}

PrivacyLedger make_ledger(double q_eff, double z, Strategy strategy) {
  if (q_eff < 0.0 || q_eff > 1.0) {
    throw ConfigError("effective sampling rate must be in [0,1]");
  }
  if (z < 0.0) {
    throw ConfigError("noise multiplier must be nonnegative");
  }
  PrivacyLedger ledger;
  ledger.orders = default_orders();
  ledger.accumulated.assign(ledger.orders.size(), 0.0);
  ledger.z = z;
  ledger.q_eff = q_eff;
  ledger.strategy = strategy;
  return ledger;
}

double effective_rate(Strategy strategy, double q_u, double q_e, double q_s,
                      double w_e_total, double w_s_total) {
  double rate = 0.0;
  switch (strategy) {
    case Strategy::kUserOnly:
      rate = q_u;
      break;
    case Strategy::kJointMax:
      rate = q_u * std::max(q_e, q_s);
      break;
    case Strategy::kJointMixture: {
      const double denom = w_e_total + w_s_total;
      if (denom <= 0.0) {
        throw ConfigError("joint_mixture needs W_e + W_s > 0");
      }
      rate = q_u * (q_e * w_e_total + q_s * w_s_total) / denom;
      break;
    }
  }
  return std::clamp(rate, 0.0, 1.0);
}

double rdp_step(double q, double z, double alpha) {
  if (q < 0.0 || q > 1.0) throw ConfigError("rdp_step: q must be in [0,1]");
  if (alpha <= 1.0) throw ConfigError("rdp_step: alpha must exceed 1");
  if (q == 0.0) return 0.0;
  if (z == 0.0) return kInf;
  if (q == 1.0) {
    // Pure Gaussian mechanism.
    return alpha / (2.0 * z * z);
  }
  const double rounded = std::nearbyint(alpha);
  if (std::abs(alpha - rounded) < 1e-12) {
    return rdp_int(q, z, static_cast<int>(rounded));
  }
  // Fractional order: the divergence is nondecreasing in the order, so the
  // integer bracket provides an upper bound.
  const int lo = static_cast<int>(std::floor(alpha));
  const int hi = static_cast<int>(std::ceil(alpha));
  double bound = rdp_int(q, z, hi);
  if (lo >= 2) bound = std::max(bound, rdp_int(q, z, lo));
  return bound;
}

void accum_priv_spending(PrivacyLedger* ledger, std::uint64_t rounds) {
  if (rounds == 0) return;
  for (std::size_t i = 0; i < ledger->orders.size(); ++i) {
    ledger->accumulated[i] +=
        static_cast<double>(rounds) *
        rdp_step(ledger->q_eff, ledger->z, ledger->orders[i]);
  }
  ledger->steps += rounds;
}

std::pair<double, double> get_priv_spent(const PrivacyLedger& ledger,
                                         double delta) {
  if (delta <= 0.0 || delta >= 1.0) {
    throw ConfigError("delta must be in (0,1)");
  }
  const bool all_zero =
      std::all_of(ledger.accumulated.begin(), ledger.accumulated.end(),
                  [](double v) { return v == 0.0; });
  if (all_zero) {
    return {0.0, 0.0};
  }
  const double log_inv_delta = std::log(1.0 / delta);
  double best_eps = kInf;
  double best_order = 0.0;
  for (std::size_t i = 0; i < ledger.orders.size(); ++i) {
    const double eps =
        ledger.accumulated[i] + log_inv_delta / (ledger.orders[i] - 1.0);
    if (eps < best_eps) {
      best_eps = eps;
      best_order = ledger.orders[i];
    }
  }
  return {best_eps, best_order};
}

std::vector<BudgetPoint> budget_curve_detailed(double q, double z, double delta,
                                               std::uint64_t t_max) {
  PrivacyLedger ledger = make_ledger(q, z, Strategy::kUserOnly);
  // Per-step divergences computed once; the composition is linear in t.
  std::vector<double> per_step(ledger.orders.size());
  for (std::size_t i = 0; i < ledger.orders.size(); ++i) {
    per_step[i] = rdp_step(q, z, ledger.orders[i]);
  }
  std::vector<BudgetPoint> curve;
  curve.reserve(t_max);
  for (std::uint64_t t = 1; t <= t_max; ++t) {
    for (std::size_t i = 0; i < ledger.orders.size(); ++i) {
      ledger.accumulated[i] = static_cast<double>(t) * per_step[i];
    }
    ledger.steps = t;
    const auto [eps, order] = get_priv_spent(ledger, delta);
    curve.push_back({t, eps, order});
  }
  return curve;
}

std::vector<std::pair<std::uint64_t, double>> budget_curve(double q, double z,
                                                           double delta,
                                                           std::uint64_t t_max) {
  std::vector<std::pair<std::uint64_t, double>> out;
  for (const auto& p : budget_curve_detailed(q, z, delta, t_max)) {
    out.emplace_back(p.t, p.epsilon);
  }
  return out;
}

double ldp_composed_epsilon(const LdpSpec& spec) {
  if (spec.k < 1) throw ConfigError("ldp: k must be >= 1");
  if (spec.eps_per_element < 0.0) throw ConfigError("ldp: eps must be >= 0");
  return static_cast<double>(spec.k) * spec.eps_per_element;
}

double ldp_dropout_epsilon(const LdpSpec& spec) {
  if (spec.mu < 0.0 || spec.mu > 1.0) {
    throw ConfigError("ldp: dropout rate must be in [0,1]");
  }
  const double k_eps = ldp_composed_epsilon(spec);
  if (spec.mu == 0.0) return k_eps;
  if (spec.mu == 1.0) return 0.0;
  // ln((1-mu) e^{k eps} + mu), evaluated without overflowing exp.
  return k_eps + std::log((1.0 - spec.mu) + spec.mu * std::exp(-k_eps));
}

}  // namespace uedp::accountant
