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

#ifndef UEDP_ACCOUNTANT_HPP_
#define UEDP_ACCOUNTANT_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace uedp::accountant {

// How joint user/entity sampling maps to the single subsampling probability
// fed to the accountant.
enum class Strategy { kUserOnly, kJointMax, kJointMixture };

Strategy strategy_from_name(const std::string& name);  // throws ConfigError
const char* strategy_name(Strategy s);

// Per-order Renyi divergence bookkeeping for the subsampled Gaussian
// mechanism. All values are in nats.
struct PrivacyLedger {
  std::vector<double> orders;       // ascending, all > 1
  std::vector<double> accumulated;  // same length as orders
  double z = 0.0;                   // noise multiplier
  double q_eff = 0.0;               // effective sampling probability
  std::uint64_t steps = 0;
  Strategy strategy = Strategy::kUserOnly;
};

// Default order grid: integers 2..64 plus {1.5, 2.5, 3.5}.
std::vector<double> default_orders();

PrivacyLedger make_ledger(double q_eff, double z, Strategy strategy);

// Effective sampling rate for a strategy, clamped to [0, 1].
//   kUserOnly:     q_u
//   kJointMax:     q_u * max(q_e, q_s)
//   kJointMixture: q_u * (q_e W_e + q_s W_s) / (W_e + W_s)
double effective_rate(Strategy strategy, double q_u, double q_e, double q_s,
                      double w_e_total, double w_s_total);

// One-step Renyi divergence of the subsampled Gaussian mechanism with
// sensitivity 1, sampling rate q and noise multiplier z at order alpha.
// Integer alpha uses the exact binomial expansion; fractional alpha is upper
// bounded by its integer bracket. z == 0 with q > 0 yields +infinity.
double rdp_step(double q, double z, double alpha);

// Composes `rounds` further steps into the ledger (linear in rounds).
void accum_priv_spending(PrivacyLedger* ledger, std::uint64_t rounds);

// Converts to (epsilon, best_order) at the given delta:
//   epsilon = min over orders of accumulated[a] + ln(1/delta) / (a - 1).
// Returns (0, 0) when nothing has been accumulated.
std::pair<double, double> get_priv_spent(const PrivacyLedger& ledger,
                                         double delta);

// Epsilon after each step t = 1..t_max; nondecreasing in t.
std::vector<std::pair<std::uint64_t, double>> budget_curve(double q, double z,
                                                           double delta,
                                                           std::uint64_t t_max);

struct BudgetPoint {
  std::uint64_t t;
  double epsilon;
  double best_order;
};

std::vector<BudgetPoint> budget_curve_detailed(double q, double z, double delta,
                                               std::uint64_t t_max);

// Word-level local-DP budget calculators for a k-dimensional embedding with
// per-element budget eps and dropout rate mu.
struct LdpSpec {
  int k = 1;
  double eps_per_element = 0.0;
  double mu = 0.0;
};

// k * eps (sequential composition over the embedding dimensions).
double ldp_composed_epsilon(const LdpSpec& spec);

// ln((1 - mu) * exp(k * eps) + mu); exact at mu = 0 and mu = 1.
double ldp_dropout_epsilon(const LdpSpec& spec);

}  // namespace uedp::accountant

#endif  // UEDP_ACCOUNTANT_HPP_
