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

#ifndef UEDP_DPFED_HPP_
#define UEDP_DPFED_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "uedp/accountant.hpp"
#include "uedp/corpus.hpp"
#include "uedp/model.hpp"

namespace uedp::dpfed {

enum class Mode { kUedpFePlus, kUedpFe, kUserLevel, kDeid, kNoiseless };

Mode mode_from_name(const std::string& name);  // throws ConfigError
const char* mode_name(Mode mode);

// Weight caps; 0 means "median of the corresponding counts".
struct Caps {
  double user = 0.0;      // per-user sentence cap
  double entity = 0.0;    // per-entity sentence cap
  double extended = 0.0;  // per-entity entity cap
};

struct TrainConfig {
  double user_rate = 0.05;       // config key q_u
  double entity_rate = 0.5;      // config key q_e
  double extended_rate = 1.0;    // config key q_s
  double noise_multiplier = 2.0; // config key z
  double clip_bound = 0.1;       // config key beta
  double learning_rate = 0.1;    // config key eta
  int batch_size = 32;           // config key B
  std::uint64_t rounds = 100;    // config key T
  double delta = 1e-5;           // config key delta
  Caps caps;                     // config keys cap_user / cap_entity / cap_extended
  Mode mode = Mode::kUedpFePlus; // config key mode
  std::uint64_t seed = 0;        // config key seed
  // Conventional per-batch accumulation instead of the default update
  // against the round-start parameters.
  bool cumulative_local_steps = false;
  // Count a sentence once (with its largest entity weight) even when several
  // sampled entities select it.
  bool dedup_sentences = false;

  void validate() const;  // throws ConfigError naming the offending field
};

// Flat key=value config file; '#' starts a comment; unknown keys are errors.
TrainConfig parse_config(const std::string& text);
std::string serialize_config(const TrainConfig& config);

// Per-user / per-entity weights w = min(count / cap, 1) and their totals.
struct Weights {
  std::vector<std::string> user_names;  // sorted; index is the user id below
  std::vector<double> user;             // w_u
  std::vector<double> detected;         // w_e by detected entity id
  std::vector<double> extended;         // w_s by extended entity index
  double user_total = 0.0;              // W_u
  double detected_total = 0.0;          // W_e
  double extended_total = 0.0;          // W_s
  Caps resolved_caps;

  double max_user_weight() const;
};

Weights compute_weights(const corpus::Corpus& corpus,
                        const corpus::EntitySets& sets, const Caps& caps);

// delta * min(1, beta / ||delta||_2); the zero vector maps to itself.
std::vector<double> clip_fn(std::vector<double> delta, double beta);

// One round's Bernoulli samples. Each user / entity has its own substream
// keyed by (seed, round, purpose, index).
struct RoundSample {
  std::vector<int> users;     // indices into Weights::user_names
  std::vector<int> detected;  // detected entity ids
  std::vector<int> extended;  // extended entity indices
};

RoundSample sample_round(const corpus::EntitySets& sets, int num_users,
                         const TrainConfig& config, std::uint64_t round);

// The sentences of one user selected by the sampled entities, grouped per
// entity. A sentence selected by several detected entities appears once per
// entity.
struct SelectedEntity {
  int entity_global_id = 0;
  double weight = 1.0;            // w_e or w_s
  std::vector<int> sentence_ids;  // ascending
};

std::vector<SelectedEntity> select_user_sentences(
    const std::string& user, const RoundSample& sample,
    const corpus::EntitySets& sets, const corpus::Corpus& corpus,
    const Weights& weights, Mode mode);

// Local-Update: iterates the user's selected sentences in batches, forms the
// weighted gradient sum per batch, steps the local parameters, and returns
// the clipped parameter difference. A clip bound of +infinity disables
// clipping. Empty selections return the zero vector.
std::vector<double> local_update(const model::ModelParams& theta0,
                                 const std::vector<SelectedEntity>& selected,
                                 const corpus::Corpus& corpus,
                                 const TrainConfig& config,
                                 model::Task task);

struct UserDelta {
  int user_index = 0;
  std::vector<double> delta;
};

// Weighted-average estimator over both detected and extended entities:
//   sum_u w_u delta_u / (q_u W_u (q_e W_e + q_s W_s)).
std::vector<double> aggregate_fe_plus(const std::vector<UserDelta>& deltas,
                                      const Weights& weights,
                                      const TrainConfig& config,
                                      std::size_t dim);

// Detected-only estimator: denominator q_u W_u q_e W_e.
std::vector<double> aggregate_fe(const std::vector<UserDelta>& deltas,
                                 const Weights& weights,
                                 const TrainConfig& config, std::size_t dim);

// User-level estimator: denominator q_u W_u.
std::vector<double> aggregate_user_level(const std::vector<UserDelta>& deltas,
                                         const Weights& weights,
                                         const TrainConfig& config,
                                         std::size_t dim);

// (q_u |U| + 1) max(w_u) beta / denom, where denom matches the mode's
// estimator. Modes without sampling have no finite bound; they return +inf.
double sensitivity_bound(const Weights& weights, const TrainConfig& config,
                         int num_users, Mode mode);

// z times the sensitivity bound.
double noise_scale(const Weights& weights, const TrainConfig& config,
                   int num_users, Mode mode);

struct MetricsRow {
  std::uint64_t round = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  double sigma = 0.0;
  std::string metric_name;
  double metric_value = 0.0;
  int users_sampled = 0;
  int entities_sampled = 0;
};

inline constexpr const char* kMetricsHeader =
    "round,epsilon,delta,sigma,metric_name,metric_value,users_sampled,"
    "entities_sampled";

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);

struct TrainResult {
  model::ModelParams params;
  accountant::PrivacyLedger ledger;
  std::vector<MetricsRow> log;
  double final_epsilon = 0.0;
  double final_metric = 0.0;
  std::string metric_name;
};

// Runs T rounds of the configured mode starting from init_params(dims, seed).
// deid masks the corpus up front (keeping the original vocabulary);
// noiseless and deid run full-participation unclipped averaging.
TrainResult train(const corpus::Corpus& corpus, const corpus::EntitySets& sets,
                  const TrainConfig& config, const model::Dims& dims,
                  model::Task task = model::Task::kNextWord);

}  // namespace uedp::dpfed

#endif  // UEDP_DPFED_HPP_
