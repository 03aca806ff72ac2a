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

#include "uedp/dpfed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "uedp/errors.hpp"
#include "uedp/io_util.hpp"
#include "uedp/kernels.hpp"
#include "uedp/rng.hpp"

namespace uedp::dpfed {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median_of(std::vector<double> values) {
  if (values.empty()) return 1.0;
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

bool sampling_mode(Mode mode) {
  return mode == Mode::kUedpFePlus || mode == Mode::kUedpFe ||
         mode == Mode::kUserLevel;
}

// Per-entity denominator of the mode's estimator; 1 for modes that average
// over users only.
double entity_denominator(const Weights& weights, const TrainConfig& config,
                          Mode mode) {
  switch (mode) {
    case Mode::kUedpFePlus:
      return config.entity_rate * weights.detected_total +
             config.extended_rate * weights.extended_total;
    case Mode::kUedpFe:
      return config.entity_rate * weights.detected_total;
    default:
      return 1.0;
  }
}

std::vector<double> aggregate(const std::vector<UserDelta>& deltas,
                              const Weights& weights, std::size_t dim,
                              double user_denom, double entity_denom) {
  if (!(entity_denom > 0.0)) {
    throw ConfigError("estimator denominator is zero (no entities to train "
                      "on or zero sampling rates)");
  }
  std::vector<double> out(dim, 0.0);
  // deltas arrive sorted by user index; summation order is fixed so the
  // floating-point result is reproducible.
  bool any = false;
  for (const auto& ud : deltas) {
    if (ud.delta.empty()) continue;
    kernels::axpy(weights.user[ud.user_index], ud.delta.data(), out.data(),
                  dim);
    any = true;
  }
  if (!any) return out;  // empty round: zero aggregate
  if (!(user_denom > 0.0)) {
    throw ConfigError("user sampling denominator q_u * W_u is zero");
  }
  kernels::scale(1.0 / (user_denom * entity_denom), out.data(), dim);
  return out;
}

}  // namespace

Mode mode_from_name(const std::string& name) {
  if (name == "uedp_fe_plus") return Mode::kUedpFePlus;
  if (name == "uedp_fe") return Mode::kUedpFe;
  if (name == "user_level") return Mode::kUserLevel;
  if (name == "deid") return Mode::kDeid;
  if (name == "noiseless") return Mode::kNoiseless;
  throw ConfigError("unknown mode '" + name + "'");
}

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::kUedpFePlus:
      return "uedp_fe_plus";
    case Mode::kUedpFe:
      return "uedp_fe";
    case Mode::kUserLevel:
      return "user_level";
    case Mode::kDeid:
      return "deid";
    case Mode::kNoiseless:
      return "noiseless";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(user_rate)) throw ConfigError("q_u must be in [0,1]");
  if (!in_unit(entity_rate)) throw ConfigError("q_e must be in [0,1]");
  if (!in_unit(extended_rate)) throw ConfigError("q_s must be in [0,1]");
  if (!(noise_multiplier >= 0.0)) throw ConfigError("z must be >= 0");
  if (!(clip_bound > 0.0)) throw ConfigError("beta must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("eta must be > 0");
  if (batch_size < 1) throw ConfigError("B must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must be in (0,1)");
  if (caps.user < 0.0) throw ConfigError("cap_user must be >= 0");
  if (caps.entity < 0.0) throw ConfigError("cap_entity must be >= 0");
  if (caps.extended < 0.0) throw ConfigError("cap_extended must be >= 0");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // Trim.
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), not_space));
    line.erase(std::find_if(line.rbegin(), line.rend(), not_space).base(),
               line.end());
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), not_space).base(), key.end());
    value.erase(value.begin(),
                std::find_if(value.begin(), value.end(), not_space));

    auto as_double = [&](const char* field) {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw ConfigError(std::string(field) + ": invalid number '" + value + "'");
      }
    };
    auto as_u64 = [&](const char* field) -> std::uint64_t {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size() || v < 0) throw std::invalid_argument(value);
        return static_cast<std::uint64_t>(v);
      } catch (const std::exception&) {
        throw ConfigError(std::string(field) + ": invalid count '" + value + "'");
      }
    };
    auto as_bool = [&](const char* field) {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError(std::string(field) + ": expected true/false");
    };

    if (key == "q_u") config.user_rate = as_double("q_u");
    else if (key == "q_e") config.entity_rate = as_double("q_e");
    else if (key == "q_s") config.extended_rate = as_double("q_s");
    else if (key == "z") config.noise_multiplier = as_double("z");
    else if (key == "beta") config.clip_bound = as_double("beta");
    else if (key == "eta") config.learning_rate = as_double("eta");
    else if (key == "B") config.batch_size = static_cast<int>(as_u64("B"));
    else if (key == "T") config.rounds = as_u64("T");
    else if (key == "delta") config.delta = as_double("delta");
    else if (key == "cap_user") config.caps.user = as_double("cap_user");
    else if (key == "cap_entity") config.caps.entity = as_double("cap_entity");
    else if (key == "cap_extended") config.caps.extended = as_double("cap_extended");
    else if (key == "mode") config.mode = mode_from_name(value);
    else if (key == "seed") config.seed = as_u64("seed");
    else if (key == "cumulative_local_steps")
      config.cumulative_local_steps = as_bool("cumulative_local_steps");
    else if (key == "dedup_sentences")
      config.dedup_sentences = as_bool("dedup_sentences");
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
  config.validate();
  return config;
}

std::string serialize_config(const TrainConfig& config) {
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  };
  kv("q_u", io::format_double(config.user_rate));
  kv("q_e", io::format_double(config.entity_rate));
  kv("q_s", io::format_double(config.extended_rate));
  kv("z", io::format_double(config.noise_multiplier));
  kv("beta", io::format_double(config.clip_bound));
  kv("eta", io::format_double(config.learning_rate));
  kv("B", std::to_string(config.batch_size));
  kv("T", std::to_string(config.rounds));
  kv("delta", io::format_double(config.delta));
  kv("cap_user", io::format_double(config.caps.user));
  kv("cap_entity", io::format_double(config.caps.entity));
  kv("cap_extended", io::format_double(config.caps.extended));
  kv("mode", mode_name(config.mode));
  kv("seed", std::to_string(config.seed));
  kv("cumulative_local_steps", config.cumulative_local_steps ? "true" : "false");
  kv("dedup_sentences", config.dedup_sentences ? "true" : "false");
  return out;
}

double Weights::max_user_weight() const {
  double m = 0.0;
  for (double w : user) m = std::max(m, w);
  return m;
}

Weights compute_weights(const corpus::Corpus& corpus,
                        const corpus::EntitySets& sets, const Caps& caps) {
  Weights weights;

  std::vector<double> user_counts;
  for (const auto& [name, ids] : corpus.users) {
    weights.user_names.push_back(name);
    user_counts.push_back(static_cast<double>(ids.size()));
  }
  std::vector<double> entity_counts;
  for (const auto& e : sets.detected) {
    entity_counts.push_back(static_cast<double>(e.sentence_ids.size()));
  }
  // Every extended entity is a single sentence.
  std::vector<double> extended_counts(sets.extended.size(), 1.0);

  weights.resolved_caps.user =
      caps.user > 0.0 ? caps.user : median_of(user_counts);
  weights.resolved_caps.entity =
      caps.entity > 0.0 ? caps.entity : median_of(entity_counts);
  weights.resolved_caps.extended =
      caps.extended > 0.0 ? caps.extended : median_of(extended_counts);

  auto weigh = [](const std::vector<double>& counts, double cap) {
    std::vector<double> w(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      w[i] = std::min(counts[i] / cap, 1.0);
    }
    return w;
  };
  weights.user = weigh(user_counts, weights.resolved_caps.user);
  weights.detected = weigh(entity_counts, weights.resolved_caps.entity);
  weights.extended = weigh(extended_counts, weights.resolved_caps.extended);

  auto total = [](const std::vector<double>& w) {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  };
  weights.user_total = total(weights.user);
  weights.detected_total = total(weights.detected);
  weights.extended_total = total(weights.extended);
  return weights;
}

std::vector<double> clip_fn(std::vector<double> delta, double beta) {
  if (!(beta > 0.0)) {
    throw ConfigError("clip bound must be positive");
  }
  if (std::isinf(beta) || delta.empty()) return delta;
  const double norm = std::sqrt(kernels::sum_sq(delta.data(), delta.size()));
  if (norm > beta) {
    kernels::scale(beta / norm, delta.data(), delta.size());
  }
  return delta;
}

RoundSample sample_round(const corpus::EntitySets& sets, int num_users,
                         const TrainConfig& config, std::uint64_t round) {
  RoundSample sample;
  for (int u = 0; u < num_users; ++u) {
    if (rng::substream(config.seed, round, rng::Purpose::kSampleUsers, u)
            .bernoulli(config.user_rate)) {
      sample.users.push_back(u);
    }
  }
  for (int e = 0; e < sets.num_detected(); ++e) {
    if (rng::substream(config.seed, round, rng::Purpose::kSampleDetected, e)
            .bernoulli(config.entity_rate)) {
      sample.detected.push_back(e);
    }
  }
  for (int s = 0; s < sets.num_extended(); ++s) {
    if (rng::substream(config.seed, round, rng::Purpose::kSampleExtended, s)
            .bernoulli(config.extended_rate)) {
      sample.extended.push_back(s);
    }
  }
  return sample;
}

std::vector<SelectedEntity> select_user_sentences(
    const std::string& user, const RoundSample& sample,
    const corpus::EntitySets& sets, const corpus::Corpus& corpus,
    const Weights& weights, Mode mode) {
  std::vector<SelectedEntity> selected;

  if (!sampling_mode(mode) || mode == Mode::kUserLevel) {
    // Full local data, unit weight, as one pseudo-entity.
    auto it = corpus.users.find(user);
    if (it == corpus.users.end() || it->second.empty()) return selected;
    SelectedEntity all;
    all.entity_global_id = -1;
    all.weight = 1.0;
    all.sentence_ids = it->second;
    std::sort(all.sentence_ids.begin(), all.sentence_ids.end());
    selected.push_back(std::move(all));
    return selected;
  }

  auto pu = sets.per_user.find(user);
  if (pu == sets.per_user.end()) return selected;

  const std::set<int> sampled_detected(sample.detected.begin(),
                                       sample.detected.end());
  for (int e : pu->second.detected) {
    if (!sampled_detected.count(e)) continue;
    SelectedEntity se;
    se.entity_global_id = e;
    se.weight = weights.detected[e];
    for (int sid : sets.detected[e].sentence_ids) {
      if (corpus.sentences[sid].owner == user) se.sentence_ids.push_back(sid);
    }
    if (!se.sentence_ids.empty()) selected.push_back(std::move(se));
  }

  if (mode == Mode::kUedpFePlus) {
    const std::set<int> sampled_extended(sample.extended.begin(),
                                         sample.extended.end());
    for (int gid : pu->second.extended) {
      const int index = gid - sets.num_detected();
      if (!sampled_extended.count(index)) continue;
      SelectedEntity se;
      se.entity_global_id = gid;
      se.weight = weights.extended[index];
      se.sentence_ids.push_back(sets.extended[index].sentence_id);
      selected.push_back(std::move(se));
    }
  }
  return selected;
}

std::vector<double> local_update(const model::ModelParams& theta0,
                                 const std::vector<SelectedEntity>& selected,
                                 const corpus::Corpus& corpus,
                                 const TrainConfig& config, model::Task task) {
  const std::size_t dim = theta0.theta.size();
  if (selected.empty()) {
    return std::vector<double>(dim, 0.0);
  }

  // Per-sentence coefficient: sum of the weights of the entities selecting
  // it (or the max when deduplicating).
  std::map<int, double> coeff;
  for (const auto& se : selected) {
    for (int sid : se.sentence_ids) {
      if (config.dedup_sentences) {
        coeff[sid] = std::max(coeff[sid], se.weight);
      } else {
        coeff[sid] += se.weight;
      }
    }
  }

  std::vector<int> order;
  order.reserve(coeff.size());
  for (const auto& [sid, w] : coeff) order.push_back(sid);

  model::ModelParams theta = theta0;
  std::vector<double> batch_delta(dim);
  for (std::size_t begin = 0; begin < order.size();
       begin += static_cast<std::size_t>(config.batch_size)) {
    const std::size_t end =
        std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
    std::fill(batch_delta.begin(), batch_delta.end(), 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const corpus::Sentence& sentence = corpus.sentences[order[i]];
      std::vector<double> grad;
      if (task == model::Task::kNextWord) {
        grad = model::sentence_grad(theta, sentence, corpus.vocab);
      } else {
        model::Example ex;
        for (const auto& t : sentence.tokens) {
          ex.context.push_back(corpus.vocab.id(t));
        }
        if (sentence.label < 0) {
          throw ConfigError("sentence " + std::to_string(sentence.id) +
                            " has no class label");
        }
        ex.target = sentence.label;
        std::vector<model::Example> batch = {std::move(ex)};
        model::loss_and_grad(theta, batch, model::Task::kClassification, &grad);
      }
      kernels::axpy(coeff.at(order[i]), grad.data(), batch_delta.data(), dim);
    }
    // Default follows the written update rule: every batch steps away from
    // the round-start parameters, not from the previous batch's result.
    const double* base =
        config.cumulative_local_steps ? theta.theta.data() : theta0.theta.data();
    if (base != theta.theta.data()) {
      std::copy(theta0.theta.begin(), theta0.theta.end(), theta.theta.begin());
    }
    kernels::axpy(-config.learning_rate, batch_delta.data(),
                  theta.theta.data(), dim);
  }

  std::vector<double> delta(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    delta[i] = theta.theta[i] - theta0.theta[i];
    if (!std::isfinite(delta[i])) {
      throw NumericalError("non-finite local update");
    }
  }
  return clip_fn(std::move(delta), config.clip_bound);
}

std::vector<double> aggregate_fe_plus(const std::vector<UserDelta>& deltas,
                                      const Weights& weights,
                                      const TrainConfig& config,
                                      std::size_t dim) {
  return aggregate(deltas, weights, dim,
                   config.user_rate * weights.user_total,
                   entity_denominator(weights, config, Mode::kUedpFePlus));
}

std::vector<double> aggregate_fe(const std::vector<UserDelta>& deltas,
                                 const Weights& weights,
                                 const TrainConfig& config, std::size_t dim) {
  return aggregate(deltas, weights, dim,
                   config.user_rate * weights.user_total,
                   entity_denominator(weights, config, Mode::kUedpFe));
}

std::vector<double> aggregate_user_level(const std::vector<UserDelta>& deltas,
                                         const Weights& weights,
                                         const TrainConfig& config,
                                         std::size_t dim) {
  return aggregate(deltas, weights, dim,
                   config.user_rate * weights.user_total, 1.0);
}

double sensitivity_bound(const Weights& weights, const TrainConfig& config,
                         int num_users, Mode mode) {
  if (!sampling_mode(mode)) return kInf;
  const double numerator = (config.user_rate * num_users + 1.0) *
                           weights.max_user_weight() * config.clip_bound;
  const double denom = config.user_rate * weights.user_total *
                       entity_denominator(weights, config, mode);
  if (!(denom > 0.0)) {
    throw ConfigError("sensitivity denominator is zero");
  }
  return numerator / denom;
}

double noise_scale(const Weights& weights, const TrainConfig& config,
                   int num_users, Mode mode) {
  if (config.noise_multiplier == 0.0) return 0.0;
  return config.noise_multiplier *
         sensitivity_bound(weights, config, num_users, mode);
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.round);
    out += ',';
    out += io::format_double(r.epsilon);
    out += ',';
    out += io::format_double(r.delta);
    out += ',';
    out += io::format_double(r.sigma);
    out += ',';
    out += r.metric_name;
    out += ',';
    out += io::format_double(r.metric_value);
    out += ',';
    out += std::to_string(r.users_sampled);
    out += ',';
    out += std::to_string(r.entities_sampled);
    out += '\n';
  }
  return out;
}

TrainResult train(const corpus::Corpus& input_corpus,
                  const corpus::EntitySets& sets, const TrainConfig& config,
                  const model::Dims& dims, model::Task task) {
  config.validate();

  corpus::Corpus masked;
  const corpus::Corpus* corpus_ptr = &input_corpus;
  if (config.mode == Mode::kDeid) {
    masked = corpus::deidentify(input_corpus);
    // Keep the original vocabulary so checkpoints stay comparable across
    // modes; <ent> is a reserved token and always present.
    masked.vocab = input_corpus.vocab;
    corpus_ptr = &masked;
  }
  const corpus::Corpus& corpus = *corpus_ptr;

  const Weights weights = compute_weights(corpus, sets, config.caps);
  const int num_users = static_cast<int>(weights.user_names.size());

  TrainResult result;
  result.params = model::init_params(dims, config.seed);
  result.metric_name =
      task == model::Task::kNextWord ? "perplexity" : "error_rate";

  // Accounting setup. Noiseless-style modes have no formal guarantee; their
  // reported epsilon is +inf.
  const bool with_dp = sampling_mode(config.mode);
  accountant::Strategy strategy = accountant::Strategy::kJointMixture;
  double q_eff = 0.0;
  if (config.mode == Mode::kUserLevel) {
    strategy = accountant::Strategy::kUserOnly;
    q_eff = accountant::effective_rate(strategy, config.user_rate, 0, 0, 0, 0);
  } else if (with_dp) {
    const double q_s_eff =
        config.mode == Mode::kUedpFePlus ? config.extended_rate : 0.0;
    q_eff = accountant::effective_rate(
        strategy, config.user_rate, config.entity_rate, q_s_eff,
        weights.detected_total, weights.extended_total);
  }
  result.ledger = accountant::make_ledger(with_dp ? q_eff : 0.0,
                                          config.noise_multiplier, strategy);

  if (config.rounds == 0) {
    result.final_epsilon = 0.0;
    if (task == model::Task::kNextWord) {
      result.final_metric =
          model::perplexity(result.params, corpus.sentences, corpus.vocab);
    } else {
      result.final_metric =
          model::test_error_rate(result.params, corpus.sentences, corpus.vocab);
    }
    return result;
  }

  if (with_dp && config.mode != Mode::kUserLevel &&
      !(entity_denominator(weights, config, config.mode) > 0.0)) {
    throw ConfigError("estimator denominator is zero (no entities to train "
                      "on or zero sampling rates)");
  }

  const std::size_t dim = result.params.theta.size();
  const double sigma = with_dp && config.noise_multiplier > 0.0
                           ? noise_scale(weights, config, num_users, config.mode)
                           : 0.0;

  TrainConfig local_config = config;
  if (!with_dp) {
    // Plain federated averaging: no clipping.
    local_config.clip_bound = kInf;
  }

  for (std::uint64_t round = 0; round < config.rounds; ++round) {
    RoundSample sample;
    if (with_dp) {
      sample = sample_round(sets, num_users, config, round);
      if (config.mode == Mode::kUserLevel) {
        sample.detected.clear();
        sample.extended.clear();
      } else if (config.mode == Mode::kUedpFe) {
        sample.extended.clear();
      }
    } else {
      for (int u = 0; u < num_users; ++u) sample.users.push_back(u);
    }

    std::vector<UserDelta> deltas;
    for (int u : sample.users) {
      const auto selected =
          select_user_sentences(weights.user_names[u], sample, sets, corpus,
                                weights, config.mode);
      if (selected.empty()) continue;
      UserDelta ud;
      ud.user_index = u;
      try {
        ud.delta =
            local_update(result.params, selected, corpus, local_config, task);
      } catch (const NumericalError& e) {
        throw NumericalError("round " + std::to_string(round + 1) + ": " +
                             e.what());
      }
      deltas.push_back(std::move(ud));
    }

    std::vector<double> update;
    switch (config.mode) {
      case Mode::kUedpFePlus:
        update = aggregate_fe_plus(deltas, weights, config, dim);
        break;
      case Mode::kUedpFe:
        update = aggregate_fe(deltas, weights, config, dim);
        break;
      case Mode::kUserLevel:
        update = aggregate_user_level(deltas, weights, config, dim);
        break;
      case Mode::kDeid:
      case Mode::kNoiseless: {
        TrainConfig full = config;
        full.user_rate = 1.0;
        update = aggregate_user_level(deltas, weights, full, dim);
        break;
      }
    }

    kernels::axpy(1.0, update.data(), result.params.theta.data(), dim);
    if (sigma > 0.0) {
      rng::Stream noise =
          rng::substream(config.seed, round, rng::Purpose::kNoise, 0);
      for (std::size_t i = 0; i < dim; ++i) {
        result.params.theta[i] += sigma * noise.gaussian();
      }
    }
    for (double v : result.params.theta) {
      if (!std::isfinite(v)) {
        throw NumericalError("round " + std::to_string(round + 1) +
                             ": non-finite parameter after update");
      }
    }

    double epsilon = kInf;
    if (with_dp) {
      accountant::accum_priv_spending(&result.ledger, 1);
      epsilon = accountant::get_priv_spent(result.ledger, config.delta).first;
    }

    MetricsRow row;
    row.round = round + 1;
    row.epsilon = epsilon;
    row.delta = config.delta;
    row.sigma = sigma;
    row.metric_name = result.metric_name;
    row.metric_value =
        task == model::Task::kNextWord
            ? model::perplexity(result.params, corpus.sentences, corpus.vocab)
            : model::test_error_rate(result.params, corpus.sentences,
                                     corpus.vocab);
    row.users_sampled = static_cast<int>(sample.users.size());
    row.entities_sampled =
        static_cast<int>(sample.detected.size() + sample.extended.size());
    result.log.push_back(std::move(row));
  }

  result.final_epsilon = result.log.back().epsilon;
  result.final_metric = result.log.back().metric_value;
  return result;
}

}  // namespace uedp::dpfed
