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

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uedp/accountant.hpp"
#include "uedp/corpus.hpp"
#include "uedp/dpfed.hpp"
#include "uedp/errors.hpp"
#include "uedp/io_util.hpp"
#include "uedp/model.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kToolVersion = "uedp 0.1.0";
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::string utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string out_path(const std::string& out_dir, const std::string& name) {
  fs::create_directories(out_dir);
  return (fs::path(out_dir) / name).string();
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct IngestArgs {
  std::string input;
  std::string format = "conll";
  std::string categories;
  double partition_mean = 0.0;
  double partition_std = 0.0;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
};

int cmd_ingest(const IngestArgs& args) {
  std::vector<std::string> warnings;
  uedp::corpus::ParseOptions opts;
  opts.warnings = &warnings;

  uedp::corpus::Corpus corpus;
  if (args.format == "conll") {
    corpus = uedp::corpus::parse_conll(args.input, opts);
  } else if (args.format == "jsonl") {
    corpus = uedp::corpus::parse_jsonl(args.input, opts);
  } else {
    throw uedp::ConfigError("unknown format '" + args.format +
                            "' (expected conll or jsonl)");
  }
  for (const auto& w : warnings) {
    std::cerr << "warning: " << w << "\n";
  }

  if (!args.categories.empty()) {
    std::vector<std::string> cats = split_csv_list(args.categories);
    for (const auto& c : cats) {
      if (!uedp::corpus::is_known_category(c)) {
        throw uedp::ConfigError("unknown category '" + c + "'");
      }
    }
    corpus.active_categories = cats;
    corpus.finalize();
  }

  if (args.partition_mean > 0.0) {
    corpus = uedp::corpus::partition_users_gaussian(
        corpus, args.partition_mean, args.partition_std, args.seed);
  }

  const auto sets = uedp::corpus::build_entity_sets(corpus);

  const std::string corpus_text = uedp::corpus::serialize_jsonl(corpus);
  uedp::io::atomic_write(out_path(args.out_dir, "corpus.jsonl"), corpus_text);
  uedp::io::atomic_write(out_path(args.out_dir, "entities.json"),
                         uedp::corpus::serialize_entity_sets(sets));

  // Stats report: one row per active category plus the union row.
  std::string csv = "category,vocab_size,sentences,users,sensitive_sentences\n";
  auto row = [&](const std::string& cat, int count) {
    csv += cat + "," + std::to_string(corpus.vocab.size()) + "," +
           std::to_string(corpus.num_sentences()) + "," +
           std::to_string(corpus.num_users()) + "," + std::to_string(count) +
           "\n";
  };
  for (const auto& cat : corpus.active_categories) {
    int count = 0;
    for (const auto& s : corpus.sentences) {
      for (const auto& span : s.spans) {
        if (span.category == cat) {
          ++count;
          break;
        }
      }
    }
    row(cat, count);
  }
  row("All", corpus.num_sensitive());
  uedp::io::atomic_write(out_path(args.out_dir, "stats.csv"), csv);

  std::cout << "users=" << corpus.num_users()
            << " sentences=" << corpus.num_sentences()
            << " sensitive=" << corpus.num_sensitive()
            << " detected_entities=" << sets.num_detected()
            << " extended_entities=" << sets.num_extended()
            << " vocab=" << corpus.vocab.size() << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus_path;
  std::string entities_path;
  std::string config_path;
  std::string out_dir = ".";
  std::string task = "next_word";
  int embedding_dim = 32;
  int hidden = 64;
  int context = 3;
  int classes = 0;
  bool seed_given = false;
  std::uint64_t seed = 0;
};

json config_to_json(const uedp::dpfed::TrainConfig& c) {
  json j;
  j["q_u"] = c.user_rate;
  j["q_e"] = c.entity_rate;
  j["q_s"] = c.extended_rate;
  j["z"] = c.noise_multiplier;
  j["beta"] = c.clip_bound;
  j["eta"] = c.learning_rate;
  j["B"] = c.batch_size;
  j["T"] = c.rounds;
  j["delta"] = c.delta;
  j["cap_user"] = c.caps.user;
  j["cap_entity"] = c.caps.entity;
  j["cap_extended"] = c.caps.extended;
  j["mode"] = uedp::dpfed::mode_name(c.mode);
  j["seed"] = c.seed;
  j["cumulative_local_steps"] = c.cumulative_local_steps;
  j["dedup_sentences"] = c.dedup_sentences;
  return j;
}

int cmd_train(const TrainArgs& args) {
  const std::string corpus_bytes = uedp::io::read_file(args.corpus_path);
  auto corpus = uedp::corpus::parse_jsonl(args.corpus_path);
  auto sets = uedp::corpus::parse_entity_sets(args.entities_path);

  auto config =
      uedp::dpfed::parse_config(uedp::io::read_file(args.config_path));
  if (args.seed_given) config.seed = args.seed;

  uedp::model::Dims dims;
  dims.vocab = corpus.vocab.size();
  dims.embed_dim = args.embedding_dim;
  dims.context = args.context;
  dims.hidden = args.hidden;
  dims.classes = args.classes;

  uedp::model::Task task;
  if (args.task == "next_word") {
    task = uedp::model::Task::kNextWord;
  } else if (args.task == "classification") {
    task = uedp::model::Task::kClassification;
    if (dims.classes < 2) {
      throw uedp::ConfigError("classification needs --classes >= 2");
    }
  } else {
    throw uedp::ConfigError("unknown task '" + args.task + "'");
  }

  const std::string metrics_path = out_path(args.out_dir, "metrics.csv");
  const std::string checkpoint_path = out_path(args.out_dir, "checkpoint.bin");
  const std::string manifest_path = out_path(args.out_dir, "manifest.json");

  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["seed"] = config.seed;
  manifest["config"] = config_to_json(config);
  manifest["corpus_path"] = args.corpus_path;
  manifest["corpus_fingerprint"] = uedp::io::fingerprint(corpus_bytes);
  manifest["outputs"] = {{"metrics", metrics_path},
                         {"checkpoint", checkpoint_path}};
  manifest["started_utc"] = utc_now();
  manifest["finished_utc"] = nullptr;
  uedp::io::atomic_write(manifest_path, manifest.dump(2) + "\n");

  const auto result = uedp::dpfed::train(corpus, sets, config, dims, task);

  uedp::io::atomic_write(metrics_path, uedp::dpfed::metrics_to_csv(result.log));
  uedp::model::save_checkpoint(result.params, checkpoint_path);

  manifest["finished_utc"] = utc_now();
  uedp::io::atomic_write(manifest_path, manifest.dump(2) + "\n");

  std::cout << "epsilon=" << uedp::io::format_double(result.final_epsilon)
            << " delta=" << uedp::io::format_double(config.delta) << " "
            << result.metric_name << "="
            << uedp::io::format_double(result.final_metric) << "\n";
  return 0;
}

struct AccountArgs {
  double q_u = 0.05;
  double q_e = 0.5;
  double q_s = 1.0;
  double z = 2.0;
  double delta = 1e-5;
  std::uint64_t t_max = 100;
  std::string strategy = "user_only";
  std::string entities_path;
  std::string out_dir = ".";
};

int cmd_account(const AccountArgs& args) {
  if (args.q_u < 0 || args.q_u > 1 || args.q_e < 0 || args.q_e > 1 ||
      args.q_s < 0 || args.q_s > 1) {
    throw uedp::ConfigError("sampling rates must be in [0,1]");
  }
  if (!(args.delta > 0 && args.delta < 1)) {
    throw uedp::ConfigError("delta must be in (0,1)");
  }

  double w_e_total = 0.0;
  double w_s_total = 0.0;
  if (!args.entities_path.empty()) {
    const auto sets = uedp::corpus::parse_entity_sets(args.entities_path);
    // Unit-cap totals: W_e counts detected entities, W_s extended ones.
    std::vector<double> counts;
    for (const auto& e : sets.detected) {
      counts.push_back(static_cast<double>(e.sentence_ids.size()));
    }
    std::vector<double> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const double cap = sorted.empty() ? 1.0 : sorted[sorted.size() / 2];
    for (double c : counts) w_e_total += std::min(c / cap, 1.0);
    w_s_total = static_cast<double>(sets.num_extended());
  }

  std::vector<uedp::accountant::Strategy> strategies;
  if (args.strategy == "all") {
    strategies = {uedp::accountant::Strategy::kUserOnly,
                  uedp::accountant::Strategy::kJointMax,
                  uedp::accountant::Strategy::kJointMixture};
  } else {
    strategies = {uedp::accountant::strategy_from_name(args.strategy)};
  }

  for (const auto strategy : strategies) {
    if (strategy == uedp::accountant::Strategy::kJointMixture &&
        w_e_total + w_s_total <= 0.0) {
      throw uedp::ConfigError(
          "joint_mixture needs --entities to derive W_e and W_s");
    }
    const double q_eff = uedp::accountant::effective_rate(
        strategy, args.q_u, args.q_e, args.q_s, w_e_total, w_s_total);
    std::string csv = "t,epsilon,best_order\n";
    if (args.t_max > 0) {
      for (const auto& p : uedp::accountant::budget_curve_detailed(
               q_eff, args.z, args.delta, args.t_max)) {
        csv += std::to_string(p.t) + "," + uedp::io::format_double(p.epsilon) +
               "," + uedp::io::format_double(p.best_order) + "\n";
      }
    }
    const std::string name =
        std::string("account_") + uedp::accountant::strategy_name(strategy) +
        ".csv";
    uedp::io::atomic_write(out_path(args.out_dir, name), csv);
    std::cout << uedp::accountant::strategy_name(strategy)
              << ": q_eff=" << uedp::io::format_double(q_eff);
    if (args.t_max > 0) {
      uedp::accountant::PrivacyLedger ledger = uedp::accountant::make_ledger(
          q_eff, args.z, strategy);
      uedp::accountant::accum_priv_spending(&ledger, args.t_max);
      const auto [eps, order] =
          uedp::accountant::get_priv_spent(ledger, args.delta);
      std::cout << " epsilon=" << uedp::io::format_double(eps)
                << " best_order=" << uedp::io::format_double(order);
    }
    std::cout << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint_path;
  std::string corpus_path;
  std::string task = "next_word";
};

int cmd_eval(const EvalArgs& args) {
  const auto params = uedp::model::load_checkpoint(args.checkpoint_path);
  const auto corpus = uedp::corpus::parse_jsonl(args.corpus_path);
  if (params.dims.vocab != corpus.vocab.size()) {
    throw uedp::ConfigError(
        "checkpoint vocab size " + std::to_string(params.dims.vocab) +
        " does not match corpus vocab " + std::to_string(corpus.vocab.size()));
  }
  if (args.task == "next_word") {
    const double pp =
        uedp::model::perplexity(params, corpus.sentences, corpus.vocab);
    std::cout << "perplexity=" << uedp::io::format_double(pp) << "\n";
  } else if (args.task == "classification") {
    if (params.dims.classes < 2) {
      throw uedp::ConfigError("checkpoint has no classifier head");
    }
    const double err =
        uedp::model::test_error_rate(params, corpus.sentences, corpus.vocab);
    std::cout << "error_rate=" << uedp::io::format_double(err) << "\n";
  } else {
    throw uedp::ConfigError("unknown task '" + args.task + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"User/entity differentially private training of small "
               "language models"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand(
      "ingest", "Parse an annotated corpus and build entity sets");
  ingest_cmd->add_option("--input", ingest.input, "Input file")->required();
  ingest_cmd->add_option("--format", ingest.format, "conll or jsonl");
  ingest_cmd->add_option("--categories", ingest.categories,
                         "Comma-separated sensitive categories "
                         "(default: all found)");
  ingest_cmd->add_option("--partition-mean", ingest.partition_mean,
                         "Re-partition sentences into users with this mean "
                         "sentences-per-user");
  ingest_cmd->add_option("--partition-std", ingest.partition_std,
                         "Std deviation for the Gaussian partitioner");
  ingest_cmd->add_option("--out-dir", ingest.out_dir, "Output directory");
  ingest_cmd->add_option("--seed", ingest.seed, "RNG seed");

  TrainArgs train;
  auto* train_cmd =
      app.add_subcommand("train", "Run federated training in any mode");
  train_cmd->add_option("--corpus", train.corpus_path, "Canonical corpus JSONL")
      ->required();
  train_cmd->add_option("--entities", train.entities_path, "Entity sets JSON")
      ->required();
  train_cmd->add_option("--config", train.config_path, "key=value config file")
      ->required();
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory");
  train_cmd->add_option("--task", train.task, "next_word or classification");
  train_cmd->add_option("--embedding-dim", train.embedding_dim,
                        "Embedding dimension");
  train_cmd->add_option("--hidden", train.hidden, "Hidden layer size");
  train_cmd->add_option("--context", train.context, "Context window length");
  train_cmd->add_option("--classes", train.classes,
                        "Class count for the classifier head");
  auto* seed_opt = train_cmd->add_option("--seed", train.seed,
                                         "Overrides the config file seed");

  AccountArgs account;
  auto* account_cmd = app.add_subcommand(
      "account", "Compute privacy budget curves without training");
  account_cmd->add_option("--q_u", account.q_u, "User sampling rate");
  account_cmd->add_option("--q_e", account.q_e, "Detected entity sampling rate");
  account_cmd->add_option("--q_s", account.q_s, "Extended entity sampling rate");
  account_cmd->add_option("--z", account.z, "Noise multiplier");
  account_cmd->add_option("--delta", account.delta, "Broken probability");
  account_cmd->add_option("--T", account.t_max, "Number of steps");
  account_cmd->add_option("--strategy", account.strategy,
                          "user_only, joint_max, joint_mixture or all");
  account_cmd->add_option("--entities", account.entities_path,
                          "Entity sets JSON to derive W_e/W_s");
  account_cmd->add_option("--out-dir", account.out_dir, "Output directory");

  EvalArgs eval;
  auto* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--corpus", eval.corpus_path, "Corpus JSONL")->required();
  eval_cmd->add_option("--task", eval.task, "next_word or classification");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (ingest_cmd->parsed()) return cmd_ingest(ingest);
    if (train_cmd->parsed()) {
      train.seed_given = seed_opt->count() > 0;
      return cmd_train(train);
    }
    if (account_cmd->parsed()) return cmd_account(account);
    if (eval_cmd->parsed()) return cmd_eval(eval);
  } catch (const uedp::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const uedp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const uedp::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
