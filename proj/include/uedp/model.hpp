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

#ifndef UEDP_MODEL_HPP_
#define UEDP_MODEL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uedp/corpus.hpp"

namespace uedp::model {

// Feedforward next-word predictor over a fixed context window, with an
// optional bag-of-words classifier head sharing the embedding table.
//
// theta layout (doubles, contiguous):
//   [0)                embedding        vocab x embed_dim
//   [embedding)        hidden weights   hidden x (context * embed_dim)
//   [..)               hidden bias      hidden
//   [..)               output weights   vocab x hidden
//   [..)               output bias      vocab
//   [..)               class weights    classes x embed_dim   (if classes > 0)
//   [..)               class bias       classes               (if classes > 0)
struct Dims {
  int vocab = 0;
  int embed_dim = 32;
  int context = 3;
  int hidden = 64;
  int classes = 0;

  std::size_t embedding_size() const {
    return static_cast<std::size_t>(vocab) * embed_dim;
  }
  std::size_t hidden_w_size() const {
    return static_cast<std::size_t>(hidden) * context * embed_dim;
  }
  std::size_t output_w_size() const {
    return static_cast<std::size_t>(vocab) * hidden;
  }
  std::size_t class_w_size() const {
    return static_cast<std::size_t>(classes) * embed_dim;
  }
  std::size_t total() const {
    return embedding_size() + hidden_w_size() + hidden + output_w_size() +
           vocab + class_w_size() + classes;
  }

  std::size_t embedding_off() const { return 0; }
  std::size_t hidden_w_off() const { return embedding_size(); }
  std::size_t hidden_b_off() const { return hidden_w_off() + hidden_w_size(); }
  std::size_t output_w_off() const { return hidden_b_off() + hidden; }
  std::size_t output_b_off() const { return output_w_off() + output_w_size(); }
  std::size_t class_w_off() const { return output_b_off() + vocab; }
  std::size_t class_b_off() const { return class_w_off() + class_w_size(); }

  bool operator==(const Dims&) const = default;
};

struct ModelParams {
  Dims dims;
  std::vector<double> theta;
};

enum class Task { kNextWord, kClassification };

// One training example. For next-word prediction the context holds exactly
// dims.context ids; for classification it holds the whole bag of token ids.
struct Example {
  std::vector<int> context;
  int target = 0;
};

// Uniform init: embeddings in [-0.1, 0.1], weight matrices in
// [-1/sqrt(hidden), 1/sqrt(hidden)], biases zero. Deterministic per seed.
ModelParams init_params(const Dims& dims, std::uint64_t seed);

// Mean cross-entropy over the batch and its exact gradient. The <pad>
// embedding row is frozen (zero gradient). Throws NumericalError if the loss
// is not finite, naming the offending example.
double loss_and_grad(const ModelParams& params, std::span<const Example> batch,
                     Task task, std::vector<double>* grad);

// Builds the next-word examples of a sentence: positions with a full context
// window; sentences shorter than context+1 are left-padded with <pad> and
// yield a single position.
std::vector<Example> sentence_examples(const corpus::Sentence& sentence,
                                       const corpus::Vocab& vocab,
                                       const Dims& dims);

// Sum of per-position next-word gradients over the sentence (not averaged).
std::vector<double> sentence_grad(const ModelParams& params,
                                  const corpus::Sentence& sentence,
                                  const corpus::Vocab& vocab);

// exp(mean over all prediction positions of -ln p(next word | context)).
double perplexity(const ModelParams& params,
                  const std::vector<corpus::Sentence>& split,
                  const corpus::Vocab& vocab);

// Fraction of misclassified sentences; argmax ties go to the lowest class.
double test_error_rate(const ModelParams& params,
                       const std::vector<corpus::Sentence>& split,
                       const corpus::Vocab& vocab);

// Bag-of-words class log-probabilities for one sentence.
std::vector<double> class_log_probs(const ModelParams& params,
                                    std::span<const int> token_ids);

// Binary checkpoint (magic, dims, raw little-endian doubles). Round-trips
// bit-exactly.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace uedp::model

#endif  // UEDP_MODEL_HPP_
