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

#include "uedp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "uedp/errors.hpp"
#include "uedp/io_util.hpp"
#include "uedp/kernels.hpp"
#include "uedp/rng.hpp"

namespace uedp::model {
namespace {

constexpr char kMagic[8] = {'U', 'E', 'D', 'P', 'C', 'K', 'P', '1'};

// log(sum(exp(logits))) with the max factored out.
double log_sum_exp(const double* logits, int n) {
  double m = logits[0];
  for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(logits[i] - m);
  return m + std::log(s);
}

struct Blocks {
  double* embedding;
  double* hidden_w;
  double* hidden_b;
  double* output_w;
  double* output_b;
  double* class_w;
  double* class_b;
};

Blocks blocks_of(const Dims& d, double* theta) {
  return {theta + d.embedding_off(), theta + d.hidden_w_off(),
          theta + d.hidden_b_off(),  theta + d.output_w_off(),
          theta + d.output_b_off(),  theta + d.class_w_off(),
          theta + d.class_b_off()};
}

void check_example(const Example& ex, const Dims& dims, Task task,
                   std::size_t index) {
  const int limit = task == Task::kNextWord ? dims.vocab : dims.classes;
  if (ex.target < 0 || ex.target >= limit) {
    throw ConfigError("example " + std::to_string(index) +
                      ": target out of range");
  }
  if (task == Task::kNextWord &&
      static_cast<int>(ex.context.size()) != dims.context) {
    throw ConfigError("example " + std::to_string(index) +
                      ": context length != " + std::to_string(dims.context));
  }
  for (int id : ex.context) {
    if (id < 0 || id >= dims.vocab) {
      throw ConfigError("example " + std::to_string(index) +
                        ": token id out of range");
    }
  }
}

// Adds the gradient of -ln p(target | context) for one next-word example.
// Returns the example's loss.
double next_word_example(const Dims& d, const Blocks& b, const Example& ex,
                         double weight, Blocks* g) {
  namespace k = kernels;
  const int cd = d.context * d.embed_dim;

  std::vector<double> x(cd);
  for (int i = 0; i < d.context; ++i) {
    std::memcpy(x.data() + i * d.embed_dim,
                b.embedding + static_cast<std::size_t>(ex.context[i]) * d.embed_dim,
                sizeof(double) * d.embed_dim);
  }

  std::vector<double> h(d.hidden);
  std::memcpy(h.data(), b.hidden_b, sizeof(double) * d.hidden);
  k::matvec(b.hidden_w, x.data(), h.data(), d.hidden, cd);
  for (double& v : h) v = std::tanh(v);

  std::vector<double> logits(d.vocab);
  std::memcpy(logits.data(), b.output_b, sizeof(double) * d.vocab);
  k::matvec(b.output_w, h.data(), logits.data(), d.vocab, d.hidden);

  const double lse = log_sum_exp(logits.data(), d.vocab);
  const double loss = lse - logits[ex.target];

  if (g == nullptr) return loss;

  // dlogits = softmax - onehot(target), scaled by the example weight.
  std::vector<double> dlogits(d.vocab);
  for (int i = 0; i < d.vocab; ++i) {
    dlogits[i] = weight * std::exp(logits[i] - lse);
  }
  dlogits[ex.target] -= weight;

  k::axpy(1.0, dlogits.data(), g->output_b, d.vocab);
  k::rank1_update(g->output_w, dlogits.data(), h.data(), d.vocab, d.hidden);

  std::vector<double> dh(d.hidden, 0.0);
  k::matvec_t(b.output_w, dlogits.data(), dh.data(), d.vocab, d.hidden);
  for (int i = 0; i < d.hidden; ++i) dh[i] *= 1.0 - h[i] * h[i];

  k::axpy(1.0, dh.data(), g->hidden_b, d.hidden);
  k::rank1_update(g->hidden_w, dh.data(), x.data(), d.hidden, cd);

  std::vector<double> dx(cd, 0.0);
  k::matvec_t(b.hidden_w, dh.data(), dx.data(), d.hidden, cd);
  for (int i = 0; i < d.context; ++i) {
    const int id = ex.context[i];
    if (id == corpus::kPadId) continue;  // frozen row
    k::axpy(1.0, dx.data() + i * d.embed_dim,
            g->embedding + static_cast<std::size_t>(id) * d.embed_dim,
            d.embed_dim);
  }
  return loss;
}

double classification_example(const Dims& d, const Blocks& b, const Example& ex,
                              double weight, Blocks* g) {
  namespace k = kernels;
  if (d.classes <= 0) {
    throw ConfigError("classifier head not configured (classes == 0)");
  }
  std::vector<int> bag;
  bag.reserve(ex.context.size());
  for (int id : ex.context) {
    if (id != corpus::kPadId) bag.push_back(id);
  }
  if (bag.empty()) bag.push_back(corpus::kUnkId);
  const double inv = 1.0 / static_cast<double>(bag.size());

  std::vector<double> xbar(d.embed_dim, 0.0);
  for (int id : bag) {
    k::axpy(inv, b.embedding + static_cast<std::size_t>(id) * d.embed_dim,
            xbar.data(), d.embed_dim);
  }

  std::vector<double> logits(d.classes);
  std::memcpy(logits.data(), b.class_b, sizeof(double) * d.classes);
  k::matvec(b.class_w, xbar.data(), logits.data(), d.classes, d.embed_dim);

  const double lse = log_sum_exp(logits.data(), d.classes);
  const double loss = lse - logits[ex.target];
  if (g == nullptr) return loss;

  std::vector<double> dlogits(d.classes);
  for (int i = 0; i < d.classes; ++i) {
    dlogits[i] = weight * std::exp(logits[i] - lse);
  }
  dlogits[ex.target] -= weight;

  k::axpy(1.0, dlogits.data(), g->class_b, d.classes);
  k::rank1_update(g->class_w, dlogits.data(), xbar.data(), d.classes,
                  d.embed_dim);

  std::vector<double> dxbar(d.embed_dim, 0.0);
  k::matvec_t(b.class_w, dlogits.data(), dxbar.data(), d.classes, d.embed_dim);
  for (int id : bag) {
    k::axpy(inv, dxbar.data(),
            g->embedding + static_cast<std::size_t>(id) * d.embed_dim,
            d.embed_dim);
  }
  return loss;
}

void append_u64(std::string* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

std::uint64_t read_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

}  // namespace

ModelParams init_params(const Dims& dims, std::uint64_t seed) {
  if (dims.vocab <= 0 || dims.embed_dim <= 0 || dims.context <= 0 ||
      dims.hidden <= 0 || dims.classes < 0) {
    throw ConfigError("model dims must be positive");
  }
  ModelParams params;
  params.dims = dims;
  params.theta.assign(dims.total(), 0.0);
  Blocks b = blocks_of(dims, params.theta.data());

  rng::Stream emb = rng::substream(seed, 0, rng::Purpose::kInitParams, 0);
  for (std::size_t i = 0; i < dims.embedding_size(); ++i) {
    b.embedding[i] = emb.uniform(-0.1, 0.1);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  rng::Stream hw = rng::substream(seed, 0, rng::Purpose::kInitParams, 1);
  for (std::size_t i = 0; i < dims.hidden_w_size(); ++i) {
    b.hidden_w[i] = hw.uniform(-bound, bound);
  }
  rng::Stream ow = rng::substream(seed, 0, rng::Purpose::kInitParams, 2);
  for (std::size_t i = 0; i < dims.output_w_size(); ++i) {
    b.output_w[i] = ow.uniform(-bound, bound);
  }
  if (dims.classes > 0) {
    rng::Stream cw = rng::substream(seed, 0, rng::Purpose::kInitParams, 3);
    for (std::size_t i = 0; i < dims.class_w_size(); ++i) {
      b.class_w[i] = cw.uniform(-bound, bound);
    }
  }
  return params;
}

double loss_and_grad(const ModelParams& params, std::span<const Example> batch,
                     Task task, std::vector<double>* grad) {
  if (batch.empty()) {
    throw ConfigError("loss_and_grad: empty batch");
  }
  const Dims& d = params.dims;
  Blocks b = blocks_of(d, const_cast<double*>(params.theta.data()));

  Blocks gb{};
  if (grad != nullptr) {
    grad->assign(d.total(), 0.0);
    gb = blocks_of(d, grad->data());
  }

  const double weight = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    check_example(batch[i], d, task, i);
    const double li =
        task == Task::kNextWord
            ? next_word_example(d, b, batch[i], weight,
                                grad ? &gb : nullptr)
            : classification_example(d, b, batch[i], weight,
                                     grad ? &gb : nullptr);
    if (!std::isfinite(li)) {
      throw NumericalError("non-finite loss at example " + std::to_string(i));
    }
    loss += li * weight;
  }
  return loss;
}

std::vector<Example> sentence_examples(const corpus::Sentence& sentence,
                                       const corpus::Vocab& vocab,
                                       const Dims& dims) {
  const int c = dims.context;
  std::vector<int> ids;
  ids.reserve(sentence.tokens.size() + c);
  // Left-pad so that even a one-token sentence yields one position.
  const int pad = std::max(
      0, c + 1 - static_cast<int>(sentence.tokens.size()));
  for (int i = 0; i < pad; ++i) ids.push_back(corpus::kPadId);
  for (const auto& t : sentence.tokens) ids.push_back(vocab.id(t));

  std::vector<Example> out;
  for (std::size_t p = c; p < ids.size(); ++p) {
    Example ex;
    ex.context.assign(ids.begin() + (p - c), ids.begin() + p);
    ex.target = ids[p];
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<double> sentence_grad(const ModelParams& params,
                                  const corpus::Sentence& sentence,
                                  const corpus::Vocab& vocab) {
  const auto examples = sentence_examples(sentence, vocab, params.dims);
  std::vector<double> grad;
  loss_and_grad(params, examples, Task::kNextWord, &grad);
  // loss_and_grad averages; the per-user update sums over positions.
  kernels::scale(static_cast<double>(examples.size()), grad.data(),
                 grad.size());
  return grad;
}

double perplexity(const ModelParams& params,
                  const std::vector<corpus::Sentence>& split,
                  const corpus::Vocab& vocab) {
  if (split.empty()) {
    throw ConfigError("perplexity: empty split");
  }
  const Dims& d = params.dims;
  Blocks b = blocks_of(d, const_cast<double*>(params.theta.data()));
  double total = 0.0;
  std::size_t positions = 0;
  for (const auto& sentence : split) {
    for (const auto& ex : sentence_examples(sentence, vocab, d)) {
      total += next_word_example(d, b, ex, 1.0, nullptr);
      ++positions;
    }
  }
  return std::exp(total / static_cast<double>(positions));
}

std::vector<double> class_log_probs(const ModelParams& params,
                                    std::span<const int> token_ids) {
  const Dims& d = params.dims;
  if (d.classes <= 0) {
    throw ConfigError("classifier head not configured (classes == 0)");
  }
  Blocks b = blocks_of(d, const_cast<double*>(params.theta.data()));
  Example ex;
  ex.context.assign(token_ids.begin(), token_ids.end());
  ex.target = 0;

  std::vector<int> bag;
  for (int id : ex.context) {
    if (id != corpus::kPadId) bag.push_back(id);
  }
  if (bag.empty()) bag.push_back(corpus::kUnkId);
  const double inv = 1.0 / static_cast<double>(bag.size());
  std::vector<double> xbar(d.embed_dim, 0.0);
  for (int id : bag) {
    kernels::axpy(inv, b.embedding + static_cast<std::size_t>(id) * d.embed_dim,
                  xbar.data(), d.embed_dim);
  }
  std::vector<double> logits(d.classes);
  std::memcpy(logits.data(), b.class_b, sizeof(double) * d.classes);
  kernels::matvec(b.class_w, xbar.data(), logits.data(), d.classes,
                  d.embed_dim);
  const double lse = log_sum_exp(logits.data(), d.classes);
  for (double& v : logits) v -= lse;
  return logits;
}

double test_error_rate(const ModelParams& params,
                       const std::vector<corpus::Sentence>& split,
                       const corpus::Vocab& vocab) {
  if (split.empty()) {
    throw ConfigError("test_error_rate: empty split");
  }
  int wrong = 0;
  for (const auto& sentence : split) {
    if (sentence.label < 0) {
      throw ConfigError("test_error_rate: sentence " +
                        std::to_string(sentence.id) + " has no label");
    }
    std::vector<int> ids;
    ids.reserve(sentence.tokens.size());
    for (const auto& t : sentence.tokens) ids.push_back(vocab.id(t));
    const auto logp = class_log_probs(params, ids);
    int best = 0;
    for (int i = 1; i < static_cast<int>(logp.size()); ++i) {
      if (logp[i] > logp[best]) best = i;  // ties keep the lowest index
    }
    if (best != sentence.label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(split.size());
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u64(&out, static_cast<std::uint64_t>(params.dims.vocab));
  append_u64(&out, static_cast<std::uint64_t>(params.dims.embed_dim));
  append_u64(&out, static_cast<std::uint64_t>(params.dims.context));
  append_u64(&out, static_cast<std::uint64_t>(params.dims.hidden));
  append_u64(&out, static_cast<std::uint64_t>(params.dims.classes));
  append_u64(&out, params.theta.size());
  for (double v : params.theta) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    append_u64(&out, bits);
  }
  io::atomic_write(path, out);
}

ModelParams load_checkpoint(const std::string& path) {
  const std::string in = io::read_file(path);
  if (in.size() < sizeof(kMagic) + 6 * 8 ||
      std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path + ": not a checkpoint file");
  }
  const char* p = in.data() + sizeof(kMagic);
  ModelParams params;
  params.dims.vocab = static_cast<int>(read_u64(p)); p += 8;
  params.dims.embed_dim = static_cast<int>(read_u64(p)); p += 8;
  params.dims.context = static_cast<int>(read_u64(p)); p += 8;
  params.dims.hidden = static_cast<int>(read_u64(p)); p += 8;
  params.dims.classes = static_cast<int>(read_u64(p)); p += 8;
  const std::uint64_t n = read_u64(p); p += 8;
  if (n != params.dims.total() ||
      in.size() != sizeof(kMagic) + 6 * 8 + n * 8) {
    throw ParseError(path + ": checkpoint size mismatch");
  }
  params.theta.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t bits = read_u64(p);
    p += 8;
    std::memcpy(&params.theta[i], &bits, sizeof(double));
  }
  return params;
}

}  // namespace uedp::model
