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

#ifndef UEDP_CORPUS_HPP_
#define UEDP_CORPUS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace uedp::corpus {

// Reserved vocabulary entries, always present at these ids.
inline constexpr int kUnkId = 0;
inline constexpr int kEntId = 1;
inline constexpr int kPadId = 2;
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kEntToken = "<ent>";
inline constexpr const char* kPadToken = "<pad>";

// Category labels an entity span may carry.
const std::vector<std::string>& category_vocabulary();
bool is_known_category(const std::string& category);

// Maps common NER tag spellings (PER, ORG, LOC, MISC, GPE, ...) onto the
// registered category names. Returns "" if unknown.
std::string canonical_category(const std::string& tag);

// A contiguous run of tokens labeled with one category.
// Invariant: 0 <= start < end <= sentence token count.
struct EntitySpan {
  std::string category;
  int start = 0;  // inclusive token index
  int end = 0;    // exclusive token index
  std::string surface;  // covered tokens joined with single spaces
};

struct Sentence {
  int id = 0;
  std::string owner;
  std::vector<std::string> tokens;
  std::vector<EntitySpan> spans;
  bool sensitive = false;  // derived from spans and the active category set
  int label = -1;          // optional class label, -1 when absent
};

// Token <-> id table. Ids 0..2 are reserved; the rest cover corpus tokens
// with frequency >= 2, ordered by (frequency desc, token asc).
class Vocab {
 public:
  Vocab();

  int id(const std::string& token) const;  // falls back to kUnkId
  const std::string& token(int id) const { return id_to_token_.at(id); }
  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
  }

  void add(const std::string& token);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct Corpus {
  std::vector<Sentence> sentences;                   // index == sentence id
  std::map<std::string, std::vector<int>> users;     // owner -> sentence ids
  std::vector<std::string> active_categories;        // sorted
  Vocab vocab;

  int num_sentences() const { return static_cast<int>(sentences.size()); }
  int num_users() const { return static_cast<int>(users.size()); }
  int num_sensitive() const;

  // Recomputes the user index, sensitivity flags and vocabulary. Call after
  // editing sentences or active_categories.
  void finalize();
};

struct DetectedEntity {
  std::string surface;
  std::string category;
  std::vector<int> sentence_ids;  // ascending, deduplicated
};

struct ExtendedEntity {
  int sentence_id = 0;
};

struct PerUserEntities {
  std::vector<int> detected;  // ids into EntitySets::detected
  std::vector<int> extended;  // global ids (offset by detected count)
};

// Detected set E (surface+category identity, corpus-wide) and extended set S
// (one entity per non-sensitive sentence). Extended entity ids are offset by
// detected.size() so the two id spaces stay disjoint.
struct EntitySets {
  std::vector<DetectedEntity> detected;
  std::vector<ExtendedEntity> extended;
  std::map<std::string, PerUserEntities> per_user;

  int num_detected() const { return static_cast<int>(detected.size()); }
  int num_extended() const { return static_cast<int>(extended.size()); }
  int extended_global_id(int index) const { return num_detected() + index; }
};

struct ParseOptions {
  // Recoverable parse warnings are appended here when non-null.
  std::vector<std::string>* warnings = nullptr;
};

// CoNLL BIO reader. One token per line ("token ... tag", tag in the last
// column), blank line ends a sentence, -DOCSTART- starts a new document which
// becomes a new user. Tokens are lowercased; punctuation-only tokens are
// dropped. An I- tag without a matching B- opens a span at that token and is
// reported as a warning.
Corpus parse_conll(const std::string& path, ParseOptions opts = {});

// JSONL reader, one object per line:
//   {"user_id": string|null, "tokens": [string], "entities":
//    [{"category": string, "start": int, "end": int}]}
// plus optional "label" (int) and "id" (int). Spans out of range or with an
// unknown category reject the record with a line-numbered error; duplicate
// explicit ids are fatal.
Corpus parse_jsonl(const std::string& path, ParseOptions opts = {});

// Canonical serialization: the same JSONL schema with user_id always set.
// Parsing the output and serializing again is byte-identical.
std::string serialize_jsonl(const Corpus& corpus);

// Reassigns sentence owners. Sentences are shuffled, then per-user sizes are
// drawn from round(N(mean, std^2)) clamped to >= 1 until all sentences are
// consumed; the final user takes the remainder. Deterministic per seed.
Corpus partition_users_gaussian(const Corpus& corpus, double mean, double stddev,
                                std::uint64_t seed);

// Builds the detected set E and extended set S for the active categories.
EntitySets build_entity_sets(const Corpus& corpus);

// Replaces every token inside an active-category span with <ent>. Span
// metadata is kept for audit.
Corpus deidentify(const Corpus& corpus);

// JSON (de)serialization of entity sets for the ingest -> train handoff.
std::string serialize_entity_sets(const EntitySets& sets);
EntitySets parse_entity_sets(const std::string& path);

}  // namespace uedp::corpus

#endif  // UEDP_CORPUS_HPP_
