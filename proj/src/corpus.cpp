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

#include "uedp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uedp/errors.hpp"
#include "uedp/io_util.hpp"
#include "uedp/rng.hpp"

namespace uedp::corpus {
namespace {

using json = nlohmann::ordered_json;

std::string lowercase(std::string s) {
  for (char& c : s) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

bool punctuation_only(const std::string& s) {
  if (s.empty()) return true;
  for (unsigned char c : s) {
    if (!std::ispunct(c)) return false;
  }
  return true;
}

std::string join_tokens(const std::vector<std::string>& tokens, int start,
                        int end) {
  std::string out;
  for (int i = start; i < end; ++i) {
    if (i > start) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool span_is_active(const EntitySpan& span,
                    const std::vector<std::string>& active) {
  return std::binary_search(active.begin(), active.end(), span.category);
}

// Earlier-starting, longer span wins; later overlapping spans are dropped.
std::vector<EntitySpan> resolve_overlaps(std::vector<EntitySpan> spans,
                                         std::vector<std::string>* warnings,
                                         const std::string& context) {
  std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end > b.end;
    return a.category < b.category;
  });
  std::vector<EntitySpan> kept;
  int covered_end = 0;
  for (auto& span : spans) {
    if (span.start < covered_end) {
      if (warnings) {
        warnings->push_back(context + ": overlapping span [" +
                            std::to_string(span.start) + "," +
                            std::to_string(span.end) + ") dropped");
      }
      continue;
    }
    covered_end = span.end;
    kept.push_back(std::move(span));
  }
  return kept;
}

}  // namespace

const std::vector<std::string>& category_vocabulary() {
  static const std::vector<std::string> kCategories = {
      "Person", "Loc",    "Org",      "Misc",     "GPE",     "PII",
      "Date",   "NoRP",   "Fac",      "Product",  "Event",   "Law",
      "Language", "WorkOfArt", "Time", "Percent", "Money",   "Quantity",
      "Ordinal", "Cardinal"};
  return kCategories;
}

bool is_known_category(const std::string& category) {
  const auto& all = category_vocabulary();
  return std::find(all.begin(), all.end(), category) != all.end();
}

std::string canonical_category(const std::string& tag) {
  static const std::map<std::string, std::string> kAliases = {
      {"PER", "Person"},     {"PERSON", "Person"}, {"ORG", "Org"},
      {"LOC", "Loc"},        {"LOCATION", "Loc"},  {"MISC", "Misc"},
      {"GPE", "GPE"},        {"PII", "PII"},       {"DATE", "Date"},
      {"NORP", "NoRP"},      {"FAC", "Fac"},       {"PRODUCT", "Product"},
      {"EVENT", "Event"},    {"LAW", "Law"},       {"LANGUAGE", "Language"},
      {"WORK_OF_ART", "WorkOfArt"},                {"TIME", "Time"},
      {"PERCENT", "Percent"},{"MONEY", "Money"},   {"QUANTITY", "Quantity"},
      {"ORDINAL", "Ordinal"},{"CARDINAL", "Cardinal"}};
  if (is_known_category(tag)) return tag;
  std::string upper = tag;
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  auto it = kAliases.find(upper);
  return it == kAliases.end() ? std::string() : it->second;
}

Vocab::Vocab() {
  add(kUnkToken);
  add(kEntToken);
  add(kPadToken);
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

void Vocab::add(const std::string& token) {
  if (token_to_id_.count(token)) return;
  token_to_id_[token] = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
}

int Corpus::num_sensitive() const {
  int n = 0;
  for (const auto& s : sentences) {
    n += s.sensitive ? 1 : 0;
  }
  return n;
}

void Corpus::finalize() {
  std::sort(active_categories.begin(), active_categories.end());
  active_categories.erase(
      std::unique(active_categories.begin(), active_categories.end()),
      active_categories.end());

  users.clear();
  for (int i = 0; i < static_cast<int>(sentences.size()); ++i) {
    sentences[i].id = i;
    sentences[i].sensitive = false;
    for (const auto& span : sentences[i].spans) {
      if (span_is_active(span, active_categories)) {
        sentences[i].sensitive = true;
        break;
      }
    }
    users[sentences[i].owner].push_back(i);
  }

  // Frequency-pruned vocabulary: tokens seen at least twice, most frequent
  // first, ties broken by token string.
  std::map<std::string, int> freq;
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) {
      ++freq[t];
    }
  }
  std::vector<std::pair<std::string, int>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  vocab = Vocab();
  for (const auto& [token, count] : entries) {
    if (count >= 2) vocab.add(token);
  }
}

Corpus parse_conll(const std::string& path, ParseOptions opts) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);

  Corpus corpus;
  std::set<std::string> seen_categories;
  int doc_index = -1;
  std::string line;
  int line_no = 0;

  std::vector<std::string> tokens;
  std::vector<EntitySpan> open_and_closed;  // spans for the current sentence
  int open_start = -1;
  std::string open_category;

  auto close_span = [&](int end) {
    if (open_start >= 0) {
      open_and_closed.push_back(
          {open_category, open_start, end, std::string()});
      open_start = -1;
      open_category.clear();
    }
  };

  auto flush_sentence = [&]() {
    close_span(static_cast<int>(tokens.size()));
    if (!tokens.empty()) {
      Sentence s;
      s.owner = "doc" + std::to_string(std::max(doc_index, 0));
      s.tokens = std::move(tokens);
      for (auto& span : open_and_closed) {
        span.surface = join_tokens(s.tokens, span.start, span.end);
        seen_categories.insert(span.category);
      }
      s.spans = std::move(open_and_closed);
      corpus.sentences.push_back(std::move(s));
    }
    tokens.clear();
    open_and_closed.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::istringstream fields(line);
    std::string first;
    fields >> first;

    if (first.empty()) {
      flush_sentence();
      continue;
    }
    if (first == "-DOCSTART-") {
      flush_sentence();
      ++doc_index;
      continue;
    }
    if (doc_index < 0) doc_index = 0;

    std::string tag = "O";
    std::string col;
    while (fields >> col) tag = col;

    const std::string token = lowercase(first);
    if (punctuation_only(token)) {
      // Dropped tokens also terminate any open span; BIO runs resume on the
      // next tagged token as a fresh span.
      if (tag == "O" || tag.empty()) close_span(static_cast<int>(tokens.size()));
      continue;
    }

    if (tag == "O" || tag.empty()) {
      close_span(static_cast<int>(tokens.size()));
      tokens.push_back(token);
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-') {
      if (opts.warnings) {
        opts.warnings->push_back(path + ":" + std::to_string(line_no) +
                                 ": unrecognized tag '" + tag + "', treated as O");
      }
      close_span(static_cast<int>(tokens.size()));
      tokens.push_back(token);
      continue;
    }

    const char bio = tag[0];
    const std::string category = canonical_category(tag.substr(2));
    if (category.empty()) {
      if (opts.warnings) {
        opts.warnings->push_back(path + ":" + std::to_string(line_no) +
                                 ": unknown entity category '" + tag.substr(2) +
                                 "', treated as O");
      }
      close_span(static_cast<int>(tokens.size()));
      tokens.push_back(token);
      continue;
    }

    if (bio == 'B') {
      close_span(static_cast<int>(tokens.size()));
      open_start = static_cast<int>(tokens.size());
      open_category = category;
    } else if (bio == 'I') {
      if (open_start < 0 || open_category != category) {
        if (opts.warnings) {
          opts.warnings->push_back(path + ":" + std::to_string(line_no) +
                                   ": I-" + tag.substr(2) +
                                   " without matching B-, span starts here");
        }
        close_span(static_cast<int>(tokens.size()));
        open_start = static_cast<int>(tokens.size());
        open_category = category;
      }
    } else {
      if (opts.warnings) {
        opts.warnings->push_back(path + ":" + std::to_string(line_no) +
                                 ": unrecognized tag '" + tag + "', treated as O");
      }
      close_span(static_cast<int>(tokens.size()));
    }
    tokens.push_back(token);
  }
  flush_sentence();

  corpus.active_categories.assign(seen_categories.begin(), seen_categories.end());
  corpus.finalize();
  return corpus;
}

Corpus parse_jsonl(const std::string& path, ParseOptions opts) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);

  Corpus corpus;
  std::set<std::string> seen_categories;
  std::set<long long> explicit_ids;
  std::string line;
  int line_no = 0;
  int anon_user = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!rec.is_object() || !rec.contains("tokens") || !rec["tokens"].is_array()) {
      throw ParseError(where + ": record must be an object with a tokens array");
    }

    Sentence s;
    if (rec.contains("user_id") && !rec["user_id"].is_null()) {
      if (!rec["user_id"].is_string()) {
        throw ParseError(where + ": user_id must be a string or null");
      }
      s.owner = rec["user_id"].get<std::string>();
    } else {
      // Unowned records each become their own placeholder user until a
      // partitioner assigns real owners.
      s.owner = "_unassigned" + std::to_string(anon_user++);
    }

    for (const auto& t : rec["tokens"]) {
      if (!t.is_string()) {
        throw ParseError(where + ": tokens must be strings");
      }
      s.tokens.push_back(t.get<std::string>());
    }

    if (rec.contains("id")) {
      const long long id = rec["id"].get<long long>();
      if (!explicit_ids.insert(id).second) {
        throw ParseError(where + ": duplicate sentence id " + std::to_string(id));
      }
    }
    if (rec.contains("label") && !rec["label"].is_null()) {
      s.label = rec["label"].get<int>();
    }

    if (rec.contains("entities")) {
      if (!rec["entities"].is_array()) {
        throw ParseError(where + ": entities must be an array");
      }
      for (const auto& ent : rec["entities"]) {
        EntitySpan span;
        if (!ent.contains("category") || !ent.contains("start") ||
            !ent.contains("end")) {
          throw ParseError(where + ": entity needs category/start/end");
        }
        span.category = ent["category"].get<std::string>();
        span.start = ent["start"].get<int>();
        span.end = ent["end"].get<int>();
        if (!is_known_category(span.category)) {
          const std::string mapped = canonical_category(span.category);
          if (mapped.empty()) {
            throw ParseError(where + ": unknown entity category '" +
                             span.category + "'");
          }
          span.category = mapped;
        }
        if (span.start < 0 || span.start >= span.end ||
            span.end > static_cast<int>(s.tokens.size())) {
          throw ParseError(where + ": entity span [" +
                           std::to_string(span.start) + "," +
                           std::to_string(span.end) + ") out of range for " +
                           std::to_string(s.tokens.size()) + " tokens");
        }
        span.surface = join_tokens(s.tokens, span.start, span.end);
        seen_categories.insert(span.category);
        s.spans.push_back(std::move(span));
      }
      s.spans = resolve_overlaps(std::move(s.spans), opts.warnings, where);
    }
    corpus.sentences.push_back(std::move(s));
  }

  corpus.active_categories.assign(seen_categories.begin(), seen_categories.end());
  corpus.finalize();
  return corpus;
}

std::string serialize_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    json rec;
    rec["user_id"] = s.owner;
    rec["tokens"] = s.tokens;
    json ents = json::array();
    std::vector<EntitySpan> spans = s.spans;
    std::sort(spans.begin(), spans.end(),
              [](const EntitySpan& a, const EntitySpan& b) {
                if (a.start != b.start) return a.start < b.start;
                if (a.end != b.end) return a.end < b.end;
                return a.category < b.category;
              });
    for (const auto& span : spans) {
      json e;
      e["category"] = span.category;
      e["start"] = span.start;
      e["end"] = span.end;
      ents.push_back(std::move(e));
    }
    rec["entities"] = std::move(ents);
    if (s.label >= 0) rec["label"] = s.label;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

Corpus partition_users_gaussian(const Corpus& corpus, double mean, double stddev,
                                std::uint64_t seed) {
  if (corpus.sentences.empty()) {
    return corpus;
  }
  if (mean <= 0) {
    throw ConfigError("partition mean must be positive");
  }

  rng::Stream stream = rng::substream(seed, 0, rng::Purpose::kPartition, 0);

  std::vector<int> order(corpus.sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  // Fisher-Yates with the same stream that draws the sizes.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = stream.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }

  const int total = static_cast<int>(order.size());
  std::vector<int> sizes;
  int assigned = 0;
  while (assigned < total) {
    int size = static_cast<int>(
        std::llround(mean + stddev * stream.gaussian()));
    size = std::max(size, 1);
    if (assigned + size >= total) {
      sizes.push_back(total - assigned);  // final user takes the remainder
      assigned = total;
    } else {
      sizes.push_back(size);
      assigned += size;
    }
  }

  Corpus out = corpus;
  int next = 0;
  const int width = static_cast<int>(std::to_string(sizes.size()).size());
  for (std::size_t u = 0; u < sizes.size(); ++u) {
    std::string name = std::to_string(u);
    name = "user" + std::string(width - static_cast<int>(name.size()), '0') + name;
    for (int k = 0; k < sizes[u]; ++k) {
      out.sentences[order[next++]].owner = name;
    }
  }
  out.finalize();
  return out;
}

EntitySets build_entity_sets(const Corpus& corpus) {
  EntitySets sets;

  // Detected entities key on (surface, category) across the whole corpus.
  std::map<std::pair<std::string, std::string>, std::vector<int>> detected;
  for (const auto& s : corpus.sentences) {
    for (const auto& span : s.spans) {
      if (!span_is_active(span, corpus.active_categories)) continue;
      auto& ids = detected[{lowercase(span.surface), span.category}];
      if (ids.empty() || ids.back() != s.id) ids.push_back(s.id);
    }
  }
  for (auto& [key, ids] : detected) {
    sets.detected.push_back({key.first, key.second, std::move(ids)});
  }

  for (const auto& s : corpus.sentences) {
    if (!s.sensitive) {
      sets.extended.push_back({s.id});
    }
  }

  // Per-user index: which detected entities touch the user's sentences, and
  // which extended entities the user owns.
  std::map<std::string, std::set<int>> touched;
  for (int e = 0; e < sets.num_detected(); ++e) {
    for (int sid : sets.detected[e].sentence_ids) {
      touched[corpus.sentences[sid].owner].insert(e);
    }
  }
  for (const auto& [owner, ids] : corpus.users) {
    PerUserEntities pu;
    auto it = touched.find(owner);
    if (it != touched.end()) {
      pu.detected.assign(it->second.begin(), it->second.end());
    }
    sets.per_user[owner] = std::move(pu);
  }
  for (int x = 0; x < sets.num_extended(); ++x) {
    const auto& owner = corpus.sentences[sets.extended[x].sentence_id].owner;
    sets.per_user[owner].extended.push_back(sets.extended_global_id(x));
  }
  return sets;
}

Corpus deidentify(const Corpus& corpus) {
  Corpus out = corpus;
  for (auto& s : out.sentences) {
    for (const auto& span : s.spans) {
      if (!span_is_active(span, out.active_categories)) continue;
      for (int i = span.start; i < span.end; ++i) {
        s.tokens[i] = kEntToken;
      }
    }
  }
  out.finalize();
  return out;
}

std::string serialize_entity_sets(const EntitySets& sets) {
  json doc;
  json detected = json::array();
  for (const auto& e : sets.detected) {
    json rec;
    rec["surface"] = e.surface;
    rec["category"] = e.category;
    rec["sentences"] = e.sentence_ids;
    detected.push_back(std::move(rec));
  }
  doc["detected"] = std::move(detected);
  json extended = json::array();
  for (const auto& e : sets.extended) {
    extended.push_back(e.sentence_id);
  }
  doc["extended"] = std::move(extended);
  json per_user = json::object();
  for (const auto& [user, pu] : sets.per_user) {
    json rec;
    rec["detected"] = pu.detected;
    rec["extended"] = pu.extended;
    per_user[user] = std::move(rec);
  }
  doc["per_user"] = std::move(per_user);
  return doc.dump(2) + "\n";
}

EntitySets parse_entity_sets(const std::string& path) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": invalid JSON (" + e.what() + ")");
  }
  EntitySets sets;
  try {
    for (const auto& rec : doc.at("detected")) {
      DetectedEntity e;
      e.surface = rec.at("surface").get<std::string>();
      e.category = rec.at("category").get<std::string>();
      e.sentence_ids = rec.at("sentences").get<std::vector<int>>();
      sets.detected.push_back(std::move(e));
    }
    for (const auto& sid : doc.at("extended")) {
      sets.extended.push_back({sid.get<int>()});
    }
    for (const auto& [user, rec] : doc.at("per_user").items()) {
      PerUserEntities pu;
      pu.detected = rec.at("detected").get<std::vector<int>>();
      pu.extended = rec.at("extended").get<std::vector<int>>();
      sets.per_user[user] = std::move(pu);
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": malformed entity sets (" + e.what() + ")");
  }
  return sets;
}

}  // namespace uedp::corpus
