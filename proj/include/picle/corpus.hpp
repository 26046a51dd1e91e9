#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "picle/errors.hpp"
#include "picle/sequence_eval.hpp"

namespace picle {

struct Token {
  std::string text;
  std::size_t index = 0;
};

struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct EntityMention {
  std::string surface;
  std::optional<TokenSpan> span;
  std::string entity_type;

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

enum class SampleSource { gold, pseudo, perturbed };

inline std::string to_string(SampleSource s) {
  switch (s) {
    case SampleSource::gold: return "gold";
    case SampleSource::pseudo: return "pseudo";
    case SampleSource::perturbed: return "perturbed";
  }
  return "gold";
}

inline SampleSource sample_source_from_string(const std::string& s) {
  if (s == "gold") return SampleSource::gold;
  if (s == "pseudo") return SampleSource::pseudo;
  if (s == "perturbed") return SampleSource::perturbed;
  throw SchemaError("unknown sample source '" + s + "'");
}

// Entity type handed to prompt construction and ingestion. `dataset_label`
// is the IOB2 tag suffix (e.g. "Chemical"); `name` the prose form used in
// prompts; `plural` defaults to name + "s" when left empty.
struct EntityTypeSpec {
  std::string name;
  std::string plural;
  std::string dataset_label;
  std::string definition;
  std::string exclusions;  // optional "genes and proteins, and diseases"

  std::string plural_or_default() const { return plural.empty() ? name + "s" : plural; }

  std::string capitalized_name() const {
    std::string s = name;
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
  }
};

struct AnnotatedSample {
  std::string id;
  std::vector<Token> tokens;
  std::vector<std::string> tags;
  std::vector<EntityMention> mentions;
  SampleSource source = SampleSource::gold;

  std::string text() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i].text;
    }
    return out;
  }

  std::vector<std::string> token_texts() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const Token& t : tokens) out.push_back(t.text);
    return out;
  }

  std::vector<std::string> mention_surfaces() const {
    std::vector<std::string> out;
    out.reserve(mentions.size());
    for (const EntityMention& m : mentions) out.push_back(m.surface);
    return out;
  }

  std::vector<Chunk> gold_chunks() const {
    std::vector<Chunk> out;
    for (const EntityMention& m : mentions)
      if (m.span) out.push_back(Chunk{m.span->start, m.span->end, m.entity_type});
    return out;
  }
};

enum class SplitName { train, test };

inline std::string to_string(SplitName n) { return n == SplitName::train ? "train" : "test"; }

struct SplitStats {
  std::size_t count = 0;
  double avg_words_per_entity = 0.0;
  double null_ratio = 0.0;
};

struct DatasetSplit {
  SplitName name = SplitName::train;
  std::vector<AnnotatedSample> samples;
  SplitStats stats;
};

// Mentions exactly as the chunker reads the tags, surfaces joined with a
// single space. Length mismatch is a schema error.
inline std::vector<EntityMention> derive_mentions(const std::vector<std::string>& tags,
                                                  const std::vector<Token>& tokens,
                                                  bool lenient = true) {
  if (tags.size() != tokens.size())
    throw SchemaError("tags/tokens length mismatch (" + std::to_string(tags.size()) + " vs " +
                      std::to_string(tokens.size()) + ")");
  std::vector<EntityMention> mentions;
  for (const Chunk& c : extract_chunks(tags, lenient)) {
    std::string surface;
    for (std::size_t i = c.start; i <= c.end; ++i) {
      if (i > c.start) surface += ' ';
      surface += tokens[i].text;
    }
    mentions.push_back(EntityMention{surface, TokenSpan{c.start, c.end}, c.entity_type});
  }
  return mentions;
}

inline AlignmentResult align_predictions(const std::vector<std::string>& predicted_surfaces,
                                         const AnnotatedSample& sample,
                                         const std::string& entity_type = "") {
  return align_predictions(predicted_surfaces, sample.token_texts(), entity_type);
}

inline SplitStats compute_stats(const std::vector<AnnotatedSample>& samples) {
  SplitStats stats;
  stats.count = samples.size();
  std::size_t mention_count = 0;
  std::size_t word_total = 0;
  std::size_t null_samples = 0;
  for (const AnnotatedSample& s : samples) {
    if (s.mentions.empty()) ++null_samples;
    for (const EntityMention& m : s.mentions) {
      ++mention_count;
      if (m.span)
        word_total += m.span->end - m.span->start + 1;
      else
        word_total += detail::split_whitespace(m.surface).size();
    }
  }
  stats.avg_words_per_entity =
      mention_count ? static_cast<double>(word_total) / static_cast<double>(mention_count) : 0.0;
  stats.null_ratio =
      samples.empty() ? 0.0 : static_cast<double>(null_samples) / static_cast<double>(samples.size());
  return stats;
}

inline SplitStats compute_stats(const DatasetSplit& split) { return compute_stats(split.samples); }

namespace detail {

inline void validate_sample(const AnnotatedSample& s, const std::string& where, bool lenient = true) {
  if (s.tags.size() != s.tokens.size())
    throw SchemaError(where + ": tags/tokens length mismatch in sample '" + s.id + "'");
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (s.tokens[i].text.empty())
      throw SchemaError(where + ": empty token in sample '" + s.id + "'");
    if (s.tokens[i].text.find('\n') != std::string::npos)
      throw SchemaError(where + ": token with newline in sample '" + s.id + "'");
    if (s.tokens[i].index != i)
      throw SchemaError(where + ": non-consecutive token index in sample '" + s.id + "'");
  }
  for (const std::string& tag : s.tags)
    if (!iob2::is_valid_tag(tag))
      throw SchemaError(where + ": invalid IOB2 tag '" + tag + "' in sample '" + s.id + "'");
  // Perturbed samples intentionally decouple label surfaces from the text,
  // so the tags round trip is only enforced for gold and pseudo sources.
  if (s.source != SampleSource::perturbed) {
    const std::vector<EntityMention> derived = derive_mentions(s.tags, s.tokens, lenient);
    if (derived != s.mentions)
      throw SchemaError(where + ": mentions do not round-trip through the tags in sample '" +
                        s.id + "'");
  }
}

}  // namespace detail

// --- CoNLL ingestion -------------------------------------------------------
//
// UTF-8, one "token<TAB>tag" per line, blank line between sentences. When the
// entity type carries a dataset_label, every non-O tag must use that suffix.

inline DatasetSplit load_conll(const std::string& path, const EntityTypeSpec& entity_type,
                               SplitName name = SplitName::train, bool lenient = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");

  DatasetSplit split;
  split.name = name;
  std::vector<Token> tokens;
  std::vector<std::string> tags;
  std::size_t line_no = 0;

  auto flush_sentence = [&] {
    if (tokens.empty()) return;
    AnnotatedSample s;
    s.id = "s" + std::to_string(split.samples.size());
    s.tokens = std::move(tokens);
    s.tags = std::move(tags);
    s.mentions = derive_mentions(s.tags, s.tokens, lenient);
    s.source = SampleSource::gold;
    split.samples.push_back(std::move(s));
    tokens.clear();
    tags.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush_sentence();
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'token<TAB>tag'");
    const std::string token_text = line.substr(0, tab);
    const std::string tag = line.substr(tab + 1);
    if (tag.find('\t') != std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected exactly one tab");
    if (!iob2::is_valid_tag(tag))
      throw SchemaError(path + ":" + std::to_string(line_no) + ": tag '" + tag +
                        "' does not match O | B-<type> | I-<type>");
    if (tag != "O" && !entity_type.dataset_label.empty() &&
        iob2::tag_type(tag) != entity_type.dataset_label)
      throw SchemaError(path + ":" + std::to_string(line_no) + ": tag type '" +
                        iob2::tag_type(tag) + "' does not match dataset label '" +
                        entity_type.dataset_label + "'");
    tokens.push_back(Token{token_text, tokens.size()});
    tags.push_back(tag);
  }
  flush_sentence();
  split.stats = compute_stats(split.samples);
  return split;
}

// --- Canonical JSONL -------------------------------------------------------
//
// One sample per line: {id, tokens, tags, mentions, source} in that order,
// compact separators, LF line endings. Loading then re-serializing a file the
// toolkit wrote is byte-identical; golden tests rely on that.

inline nlohmann::ordered_json sample_to_json(const AnnotatedSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  nlohmann::ordered_json toks = nlohmann::ordered_json::array();
  for (const Token& t : s.tokens) toks.push_back(t.text);
  j["tokens"] = std::move(toks);
  j["tags"] = s.tags;
  nlohmann::ordered_json ms = nlohmann::ordered_json::array();
  for (const EntityMention& m : s.mentions) {
    nlohmann::ordered_json mj;
    mj["surface"] = m.surface;
    if (m.span)
      mj["span"] = nlohmann::ordered_json::array({m.span->start, m.span->end});
    else
      mj["span"] = nullptr;
    mj["type"] = m.entity_type;
    ms.push_back(std::move(mj));
  }
  j["mentions"] = std::move(ms);
  j["source"] = to_string(s.source);
  return j;
}

inline AnnotatedSample sample_from_json(const nlohmann::json& j, const std::string& where,
                                        bool validate = true) {
  static const std::vector<std::string> known = {"id", "tokens", "tags", "mentions", "source"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const std::string& k : known) ok = ok || it.key() == k;
    if (!ok) throw SchemaError(where + ": unknown field '" + it.key() + "'");
  }
  for (const std::string& k : known)
    if (!j.contains(k)) throw SchemaError(where + ": missing field '" + k + "'");

  AnnotatedSample s;
  s.id = j.at("id").get<std::string>();
  for (const auto& t : j.at("tokens"))
    s.tokens.push_back(Token{t.get<std::string>(), s.tokens.size()});
  s.tags = j.at("tags").get<std::vector<std::string>>();
  for (const auto& mj : j.at("mentions")) {
    EntityMention m;
    m.surface = mj.at("surface").get<std::string>();
    if (!mj.at("span").is_null()) {
      const auto& sp = mj.at("span");
      if (!sp.is_array() || sp.size() != 2) throw SchemaError(where + ": span must be [start, end]");
      m.span = TokenSpan{sp[0].get<std::size_t>(), sp[1].get<std::size_t>()};
      if (m.span->start > m.span->end || m.span->end >= s.tokens.size())
        throw SchemaError(where + ": span out of range in sample '" + s.id + "'");
    }
    m.entity_type = mj.at("type").get<std::string>();
    s.mentions.push_back(std::move(m));
  }
  s.source = sample_source_from_string(j.at("source").get<std::string>());
  if (validate) detail::validate_sample(s, where);
  return s;
}

inline std::string serialize_jsonl(const std::vector<AnnotatedSample>& samples) {
  std::string out;
  for (const AnnotatedSample& s : samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline void save_jsonl(const std::vector<AnnotatedSample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << serialize_jsonl(samples);
}

inline std::vector<AnnotatedSample> load_jsonl_samples(const std::string& path,
                                                       bool validate = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<AnnotatedSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    samples.push_back(sample_from_json(j, where, validate));
  }
  return samples;
}

inline DatasetSplit load_jsonl(const std::string& path, SplitName name = SplitName::train,
                               bool validate = true) {
  DatasetSplit split;
  split.name = name;
  split.samples = load_jsonl_samples(path, validate);
  split.stats = compute_stats(split.samples);
  return split;
}

}  // namespace picle
