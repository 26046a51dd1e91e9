#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "picle/errors.hpp"

namespace picle {

// One labeled span of tokens, inclusive on both ends.
struct Chunk {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string entity_type;

  friend bool operator==(const Chunk&, const Chunk&) = default;
  friend auto operator<=>(const Chunk&, const Chunk&) = default;
};

struct MetricReport {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static MetricReport from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
    MetricReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tp"] = tp;
    j["fp"] = fp;
    j["fn"] = fn;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    return j;
  }
};

struct AlignedPrediction {
  std::size_t prediction_index = 0;
  Chunk chunk;
};

struct AlignmentResult {
  std::vector<AlignedPrediction> aligned;
  std::vector<std::string> unmatched_predictions;
};

namespace iob2 {

// Tag grammar: O | B-<type> | I-<type> with a non-empty type suffix.
inline bool is_valid_tag(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() < 3) return false;
  if (tag[0] != 'B' && tag[0] != 'I') return false;
  return tag[1] == '-';
}

inline std::string tag_type(const std::string& tag) { return tag.substr(2); }

}  // namespace iob2

// Decodes an IOB2 tag sequence into chunks. In lenient mode (the default,
// matching seqeval) an I- tag with no compatible open chunk starts a new
// chunk; in strict mode it is a schema error.
inline std::vector<Chunk> extract_chunks(const std::vector<std::string>& tags,
                                         bool lenient = true) {
  std::vector<Chunk> chunks;
  bool open = false;
  Chunk current;
  auto close = [&] {
    if (open) chunks.push_back(current);
    open = false;
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (!iob2::is_valid_tag(tag))
      throw SchemaError("invalid IOB2 tag '" + tag + "' at position " + std::to_string(i));
    if (tag == "O") {
      close();
      continue;
    }
    const std::string type = iob2::tag_type(tag);
    if (tag[0] == 'B') {
      close();
      current = Chunk{i, i, type};
      open = true;
    } else {  // I-
      if (open && current.entity_type == type) {
        current.end = i;
      } else if (lenient) {
        close();
        current = Chunk{i, i, type};
        open = true;
      } else {
        throw SchemaError("I-" + type + " at position " + std::to_string(i) +
                          " has no matching B- tag (strict mode)");
      }
    }
  }
  close();
  return chunks;
}

// Inverse of extract_chunks for non-overlapping chunks sorted by start.
inline std::vector<std::string> tags_from_chunks(const std::vector<Chunk>& chunks,
                                                 std::size_t length) {
  std::vector<std::string> tags(length, "O");
  std::size_t last_end = 0;
  bool any = false;
  for (const Chunk& c : chunks) {
    if (c.start > c.end || c.end >= length)
      throw UsageError("chunk span out of range");
    if (any && c.start <= last_end)
      throw UsageError("overlapping or unsorted chunks");
    tags[c.start] = "B-" + c.entity_type;
    for (std::size_t i = c.start + 1; i <= c.end; ++i) tags[i] = "I-" + c.entity_type;
    last_end = c.end;
    any = true;
  }
  return tags;
}

namespace detail {

inline std::vector<std::string> split_whitespace(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

// Maps generatively predicted surface strings onto token spans. Each
// prediction is matched, in order, to the earliest contiguous token run whose
// single-space join equals the surface (case-sensitive) and whose exact span
// has not been claimed by an earlier prediction. Predictions with no match
// are recorded, not dropped.
inline AlignmentResult align_predictions(const std::vector<std::string>& predicted_surfaces,
                                         const std::vector<std::string>& tokens,
                                         const std::string& entity_type = "") {
  AlignmentResult result;
  std::set<std::pair<std::size_t, std::size_t>> consumed;
  for (std::size_t pi = 0; pi < predicted_surfaces.size(); ++pi) {
    const std::vector<std::string> words = detail::split_whitespace(predicted_surfaces[pi]);
    bool matched = false;
    if (!words.empty() && words.size() <= tokens.size()) {
      for (std::size_t start = 0; start + words.size() <= tokens.size(); ++start) {
        bool eq = true;
        for (std::size_t k = 0; k < words.size(); ++k) {
          if (tokens[start + k] != words[k]) {
            eq = false;
            break;
          }
        }
        if (!eq) continue;
        const std::pair<std::size_t, std::size_t> span{start, start + words.size() - 1};
        if (consumed.count(span)) continue;
        consumed.insert(span);
        result.aligned.push_back({pi, Chunk{span.first, span.second, entity_type}});
        matched = true;
        break;
      }
    }
    if (!matched) result.unmatched_predictions.push_back(predicted_surfaces[pi]);
  }
  return result;
}

// Micro-averaged exact-span scoring. A prediction counts as a true positive
// only if its (span, type) pair is present in the gold multiset; unmatched
// prediction surfaces each count one false positive.
inline MetricReport score_micro(const std::vector<std::vector<Chunk>>& gold,
                                const std::vector<AlignmentResult>& pred) {
  if (gold.size() != pred.size())
    throw UsageError("score_micro: gold and prediction lists differ in length (" +
                     std::to_string(gold.size()) + " vs " + std::to_string(pred.size()) + ")");
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::map<std::tuple<std::size_t, std::size_t, std::string>, std::uint64_t> remaining;
    for (const Chunk& g : gold[i]) ++remaining[{g.start, g.end, g.entity_type}];
    for (const AlignedPrediction& ap : pred[i].aligned) {
      auto it = remaining.find({ap.chunk.start, ap.chunk.end, ap.chunk.entity_type});
      if (it != remaining.end() && it->second > 0) {
        ++tp;
        --it->second;
      } else {
        ++fp;
      }
    }
    fp += pred[i].unmatched_predictions.size();
    for (const auto& [key, count] : remaining) fn += count;
  }
  return MetricReport::from_counts(tp, fp, fn);
}

// Scores perturbed demonstration label sets against the gold label sets they
// were derived from. Labels are compared as surface strings with multiset
// semantics; spans play no role here.
inline MetricReport score_demonstration_set(const std::vector<std::vector<std::string>>& perturbed,
                                            const std::vector<std::vector<std::string>>& gold) {
  if (perturbed.size() != gold.size())
    throw UsageError("score_demonstration_set: perturbed and gold lists differ in length");
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::map<std::string, std::uint64_t> remaining;
    for (const std::string& g : gold[i]) ++remaining[g];
    for (const std::string& s : perturbed[i]) {
      auto it = remaining.find(s);
      if (it != remaining.end() && it->second > 0) {
        ++tp;
        --it->second;
      } else {
        ++fp;
      }
    }
    for (const auto& [key, count] : remaining) fn += count;
  }
  return MetricReport::from_counts(tp, fp, fn);
}

}  // namespace picle
