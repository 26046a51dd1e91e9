#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "picle/corpus.hpp"
#include "picle/embedding.hpp"
#include "picle/errors.hpp"
#include "picle/llm_gateway.hpp"
#include "picle/neighborhood.hpp"
#include "picle/promptcraft.hpp"
#include "picle/rng.hpp"
#include "picle/sequence_eval.hpp"

namespace picle {

// --- Label perturbations ----------------------------------------------------

enum class PerturbScheme { deletion, substitution, addition_substitution, deletion_substitution };

inline std::string to_string(PerturbScheme s) {
  switch (s) {
    case PerturbScheme::deletion: return "deletion";
    case PerturbScheme::substitution: return "substitution";
    case PerturbScheme::addition_substitution: return "addition_substitution";
    case PerturbScheme::deletion_substitution: return "deletion_substitution";
  }
  return "deletion";
}

inline PerturbScheme perturb_scheme_from_string(const std::string& s) {
  if (s == "deletion") return PerturbScheme::deletion;
  if (s == "substitution") return PerturbScheme::substitution;
  if (s == "addition_substitution") return PerturbScheme::addition_substitution;
  if (s == "deletion_substitution") return PerturbScheme::deletion_substitution;
  throw UsageError("unknown perturbation scheme '" + s +
                   "' (expected deletion, substitution, addition_substitution, or "
                   "deletion_substitution)");
}

inline const std::vector<double>& standard_perturbation_grid() {
  static const std::vector<double> grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  return grid;
}

struct PerturbationSpec {
  PerturbScheme scheme = PerturbScheme::deletion;
  double p = 0.1;
  std::uint64_t seed = 12345;
  std::vector<std::string> label_space;
  bool free_p = false;  // lifts the grid restriction to any p in [0, 1]

  void validate() const {
    if (free_p) {
      if (p < 0.0 || p > 1.0) throw UsageError("perturbation factor p must be in [0, 1]");
      return;
    }
    for (double g : standard_perturbation_grid())
      if (std::fabs(p - g) < 1e-9) return;
    throw UsageError("perturbation factor p must lie on the 0.1..0.9 grid (use free_p for "
                     "other values)");
  }
};

namespace detail {

// One stream per (seed, demo id, scheme name, p). p is keyed at micro
// resolution so 0.1 and 0.1000004 share a stream only if they round together.
inline Rng perturbation_stream(std::uint64_t seed, const std::string& demo_id,
                               const std::string& scheme_name, double p) {
  std::uint64_t s = mix_seed(seed, hash_str64(demo_id));
  s = mix_seed(s, hash_str64(scheme_name));
  s = mix_seed(s, static_cast<std::uint64_t>(std::llround(p * 1e6)));
  return Rng(s);
}

inline std::string draw_label(const std::vector<std::string>& label_space, Rng& rng) {
  return label_space[rng.next_below(label_space.size())];
}

}  // namespace detail

// Applies one perturbation scheme to a demonstration's gold surface list.
// Draw order is part of the contract:
//   deletion: one Bernoulli per entity, in order.
//   substitution: per entity, Bernoulli then (only if substituting) one
//     label-space index.
//   addition_substitution: first an addition pass over the gold entities
//     (Bernoulli, then index if adding), then a substitution pass; additions
//     are appended after the substituted originals.
//   deletion_substitution: per entity, deletion Bernoulli first; survivors
//     take a substitution Bernoulli and, if substituting, an index.
inline std::vector<std::string> perturb_labels(const AnnotatedSample& demo,
                                               const PerturbationSpec& spec) {
  spec.validate();
  const bool needs_labels = spec.scheme != PerturbScheme::deletion;
  if (needs_labels && spec.label_space.empty())
    throw UsageError("label_space must be non-empty for substitution schemes");

  Rng rng = detail::perturbation_stream(spec.seed, demo.id, to_string(spec.scheme), spec.p);
  const std::vector<std::string> gold = demo.mention_surfaces();
  std::vector<std::string> out;

  switch (spec.scheme) {
    case PerturbScheme::deletion:
      for (const std::string& g : gold)
        if (!rng.next_bernoulli(spec.p)) out.push_back(g);
      break;
    case PerturbScheme::substitution:
      for (const std::string& g : gold)
        out.push_back(rng.next_bernoulli(spec.p) ? detail::draw_label(spec.label_space, rng) : g);
      break;
    case PerturbScheme::addition_substitution: {
      std::vector<std::string> added;
      for (std::size_t i = 0; i < gold.size(); ++i)
        if (rng.next_bernoulli(spec.p)) added.push_back(detail::draw_label(spec.label_space, rng));
      for (const std::string& g : gold)
        out.push_back(rng.next_bernoulli(spec.p) ? detail::draw_label(spec.label_space, rng) : g);
      out.insert(out.end(), added.begin(), added.end());
      break;
    }
    case PerturbScheme::deletion_substitution:
      for (const std::string& g : gold) {
        if (rng.next_bernoulli(spec.p)) continue;
        out.push_back(rng.next_bernoulli(spec.p) ? detail::draw_label(spec.label_space, rng) : g);
      }
      break;
  }
  return out;
}

// --- Corruptions -------------------------------------------------------------

enum class CorruptionScheme {
  random_id_label,
  swapped_id_labels,
  random_ood_label,
  random_ood_label_from_text,
  corrupted_ood_text,
  corrupted_ood_text_and_label,
  corrupted_shuffled_ood_text,
  corrupted_shuffled_ood_text_and_label,
};

inline std::string to_string(CorruptionScheme s) {
  switch (s) {
    case CorruptionScheme::random_id_label: return "random_id_label";
    case CorruptionScheme::swapped_id_labels: return "swapped_id_labels";
    case CorruptionScheme::random_ood_label: return "random_ood_label";
    case CorruptionScheme::random_ood_label_from_text: return "random_ood_label_from_text";
    case CorruptionScheme::corrupted_ood_text: return "corrupted_ood_text";
    case CorruptionScheme::corrupted_ood_text_and_label: return "corrupted_ood_text_and_label";
    case CorruptionScheme::corrupted_shuffled_ood_text: return "corrupted_shuffled_ood_text";
    case CorruptionScheme::corrupted_shuffled_ood_text_and_label:
      return "corrupted_shuffled_ood_text_and_label";
  }
  return "random_id_label";
}

inline CorruptionScheme corruption_scheme_from_string(const std::string& s) {
  if (s == "random_id_label") return CorruptionScheme::random_id_label;
  if (s == "swapped_id_labels") return CorruptionScheme::swapped_id_labels;
  if (s == "random_ood_label") return CorruptionScheme::random_ood_label;
  if (s == "random_ood_label_from_text") return CorruptionScheme::random_ood_label_from_text;
  if (s == "corrupted_ood_text") return CorruptionScheme::corrupted_ood_text;
  if (s == "corrupted_ood_text_and_label") return CorruptionScheme::corrupted_ood_text_and_label;
  if (s == "corrupted_shuffled_ood_text") return CorruptionScheme::corrupted_shuffled_ood_text;
  if (s == "corrupted_shuffled_ood_text_and_label")
    return CorruptionScheme::corrupted_shuffled_ood_text_and_label;
  throw UsageError(
      "unknown corruption scheme '" + s +
      "' (expected random_id_label, swapped_id_labels, random_ood_label, "
      "random_ood_label_from_text, corrupted_ood_text, corrupted_ood_text_and_label, "
      "corrupted_shuffled_ood_text, or corrupted_shuffled_ood_text_and_label)");
}

struct CorruptionSpec {
  CorruptionScheme scheme = CorruptionScheme::random_id_label;
  std::uint64_t seed = 12345;
  std::vector<std::string> label_space;
  std::vector<std::vector<std::string>> donor_label_sets;
  std::vector<std::string> ood_wordlist;

  void validate() const {
    switch (scheme) {
      case CorruptionScheme::random_id_label:
        if (label_space.empty()) throw UsageError("random_id_label needs a non-empty label_space");
        break;
      case CorruptionScheme::swapped_id_labels:
        if (donor_label_sets.empty())
          throw UsageError("swapped_id_labels needs non-empty donor_label_sets");
        break;
      case CorruptionScheme::random_ood_label:
      case CorruptionScheme::corrupted_ood_text:
      case CorruptionScheme::corrupted_ood_text_and_label:
      case CorruptionScheme::corrupted_shuffled_ood_text:
      case CorruptionScheme::corrupted_shuffled_ood_text_and_label:
        if (ood_wordlist.empty()) throw UsageError("OOD schemes need a non-empty ood_wordlist");
        break;
      case CorruptionScheme::random_ood_label_from_text:
        break;
    }
  }
};

struct CorruptedDemo {
  AnnotatedSample sample;
  bool unchanged_warning = false;
};

inline std::vector<std::string> load_wordlist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open wordlist file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  if (words.empty()) throw UsageError("wordlist file is empty: " + path);
  return words;
}

namespace detail {

inline bool punctuation_only(const std::string& token) {
  for (unsigned char c : token)
    if (std::isalnum(c)) return false;
  return true;
}

// The shuffled schemes reuse their unshuffled counterpart's stream for all
// replacement draws so the two differ only in token order.
inline CorruptionScheme corruption_base(CorruptionScheme s) {
  if (s == CorruptionScheme::corrupted_shuffled_ood_text)
    return CorruptionScheme::corrupted_ood_text;
  if (s == CorruptionScheme::corrupted_shuffled_ood_text_and_label)
    return CorruptionScheme::corrupted_ood_text_and_label;
  return s;
}

inline AnnotatedSample spanless_relabel(const AnnotatedSample& demo,
                                        const std::vector<std::string>& surfaces,
                                        const std::string& entity_type) {
  AnnotatedSample out;
  out.id = demo.id;
  out.tokens = demo.tokens;
  out.tags.assign(demo.tokens.size(), "O");
  for (const std::string& s : surfaces)
    out.mentions.push_back(EntityMention{s, std::nullopt, entity_type});
  out.source = SampleSource::perturbed;
  return out;
}

}  // namespace detail

// Rewrites a demonstration's labels and/or text per the corruption scheme.
// Output samples carry source=perturbed, all-O tags, and span-less mentions;
// they render in prompts exactly like any demonstration. A from_text
// corruption with no eligible replacement token returns the demo unchanged
// with the warning flag set.
inline CorruptedDemo corrupt_demo(const AnnotatedSample& demo, const CorruptionSpec& spec) {
  spec.validate();
  const CorruptionScheme base = detail::corruption_base(spec.scheme);
  // The label-variant shares the text-corruption stream so the same
  // replacement words land in the text either way.
  const CorruptionScheme stream = base == CorruptionScheme::corrupted_ood_text_and_label
                                      ? CorruptionScheme::corrupted_ood_text
                                      : base;
  Rng rng(mix_seed(mix_seed(spec.seed, hash_str64(demo.id)), hash_str64(to_string(stream))));

  const std::string entity_type =
      demo.mentions.empty() ? std::string() : demo.mentions[0].entity_type;
  CorruptedDemo out;

  switch (base) {
    case CorruptionScheme::random_id_label: {
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < demo.mentions.size(); ++i)
        labels.push_back(detail::draw_label(spec.label_space, rng));
      out.sample = detail::spanless_relabel(demo, labels, entity_type);
      return out;
    }
    case CorruptionScheme::swapped_id_labels: {
      const auto& donor = spec.donor_label_sets[rng.next_below(spec.donor_label_sets.size())];
      out.sample = detail::spanless_relabel(demo, donor, entity_type);
      return out;
    }
    case CorruptionScheme::random_ood_label: {
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < demo.mentions.size(); ++i)
        labels.push_back(detail::draw_label(spec.ood_wordlist, rng));
      out.sample = detail::spanless_relabel(demo, labels, entity_type);
      return out;
    }
    case CorruptionScheme::random_ood_label_from_text: {
      std::vector<bool> inside(demo.tokens.size(), false);
      for (const EntityMention& m : demo.mentions)
        if (m.span)
          for (std::size_t t = m.span->start; t <= m.span->end && t < inside.size(); ++t)
            inside[t] = true;
      std::vector<std::string> candidates;
      for (const Token& t : demo.tokens)
        if (!inside[t.index] && !detail::punctuation_only(t.text)) candidates.push_back(t.text);
      if (candidates.empty()) {
        out.sample = demo;
        out.unchanged_warning = true;
        return out;
      }
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < demo.mentions.size(); ++i)
        labels.push_back(detail::draw_label(candidates, rng));
      out.sample = detail::spanless_relabel(demo, labels, entity_type);
      return out;
    }
    case CorruptionScheme::corrupted_ood_text:
    case CorruptionScheme::corrupted_ood_text_and_label:
      break;
    default:
      break;
  }

  // Text corruption: every spanned mention occurrence collapses, left to
  // right, into one freshly drawn OOD word. Mentions without spans keep
  // their slot in the label list but cannot be replaced in text.
  std::vector<std::string> replacements(demo.mentions.size());
  for (std::size_t i = 0; i < demo.mentions.size(); ++i)
    replacements[i] = detail::draw_label(spec.ood_wordlist, rng);

  std::vector<int> replace_at(demo.tokens.size(), -1);
  std::vector<bool> drop(demo.tokens.size(), false);
  for (std::size_t i = 0; i < demo.mentions.size(); ++i) {
    const auto& span = demo.mentions[i].span;
    if (!span || span->start >= demo.tokens.size()) continue;
    replace_at[span->start] = static_cast<int>(i);
    for (std::size_t t = span->start + 1; t <= span->end && t < demo.tokens.size(); ++t)
      drop[t] = true;
  }

  std::vector<Token> tokens;
  for (const Token& t : demo.tokens) {
    if (drop[t.index]) continue;
    const std::string text = replace_at[t.index] >= 0
                                 ? replacements[static_cast<std::size_t>(replace_at[t.index])]
                                 : t.text;
    tokens.push_back(Token{text, tokens.size()});
  }

  if (spec.scheme == CorruptionScheme::corrupted_shuffled_ood_text ||
      spec.scheme == CorruptionScheme::corrupted_shuffled_ood_text_and_label) {
    Rng shuffle_rng(mix_seed(mix_seed(spec.seed, hash_str64(demo.id)), hash_str64("shuffle")));
    shuffle_in_place(tokens, shuffle_rng);
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].index = i;
  }

  const bool relabel = base == CorruptionScheme::corrupted_ood_text_and_label;
  out.sample.id = demo.id;
  out.sample.tokens = std::move(tokens);
  out.sample.tags.assign(out.sample.tokens.size(), "O");
  for (std::size_t i = 0; i < demo.mentions.size(); ++i)
    out.sample.mentions.push_back(EntityMention{
        relabel ? replacements[i] : demo.mentions[i].surface, std::nullopt, entity_type});
  out.sample.source = SampleSource::perturbed;
  return out;
}

// --- Perturbation study -------------------------------------------------------

struct PerturbationStudyRow {
  std::string scheme;
  double p = 0.0;
  double demo_precision = 0.0;
  double demo_recall = 0.0;
  double demo_f1 = 0.0;
  double demo_mean_entities = 0.0;
  double pred_precision = 0.0;
  double pred_recall = 0.0;
  double pred_f1 = 0.0;
};

struct PerturbationStudyConfig {
  std::vector<PerturbScheme> schemes = {PerturbScheme::deletion, PerturbScheme::substitution,
                                        PerturbScheme::addition_substitution,
                                        PerturbScheme::deletion_substitution};
  std::vector<double> grid = standard_perturbation_grid();
  bool free_p = false;
  std::uint64_t seed = 12345;
  std::size_t k_demos = 10;
  std::string model = "scripted";
  DecodingParams decoding;
  std::size_t max_in_flight = 4;
};

// Runs the demonstration-perturbation grid: retrieve 10 nearest gold
// demonstrations per query (text-only embeddings), perturb their labels at
// each (scheme, p), run few-shot detection, and score both the perturbed
// demonstration sets and the predictions. Queries without gold mentions are
// excluded. Rows come back in scheme-major, then p, order.
inline std::vector<PerturbationStudyRow> run_perturbation_study(
    const std::vector<AnnotatedSample>& test, const std::vector<AnnotatedSample>& gold_pool,
    const EntityTypeSpec& entity_type, const PerturbationStudyConfig& config, Embedder& embedder,
    Gateway& gateway, const PromptTemplates& templates = PromptTemplates::defaults()) {
  if (gold_pool.empty()) throw UsageError("perturbation study needs a non-empty gold pool");
  if (config.k_demos > gold_pool.size())
    throw UsageError("k_demos exceeds gold pool size");

  std::vector<const AnnotatedSample*> queries;
  for (const AnnotatedSample& s : test)
    if (!s.mentions.empty()) queries.push_back(&s);
  if (queries.empty())
    throw UsageError("perturbation study needs test samples with at least one gold mention");

  std::vector<std::string> pool_texts, query_texts;
  for (const AnnotatedSample& s : gold_pool) pool_texts.push_back(s.text());
  for (const AnnotatedSample* q : queries) query_texts.push_back(q->text());
  const std::vector<Embedding> pool_emb = embedder.embed_batch(pool_texts);
  const std::vector<Embedding> query_emb = embedder.embed_batch(query_texts);

  std::vector<std::vector<std::size_t>> demo_indices(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q)
    demo_indices[q] = knn_retrieve(query_emb[q], pool_emb, config.k_demos);

  std::vector<std::string> label_space;
  for (const AnnotatedSample& s : gold_pool)
    for (const EntityMention& m : s.mentions) label_space.push_back(m.surface);

  std::vector<PerturbationStudyRow> rows;
  for (PerturbScheme scheme : config.schemes) {
    for (double p : config.grid) {
      PerturbationSpec pspec;
      pspec.scheme = scheme;
      pspec.p = p;
      pspec.seed = config.seed;
      pspec.label_space = label_space;
      pspec.free_p = config.free_p;
      pspec.validate();

      std::vector<std::vector<std::string>> perturbed_sets, gold_sets;
      std::vector<GatewayCall> calls;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        std::vector<AnnotatedSample> demos;
        for (std::size_t di : demo_indices[q]) {
          const AnnotatedSample& demo = gold_pool[di];
          const std::vector<std::string> labels = perturb_labels(demo, pspec);
          perturbed_sets.push_back(labels);
          gold_sets.push_back(demo.mention_surfaces());
          demos.push_back(detail::spanless_relabel(demo, labels, entity_type.name));
        }
        GatewayCall call;
        call.request = build_ned_prompt(*queries[q], demos, entity_type, templates);
        call.request.model = config.model;
        call.request.decoding = config.decoding;
        calls.push_back(std::move(call));
      }

      const std::vector<Outcome> outcomes = gateway.complete_many(calls, config.max_in_flight);
      std::vector<std::vector<Chunk>> gold_chunks;
      std::vector<AlignmentResult> alignments;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        gold_chunks.push_back(queries[q]->gold_chunks());
        std::vector<std::string> surfaces;
        if (outcomes[q].ok) surfaces = parse_ned_response(outcomes[q].text).surfaces;
        alignments.push_back(
            align_predictions(surfaces, queries[q]->token_texts(), entity_type.dataset_label));
      }

      const MetricReport demo_report = score_demonstration_set(perturbed_sets, gold_sets);
      const MetricReport pred_report = score_micro(gold_chunks, alignments);
      double total_entities = 0.0;
      for (const auto& set : perturbed_sets) total_entities += static_cast<double>(set.size());

      PerturbationStudyRow row;
      row.scheme = to_string(scheme);
      row.p = p;
      row.demo_precision = demo_report.precision;
      row.demo_recall = demo_report.recall;
      row.demo_f1 = demo_report.f1;
      row.demo_mean_entities =
          perturbed_sets.empty() ? 0.0 : total_entities / static_cast<double>(perturbed_sets.size());
      row.pred_precision = pred_report.precision;
      row.pred_recall = pred_report.recall;
      row.pred_f1 = pred_report.f1;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string study_rows_to_csv(const std::vector<PerturbationStudyRow>& rows) {
  std::string out =
      "scheme,p,demo_precision,demo_recall,demo_f1,demo_mean_entities,"
      "pred_precision,pred_recall,pred_f1\n";
  char buf[256];
  for (const PerturbationStudyRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.scheme.c_str(), r.p, r.demo_precision, r.demo_recall, r.demo_f1,
                  r.demo_mean_entities, r.pred_precision, r.pred_recall, r.pred_f1);
    out += buf;
  }
  return out;
}

}  // namespace picle
