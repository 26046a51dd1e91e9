#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "picle/corpus.hpp"
#include "picle/embedding.hpp"
#include "picle/errors.hpp"
#include "picle/llm_gateway.hpp"
#include "picle/neighborhood.hpp"
#include "picle/promptcraft.hpp"
#include "picle/rng.hpp"
#include "picle/sequence_eval.hpp"

namespace picle {

enum class Aggregation { union_then_verify, llm_merge };

inline std::string to_string(Aggregation a) {
  return a == Aggregation::llm_merge ? "llm_merge" : "union_then_verify";
}

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "union_then_verify") return Aggregation::union_then_verify;
  if (s == "llm_merge") return Aggregation::llm_merge;
  throw UsageError("unknown aggregation '" + s +
                   "' (expected union_then_verify or llm_merge)");
}

enum class InferMethod { picle, zero_shot, gold_icl, multirun_zero_shot };

inline std::string to_string(InferMethod m) {
  switch (m) {
    case InferMethod::picle: return "picle";
    case InferMethod::zero_shot: return "zero_shot";
    case InferMethod::gold_icl: return "gold_icl";
    case InferMethod::multirun_zero_shot: return "multirun_zero_shot";
  }
  return "picle";
}

inline InferMethod infer_method_from_string(const std::string& s) {
  if (s == "picle") return InferMethod::picle;
  if (s == "zero_shot") return InferMethod::zero_shot;
  if (s == "gold_icl") return InferMethod::gold_icl;
  if (s == "multirun_zero_shot") return InferMethod::multirun_zero_shot;
  throw UsageError("unknown method '" + s +
                   "' (expected picle, zero_shot, gold_icl, or multirun_zero_shot)");
}

struct PicleConfig {
  std::size_t pool_size = 1000;
  std::size_t k_clusters = 5;
  std::size_t k_demos = 10;
  DecodingParams pseudo_decoding;
  DecodingParams inference_decoding;
  bool self_verify_pseudo = true;
  bool self_verify_final = true;
  Aggregation aggregation = Aggregation::union_then_verify;
  std::vector<std::uint64_t> seeds = {12345, 24690, 37035, 49380, 61725};
  std::string model = "scripted";
  std::size_t max_in_flight = 4;
  bool reverse_demo_order = false;

  void validate() const {
    if (pool_size < 1) throw UsageError("pool_size must be >= 1");
    if (k_clusters < 1) throw UsageError("k_clusters must be >= 1");
    if (k_demos < 1) throw UsageError("k_demos must be >= 1");
    if (pool_size < k_clusters) throw UsageError("pool_size must be >= k_clusters");
    if (seeds.empty()) throw UsageError("seeds must be non-empty");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pool_size"] = pool_size;
    j["k_clusters"] = k_clusters;
    j["k_demos"] = k_demos;
    j["pseudo_decoding"] = {{"temperature", pseudo_decoding.temperature},
                            {"top_p", pseudo_decoding.top_p},
                            {"max_tokens", pseudo_decoding.max_tokens}};
    j["inference_decoding"] = {{"temperature", inference_decoding.temperature},
                               {"top_p", inference_decoding.top_p},
                               {"max_tokens", inference_decoding.max_tokens}};
    j["self_verify_pseudo"] = self_verify_pseudo;
    j["self_verify_final"] = self_verify_final;
    j["aggregation"] = to_string(aggregation);
    j["seeds"] = seeds;
    j["model"] = model;
    j["max_in_flight"] = max_in_flight;
    j["reverse_demo_order"] = reverse_demo_order;
    return j;
  }
};

// Record of what the annotator did with one attempted sample: the raw model
// output per run, the parsed surfaces, every verification verdict, and which
// surfaces were dropped because they could not be placed in the text.
struct PseudoProvenance {
  std::string id;
  std::vector<std::string> raw_responses;
  std::vector<std::string> parsed_surfaces;
  std::vector<std::pair<std::string, std::string>> verdicts;
  std::vector<std::string> dropped_unaligned;
  std::vector<std::string> dropped_overlapping;
  bool failed = false;
  std::string error;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["raw_responses"] = raw_responses;
    j["parsed_surfaces"] = parsed_surfaces;
    j["verdicts"] = nlohmann::ordered_json::array();
    for (const auto& [surface, decision] : verdicts)
      j["verdicts"].push_back({{"surface", surface}, {"decision", decision}});
    j["dropped_unaligned"] = dropped_unaligned;
    j["dropped_overlapping"] = dropped_overlapping;
    j["failed"] = failed;
    j["error"] = error;
    return j;
  }
};

struct PseudoPool {
  DemonstrationPool pool;
  std::vector<PseudoProvenance> provenance;  // one entry per attempted sample
  std::size_t failed_count = 0;
  bool aborted = false;
};

namespace detail {

inline void l2_normalize(Embedding& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm <= 0.0) return;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
}

inline std::string chunk_label(const EntityTypeSpec& spec) {
  return spec.dataset_label.empty() ? spec.name : spec.dataset_label;
}

inline std::vector<std::string> dedup_first_appearance(const std::vector<std::string>& surfaces) {
  std::vector<std::string> out;
  for (const std::string& s : surfaces)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

// Union across runs keeping, for each surface, its maximum per-run
// multiplicity; output ordered by first appearance across runs.
inline std::vector<std::string> union_max_multiplicity(
    const std::vector<std::vector<std::string>>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::size_t> max_count;
  for (const auto& run : runs) {
    std::map<std::string, std::size_t> counts;
    for (const std::string& s : run) {
      if (max_count.find(s) == max_count.end()) order.push_back(s);
      ++counts[s];
    }
    for (const auto& [s, c] : counts) max_count[s] = std::max(max_count[s], c);
  }
  std::vector<std::string> out;
  for (const std::string& s : order)
    out.insert(out.end(), max_count[s], s);
  return out;
}

// Batch self-verification: one call per (item, unique surface), greedy
// decoding. Returns per-item surface -> decision; failed calls read unknown.
inline std::vector<std::map<std::string, Decision>> verify_surfaces_batch(
    const std::vector<std::string>& context_texts,
    const std::vector<std::vector<std::string>>& surfaces_per_item, const EntityTypeSpec& spec,
    const std::string& model, Gateway& gateway, std::size_t max_in_flight,
    const PromptTemplates& templates,
    std::vector<std::vector<std::pair<std::string, std::string>>>* verdict_log = nullptr) {
  std::vector<GatewayCall> calls;
  std::vector<std::pair<std::size_t, std::string>> owners;
  for (std::size_t i = 0; i < surfaces_per_item.size(); ++i) {
    for (const std::string& surface : dedup_first_appearance(surfaces_per_item[i])) {
      if (surface.empty()) continue;
      GatewayCall call;
      call.request = build_verification_prompt(context_texts[i], surface, spec, templates);
      call.request.model = model;
      calls.push_back(std::move(call));
      owners.emplace_back(i, surface);
    }
  }
  const std::vector<Outcome> outcomes = gateway.complete_many(calls, max_in_flight);
  std::vector<std::map<std::string, Decision>> decisions(surfaces_per_item.size());
  if (verdict_log) verdict_log->resize(surfaces_per_item.size());
  for (std::size_t c = 0; c < calls.size(); ++c) {
    const auto& [item, surface] = owners[c];
    Decision d = Decision::unknown;
    if (outcomes[c].ok) d = parse_verdict(outcomes[c].text).decision;
    decisions[item][surface] = d;
    if (verdict_log) (*verdict_log)[item].emplace_back(surface, to_string(d));
  }
  return decisions;
}

inline std::vector<std::string> keep_yes(const std::vector<std::string>& surfaces,
                                         const std::map<std::string, Decision>& decisions) {
  std::vector<std::string> out;
  for (const std::string& s : surfaces) {
    const auto it = decisions.find(s);
    if (it != decisions.end() && it->second == Decision::yes) out.push_back(s);
  }
  return out;
}

// Aligns accepted surfaces back onto the sample's tokens and synthesizes a
// consistent tagged sample. Surfaces that match nowhere, or whose span would
// overlap an already accepted one, are dropped and reported.
inline AnnotatedSample build_pseudo_sample(const AnnotatedSample& original,
                                           const std::vector<std::string>& surfaces,
                                           const EntityTypeSpec& spec,
                                           std::vector<std::string>& dropped_unaligned,
                                           std::vector<std::string>& dropped_overlapping) {
  const std::string label = chunk_label(spec);
  const AlignmentResult aligned = align_predictions(surfaces, original.token_texts(), label);
  dropped_unaligned = aligned.unmatched_predictions;

  std::vector<Chunk> kept;
  for (const AlignedPrediction& ap : aligned.aligned) {
    bool overlaps = false;
    for (const Chunk& k : kept)
      if (ap.chunk.start <= k.end && k.start <= ap.chunk.end) {
        overlaps = true;
        break;
      }
    if (overlaps)
      dropped_overlapping.push_back(surfaces[ap.prediction_index]);
    else
      kept.push_back(ap.chunk);
  }
  std::sort(kept.begin(), kept.end(),
            [](const Chunk& a, const Chunk& b) { return a.start < b.start; });

  AnnotatedSample out;
  out.id = original.id;
  out.tokens = original.tokens;
  out.tags = tags_from_chunks(kept, original.tokens.size());
  out.mentions = derive_mentions(out.tags, out.tokens);
  out.source = SampleSource::pseudo;
  return out;
}

}  // namespace detail

// Zero-shot pseudo-annotation of up to config.pool_size samples, with
// optional per-entity self-verification. Transport failures mark a sample
// failed without stopping the run; past 50% failures the run aborts and the
// partial pool is returned with aborted set.
inline PseudoPool pseudo_annotate(const std::vector<AnnotatedSample>& unlabeled,
                                  const EntityTypeSpec& spec, const PicleConfig& config,
                                  Gateway& gateway,
                                  const PromptTemplates& templates = PromptTemplates::defaults()) {
  config.validate();
  const std::size_t take = std::min(config.pool_size, unlabeled.size());

  std::vector<GatewayCall> calls;
  for (std::size_t i = 0; i < take; ++i) {
    GatewayCall call;
    call.request = build_ned_prompt(unlabeled[i], {}, spec, templates);
    call.request.model = config.model;
    call.request.decoding = config.pseudo_decoding;
    calls.push_back(std::move(call));
  }
  const std::vector<Outcome> outcomes = gateway.complete_many(calls, config.max_in_flight);

  PseudoPool result;
  result.provenance.resize(take);
  std::vector<std::string> contexts(take);
  std::vector<std::vector<std::string>> parsed(take);
  for (std::size_t i = 0; i < take; ++i) {
    PseudoProvenance& prov = result.provenance[i];
    prov.id = unlabeled[i].id;
    contexts[i] = unlabeled[i].text();
    if (!outcomes[i].ok) {
      prov.failed = true;
      prov.error = outcomes[i].error;
      ++result.failed_count;
      continue;
    }
    prov.raw_responses.push_back(outcomes[i].text);
    parsed[i] = parse_ned_response(outcomes[i].text).surfaces;
    prov.parsed_surfaces = parsed[i];
  }

  if (2 * result.failed_count > take) {
    result.aborted = true;
    return result;
  }

  std::vector<std::vector<std::string>> kept = parsed;
  if (config.self_verify_pseudo) {
    std::vector<std::vector<std::pair<std::string, std::string>>> verdict_log;
    const auto decisions =
        detail::verify_surfaces_batch(contexts, parsed, spec, config.model, gateway,
                                      config.max_in_flight, templates, &verdict_log);
    for (std::size_t i = 0; i < take; ++i) {
      result.provenance[i].verdicts = verdict_log[i];
      kept[i] = detail::keep_yes(parsed[i], decisions[i]);
    }
  }

  for (std::size_t i = 0; i < take; ++i) {
    if (result.provenance[i].failed) continue;
    PseudoProvenance& prov = result.provenance[i];
    result.pool.samples.push_back(detail::build_pseudo_sample(
        unlabeled[i], kept[i], spec, prov.dropped_unaligned, prov.dropped_overlapping));
  }
  return result;
}

enum class MultirunPost { self_verify, llm_merge };

inline std::string to_string(MultirunPost p) {
  return p == MultirunPost::llm_merge ? "llm_merge" : "self_verify";
}

// Multi-run pseudo-annotation: `runs` sampled passes at temperature T, a
// union keeping each surface's maximum per-run multiplicity, then either
// per-entity self-verification or one model-side merge of the run lists.
// A sample fails only when every run fails.
inline PseudoPool pseudo_annotate_multirun(const std::vector<AnnotatedSample>& unlabeled,
                                           const EntityTypeSpec& spec, const PicleConfig& config,
                                           Gateway& gateway, std::size_t runs = 10,
                                           double temperature = 0.7,
                                           MultirunPost post = MultirunPost::self_verify,
                                           const PromptTemplates& templates =
                                               PromptTemplates::defaults()) {
  config.validate();
  if (runs < 2) throw UsageError("pseudo_annotate_multirun needs runs >= 2");
  const std::size_t take = std::min(config.pool_size, unlabeled.size());

  DecodingParams decoding = config.pseudo_decoding;
  decoding.temperature = temperature;

  std::vector<GatewayCall> calls;
  for (std::size_t i = 0; i < take; ++i) {
    for (std::size_t r = 0; r < runs; ++r) {
      GatewayCall call;
      call.request = build_ned_prompt(unlabeled[i], {}, spec, templates);
      call.request.model = config.model;
      call.request.decoding = decoding;
      call.run_index = static_cast<int>(r);
      calls.push_back(std::move(call));
    }
  }
  const std::vector<Outcome> outcomes = gateway.complete_many(calls, config.max_in_flight);

  PseudoPool result;
  result.provenance.resize(take);
  std::vector<std::string> contexts(take);
  std::vector<std::vector<std::vector<std::string>>> run_lists(take);
  std::vector<std::vector<std::string>> pooled(take);
  for (std::size_t i = 0; i < take; ++i) {
    PseudoProvenance& prov = result.provenance[i];
    prov.id = unlabeled[i].id;
    contexts[i] = unlabeled[i].text();
    std::size_t failures = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      const Outcome& o = outcomes[i * runs + r];
      if (!o.ok) {
        ++failures;
        if (!prov.error.empty()) prov.error += "; ";
        prov.error += "run " + std::to_string(r) + ": " + o.error;
        run_lists[i].push_back({});
        continue;
      }
      prov.raw_responses.push_back(o.text);
      run_lists[i].push_back(parse_ned_response(o.text).surfaces);
    }
    if (failures == runs) {
      prov.failed = true;
      ++result.failed_count;
      continue;
    }
    pooled[i] = detail::union_max_multiplicity(run_lists[i]);
    prov.parsed_surfaces = pooled[i];
  }

  if (2 * result.failed_count > take) {
    result.aborted = true;
    return result;
  }

  std::vector<std::vector<std::string>> kept = pooled;
  if (post == MultirunPost::self_verify) {
    std::vector<std::vector<std::pair<std::string, std::string>>> verdict_log;
    const auto decisions =
        detail::verify_surfaces_batch(contexts, pooled, spec, config.model, gateway,
                                      config.max_in_flight, templates, &verdict_log);
    for (std::size_t i = 0; i < take; ++i) {
      result.provenance[i].verdicts = verdict_log[i];
      kept[i] = detail::keep_yes(pooled[i], decisions[i]);
    }
  } else {
    std::vector<GatewayCall> merge_calls;
    std::vector<std::size_t> owners;
    for (std::size_t i = 0; i < take; ++i) {
      if (result.provenance[i].failed) continue;
      GatewayCall call;
      call.request = build_merge_prompt(run_lists[i], spec, templates);
      call.request.model = config.model;
      merge_calls.push_back(std::move(call));
      owners.push_back(i);
    }
    const std::vector<Outcome> merged = gateway.complete_many(merge_calls, config.max_in_flight);
    for (std::size_t c = 0; c < merged.size(); ++c) {
      const std::size_t i = owners[c];
      if (merged[c].ok) {
        result.provenance[i].raw_responses.push_back(merged[c].text);
        kept[i] = parse_ned_response(merged[c].text).surfaces;
      } else {
        if (!result.provenance[i].error.empty()) result.provenance[i].error += "; ";
        result.provenance[i].error += "merge: " + merged[c].error;
        kept[i] = pooled[i];
      }
    }
  }

  for (std::size_t i = 0; i < take; ++i) {
    if (result.provenance[i].failed) continue;
    PseudoProvenance& prov = result.provenance[i];
    result.pool.samples.push_back(detail::build_pseudo_sample(
        unlabeled[i], kept[i], spec, prov.dropped_unaligned, prov.dropped_overlapping));
  }
  return result;
}

// One query's trajectory through a seed pass: the raw per-round surface
// lists, their deduplicated union, and the post-verification final list.
struct QueryPrediction {
  std::string id;
  std::vector<std::vector<std::string>> per_cluster;
  std::vector<std::string> aggregated;
  std::vector<std::string> final_surfaces;
  std::vector<std::string> notes;

  nlohmann::ordered_json to_json(std::uint64_t seed) const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["id"] = id;
    j["per_cluster"] = per_cluster;
    j["aggregated"] = aggregated;
    j["final"] = final_surfaces;
    j["notes"] = notes;
    return j;
  }
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<QueryPrediction> predictions;
};

struct EvalSummary {
  std::vector<std::pair<std::uint64_t, MetricReport>> per_seed;
  double mean_precision = 0.0, mean_recall = 0.0, mean_f1 = 0.0;
  double std_precision = 0.0, std_recall = 0.0, std_f1 = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["per_seed"] = nlohmann::ordered_json::array();
    for (const auto& [seed, report] : per_seed) {
      nlohmann::ordered_json row;
      row["seed"] = seed;
      row["tp"] = report.tp;
      row["fp"] = report.fp;
      row["fn"] = report.fn;
      row["precision"] = report.precision;
      row["recall"] = report.recall;
      row["f1"] = report.f1;
      j["per_seed"].push_back(std::move(row));
    }
    j["mean"] = {{"precision", mean_precision}, {"recall", mean_recall}, {"f1", mean_f1}};
    j["std"] = {{"precision", std_precision}, {"recall", std_recall}, {"f1", std_f1}};
    return j;
  }

  std::string to_csv() const {
    std::string out = "seed,tp,fp,fn,precision,recall,f1\n";
    char buf[256];
    for (const auto& [seed, r] : per_seed) {
      std::snprintf(buf, sizeof(buf), "%llu,%llu,%llu,%llu,%.6f,%.6f,%.6f\n",
                    static_cast<unsigned long long>(seed),
                    static_cast<unsigned long long>(r.tp),
                    static_cast<unsigned long long>(r.fp),
                    static_cast<unsigned long long>(r.fn), r.precision, r.recall, r.f1);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,,,,%.6f,%.6f,%.6f\n", mean_precision, mean_recall,
                  mean_f1);
    out += buf;
    std::snprintf(buf, sizeof(buf), "std,,,,%.6f,%.6f,%.6f\n", std_precision, std_recall, std_f1);
    out += buf;
    return out;
  }
};

struct RunArtifact {
  nlohmann::ordered_json config_snapshot;
  std::vector<AnnotatedSample> pool_samples;
  std::vector<SeedRun> runs;
  std::optional<EvalSummary> metrics;
};

namespace detail {

struct NedRound {
  std::vector<GatewayCall> calls;
  // owner[i] = (query index, round index) of calls[i]
  std::vector<std::pair<std::size_t, std::size_t>> owner;
};

inline std::vector<AnnotatedSample> pick_demos(const std::vector<AnnotatedSample>& pool,
                                               const std::vector<std::size_t>& indices,
                                               bool reverse) {
  std::vector<AnnotatedSample> demos;
  demos.reserve(indices.size());
  for (std::size_t i : indices) demos.push_back(pool[i]);
  if (reverse) std::reverse(demos.begin(), demos.end());
  return demos;
}

// Shared tail of every inference variant: run the prepared NED calls, parse
// per-round lists, deduplicate, and optionally self-verify or model-merge.
inline std::vector<QueryPrediction> finish_seed_pass(
    const std::vector<AnnotatedSample>& queries, NedRound& round, std::size_t rounds_per_query,
    const EntityTypeSpec& spec, const PicleConfig& config, Gateway& gateway,
    const PromptTemplates& templates, bool verify_final, bool llm_merge) {
  const std::vector<Outcome> outcomes = gateway.complete_many(round.calls, config.max_in_flight);

  std::vector<QueryPrediction> predictions(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    predictions[q].id = queries[q].id;
    predictions[q].per_cluster.resize(rounds_per_query);
  }
  for (std::size_t c = 0; c < round.calls.size(); ++c) {
    const auto& [q, r] = round.owner[c];
    if (!outcomes[c].ok) {
      predictions[q].notes.push_back("round " + std::to_string(r) +
                                     " failed: " + outcomes[c].error);
      continue;
    }
    predictions[q].per_cluster[r] = parse_ned_response(outcomes[c].text).surfaces;
  }
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::string> all;
    for (const auto& list : predictions[q].per_cluster)
      all.insert(all.end(), list.begin(), list.end());
    predictions[q].aggregated = dedup_first_appearance(all);
  }

  if (llm_merge && rounds_per_query >= 2) {
    std::vector<GatewayCall> merge_calls;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      GatewayCall call;
      call.request = build_merge_prompt(predictions[q].per_cluster, spec, templates);
      call.request.model = config.model;
      merge_calls.push_back(std::move(call));
    }
    const std::vector<Outcome> merged = gateway.complete_many(merge_calls, config.max_in_flight);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      if (merged[q].ok) {
        predictions[q].final_surfaces = parse_ned_response(merged[q].text).surfaces;
      } else {
        predictions[q].notes.push_back("merge failed: " + merged[q].error);
        predictions[q].final_surfaces = predictions[q].aggregated;
      }
    }
    return predictions;
  }

  if (verify_final) {
    std::vector<std::string> contexts;
    std::vector<std::vector<std::string>> to_verify;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      contexts.push_back(queries[q].text());
      to_verify.push_back(predictions[q].aggregated);
    }
    const auto decisions = verify_surfaces_batch(contexts, to_verify, spec, config.model, gateway,
                                                 config.max_in_flight, templates);
    for (std::size_t q = 0; q < queries.size(); ++q)
      predictions[q].final_surfaces = keep_yes(predictions[q].aggregated, decisions[q]);
  } else {
    for (std::size_t q = 0; q < queries.size(); ++q)
      predictions[q].final_surfaces = predictions[q].aggregated;
  }
  return predictions;
}

}  // namespace detail

// Clusters the demonstration pool and returns normalized clustering
// embeddings alongside assignments. Clustering happens once, with the first
// seed, regardless of how many experiment seeds follow.
inline void cluster_pool(DemonstrationPool& pool, std::size_t k_clusters, std::uint64_t seed,
                         Embedder& embedder) {
  if (pool.samples.empty()) throw UsageError("cannot cluster an empty pool");
  if (pool.embeddings.size() != pool.samples.size()) {
    std::vector<std::string> inputs;
    inputs.reserve(pool.samples.size());
    for (const AnnotatedSample& s : pool.samples) inputs.push_back(clustering_input(s));
    pool.embeddings = embedder.embed_batch(inputs);
    for (Embedding& e : pool.embeddings) detail::l2_normalize(e);
  }
  const KMeansResult km = kmeans_cluster(pool.embeddings, k_clusters, seed);
  pool.cluster_ids = km.assignments;
}

// PICLe inference: per experiment seed, sample one demonstration set per
// cluster, run K detection rounds per query, union the predictions, and
// self-verify (or model-merge) the union.
inline RunArtifact run_picle(const std::vector<AnnotatedSample>& queries, DemonstrationPool pool,
                             const EntityTypeSpec& spec, const PicleConfig& config,
                             Gateway& gateway, Embedder& embedder,
                             const PromptTemplates& templates = PromptTemplates::defaults()) {
  config.validate();
  if (queries.empty()) throw UsageError("run_picle needs at least one query");
  if (pool.samples.size() < config.k_clusters)
    throw UsageError("pool smaller than k_clusters");
  if (!pool.cluster_ids) cluster_pool(pool, config.k_clusters, config.seeds[0], embedder);

  RunArtifact artifact;
  artifact.config_snapshot = config.to_json();
  artifact.config_snapshot["method"] = "picle";
  artifact.pool_samples = pool.samples;

  for (std::uint64_t seed : config.seeds) {
    const auto demo_sets =
        sp_kmeans_sample(*pool.cluster_ids, config.k_clusters, config.k_demos, seed);

    detail::NedRound round;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      for (std::size_t c = 0; c < config.k_clusters; ++c) {
        GatewayCall call;
        call.request = build_ned_prompt(
            queries[q],
            detail::pick_demos(pool.samples, demo_sets[c], config.reverse_demo_order), spec,
            templates);
        call.request.model = config.model;
        call.request.decoding = config.inference_decoding;
        round.calls.push_back(std::move(call));
        round.owner.emplace_back(q, c);
      }
    }

    SeedRun run;
    run.seed = seed;
    run.predictions = detail::finish_seed_pass(
        queries, round, config.k_clusters, spec, config, gateway, templates,
        config.self_verify_final, config.aggregation == Aggregation::llm_merge);
    artifact.runs.push_back(std::move(run));
  }
  return artifact;
}

// Baselines. zero_shot and multirun_zero_shot are seed-independent and
// produce a single pass; gold_icl runs one pass per seed with its own pool
// subsample and retrieval.
inline RunArtifact run_baseline(const std::vector<AnnotatedSample>& queries, InferMethod method,
                                const std::vector<AnnotatedSample>& gold_pool,
                                const EntityTypeSpec& spec, const PicleConfig& config,
                                const RetrievalConfig& retrieval, Gateway& gateway,
                                Embedder& embedder,
                                const PromptTemplates& templates = PromptTemplates::defaults()) {
  config.validate();
  if (queries.empty()) throw UsageError("inference needs at least one query");

  RunArtifact artifact;
  artifact.config_snapshot = config.to_json();
  artifact.config_snapshot["method"] = to_string(method);

  if (method == InferMethod::picle)
    throw UsageError("run_baseline does not handle method picle; use run_picle");

  if (method == InferMethod::zero_shot || method == InferMethod::multirun_zero_shot) {
    const bool multirun = method == InferMethod::multirun_zero_shot;
    const std::size_t rounds = multirun ? 10 : 1;
    DecodingParams decoding = config.inference_decoding;
    if (multirun) decoding.temperature = 0.8;

    detail::NedRound round;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      for (std::size_t r = 0; r < rounds; ++r) {
        GatewayCall call;
        call.request = build_ned_prompt(queries[q], {}, spec, templates);
        call.request.model = config.model;
        call.request.decoding = decoding;
        call.run_index = static_cast<int>(r);
        round.calls.push_back(std::move(call));
        round.owner.emplace_back(q, r);
      }
    }
    SeedRun run;
    run.seed = config.seeds[0];
    run.predictions =
        detail::finish_seed_pass(queries, round, rounds, spec, config, gateway, templates,
                                 config.self_verify_final, false);
    artifact.runs.push_back(std::move(run));
    return artifact;
  }

  // gold_icl
  if (gold_pool.empty()) throw UsageError("gold_icl needs a non-empty gold pool");
  retrieval.validate();
  if (retrieval.method == RetrievalMethod::sp_kmeans)
    throw UsageError("sp_kmeans retrieval belongs to the picle method");
  artifact.config_snapshot["retrieval"] = to_string(retrieval.method);

  std::vector<Embedding> pool_text_emb, query_text_emb, pool_cluster_emb;
  if (retrieval.method == RetrievalMethod::knn) {
    std::vector<std::string> texts;
    for (const AnnotatedSample& s : gold_pool) texts.push_back(s.text());
    pool_text_emb = embedder.embed_batch(texts);
    texts.clear();
    for (const AnnotatedSample& q : queries) texts.push_back(q.text());
    query_text_emb = embedder.embed_batch(texts);
  } else if (retrieval.method == RetrievalMethod::kmeans) {
    std::vector<std::string> inputs;
    for (const AnnotatedSample& s : gold_pool) inputs.push_back(clustering_input(s));
    pool_cluster_emb = embedder.embed_batch(inputs);
    for (Embedding& e : pool_cluster_emb) detail::l2_normalize(e);
  }

  for (std::uint64_t seed : config.seeds) {
    // Per-seed pool subsample, in draw order.
    std::vector<std::size_t> subsample(gold_pool.size());
    for (std::size_t i = 0; i < subsample.size(); ++i) subsample[i] = i;
    if (config.pool_size < gold_pool.size()) {
      Rng rng(mix_seed(seed, hash_str64("gold_pool")));
      subsample = sample_indices_without_replacement(gold_pool.size(), config.pool_size, rng);
    }
    std::vector<AnnotatedSample> sub_pool;
    for (std::size_t i : subsample) sub_pool.push_back(gold_pool[i]);
    if (retrieval.k_demos > sub_pool.size())
      throw UsageError("k_demos exceeds the gold pool subsample size");

    std::vector<std::size_t> fixed_demos;
    if (retrieval.method == RetrievalMethod::random) {
      const std::vector<int> one_cluster(sub_pool.size(), 0);
      fixed_demos = sp_kmeans_sample(one_cluster, 1, retrieval.k_demos, seed)[0];
    } else if (retrieval.method == RetrievalMethod::kmeans) {
      std::vector<Embedding> sub_emb;
      for (std::size_t i : subsample) sub_emb.push_back(pool_cluster_emb[i]);
      if (sub_pool.size() < retrieval.k_demos)
        throw UsageError("gold pool smaller than k_demos clusters");
      const KMeansResult km = kmeans_cluster(sub_emb, retrieval.k_demos, seed);
      const auto per_cluster = sp_kmeans_sample(km.assignments, retrieval.k_demos, 1, seed);
      for (const auto& cluster_pick : per_cluster)
        for (std::size_t i : cluster_pick) fixed_demos.push_back(i);
    }

    std::vector<Embedding> sub_text_emb;
    if (retrieval.method == RetrievalMethod::knn)
      for (std::size_t i : subsample) sub_text_emb.push_back(pool_text_emb[i]);

    detail::NedRound round;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      std::vector<std::size_t> demo_indices = fixed_demos;
      if (retrieval.method == RetrievalMethod::knn)
        demo_indices = knn_retrieve(query_text_emb[q], sub_text_emb, retrieval.k_demos);
      GatewayCall call;
      call.request = build_ned_prompt(
          queries[q], detail::pick_demos(sub_pool, demo_indices, retrieval.reverse_demo_order),
          spec, templates);
      call.request.model = config.model;
      call.request.decoding = config.inference_decoding;
      round.calls.push_back(std::move(call));
      round.owner.emplace_back(q, 0);
    }

    SeedRun run;
    run.seed = seed;
    run.predictions = detail::finish_seed_pass(queries, round, 1, spec, config, gateway,
                                               templates, config.self_verify_final, false);
    artifact.runs.push_back(std::move(run));
  }
  return artifact;
}

// Aligns each seed pass's final surfaces against the gold test split and
// micro-scores it; mean and sample standard deviation are taken over seeds.
inline EvalSummary evaluate_run(RunArtifact& artifact,
                                const std::vector<AnnotatedSample>& gold_test,
                                const EntityTypeSpec& spec) {
  std::map<std::string, const AnnotatedSample*> by_id;
  for (const AnnotatedSample& s : gold_test) by_id[s.id] = &s;

  EvalSummary summary;
  for (const SeedRun& run : artifact.runs) {
    std::vector<std::vector<Chunk>> gold;
    std::vector<AlignmentResult> preds;
    for (const QueryPrediction& p : run.predictions) {
      const auto it = by_id.find(p.id);
      if (it == by_id.end())
        throw UsageError("prediction id '" + p.id + "' not present in the gold test split");
      gold.push_back(it->second->gold_chunks());
      preds.push_back(align_predictions(p.final_surfaces, it->second->token_texts(),
                                        detail::chunk_label(spec)));
    }
    summary.per_seed.emplace_back(run.seed, score_micro(gold, preds));
  }

  const std::size_t n = summary.per_seed.size();
  if (n == 0) throw UsageError("evaluate_run: artifact has no seed runs");
  auto mean_of = [&](auto field) {
    double sum = 0.0;
    for (const auto& [seed, r] : summary.per_seed) sum += field(r);
    return sum / static_cast<double>(n);
  };
  auto std_of = [&](auto field, double mean) {
    if (n < 2) return 0.0;
    double sum = 0.0;
    for (const auto& [seed, r] : summary.per_seed) {
      const double d = field(r) - mean;
      sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(n - 1));
  };
  auto precision = [](const MetricReport& r) { return r.precision; };
  auto recall = [](const MetricReport& r) { return r.recall; };
  auto f1 = [](const MetricReport& r) { return r.f1; };
  summary.mean_precision = mean_of(precision);
  summary.mean_recall = mean_of(recall);
  summary.mean_f1 = mean_of(f1);
  summary.std_precision = std_of(precision, summary.mean_precision);
  summary.std_recall = std_of(recall, summary.mean_recall);
  summary.std_f1 = std_of(f1, summary.mean_f1);

  artifact.metrics = summary;
  return summary;
}

// Writes config.json, pool.jsonl, predictions.jsonl and, when evaluated,
// metrics.json + metrics.csv. Content is fully determined by the run inputs;
// replays produce byte-identical files.
inline void write_artifact(const std::string& dir, const RunArtifact& artifact) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);

  {
    std::ofstream out(base / "config.json", std::ios::binary);
    if (!out) throw UsageError("cannot write " + (base / "config.json").string());
    out << artifact.config_snapshot.dump(2) << "\n";
  }
  save_jsonl(artifact.pool_samples, (base / "pool.jsonl").string());
  {
    std::ofstream out(base / "predictions.jsonl", std::ios::binary);
    if (!out) throw UsageError("cannot write " + (base / "predictions.jsonl").string());
    for (const SeedRun& run : artifact.runs)
      for (const QueryPrediction& p : run.predictions) out << p.to_json(run.seed).dump() << "\n";
  }
  if (artifact.metrics) {
    {
      std::ofstream out(base / "metrics.json", std::ios::binary);
      if (!out) throw UsageError("cannot write " + (base / "metrics.json").string());
      out << artifact.metrics->to_json().dump(2) << "\n";
    }
    {
      std::ofstream out(base / "metrics.csv", std::ios::binary);
      if (!out) throw UsageError("cannot write " + (base / "metrics.csv").string());
      out << artifact.metrics->to_csv();
    }
  }
}

inline void write_pseudo_pool(const std::string& dir, const PseudoPool& pool,
                              const nlohmann::ordered_json& config_snapshot) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream out(base / "config.json", std::ios::binary);
    if (!out) throw UsageError("cannot write " + (base / "config.json").string());
    out << config_snapshot.dump(2) << "\n";
  }
  save_jsonl(pool.pool.samples, (base / "pool.jsonl").string());
  {
    std::ofstream out(base / "provenance.jsonl", std::ios::binary);
    if (!out) throw UsageError("cannot write " + (base / "provenance.jsonl").string());
    for (const PseudoProvenance& p : pool.provenance) out << p.to_json().dump() << "\n";
  }
}

}  // namespace picle
