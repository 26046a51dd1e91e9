// Command-line driver: dataset ingestion, pseudo-annotation, inference,
// the demonstration-perturbation study, and artifact reporting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "picle/picle.hpp"

namespace {

using picle::AnnotatedSample;
using picle::RunConfig;

std::vector<AnnotatedSample> load_samples(const std::string& path, const std::string& format,
                                          const picle::EntityTypeSpec& entity_type,
                                          bool lenient = true) {
  std::string fmt = format;
  if (fmt == "auto") {
    const std::string ext = std::filesystem::path(path).extension().string();
    fmt = (ext == ".jsonl" || ext == ".json") ? "jsonl" : "conll";
  }
  if (fmt == "jsonl") return picle::load_jsonl_samples(path);
  if (fmt == "conll")
    return picle::load_conll(path, entity_type, picle::SplitName::train, lenient).samples;
  throw picle::UsageError("unknown format '" + fmt + "' (expected conll or jsonl)");
}

void print_stats(const std::string& label, const std::vector<AnnotatedSample>& samples) {
  const picle::SplitStats stats = picle::compute_stats(samples);
  std::printf("%s: %zu samples, avg words/entity %.2f, null ratio %.1f%%\n", label.c_str(),
              stats.count, stats.avg_words_per_entity, 100.0 * stats.null_ratio);
}

struct CommonFlags {
  std::string config_path;
  std::string scripted_rules;
  std::string model;
  std::optional<std::size_t> pool_size;
  std::optional<std::size_t> k_demos;
  std::optional<std::size_t> k_clusters;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> max_in_flight;
  std::string templates_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--scripted", scripted_rules, "scripted model rules file (offline oracle)");
    cmd->add_option("--model", model, "model name sent to the endpoint");
    cmd->add_option("--pool-size", pool_size, "demonstration pool size");
    cmd->add_option("--k-demos", k_demos, "demonstrations per prompt");
    cmd->add_option("--k-clusters", k_clusters, "number of demonstration clusters");
    cmd->add_option("--seeds", seeds, "experiment seeds")->delimiter(',');
    cmd->add_option("--max-in-flight", max_in_flight, "max concurrent model requests");
    cmd->add_option("--templates-dir", templates_dir, "directory of prompt template files");
  }

  RunConfig resolve() const {
    RunConfig config =
        config_path.empty() ? RunConfig{} : RunConfig::from_json_file(config_path);
    if (!scripted_rules.empty()) config.scripted_rules = scripted_rules;
    if (!model.empty()) config.picle.model = model;
    if (pool_size) config.picle.pool_size = *pool_size;
    if (k_demos) {
      config.picle.k_demos = *k_demos;
      config.retrieval.k_demos = *k_demos;
    }
    if (k_clusters) {
      config.picle.k_clusters = *k_clusters;
      config.retrieval.k_clusters = *k_clusters;
    }
    if (!seeds.empty()) {
      config.picle.seeds = seeds;
      config.retrieval.seed = seeds[0];
    }
    if (max_in_flight) config.picle.max_in_flight = *max_in_flight;
    if (!templates_dir.empty()) config.templates_dir = templates_dir;
    return config;
  }
};

int cmd_ingest(const std::string& input, const std::string& format,
               const std::string& entity_name, const std::string& dataset_label, bool strict,
               const std::string& out) {
  picle::EntityTypeSpec entity_type;
  entity_type.name = entity_name;
  entity_type.dataset_label = dataset_label;
  const std::vector<AnnotatedSample> samples =
      load_samples(input, format, entity_type, /*lenient=*/!strict);
  if (!out.empty()) picle::save_jsonl(samples, out);
  print_stats(input, samples);
  return 0;
}

int cmd_pseudo_annotate(const CommonFlags& flags, const std::string& train_path,
                        const std::string& out_dir, bool multirun, std::size_t runs,
                        double temperature, const std::string& post) {
  RunConfig config = flags.resolve();
  config.require_entity_type();
  const std::string train = train_path.empty() ? config.train_path : train_path;
  if (train.empty()) throw picle::UsageError("no training samples: pass --train or paths.train");
  const std::string out = out_dir.empty() ? config.out_dir : out_dir;
  if (out.empty()) throw picle::UsageError("no output directory: pass --out-pool or paths.out");

  const std::vector<AnnotatedSample> unlabeled =
      load_samples(train, "auto", config.entity_type);
  auto gateway = config.make_gateway();
  const picle::PromptTemplates templates = config.templates();

  picle::PseudoPool pool;
  if (multirun) {
    const picle::MultirunPost mpost = post == "llm_merge" ? picle::MultirunPost::llm_merge
                                                          : picle::MultirunPost::self_verify;
    if (post != "llm_merge" && post != "self_verify")
      throw picle::UsageError("--post must be self_verify or llm_merge");
    pool = picle::pseudo_annotate_multirun(unlabeled, config.entity_type, config.picle, *gateway,
                                           runs, temperature, mpost, templates);
  } else {
    pool = picle::pseudo_annotate(unlabeled, config.entity_type, config.picle, *gateway,
                                  templates);
  }

  nlohmann::ordered_json snapshot = config.snapshot();
  snapshot["command"] = multirun ? "pseudo-annotate-multirun" : "pseudo-annotate";
  picle::write_pseudo_pool(out, pool, snapshot);

  std::printf("attempted %zu samples, %zu failed, pool size %zu\n", pool.provenance.size(),
              pool.failed_count, pool.pool.samples.size());
  if (pool.aborted) {
    std::fprintf(stderr, "error: more than half of the samples failed; partial pool written\n");
    return 1;
  }

  // With gold tags on the input, report pool fidelity.
  bool has_gold = false;
  for (const AnnotatedSample& s : unlabeled)
    if (!s.mentions.empty()) has_gold = true;
  if (has_gold) {
    std::vector<std::vector<std::string>> pool_labels, gold_labels;
    std::map<std::string, const AnnotatedSample*> by_id;
    for (const AnnotatedSample& s : unlabeled) by_id[s.id] = &s;
    for (const AnnotatedSample& s : pool.pool.samples) {
      const auto it = by_id.find(s.id);
      if (it == by_id.end()) continue;
      pool_labels.push_back(s.mention_surfaces());
      gold_labels.push_back(it->second->mention_surfaces());
    }
    const picle::MetricReport r = picle::score_demonstration_set(pool_labels, gold_labels);
    std::printf("pool fidelity vs gold labels: precision %.4f recall %.4f f1 %.4f\n", r.precision,
                r.recall, r.f1);
  }
  return 0;
}

int cmd_infer(const CommonFlags& flags, const std::string& test_path,
              const std::string& pool_path, const std::string& method_name,
              const std::string& retrieval_name, std::optional<std::size_t> gold_pool_size,
              bool no_self_verify, const std::string& out_dir) {
  RunConfig config = flags.resolve();
  config.require_entity_type();
  const std::string test = test_path.empty() ? config.test_path : test_path;
  if (test.empty()) throw picle::UsageError("no test samples: pass --test or paths.test");
  const std::string out = out_dir.empty() ? config.out_dir : out_dir;
  if (out.empty()) throw picle::UsageError("no output directory: pass --out or paths.out");
  if (no_self_verify) config.picle.self_verify_final = false;
  if (!retrieval_name.empty())
    config.retrieval.method = picle::retrieval_method_from_string(retrieval_name);
  if (gold_pool_size) config.picle.pool_size = *gold_pool_size;

  const picle::InferMethod method = picle::infer_method_from_string(method_name);
  const std::vector<AnnotatedSample> queries = load_samples(test, "auto", config.entity_type);

  std::vector<AnnotatedSample> pool_samples;
  const std::string pool = pool_path.empty() ? config.pool_path : pool_path;
  if (method == picle::InferMethod::picle || method == picle::InferMethod::gold_icl) {
    if (pool.empty())
      throw picle::UsageError("method " + method_name + " needs --pool (or paths.pool)");
    std::string pool_file = pool;
    if (std::filesystem::is_directory(pool_file))
      pool_file = (std::filesystem::path(pool_file) / "pool.jsonl").string();
    pool_samples = load_samples(pool_file, "auto", config.entity_type);
    if (pool_samples.empty()) throw picle::UsageError("demonstration pool is empty: " + pool_file);
  } else if (!pool.empty()) {
    throw picle::UsageError("method " + method_name + " does not take a demonstration pool");
  }

  auto gateway = config.make_gateway();
  auto embedder = config.make_embedder();
  const picle::PromptTemplates templates = config.templates();

  picle::RunArtifact artifact;
  if (method == picle::InferMethod::picle) {
    picle::DemonstrationPool demo_pool;
    demo_pool.samples = pool_samples;
    artifact = picle::run_picle(queries, std::move(demo_pool), config.entity_type, config.picle,
                                *gateway, *embedder, templates);
  } else {
    artifact = picle::run_baseline(queries, method, pool_samples, config.entity_type,
                                   config.picle, config.retrieval, *gateway, *embedder, templates);
  }
  nlohmann::ordered_json snapshot = config.snapshot();
  snapshot["method"] = method_name;
  artifact.config_snapshot = std::move(snapshot);

  bool has_gold = false;
  for (const AnnotatedSample& q : queries)
    if (!q.mentions.empty()) has_gold = true;
  if (has_gold) {
    const picle::EvalSummary summary =
        picle::evaluate_run(artifact, queries, config.entity_type);
    for (const auto& [seed, report] : summary.per_seed)
      std::printf("seed %llu: precision %.4f recall %.4f f1 %.4f\n",
                  static_cast<unsigned long long>(seed), report.precision, report.recall,
                  report.f1);
    std::printf("mean f1 %.4f (std %.4f)\n", summary.mean_f1, summary.std_f1);
  }

  picle::write_artifact(out, artifact);
  std::printf("artifact written to %s\n", out.c_str());
  return 0;
}

int cmd_perturb(const CommonFlags& flags, const std::string& test_path,
                const std::string& gold_path, const std::string& schemes_csv,
                const std::vector<double>& grid, bool free_p, std::uint64_t seed,
                const std::string& out_csv) {
  RunConfig config = flags.resolve();
  config.require_entity_type();
  const std::string test = test_path.empty() ? config.test_path : test_path;
  if (test.empty()) throw picle::UsageError("no test samples: pass --test or paths.test");
  if (gold_path.empty()) throw picle::UsageError("--gold demonstration pool is required");

  picle::PerturbationStudyConfig study;
  if (!schemes_csv.empty()) {
    study.schemes.clear();
    std::size_t pos = 0;
    while (pos <= schemes_csv.size()) {
      const std::size_t comma = schemes_csv.find(',', pos);
      const std::string name =
          schemes_csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!name.empty()) study.schemes.push_back(picle::perturb_scheme_from_string(name));
      pos = comma == std::string::npos ? schemes_csv.size() + 1 : comma + 1;
    }
    if (study.schemes.empty()) throw picle::UsageError("--schemes selected no schemes");
  }
  if (!grid.empty()) study.grid = grid;
  study.free_p = free_p;
  study.seed = seed;
  study.k_demos = config.picle.k_demos;
  study.model = config.picle.model;
  study.decoding = config.picle.inference_decoding;
  study.max_in_flight = config.picle.max_in_flight;

  const std::vector<AnnotatedSample> queries = load_samples(test, "auto", config.entity_type);
  const std::vector<AnnotatedSample> pool = load_samples(gold_path, "auto", config.entity_type);
  auto gateway = config.make_gateway();
  auto embedder = config.make_embedder();

  const std::vector<picle::PerturbationStudyRow> rows = picle::run_perturbation_study(
      queries, pool, config.entity_type, study, *embedder, *gateway, config.templates());
  const std::string csv = picle::study_rows_to_csv(rows);
  if (out_csv.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) throw picle::UsageError("cannot write " + out_csv);
    out << csv;
    std::printf("study table written to %s (%zu rows)\n", out_csv.c_str(), rows.size());
  }
  return 0;
}

int cmd_report(const std::string& artifact_dir) {
  const std::filesystem::path base(artifact_dir);
  const std::filesystem::path metrics = base / "metrics.json";
  if (!std::filesystem::exists(metrics))
    throw picle::UsageError("no metrics.json under " + artifact_dir +
                            " (run infer on a test split with gold tags)");
  std::ifstream in(metrics);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw picle::ParseError(metrics.string() + ": " + e.what());
  }
  std::printf("%-12s %8s %8s %8s %8s %8s %8s\n", "seed", "tp", "fp", "fn", "prec", "recall",
              "f1");
  for (const auto& row : j.at("per_seed"))
    std::printf("%-12llu %8llu %8llu %8llu %8.4f %8.4f %8.4f\n",
                row.at("seed").get<unsigned long long>(),
                row.at("tp").get<unsigned long long>(), row.at("fp").get<unsigned long long>(),
                row.at("fn").get<unsigned long long>(), row.at("precision").get<double>(),
                row.at("recall").get<double>(), row.at("f1").get<double>());
  std::printf("%-12s %8s %8s %8s %8.4f %8.4f %8.4f\n", "mean", "", "", "",
              j.at("mean").at("precision").get<double>(), j.at("mean").at("recall").get<double>(),
              j.at("mean").at("f1").get<double>());
  std::printf("%-12s %8s %8s %8s %8.4f %8.4f %8.4f\n", "std", "", "", "",
              j.at("std").at("precision").get<double>(), j.at("std").at("recall").get<double>(),
              j.at("std").at("f1").get<double>());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context named entity detection with pseudo-annotated demonstrations"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a dataset to canonical JSONL and print stats");
  std::string in_input, in_format = "auto", in_entity = "entity", in_label, in_out;
  bool in_strict = false;
  ingest->add_option("--input", in_input, "input file")->required();
  ingest->add_option("--format", in_format, "conll, jsonl, or auto")
      ->check(CLI::IsMember({"conll", "jsonl", "auto"}));
  ingest->add_option("--entity-type", in_entity, "entity type name");
  ingest->add_option("--dataset-label", in_label, "IOB2 tag suffix to enforce (e.g. Chemical)");
  ingest->add_flag("--strict", in_strict, "reject I- tags without a matching B-");
  ingest->add_option("--out", in_out, "output JSONL path");

  // pseudo-annotate
  auto* pseudo = app.add_subcommand("pseudo-annotate", "Pseudo-annotate unlabeled samples into a demonstration pool");
  CommonFlags pseudo_flags;
  pseudo_flags.attach(pseudo);
  std::string pa_train, pa_out, pa_post = "self_verify";
  bool pa_multirun = false;
  std::size_t pa_runs = 10;
  double pa_temperature = 0.7;
  pseudo->add_option("--train", pa_train, "unlabeled/train samples (jsonl or conll)");
  pseudo->add_option("--out-pool", pa_out, "output pool directory");
  pseudo->add_flag("--multirun", pa_multirun, "sample several annotation runs per input");
  pseudo->add_option("--runs", pa_runs, "multirun pass count");
  pseudo->add_option("--temperature", pa_temperature, "multirun sampling temperature");
  pseudo->add_option("--post", pa_post, "multirun post-processing: self_verify or llm_merge");

  // infer
  auto* infer = app.add_subcommand("infer", "Run inference over a test split and write an artifact");
  CommonFlags infer_flags;
  infer_flags.attach(infer);
  std::string if_test, if_pool, if_method = "picle", if_retrieval, if_out;
  std::optional<std::size_t> if_gold_pool_size;
  bool if_no_self_verify = false;
  infer->add_option("--test", if_test, "test samples (jsonl or conll)");
  infer->add_option("--pool", if_pool, "demonstration pool (jsonl file or pool directory)");
  infer->add_option("--method", if_method, "picle, zero_shot, gold_icl, or multirun_zero_shot");
  infer->add_option("--retrieval", if_retrieval, "gold_icl retrieval: random, knn, or kmeans");
  infer->add_option("--gold-pool-size", if_gold_pool_size,
                    "subsample the gold pool to this size per seed");
  infer->add_flag("--no-self-verify", if_no_self_verify, "skip final self-verification");
  infer->add_option("--out", if_out, "artifact output directory");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "Run the demonstration-perturbation study grid");
  CommonFlags perturb_flags;
  perturb_flags.attach(perturb);
  std::string pt_test, pt_gold, pt_schemes, pt_out_csv;
  std::vector<double> pt_grid;
  bool pt_free_p = false;
  std::uint64_t pt_seed = 12345;
  perturb->add_option("--test", pt_test, "test samples with gold tags");
  perturb->add_option("--gold", pt_gold, "gold demonstration pool");
  perturb->add_option("--schemes", pt_schemes,
                      "comma-separated schemes (deletion, substitution, addition_substitution, "
                      "deletion_substitution)");
  perturb->add_option("--grid", pt_grid, "perturbation factors")->delimiter(',');
  perturb->add_flag("--free-p", pt_free_p, "allow factors off the 0.1..0.9 grid");
  perturb->add_option("--seed", pt_seed, "perturbation seed");
  perturb->add_option("--out-csv", pt_out_csv, "study table output (stdout when omitted)");

  // report
  auto* report = app.add_subcommand("report", "Print the metric table of a run artifact");
  std::string rp_dir;
  report->add_option("--artifact", rp_dir, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(in_input, in_format, in_entity, in_label, in_strict, in_out);
    if (*pseudo)
      return cmd_pseudo_annotate(pseudo_flags, pa_train, pa_out, pa_multirun, pa_runs,
                                 pa_temperature, pa_post);
    if (*infer)
      return cmd_infer(infer_flags, if_test, if_pool, if_method, if_retrieval, if_gold_pool_size,
                       if_no_self_verify, if_out);
    if (*perturb)
      return cmd_perturb(perturb_flags, pt_test, pt_gold, pt_schemes, pt_grid, pt_free_p, pt_seed,
                         pt_out_csv);
    if (*report) return cmd_report(rp_dir);
  } catch (const picle::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const picle::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const picle::SchemaError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
