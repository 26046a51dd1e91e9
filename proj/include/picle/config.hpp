#pragma once

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <string>

#include <json.hpp>

#include "picle/corpus.hpp"
#include "picle/embedding.hpp"
#include "picle/errors.hpp"
#include "picle/http.hpp"
#include "picle/llm_gateway.hpp"
#include "picle/neighborhood.hpp"
#include "picle/pipeline.hpp"
#include "picle/promptcraft.hpp"

namespace picle {

namespace detail {

inline void expect_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                        const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw SchemaError(context + ": unknown key \"" + it.key() + "\"");
  }
}

inline std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

inline DecodingParams decoding_from_json(const nlohmann::json& j, const std::string& context) {
  expect_keys(j, {"temperature", "top_p", "max_tokens", "seed"}, context);
  DecodingParams d;
  if (j.contains("temperature")) d.temperature = j.at("temperature").get<double>();
  if (j.contains("top_p")) d.top_p = j.at("top_p").get<double>();
  if (j.contains("max_tokens")) d.max_tokens = j.at("max_tokens").get<int>();
  if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

}  // namespace detail

// Resolved run configuration: the experiment knobs plus the entity type,
// endpoint, embedding, and template settings. Parsed strictly; any key the
// schema does not define is an error at every level. PICLE_API_BASE and
// PICLE_API_KEY fill endpoint fields left unset.
struct RunConfig {
  PicleConfig picle;
  RetrievalConfig retrieval;
  EntityTypeSpec entity_type;

  std::string api_base;
  std::string api_key;
  std::string cache_path;

  std::string embedding_model;  // empty selects the local hashing embedder
  std::size_t embedding_dim = 256;
  std::string embedding_cache_path;

  std::string templates_dir;
  std::string scripted_rules;

  std::string train_path;
  std::string test_path;
  std::string pool_path;
  std::string out_dir;

  static RunConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("config: root must be a JSON object");
    detail::expect_keys(
        j,
        {"model", "pool_size", "k_clusters", "k_demos", "seeds", "self_verify_pseudo",
         "self_verify_final", "aggregation", "pseudo_decoding", "inference_decoding",
         "max_in_flight", "reverse_demo_order", "retrieval", "entity_type", "endpoint",
         "embedding", "templates_dir", "scripted_rules", "paths"},
        "config");

    RunConfig c;
    if (j.contains("model")) c.picle.model = j.at("model").get<std::string>();
    if (j.contains("pool_size")) c.picle.pool_size = j.at("pool_size").get<std::size_t>();
    if (j.contains("k_clusters")) c.picle.k_clusters = j.at("k_clusters").get<std::size_t>();
    if (j.contains("k_demos")) c.picle.k_demos = j.at("k_demos").get<std::size_t>();
    if (j.contains("seeds")) {
      c.picle.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
      if (c.picle.seeds.empty()) throw SchemaError("config: seeds must be non-empty");
    }
    if (j.contains("self_verify_pseudo"))
      c.picle.self_verify_pseudo = j.at("self_verify_pseudo").get<bool>();
    if (j.contains("self_verify_final"))
      c.picle.self_verify_final = j.at("self_verify_final").get<bool>();
    if (j.contains("aggregation"))
      c.picle.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
    if (j.contains("pseudo_decoding"))
      c.picle.pseudo_decoding =
          detail::decoding_from_json(j.at("pseudo_decoding"), "config.pseudo_decoding");
    if (j.contains("inference_decoding"))
      c.picle.inference_decoding =
          detail::decoding_from_json(j.at("inference_decoding"), "config.inference_decoding");
    if (j.contains("max_in_flight"))
      c.picle.max_in_flight = j.at("max_in_flight").get<std::size_t>();
    if (j.contains("reverse_demo_order"))
      c.picle.reverse_demo_order = j.at("reverse_demo_order").get<bool>();

    c.retrieval.k_demos = c.picle.k_demos;
    c.retrieval.k_clusters = c.picle.k_clusters;
    c.retrieval.seed = c.picle.seeds[0];
    c.retrieval.reverse_demo_order = c.picle.reverse_demo_order;
    if (j.contains("retrieval")) {
      const auto& r = j.at("retrieval");
      detail::expect_keys(r, {"method", "k_demos", "k_clusters", "seed", "reverse_demo_order"},
                          "config.retrieval");
      if (r.contains("method"))
        c.retrieval.method = retrieval_method_from_string(r.at("method").get<std::string>());
      if (r.contains("k_demos")) c.retrieval.k_demos = r.at("k_demos").get<std::size_t>();
      if (r.contains("k_clusters")) c.retrieval.k_clusters = r.at("k_clusters").get<std::size_t>();
      if (r.contains("seed")) c.retrieval.seed = r.at("seed").get<std::uint64_t>();
      if (r.contains("reverse_demo_order"))
        c.retrieval.reverse_demo_order = r.at("reverse_demo_order").get<bool>();
    }

    if (j.contains("entity_type")) {
      const auto& e = j.at("entity_type");
      detail::expect_keys(e, {"name", "plural", "dataset_label", "definition", "exclusions"},
                          "config.entity_type");
      if (e.contains("name")) c.entity_type.name = e.at("name").get<std::string>();
      if (e.contains("plural")) c.entity_type.plural = e.at("plural").get<std::string>();
      if (e.contains("dataset_label"))
        c.entity_type.dataset_label = e.at("dataset_label").get<std::string>();
      if (e.contains("definition")) c.entity_type.definition = e.at("definition").get<std::string>();
      if (e.contains("exclusions")) c.entity_type.exclusions = e.at("exclusions").get<std::string>();
    }

    if (j.contains("endpoint")) {
      const auto& e = j.at("endpoint");
      detail::expect_keys(e, {"api_base", "api_key", "cache_path"}, "config.endpoint");
      if (e.contains("api_base")) c.api_base = e.at("api_base").get<std::string>();
      if (e.contains("api_key")) c.api_key = e.at("api_key").get<std::string>();
      if (e.contains("cache_path")) c.cache_path = e.at("cache_path").get<std::string>();
    }
    if (c.api_base.empty()) c.api_base = detail::env_or("PICLE_API_BASE", "");
    if (c.api_key.empty()) c.api_key = detail::env_or("PICLE_API_KEY", "");

    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      detail::expect_keys(e, {"model", "dim", "cache_path"}, "config.embedding");
      if (e.contains("model")) c.embedding_model = e.at("model").get<std::string>();
      if (e.contains("dim")) c.embedding_dim = e.at("dim").get<std::size_t>();
      if (e.contains("cache_path"))
        c.embedding_cache_path = e.at("cache_path").get<std::string>();
    }

    if (j.contains("templates_dir")) c.templates_dir = j.at("templates_dir").get<std::string>();
    if (j.contains("scripted_rules")) c.scripted_rules = j.at("scripted_rules").get<std::string>();

    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      detail::expect_keys(p, {"train", "test", "pool", "out"}, "config.paths");
      if (p.contains("train")) c.train_path = p.at("train").get<std::string>();
      if (p.contains("test")) c.test_path = p.at("test").get<std::string>();
      if (p.contains("pool")) c.pool_path = p.at("pool").get<std::string>();
      if (p.contains("out")) c.out_dir = p.at("out").get<std::string>();
    }
    return c;
  }

  static RunConfig from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    return from_json(j);
  }

  // Full resolved snapshot for run artifacts. The API key never leaves the
  // process.
  nlohmann::ordered_json snapshot() const {
    nlohmann::ordered_json j = picle.to_json();
    j["retrieval"] = {{"method", to_string(retrieval.method)},
                      {"k_demos", retrieval.k_demos},
                      {"k_clusters", retrieval.k_clusters},
                      {"seed", retrieval.seed},
                      {"reverse_demo_order", retrieval.reverse_demo_order}};
    j["entity_type"] = {{"name", entity_type.name},
                        {"plural", entity_type.plural},
                        {"dataset_label", entity_type.dataset_label},
                        {"definition", entity_type.definition},
                        {"exclusions", entity_type.exclusions}};
    j["endpoint"] = {{"api_base", api_base}, {"cache_path", cache_path}};
    j["embedding"] = {{"model", embedding_model},
                      {"dim", embedding_dim},
                      {"cache_path", embedding_cache_path}};
    j["templates_dir"] = templates_dir;
    j["scripted_rules"] = scripted_rules;
    return j;
  }

  void require_entity_type() const {
    if (entity_type.name.empty() || entity_type.definition.empty())
      throw UsageError("config needs entity_type.name and entity_type.definition");
  }

  PromptTemplates templates() const {
    return templates_dir.empty() ? PromptTemplates::defaults()
                                 : PromptTemplates::from_dir(templates_dir);
  }

  std::shared_ptr<ChatClient> make_client() const {
    if (!scripted_rules.empty())
      return std::make_shared<ScriptedClient>(ScriptedClient::from_json_file(scripted_rules));
    if (api_base.empty())
      throw UsageError(
          "no model endpoint configured: set endpoint.api_base (or PICLE_API_BASE) or provide "
          "scripted rules");
    return std::make_shared<OpenAiClient>(std::make_shared<HttpEndpoint>(api_base, api_key));
  }

  std::shared_ptr<Gateway> make_gateway() const {
    std::shared_ptr<ResponseCache> cache;
    if (!cache_path.empty()) cache = std::make_shared<ResponseCache>(cache_path);
    return std::make_shared<Gateway>(make_client(), cache);
  }

  std::shared_ptr<Embedder> make_embedder() const {
    if (embedding_model.empty()) return std::make_shared<LocalHashEmbedder>(embedding_dim);
    if (api_base.empty())
      throw UsageError("embedding.model requires endpoint.api_base (or PICLE_API_BASE)");
    return std::make_shared<RemoteEmbedder>(std::make_shared<HttpEndpoint>(api_base, api_key),
                                            embedding_model, embedding_cache_path);
  }
};

}  // namespace picle
