#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "picle/errors.hpp"
#include "picle/http.hpp"
#include "picle/rng.hpp"
#include "picle/sequence_eval.hpp"

namespace picle {

using Embedding = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed(const std::string& text) = 0;

  virtual std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(embed(t));
    return out;
  }
};

// Offline fallback: feature-hashed word unigrams and bigrams, signed buckets,
// L2-normalized. Deterministic, so clustering and retrieval tests never need
// a network.
class LocalHashEmbedder : public Embedder {
 public:
  explicit LocalHashEmbedder(std::size_t dim = 256) : dim_(dim) {
    if (dim_ == 0) throw UsageError("embedder dimension must be positive");
  }

  std::size_t dim() const override { return dim_; }

  Embedding embed(const std::string& text) override {
    Embedding v(dim_, 0.0);
    const std::vector<std::string> words = detail::split_whitespace(text);
    for (std::size_t i = 0; i < words.size(); ++i) {
      add_feature(v, "1:" + words[i]);
      if (i + 1 < words.size()) add_feature(v, "2:" + words[i] + " " + words[i + 1]);
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& x : v) x *= inv;
    }
    return v;
  }

 private:
  void add_feature(Embedding& v, const std::string& feature) const {
    const std::uint64_t h = hash_str64(feature);
    const std::size_t bucket = static_cast<std::size_t>(h % dim_);
    v[bucket] += (h >> 63) ? 1.0 : -1.0;
  }

  std::size_t dim_;
};

// OpenAI-compatible embeddings endpoint: POST {model, input: [...]} to
// /v1/embeddings. Every request/response pair is appended to a JSONL log so
// runs can be replayed offline from the cache.
class RemoteEmbedder : public Embedder {
 public:
  RemoteEmbedder(std::shared_ptr<HttpEndpoint> endpoint, std::string model,
                 std::string cache_path = "")
      : endpoint_(std::move(endpoint)), model_(std::move(model)), cache_path_(std::move(cache_path)) {
    if (!cache_path_.empty()) load_cache();
  }

  std::size_t dim() const override { return dim_; }

  Embedding embed(const std::string& text) override {
    return embed_batch({text}).front();
  }

  std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) override {
    std::vector<Embedding> out(texts.size());
    std::vector<std::size_t> missing;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      for (std::size_t i = 0; i < texts.size(); ++i) {
        auto it = cache_.find(key_for(texts[i]));
        if (it != cache_.end())
          out[i] = it->second;
        else
          missing.push_back(i);
      }
    }
    if (!missing.empty()) {
      nlohmann::json body;
      body["model"] = model_;
      nlohmann::json input = nlohmann::json::array();
      for (std::size_t i : missing) input.push_back(texts[i]);
      body["input"] = std::move(input);
      const nlohmann::json res = endpoint_->post_json("/v1/embeddings", body);
      if (!res.contains("data") || !res.at("data").is_array() ||
          res.at("data").size() != missing.size())
        throw EndpointError(200, "embedding response lacks a parallel data array");
      std::vector<Embedding> fetched(missing.size());
      for (const auto& item : res.at("data")) {
        const std::size_t idx = item.at("index").get<std::size_t>();
        if (idx >= missing.size()) throw EndpointError(200, "embedding index out of range");
        fetched[idx] = item.at("embedding").get<Embedding>();
      }
      std::lock_guard<std::mutex> lock(mutex_);
      for (std::size_t j = 0; j < missing.size(); ++j) {
        out[missing[j]] = fetched[j];
        store(texts[missing[j]], fetched[j]);
      }
    }
    for (const Embedding& e : out) {
      if (dim_ == 0) dim_ = e.size();
      if (e.size() != dim_) throw EndpointError(200, "embedding dimension changed mid-pool");
    }
    return out;
  }

 private:
  std::string key_for(const std::string& text) const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(hash_str64(model_ + '\0' + text)));
    return buf;
  }

  void load_cache() {
    std::ifstream in(cache_path_, std::ios::binary);
    if (!in) return;  // first run
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const nlohmann::json j = nlohmann::json::parse(line);
        cache_[j.at("key").get<std::string>()] = j.at("embedding").get<Embedding>();
      } catch (const nlohmann::json::exception&) {
        // Skip truncated trailing record from a crashed run.
      }
    }
  }

  void store(const std::string& text, const Embedding& e) {
    cache_[key_for(text)] = e;
    if (cache_path_.empty()) return;
    nlohmann::ordered_json j;
    j["key"] = key_for(text);
    j["model"] = model_;
    j["input"] = text;
    j["embedding"] = e;
    std::ofstream out(cache_path_, std::ios::binary | std::ios::app);
    out << j.dump() << '\n';
  }

  std::shared_ptr<HttpEndpoint> endpoint_;
  std::string model_;
  std::string cache_path_;
  std::size_t dim_ = 0;
  std::map<std::string, Embedding> cache_;
  std::mutex mutex_;
};

}  // namespace picle
