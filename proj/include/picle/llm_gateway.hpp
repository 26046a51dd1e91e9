#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "picle/corpus.hpp"
#include "picle/errors.hpp"
#include "picle/http.hpp"

namespace picle {

struct DecodingParams {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;

  bool operator==(const DecodingParams&) const = default;
};

enum class Role { system, user, assistant };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

inline Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw SchemaError("unknown chat role '" + s + "'");
}

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  DecodingParams decoding;

  bool operator==(const ChatRequest&) const = default;
};

// Canonical form of a request plus its run index. Two requests cache to the
// same entry iff this string is identical.
inline std::string canonical_request_json(const ChatRequest& request, int run_index) {
  nlohmann::ordered_json j;
  j["model"] = request.model;
  j["messages"] = nlohmann::ordered_json::array();
  for (const ChatMessage& m : request.messages)
    j["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  j["temperature"] = request.decoding.temperature;
  j["top_p"] = request.decoding.top_p;
  j["max_tokens"] = request.decoding.max_tokens;
  if (request.decoding.seed)
    j["seed"] = *request.decoding.seed;
  else
    j["seed"] = nullptr;
  j["run_index"] = run_index;
  return j.dump();
}

// 128-bit FNV-1a over the canonical form, rendered as 32 hex digits.
inline std::string cache_key(const ChatRequest& request, int run_index = 0) {
  const std::string canon = canonical_request_json(request, run_index);
  constexpr unsigned __int128 kPrime =
      (static_cast<unsigned __int128>(1) << 88) + (1u << 8) + 0x3b;
  unsigned __int128 h = (static_cast<unsigned __int128>(0x6c62272e07bb0142ULL) << 64) |
                        0x62b821756295c58dULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= kPrime;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(32, '0');
  for (int i = 31; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[static_cast<unsigned>(h & 0xf)];
    h >>= 4;
  }
  return out;
}

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

// Deterministic stand-in for a model endpoint. Rules are checked in order;
// the first whose predicate accepts the request produces the reply.
class ScriptedClient : public ChatClient {
 public:
  using Predicate = std::function<bool(const ChatRequest&)>;
  using Responder = std::function<std::string(const ChatRequest&)>;

  ScriptedClient() = default;

  void add_rule(Predicate predicate, Responder responder) {
    rules_.push_back({std::move(predicate), std::move(responder)});
  }

  void add_rule(Predicate predicate, std::string response) {
    add_rule(std::move(predicate),
             [response = std::move(response)](const ChatRequest&) { return response; });
  }

  void set_default(std::string response) { default_ = std::move(response); }

  std::string complete(const ChatRequest& request) override {
    calls_->fetch_add(1);
    for (const Rule& rule : rules_)
      if (rule.predicate(request)) return rule.responder(request);
    if (default_) return *default_;
    throw TransportError("scripted client has no rule matching the request");
  }

  std::size_t call_count() const { return calls_->load(); }

  // Rules file format:
  //   {"rules": [{"if_contains": "...", "respond": "..."},
  //              {"if_contains": "...", "respond_gold": "pool.jsonl"}],
  //    "default": "None"}
  // if_contains matches against the concatenated message contents.
  // respond_gold answers a detection prompt with the gold mentions of the
  // sample whose text equals the prompt's final "Input: " line, read from the
  // given JSONL (path resolved relative to the rules file).
  static ScriptedClient from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open scripted rules file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    if (!j.is_object()) throw SchemaError(path + ": rules file must be a JSON object");

    ScriptedClient client;
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    if (j.contains("rules")) {
      if (!j["rules"].is_array()) throw SchemaError(path + ": \"rules\" must be an array");
      for (const auto& rule : j["rules"]) {
        if (!rule.is_object() || !rule.contains("if_contains"))
          throw SchemaError(path + ": each rule needs \"if_contains\"");
        const std::string needle = rule.at("if_contains").get<std::string>();
        Predicate pred = [needle](const ChatRequest& request) {
          for (const ChatMessage& m : request.messages)
            if (m.content.find(needle) != std::string::npos) return true;
          return false;
        };
        if (rule.contains("respond")) {
          client.add_rule(std::move(pred), rule.at("respond").get<std::string>());
        } else if (rule.contains("respond_gold")) {
          const std::string rel = rule.at("respond_gold").get<std::string>();
          const std::string gold_path = (base / rel).string();
          auto lookup = std::make_shared<std::unordered_map<std::string, std::string>>(
              load_gold_responses(gold_path));
          client.add_rule(std::move(pred), [lookup, gold_path](const ChatRequest& request) {
            const std::string query = last_input_line(request);
            const auto it = lookup->find(query);
            if (it == lookup->end())
              throw TransportError("no gold sample in " + gold_path + " with text: " + query);
            return it->second;
          });
        } else {
          throw SchemaError(path + ": each rule needs \"respond\" or \"respond_gold\"");
        }
      }
    }
    if (j.contains("default")) client.set_default(j.at("default").get<std::string>());
    return client;
  }

  // Text after the last "Input: " in the last user message, up to end of line.
  static std::string last_input_line(const ChatRequest& request) {
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
      if (it->role != Role::user) continue;
      const std::string& content = it->content;
      const std::size_t pos = content.rfind("Input: ");
      if (pos == std::string::npos) break;
      const std::size_t start = pos + 7;
      const std::size_t eol = content.find('\n', start);
      return content.substr(start, eol == std::string::npos ? std::string::npos : eol - start);
    }
    throw TransportError("scripted gold responder: request has no \"Input: \" line");
  }

 private:
  struct Rule {
    Predicate predicate;
    Responder responder;
  };

  static std::unordered_map<std::string, std::string> load_gold_responses(
      const std::string& gold_path) {
    std::unordered_map<std::string, std::string> out;
    for (const AnnotatedSample& sample : load_jsonl_samples(gold_path)) {
      std::string reply;
      if (sample.mentions.empty()) {
        reply = "None";
      } else {
        for (const EntityMention& m : sample.mentions) {
          if (!reply.empty()) reply += "\n";
          reply += m.surface + " | yes | because it is a " + m.entity_type;
        }
      }
      out[sample.text()] = reply;
    }
    return out;
  }

  std::vector<Rule> rules_;
  std::optional<std::string> default_;
  // shared_ptr keeps the client copyable; copies share the counter
  std::shared_ptr<std::atomic<std::size_t>> calls_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

// Client for any endpoint speaking the /v1/chat/completions protocol.
class OpenAiClient : public ChatClient {
 public:
  explicit OpenAiClient(std::shared_ptr<HttpEndpoint> endpoint)
      : endpoint_(std::move(endpoint)) {}

  std::string complete(const ChatRequest& request) override {
    nlohmann::json body;
    body["model"] = request.model;
    body["messages"] = nlohmann::json::array();
    for (const ChatMessage& m : request.messages)
      body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
    body["temperature"] = request.decoding.temperature;
    body["top_p"] = request.decoding.top_p;
    body["max_tokens"] = request.decoding.max_tokens;
    if (request.decoding.seed) body["seed"] = *request.decoding.seed;

    const nlohmann::json reply = endpoint_->post_json("/v1/chat/completions", body);
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
      throw EndpointError(200, "chat response has no choices: " + reply.dump().substr(0, 200));
    const auto& first = reply["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string())
      throw EndpointError(200, "chat choice has no message content");
    return first["message"]["content"].get<std::string>();
  }

 private:
  std::shared_ptr<HttpEndpoint> endpoint_;
};

// Append-only JSONL cache of completions keyed by cache_key(). On load the
// last line for a key wins, so interrupted runs can be resumed by rerunning.
class ResponseCache {
 public:
  explicit ResponseCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path_ + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (!j.contains("key") || !j.contains("response"))
        throw SchemaError(path_ + ":" + std::to_string(lineno) +
                          ": cache entry needs \"key\" and \"response\"");
      entries_[j.at("key").get<std::string>()] = j.at("response").get<std::string>();
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, const std::string& response) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_[key] = response;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw UsageError("cannot append to cache file: " + path_);
    nlohmann::ordered_json j;
    j["key"] = key;
    j["response"] = response;
    out << j.dump() << "\n";
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
};

struct GatewayCall {
  ChatRequest request;
  int run_index = 0;
};

// Per-call result of a batch; ok=false carries the error text instead of
// aborting the whole batch.
struct Outcome {
  bool ok = false;
  std::string text;
  std::string error;
};

struct GatewayStats {
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t failures = 0;
};

// Routes completions through an optional cache to a client. complete_many
// keeps at most max_in_flight requests active at once and never throws for a
// single failed call.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<ChatClient> client,
                   std::shared_ptr<ResponseCache> cache = nullptr)
      : client_(std::move(client)), cache_(std::move(cache)) {
    if (!client_) throw UsageError("gateway requires a client");
  }

  std::string complete(const ChatRequest& request, int run_index = 0) {
    const std::string key = cache_key(request, run_index);
    if (cache_) {
      if (const auto hit = cache_->get(key)) {
        {
          std::lock_guard<std::mutex> lock(stats_mutex_);
          ++stats_.cache_hits;
        }
        return *hit;
      }
    }
    {
      std::lock_guard<std::mutex> lock(stats_mutex_);
      ++stats_.cache_misses;
    }
    try {
      const std::string text = client_->complete(request);
      if (cache_) cache_->put(key, text);
      return text;
    } catch (...) {
      std::lock_guard<std::mutex> lock(stats_mutex_);
      ++stats_.failures;
      throw;
    }
  }

  std::vector<Outcome> complete_many(const std::vector<GatewayCall>& calls,
                                     std::size_t max_in_flight = 4) {
    std::vector<Outcome> outcomes(calls.size());
    if (calls.empty()) return outcomes;
    if (max_in_flight < 1) max_in_flight = 1;

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= calls.size()) return;
        try {
          outcomes[i].text = complete(calls[i].request, calls[i].run_index);
          outcomes[i].ok = true;
        } catch (const std::exception& e) {
          outcomes[i].ok = false;
          outcomes[i].error = e.what();
        }
      }
    };

    const std::size_t workers = std::min(max_in_flight, calls.size());
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      threads.reserve(workers);
      for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
      for (std::thread& t : threads) t.join();
    }
    return outcomes;
  }

  GatewayStats stats() const {
    std::lock_guard<std::mutex> lock(stats_mutex_);
    return stats_;
  }

 private:
  std::shared_ptr<ChatClient> client_;
  std::shared_ptr<ResponseCache> cache_;
  mutable std::mutex stats_mutex_;
  GatewayStats stats_;
};

}  // namespace picle
