#pragma once

// Scripted chat clients shared between the unit tests and the acceptance
// binary.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "picle/corpus.hpp"
#include "picle/llm_gateway.hpp"

namespace testkit {

inline std::string gold_reply(const picle::AnnotatedSample& s) {
  if (s.mentions.empty()) return "None";
  std::string reply;
  for (const auto& m : s.mentions) {
    if (!reply.empty()) reply += "\n";
    reply += m.surface + " | yes | because it is a " + m.entity_type;
  }
  return reply;
}

// Answers detection prompts with the gold mentions of the sample whose text
// matches, confirms every verification question, and echoes merge lists by
// restating the union of what it previously said. Unknown texts get "None".
inline std::shared_ptr<picle::ScriptedClient> identity_client(
    const std::vector<std::vector<picle::AnnotatedSample>>& corpora) {
  auto by_text = std::make_shared<std::map<std::string, std::string>>();
  for (const auto& corpus : corpora)
    for (const auto& s : corpus) (*by_text)[s.text()] = gold_reply(s);

  auto client = std::make_shared<picle::ScriptedClient>();
  client->add_rule(
      [](const picle::ChatRequest& r) {
        return r.messages.back().content.find("Based off this context and definition") !=
               std::string::npos;
      },
      "YES, it matches the definition.");
  client->add_rule(
      [](const picle::ChatRequest& r) {
        return r.messages.back().content.find("Input: ") != std::string::npos;
      },
      [by_text](const picle::ChatRequest& r) {
        const std::string text = picle::ScriptedClient::last_input_line(r);
        const auto it = by_text->find(text);
        return it == by_text->end() ? std::string("None") : it->second;
      });
  return client;
}

// Pulls the candidate surface out of a verification question.
inline std::string verification_candidate(const picle::ChatRequest& r) {
  const std::string& content = r.messages.back().content;
  const std::string tail = " correspond to the name of";
  const std::size_t end = content.rfind(tail);
  if (end == std::string::npos) throw picle::UsageError("not a verification prompt");
  const std::size_t start = content.rfind("does ", end);
  if (start == std::string::npos) throw picle::UsageError("not a verification prompt");
  return content.substr(start + 5, end - start - 5);
}

// Pulls the context sentence out of a verification question.
inline std::string verification_context(const picle::ChatRequest& r) {
  const std::string& content = r.messages.back().content;
  const std::size_t pos = content.find("Context: ");
  if (pos == std::string::npos) throw picle::UsageError("not a verification prompt");
  const std::size_t start = pos + 9;
  const std::size_t stop = content.find('\n', start);
  return content.substr(start, stop == std::string::npos ? std::string::npos : stop - start);
}

// Confirms a candidate only when it is one of the gold surfaces of the
// sentence it was asked about.
inline void add_strict_verifier(picle::ScriptedClient& client,
                                const std::vector<std::vector<picle::AnnotatedSample>>& corpora) {
  auto gold = std::make_shared<std::map<std::string, std::vector<std::string>>>();
  for (const auto& corpus : corpora)
    for (const auto& s : corpus) (*gold)[s.text()] = s.mention_surfaces();
  client.add_rule(
      [](const picle::ChatRequest& r) {
        return r.messages.back().content.find("Based off this context and definition") !=
               std::string::npos;
      },
      [gold](const picle::ChatRequest& r) {
        const std::string candidate = verification_candidate(r);
        const auto it = gold->find(verification_context(r));
        if (it != gold->end())
          for (const std::string& surface : it->second)
            if (surface == candidate) return std::string("YES, that is one.");
        return std::string("NO, it is not.");
      });
}

// Replies with the gold mentions plus the sentence's first token tacked on as
// a spurious extra entity. Verification is strict, so the extra survives only
// when verification is switched off.
inline std::shared_ptr<picle::ScriptedClient> overgenerating_client(
    const std::vector<std::vector<picle::AnnotatedSample>>& corpora) {
  auto by_text = std::make_shared<std::map<std::string, std::string>>();
  for (const auto& corpus : corpora)
    for (const auto& s : corpus) {
      std::string reply = gold_reply(s);
      const std::string first = s.tokens.empty() ? std::string() : s.tokens.front().text;
      if (!first.empty()) {
        if (reply == "None")
          reply = first + " | yes | padding";
        else
          reply += "\n" + first + " | yes | padding";
      }
      (*by_text)[s.text()] = reply;
    }

  auto client = std::make_shared<picle::ScriptedClient>();
  add_strict_verifier(*client, corpora);
  client->add_rule(
      [](const picle::ChatRequest& r) {
        return r.messages.back().content.find("Input: ") != std::string::npos;
      },
      [by_text](const picle::ChatRequest& r) {
        const std::string text = picle::ScriptedClient::last_input_line(r);
        const auto it = by_text->find(text);
        return it == by_text->end() ? std::string("None") : it->second;
      });
  return client;
}

}  // namespace testkit
