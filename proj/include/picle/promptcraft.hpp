#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "picle/corpus.hpp"
#include "picle/errors.hpp"
#include "picle/llm_gateway.hpp"

namespace picle {

// Prompt text with {placeholder} slots. The shipped defaults render the
// detection and verification prompts exactly as the framework expects its
// models to see them; from_dir lets an experiment swap the wording without a
// rebuild.
struct PromptTemplates {
  std::string ned_instruction;
  std::string examples_header;
  std::string ned_input;
  std::string ned_answer_line;
  std::string verification;
  std::string merge;

  static const PromptTemplates& defaults() {
    static const PromptTemplates t = [] {
      PromptTemplates d;
      d.ned_instruction =
          "Your task is to extract all of the {entity_type_plural} mentioned in a given "
          "abstract published in PubMed.\n"
          "{definition}\n"
          "\n"
          "Please extract all of the entities corresponding to {entity_type_plural} from the "
          "following paragraph, the same way as they are marked in the examples.\n"
          "Make sure to include all and only the {entity_type_plural} mentioned in the "
          "text{exclusions_clause}. If there are no {entity_type} entities in the text output "
          "'None'. You will be penalized if you include an entity more or less than the number "
          "of times it appears in the text.";
      d.examples_header = "## Here are some examples:";
      d.ned_input = "Input: {text}\n{entity_type_capitalized} entities:";
      d.ned_answer_line = "{surface} | yes | because it is a {entity_type}";
      d.verification =
          "Given the context and definition of {entity_type} entity, answer the following "
          "question. Please reason about your answer and include YES or NO in your response. "
          "YES if the given phrase is a {entity_type} entity, and NO if it is not. If you are "
          "not sure, you can say I don't know.\n"
          "Context: {text}\n"
          "{entity_type_capitalized} definition: {definition}\n"
          "Based off this context and definition, does {candidate} correspond to the name of a "
          "{entity_type} entity?";
      d.merge =
          "Here are several lists of {entity_type} entities extracted from the same text by "
          "independent runs:\n"
          "{lists}\n"
          "Merge them into a single list of the {entity_type} entities actually mentioned in "
          "the text. Answer with one entity per line in the format: entity | yes | because it "
          "is a {entity_type}. If the merged list is empty output 'None'.";
      return d;
    }();
    return t;
  }

  static PromptTemplates from_dir(const std::string& dir) {
    auto read = [&](const char* stem) {
      const std::filesystem::path p = std::filesystem::path(dir) / (std::string(stem) + ".txt");
      std::ifstream in(p);
      if (!in) throw UsageError("missing template file: " + p.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      std::string text = buf.str();
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
      return text;
    };
    PromptTemplates t;
    t.ned_instruction = read("ned_instruction");
    t.examples_header = read("examples_header");
    t.ned_input = read("ned_input");
    t.ned_answer_line = read("ned_answer_line");
    t.verification = read("verification");
    t.merge = read("merge");
    return t;
  }
};

// Substitutes {name} slots from the map in one pass. Substituted values are
// inserted verbatim, never re-scanned. A slot with no entry is an error; a
// lone '{' that does not open a well-formed slot is kept as text.
inline std::string render_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const char c = tmpl[i];
    if (c != '{') {
      out += c;
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < tmpl.size() && (std::islower(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_'))
      ++j;
    if (j >= tmpl.size() || tmpl[j] != '}' || j == i + 1) {
      out += c;
      ++i;
      continue;
    }
    const std::string name(tmpl.substr(i + 1, j - i - 1));
    const auto it = values.find(name);
    if (it == values.end()) throw UsageError("unresolved template placeholder {" + name + "}");
    out += it->second;
    i = j + 1;
  }
  return out;
}

inline std::map<std::string, std::string> placeholder_values(const EntityTypeSpec& spec) {
  return {
      {"entity_type", spec.name},
      {"entity_type_plural", spec.plural_or_default()},
      {"entity_type_capitalized", spec.capitalized_name()},
      {"definition", spec.definition},
      {"exclusions_clause", spec.exclusions.empty() ? std::string() : ", but not " + spec.exclusions},
  };
}

// Detection prompt: one instruction turn (with the examples header when
// demonstrations follow), a user/assistant turn per demonstration, and a
// final user turn carrying the query. Null demonstrations get an empty
// assistant turn.
inline ChatRequest build_ned_prompt(const AnnotatedSample& query,
                                    const std::vector<AnnotatedSample>& demos,
                                    const EntityTypeSpec& spec,
                                    const PromptTemplates& templates = PromptTemplates::defaults()) {
  const std::map<std::string, std::string> base = placeholder_values(spec);

  ChatRequest request;
  std::string instruction = render_template(templates.ned_instruction, base);
  if (!demos.empty()) instruction += "\n\n" + render_template(templates.examples_header, base);
  request.messages.push_back({Role::user, std::move(instruction)});

  for (const AnnotatedSample& demo : demos) {
    std::map<std::string, std::string> vals = base;
    vals["text"] = demo.text();
    request.messages.push_back({Role::user, render_template(templates.ned_input, vals)});
    std::string answer;
    for (std::size_t i = 0; i < demo.mentions.size(); ++i) {
      std::map<std::string, std::string> line = base;
      line["surface"] = demo.mentions[i].surface;
      if (i) answer += "\n";
      answer += render_template(templates.ned_answer_line, line);
    }
    request.messages.push_back({Role::assistant, std::move(answer)});
  }

  std::map<std::string, std::string> vals = base;
  vals["text"] = query.text();
  request.messages.push_back({Role::user, render_template(templates.ned_input, vals)});
  return request;
}

struct ParsedEntityList {
  std::vector<std::string> surfaces;
  std::string raw;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

// Total parser for detection responses. "None"/"none" as the whole reply is
// an empty list. Pipe-formatted lines keep the first field when the second
// says yes; lines without pipes are taken as bare surfaces. Duplicates are
// preserved in order.
inline ParsedEntityList parse_ned_response(const std::string& text) {
  ParsedEntityList out;
  out.raw = text;
  const std::string whole = detail::trim(text);
  if (whole == "None" || whole == "none") return out;

  std::size_t pos = 0;
  while (pos <= whole.size()) {
    const std::size_t nl = whole.find('\n', pos);
    const std::string line =
        detail::trim(whole.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos));
    pos = (nl == std::string::npos) ? whole.size() + 1 : nl + 1;
    if (line.empty()) continue;
    const std::size_t pipe = line.find('|');
    if (pipe == std::string::npos) {
      out.surfaces.push_back(line);
      continue;
    }
    const std::string surface = detail::trim(line.substr(0, pipe));
    const std::size_t second_end = line.find('|', pipe + 1);
    const std::string verdict = detail::to_lower(detail::trim(
        line.substr(pipe + 1, second_end == std::string::npos ? std::string::npos
                                                              : second_end - pipe - 1)));
    if (verdict == "yes" && !surface.empty()) out.surfaces.push_back(surface);
  }
  return out;
}

// Single-turn yes/no question about one candidate surface.
inline ChatRequest build_verification_prompt(const std::string& context_text,
                                             const std::string& candidate,
                                             const EntityTypeSpec& spec,
                                             const PromptTemplates& templates =
                                                 PromptTemplates::defaults()) {
  if (candidate.empty()) throw UsageError("verification candidate must be non-empty");
  std::map<std::string, std::string> vals = placeholder_values(spec);
  vals["text"] = context_text;
  vals["candidate"] = candidate;
  ChatRequest request;
  request.messages.push_back({Role::user, render_template(templates.verification, vals)});
  return request;
}

inline ChatRequest build_verification_prompt(const AnnotatedSample& context,
                                             const std::string& candidate,
                                             const EntityTypeSpec& spec,
                                             const PromptTemplates& templates =
                                                 PromptTemplates::defaults()) {
  return build_verification_prompt(context.text(), candidate, spec, templates);
}

enum class Decision { yes, no, unknown };

inline std::string to_string(Decision d) {
  switch (d) {
    case Decision::yes: return "yes";
    case Decision::no: return "no";
    case Decision::unknown: return "unknown";
  }
  return "unknown";
}

struct Verdict {
  Decision decision = Decision::unknown;
  std::string raw;
};

// First alphabetic word that reads yes or no, case-insensitively, decides;
// a reply containing neither is unknown.
inline Verdict parse_verdict(const std::string& text) {
  Verdict v;
  v.raw = text;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    const std::string word = detail::to_lower(text.substr(i, j - i));
    if (word == "yes") {
      v.decision = Decision::yes;
      return v;
    }
    if (word == "no") {
      v.decision = Decision::no;
      return v;
    }
    i = j;
  }
  return v;
}

// Single-turn request to consolidate two or more entity lists.
inline ChatRequest build_merge_prompt(const std::vector<std::vector<std::string>>& entity_lists,
                                      const EntityTypeSpec& spec,
                                      const PromptTemplates& templates =
                                          PromptTemplates::defaults()) {
  if (entity_lists.size() < 2)
    throw UsageError("merge prompt needs at least 2 entity lists, got " +
                     std::to_string(entity_lists.size()));
  std::string lists;
  for (std::size_t i = 0; i < entity_lists.size(); ++i) {
    if (i) lists += "\n";
    lists += std::to_string(i + 1) + ". ";
    if (entity_lists[i].empty()) {
      lists += "None";
    } else {
      for (std::size_t j = 0; j < entity_lists[i].size(); ++j) {
        if (j) lists += ", ";
        lists += entity_lists[i][j];
      }
    }
  }
  std::map<std::string, std::string> vals = placeholder_values(spec);
  vals["lists"] = lists;
  ChatRequest request;
  request.messages.push_back({Role::user, render_template(templates.merge, vals)});
  return request;
}

}  // namespace picle
