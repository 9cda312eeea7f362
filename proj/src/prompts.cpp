#include "osg/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "osg/oracle.hpp"

namespace osg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Strips the newline run at both ends of a section, keeping inner spacing.
std::string trim_section(const std::string& s) {
  std::size_t b = 0;
  while (b < s.size() && (s[b] == '\n' || s[b] == '\r')) ++b;
  std::size_t e = s.size();
  while (e > b && (s[e - 1] == '\n' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i != 0) out += sep;
    out += items[i];
  }
  return out;
}

std::optional<std::string> spec_value(const std::string& name, const OsgSpec& spec) {
  auto names_of = [&](LayerType type) {
    std::vector<std::string> out;
    for (const auto* c : spec.classes_of(type)) out.push_back(c->name);
    return out;
  };
  std::vector<std::string> values;
  if (name == "PlaceClass") {
    values = names_of(LayerType::Place);
  } else if (name == "ConnectorClass") {
    values = names_of(LayerType::Connector);
  } else if (name == "AbstractionClass") {
    values = names_of(LayerType::RegionAbstraction);
  } else if (name == "ObjectClass") {
    if (const auto* c = spec.object_class()) values.push_back(c->name);
  }
  if (values.empty()) return std::nullopt;
  return join(values, "/");
}

}  // namespace

PromptTemplate PromptTemplate::parse(std::string name, const std::string& text) {
  PromptTemplate t;
  t.name = std::move(name);
  std::string* current = &t.query;
  std::istringstream in(text);
  std::string line;
  std::string buffer;
  auto flush = [&](std::string* target) {
    *target += buffer;
    buffer.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string* next = nullptr;
    if (line == "@@Context@@") next = &t.context;
    else if (line == "@@Few-shot@@") next = &t.few_shot;
    else if (line == "@@Query@@") next = &t.query;
    if (next != nullptr) {
      flush(current);
      current = next;
      continue;
    }
    buffer += line;
    buffer += '\n';
  }
  flush(current);
  t.context = trim_section(t.context);
  t.few_shot = trim_section(t.few_shot);
  t.query = trim_section(t.query);
  if (t.query.empty()) throw PromptError("prompt template '" + t.name + "' has no query section");
  return t;
}

std::string RenderedPrompt::user_message() const {
  if (few_shot.empty()) return query;
  return few_shot + "\n\n" + query;
}

std::string render_text(const std::string& text, const OsgSpec& spec, const PromptContext& context) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("|<", pos);
    if (open == std::string::npos) break;
    const auto close = text.find(">|", open + 2);
    if (close == std::string::npos) break;
    const std::string name = text.substr(open + 2, close - open - 2);
    const bool is_name = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
    out.append(text, pos, open - pos);
    if (!is_name) {
      out.append("|<");
      pos = open + 2;
      continue;
    }
    if (auto it = context.find(name); it != context.end()) {
      out += it->second;
    } else if (auto v = spec_value(name, spec)) {
      out += *v;
    } else {
      throw PromptError("unresolved placeholder |<" + name + ">|");
    }
    pos = close + 2;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, const OsgSpec& spec,
                             const PromptContext& context) {
  return {render_text(tmpl.context, spec, context), render_text(tmpl.few_shot, spec, context),
          render_text(tmpl.query, spec, context)};
}

const std::vector<std::string>& PromptLibrary::required_names() {
  static const std::vector<std::string> names{
      "place_label",      "element_description", "classify_elements",
      "place_similarity", "place_match",         "associate_object",
      "region_abstraction", "region_proposal",   "goal_proposal"};
  return names;
}

PromptLibrary PromptLibrary::load(const std::string& dir) {
  PromptLibrary lib;
  for (const auto& name : required_names()) {
    const auto path = std::filesystem::path(dir) / (name + ".txt");
    std::ifstream in(path);
    if (!in) throw PromptError("missing prompt template " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    lib.add(PromptTemplate::parse(name, buf.str()));
  }
  return lib;
}

void PromptLibrary::add(PromptTemplate tmpl) {
  std::string name = tmpl.name;
  templates_[name] = std::move(tmpl);
}

const PromptTemplate& PromptLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw PromptError("unknown prompt template '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

/// Position just past the colon of the last answer marker, or npos.
std::size_t last_answer_marker(const std::string& reply) {
  std::size_t found = std::string::npos;
  std::size_t pos = 0;
  while ((pos = reply.find("Answer", pos)) != std::string::npos) {
    std::size_t i = pos + 6;
    while (i < reply.size() && reply[i] == '*') ++i;
    while (i < reply.size() && reply[i] == ' ') ++i;
    if (i < reply.size() && reply[i] == ':') found = i + 1;
    pos += 6;
  }
  return found;
}

/// Lines that close a multi-line answer block. Class lines such as
/// "**object**: ..." stay inside it.
bool is_field_line(const std::string& line) {
  std::string t = trim(line);
  t.erase(std::remove(t.begin(), t.end(), '*'), t.end());
  for (const char* field : {"Reasoning:", "Question:", "Goal:"}) {
    if (t.rfind(field, 0) == 0) return true;
  }
  return false;
}

std::string strip_decoration(std::string s) {
  s = trim(s);
  while (!s.empty() && (s.front() == '*' || s.front() == '_' || s.front() == ' ')) s.erase(0, 1);
  while (!s.empty() && (s.back() == '*' || s.back() == ' ')) s.pop_back();
  return trim(s);
}

}  // namespace

std::string parse_answer(const std::string& reply) {
  const auto start = last_answer_marker(reply);
  if (start == std::string::npos) {
    throw OracleError(OracleError::Kind::Parse, "reply has no 'Answer:' marker");
  }
  auto eol = reply.find('\n', start);
  std::string line = reply.substr(start, eol == std::string::npos ? std::string::npos : eol - start);
  // "Answer: x. Reasoning: y" on one line.
  for (const char* cut : {"**Reasoning**", "Reasoning:"}) {
    const auto r = line.find(cut);
    if (r != std::string::npos) line = line.substr(0, r);
  }
  line = strip_decoration(line);
  if (!line.empty() || eol == std::string::npos) return line;

  std::vector<std::string> lines;
  std::istringstream rest(reply.substr(eol + 1));
  std::string next;
  while (std::getline(rest, next)) {
    if (!next.empty() && next.back() == '\r') next.pop_back();
    if (is_field_line(next)) break;
    if (trim(next).empty()) {
      if (!lines.empty()) break;
      continue;
    }
    lines.push_back(trim(next));
  }
  return join(lines, "\n");
}

std::vector<std::string> parse_answer_list(const std::string& answer) {
  std::string s = trim(answer);
  while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
  if (!s.empty() && s.front() == '[') s.erase(0, 1);
  if (!s.empty() && s.back() == ']') s.pop_back();
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    std::string t = trim(item);
    while (!t.empty() && (t.front() == '"' || t.front() == '\'')) t.erase(0, 1);
    while (!t.empty() && (t.back() == '"' || t.back() == '\'' || t.back() == '.')) t.pop_back();
    t = trim(t);
    if (t.empty()) continue;
    std::string lower = t;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "none") continue;
    out.push_back(t);
  }
  return out;
}

std::map<std::string, std::string> parse_classification(const std::string& reply) {
  const std::string block = parse_answer(reply);
  std::map<std::string, std::string> out;
  std::istringstream in(block);
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string cls = strip_decoration(line.substr(0, colon));
    for (const auto& element : parse_answer_list(line.substr(colon + 1))) {
      out.emplace(element, cls);
    }
  }
  return out;
}

std::string quoted_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i != 0) out += ", ";
    out += "\"" + items[i] + "\"";
  }
  return out + "]";
}

std::string natural_join(const std::vector<std::string>& items) {
  if (items.empty()) return {};
  if (items.size() == 1) return items.front();
  std::vector<std::string> head(items.begin(), items.end() - 1);
  return join(head, ", ") + " and " + items.back();
}

std::string describe_features(const std::vector<FeatureEntry>& entries) {
  if (entries.empty()) return "I can see nothing.";
  std::vector<std::string> parts;
  for (const auto& e : entries) {
    parts.push_back(e.description.empty() ? e.label : e.description + " " + e.label);
  }
  return "I can see a " + join(parts, ", ") + ".";
}

}  // namespace osg
