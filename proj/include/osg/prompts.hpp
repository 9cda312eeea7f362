#pragma once

// Prompt templates with |<Name>| placeholders and reply parsing.
//
// A template file has up to three sections introduced by marker lines:
//   @@Context@@   sent as the system message
//   @@Few-shot@@  worked examples, prepended to the query
//   @@Query@@     the question itself
// Text before the first marker belongs to the query.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "osg/graph.hpp"
#include "osg/schema.hpp"

namespace osg {

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PromptTemplate {
  std::string name;
  std::string context;
  std::string few_shot;
  std::string query;

  static PromptTemplate parse(std::string name, const std::string& text);
};

struct RenderedPrompt {
  std::string context;
  std::string few_shot;
  std::string query;

  /// User message: few-shot block, blank line, query.
  std::string user_message() const;
};

using PromptContext = std::map<std::string, std::string>;

/// Substitutes every |<Name>| placeholder. Context values take precedence;
/// otherwise PlaceClass, ConnectorClass, ObjectClass and AbstractionClass
/// resolve from the OsgSpec (multiple classes joined with "/"). Throws
/// PromptError on a placeholder neither source can resolve.
std::string render_text(const std::string& text, const OsgSpec& spec, const PromptContext& context);
RenderedPrompt render_prompt(const PromptTemplate& tmpl, const OsgSpec& spec,
                             const PromptContext& context);

/// Templates keyed by name, read from "<dir>/<name>.txt".
class PromptLibrary {
 public:
  static const std::vector<std::string>& required_names();
  static PromptLibrary load(const std::string& dir);

  void add(PromptTemplate tmpl);
  const PromptTemplate& get(const std::string& name) const;
  bool has(const std::string& name) const { return templates_.count(name) != 0; }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

/// Text after the last "Answer:" marker ("**Answer**:" also accepted), up to
/// the end of that line; when that line is blank, the following non-empty
/// lines up to a Reasoning, Question or Goal field. Throws
/// OracleError(Parse) when no marker is present.
std::string parse_answer(const std::string& reply);

/// Splits a list answer ("a, b." or "['a', 'b']") into trimmed items;
/// "None" and "[]" give an empty list.
std::vector<std::string> parse_answer_list(const std::string& answer);

/// Parses a "class: element, element" block following the answer marker.
/// Returns element name -> class name for every class line found.
std::map<std::string, std::string> parse_classification(const std::string& reply);

/// Quoted JSON-style list: ["a", "b"].
std::string quoted_list(const std::vector<std::string>& items);

/// "I can see a white wood bed, brown metal lamp." rendering of features.
std::string describe_features(const std::vector<FeatureEntry>& entries);

/// "a, b and c" joining.
std::string natural_join(const std::vector<std::string>& items);

}  // namespace osg
