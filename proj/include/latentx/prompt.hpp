#pragma once

// Symbol-to-word grammar and the per-bias prompt templates.

#include <array>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "latentx/formula.hpp"
#include "latentx/gateway.hpp"

namespace latentx {

inline constexpr std::string_view kFixedEnding =
    "What is the pattern of change? Write in a sentence. If there is no clear pattern, just write "
    "\"No clear explanation\".";

/// Slot replaced by the property name in conditional templates.
inline constexpr std::string_view kPropertySlot = "[property_k]";

struct GrammarRule {
  int id;
  std::string_view symbol;
  std::string_view phrase;
};

/// Rules 1..8, in id order.
const std::array<GrammarRule, 8>& grammar_rules();

/// Kinds of formula fragment the grammar can be asked about.
enum class FragmentKind {
  ProbTerm,     // p(z_i | .)
  Condition,    // the conditioning symbol, z_i' or p_k
  Property,     // p_k
  Group,        // G
  Member,       // in
  NotMember,    // not in
  Equal,        // =
  NotEqual,     // !=
  Scalar,       // alpha, beta: no rule
  IndexBound,   // i != i': no rule on its own
};

struct Fragment {
  FragmentKind kind;
  std::string text;  // rendered source fragment, for the trace
};

/// Throws Error(NoRuleMatch) for fragments outside the grammar.
const GrammarRule& map_symbol(const Fragment& fragment);

/// Fragments of a formula in source order.
std::vector<Fragment> fragments(const FormulaAst& ast);

struct PromptBundle {
  std::string adaptive_text;
  std::string fixed_ending{kFixedEnding};
  std::vector<std::pair<int, std::string>> rule_trace;
  BiasClass bias = BiasClass::Disentanglement;
  std::optional<std::string> property_name;
  bool fallback_used = false;

  /// adaptive_text + " " + fixed_ending.
  std::string text() const;
};

/// The adaptive template for a bias, with the property slot unfilled.
std::string_view prompt_template(BiasClass bias);

/// Grammar ids a bias's template uses, ascending.
std::vector<int> expected_rule_ids(BiasClass bias);

/// Deterministic path. Conditional biases need a property name (pass
/// kPropertySlot to keep the slot literal); otherwise MissingProperty.
PromptBundle compose_prompt(const FormulaAst& ast, BiasClass bias,
                            const std::optional<std::string>& property_name = std::nullopt);

struct FewShotSet {
  std::vector<std::pair<std::string, std::string>> examples;  // (formula, prompt)
  std::map<std::string, std::string> symbol_info;             // rendered symbol -> note

  /// The five canonical (formula, prompt) pairs.
  static FewShotSet defaults();
};

/// JSON: {"examples":[{"formula":"...","prompt":"..."}], "symbol_info":{"z[i]":"..."}}
FewShotSet read_few_shot(std::istream& in);

/// A model reply is usable when it mentions "pattern of change" and has at
/// most three sentences.
bool acceptable_refinement(std::string_view reply);
std::size_t count_sentences(std::string_view text);

/// LLM-assisted path: one request per symbol for its meaning, then one for
/// the prompt. Unusable replies fall back to compose_prompt with
/// fallback_used set. Transport failures surface as GatewayError.
PromptBundle refine_prompt_llm(const FormulaAst& ast, const FewShotSet& fewshot, ChatBackend& gateway,
                               const std::optional<std::string>& property_name = std::nullopt,
                               const std::string& model_name = {});

}  // namespace latentx
