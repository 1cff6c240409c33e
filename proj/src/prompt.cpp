#include "latentx/prompt.hpp"

#include <algorithm>
#include <json.hpp>

#include "latentx/error.hpp"

namespace latentx {

const std::array<GrammarRule, 8>& grammar_rules() {
  static const std::array<GrammarRule, 8> rules = {{
      {1, "p(z_i | .)", "pattern of change"},
      {2, "p(z_i | z_i'), forall i != i'", "other variations"},
      {3, "p_k", "property of interests"},
      {4, "G", "a group"},
      {5, "in", "associated with"},
      {6, "not in", "not associated with"},
      {7, "=", "same"},
      {8, "!=", "change"},
  }};
  return rules;
}

const GrammarRule& map_symbol(const Fragment& fragment) {
  const auto& rules = grammar_rules();
  switch (fragment.kind) {
    case FragmentKind::ProbTerm: return rules[0];
    case FragmentKind::Condition: return rules[1];
    case FragmentKind::Property: return rules[2];
    case FragmentKind::Group: return rules[3];
    case FragmentKind::Member: return rules[4];
    case FragmentKind::NotMember: return rules[5];
    case FragmentKind::Equal: return rules[6];
    case FragmentKind::NotEqual: return rules[7];
    case FragmentKind::Scalar:
    case FragmentKind::IndexBound: break;
  }
  throw Error(ErrorKind::NoRuleMatch, "no grammar rule for '" + fragment.text + "'");
}

std::vector<Fragment> fragments(const FormulaAst& ast) {
  std::vector<Fragment> out;
  auto term = [&out](const ProbTerm& t) {
    out.push_back({FragmentKind::ProbTerm, "P(" + render(t.target) + " | .)"});
    for (const auto& c : t.conditions) {
      out.push_back({FragmentKind::Condition, render(c.symbol)});
      if (c.symbol.kind == SymbolKind::Property) out.push_back({FragmentKind::Property, render(c.symbol)});
      if (c.value) out.push_back({FragmentKind::Scalar, render(*c.value)});
    }
  };
  term(ast.relation.lhs);
  if (ast.relation.op && ast.relation.rhs) {
    const bool equal = *ast.relation.op == RelOp::Equal;
    out.push_back({equal ? FragmentKind::Equal : FragmentKind::NotEqual, equal ? "==" : "!="});
    term(*ast.relation.rhs);
  }
  for (const auto& c : ast.quantifier.constraints) {
    std::visit(
        [&out](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, IndexDistinct>) {
            out.push_back({FragmentKind::IndexBound, v.lhs + " != " + v.rhs});
          } else if constexpr (std::is_same_v<T, ConstDistinct>) {
            out.push_back({FragmentKind::Scalar, render(v.lhs) + " != " + render(v.rhs)});
          } else if constexpr (std::is_same_v<T, Membership>) {
            out.push_back({v.negated ? FragmentKind::NotMember : FragmentKind::Member,
                           v.negated ? "not in" : "in"});
            out.push_back({FragmentKind::Group, render(v.group)});
          } else {
            out.push_back({FragmentKind::Group, render(v.lhs)});
            out.push_back({FragmentKind::Group, render(v.rhs)});
          }
        },
        c);
  }
  return out;
}

std::string PromptBundle::text() const { return adaptive_text + " " + fixed_ending; }

std::string_view prompt_template(BiasClass bias) {
  switch (bias) {
    case BiasClass::Disentanglement:
      return "These two rows of images show the same pattern of change despite other variations.";
    case BiasClass::CombinationInterGroup:
      return "The pattern of change is associated with a group. The first two rows of images show the same "
             "pattern of change despite other variations in another group.";
    case BiasClass::CombinationIntraGroup:
      return "The pattern of change is associated with a group. The pattern of change in the last two rows of "
             "images should change given other variations.";
    case BiasClass::ConditionalDependent:
      return "If the pattern of change is associated with the group of the property of interest, this image "
             "sequence will change as other variations in [property_k].";
    case BiasClass::ConditionalIndependent:
      return "If the pattern of change is not associated with the group of the property of interest, this "
             "image sequence will remain constant despite other variations in [property_k].";
  }
  return {};
}

std::vector<int> expected_rule_ids(BiasClass bias) {
  switch (bias) {
    case BiasClass::Disentanglement: return {1, 2, 7};
    case BiasClass::CombinationInterGroup: return {1, 2, 4, 5, 7};
    case BiasClass::CombinationIntraGroup: return {1, 2, 4, 5, 8};
    case BiasClass::ConditionalDependent: return {1, 2, 3, 4, 5, 8};
    case BiasClass::ConditionalIndependent: return {1, 2, 3, 4, 6, 7};
  }
  return {};
}

namespace {

std::string fill_property(std::string text, std::string_view property) {
  for (auto pos = text.find(kPropertySlot); pos != std::string::npos;
       pos = text.find(kPropertySlot, pos + property.size()))
    text.replace(pos, kPropertySlot.size(), property);
  return text;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

PromptBundle compose_prompt(const FormulaAst& ast, BiasClass bias, const std::optional<std::string>& property_name) {
  PromptBundle bundle;
  bundle.bias = bias;

  for (const auto& fragment : fragments(ast)) {
    if (fragment.kind == FragmentKind::Scalar || fragment.kind == FragmentKind::IndexBound) continue;
    const int id = map_symbol(fragment).id;
    const bool seen = std::any_of(bundle.rule_trace.begin(), bundle.rule_trace.end(),
                                  [id](const auto& entry) { return entry.first == id; });
    if (!seen) bundle.rule_trace.emplace_back(id, fragment.text);
  }
  std::sort(bundle.rule_trace.begin(), bundle.rule_trace.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<int> ids;
  for (const auto& entry : bundle.rule_trace) ids.push_back(entry.first);
  if (ids != expected_rule_ids(bias))
    throw Error(ErrorKind::NoRuleMatch,
                "formula symbols do not cover the " + std::string(to_string(bias)) + " template");

  std::string text(prompt_template(bias));
  if (is_conditional(bias)) {
    if (!property_name || property_name->empty())
      throw Error(ErrorKind::MissingProperty, "conditional bias needs a property name");
    bundle.property_name = property_name;
    text = fill_property(std::move(text), *property_name);
  }
  bundle.adaptive_text = std::move(text);
  return bundle;
}

FewShotSet FewShotSet::defaults() {
  FewShotSet set;
  const std::pair<std::string_view, BiasClass> canonical[] = {
      {"P(z[i] | z[i'] = a) == P(z[i] | z[i'] = b) forall i != i', a != b", BiasClass::Disentanglement},
      {"P(z[i] | z[j] = a) == P(z[i] | z[j] = b) forall z[i] in G, z[j] in G', G != G', a != b",
       BiasClass::CombinationInterGroup},
      {"P(z[i] | z[i'] = a) != P(z[i] | z[i'] = b) forall z[i] in G, z[i'] in G, i != i', a != b",
       BiasClass::CombinationIntraGroup},
      {"P(z[i] | p[k] = a) != P(z[i] | p[k] = b) forall z[i] in G[k], a != b", BiasClass::ConditionalDependent},
      {"P(z[j] | p[k] = a) == P(z[j] | p[k] = b) forall z[j] not in G[k], a != b",
       BiasClass::ConditionalIndependent},
  };
  for (auto [formula, bias] : canonical)
    set.examples.emplace_back(std::string(formula), std::string(prompt_template(bias)));
  return set;
}

FewShotSet read_few_shot(std::istream& in) {
  FewShotSet set;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& e : j.value("examples", nlohmann::json::array()))
      set.examples.emplace_back(e.at("formula").get<std::string>(), e.at("prompt").get<std::string>());
    if (j.contains("symbol_info"))
      set.symbol_info = j.at("symbol_info").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("few-shot file: ") + e.what());
  }
  return set;
}

std::size_t count_sentences(std::string_view text) {
  std::size_t count = 0;
  bool content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool terminator = (c == '.' || c == '!' || c == '?') &&
                            (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])) ||
                             text[i + 1] == '"');
    if (terminator) {
      if (content) ++count;
      content = false;
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      content = true;
    }
  }
  return count + (content ? 1 : 0);
}

bool acceptable_refinement(std::string_view reply) {
  std::string lower(reply);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.find("pattern of change") != std::string::npos && count_sentences(reply) <= 3;
}

namespace {

std::string ask(ChatBackend& gateway, const std::string& prompt, const std::string& model, std::size_t key) {
  ChatRequest request;
  request.prompt = prompt;
  request.model_name = model;
  try {
    return gateway.complete(request, key);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Transient) throw Error(ErrorKind::Gateway, e.what());
    throw;
  }
}

std::string examples_block(const FewShotSet& fewshot) {
  std::string out;
  for (const auto& [formula, prompt] : fewshot.examples) out += "Formula: " + formula + "\nPrompt: " + prompt + "\n\n";
  return out;
}

}  // namespace

PromptBundle refine_prompt_llm(const FormulaAst& ast, const FewShotSet& fewshot, ChatBackend& gateway,
                               const std::optional<std::string>& property_name, const std::string& model_name) {
  if (fewshot.examples.empty()) throw Error(ErrorKind::Precondition, "LLM refinement needs few-shot examples");
  const BiasClass bias = classify_bias(ast);
  PromptBundle fallback = compose_prompt(ast, bias, property_name);
  const std::string formula = render(ast);
  const std::string examples = examples_block(fewshot);

  std::string semantics;
  std::size_t key = 0;
  for (const auto& symbol : extract_symbols(ast)) {
    const std::string name = render(symbol);
    std::string question = "Below are inductive-bias formulas over latent variables with their prompts.\n\n" +
                           examples + "In the formula `" + formula + "`, what does the symbol `" + name +
                           "` mean? Answer with a short phrase.";
    if (auto it = fewshot.symbol_info.find(name); it != fewshot.symbol_info.end())
      question += "\nAdditional information about the symbol: " + it->second;
    semantics += "- " + name + ": " + trim(ask(gateway, question, model_name, key++)) + "\n";
  }

  std::string request = "Translate the inductive-bias formula into a prompt for a multimodal model, following "
                        "the examples. Reply with the prompt only.\n\n" +
                        examples + "Symbol meanings:\n" + semantics + "\nFormula: " + formula + "\nPrompt:";
  std::string reply = trim(ask(gateway, request, model_name, key));
  if (property_name) reply = fill_property(std::move(reply), *property_name);

  if (!acceptable_refinement(reply)) {
    fallback.fallback_used = true;
    return fallback;
  }
  PromptBundle bundle = std::move(fallback);
  bundle.adaptive_text = std::move(reply);
  return bundle;
}

}  // namespace latentx
