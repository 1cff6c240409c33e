#include <random>
#include <set>
#include <sstream>

#include "latentx/formula.hpp"
#include "test_util.hpp"

using namespace latentx;

namespace {

const char* kDisentangle = "P(z[i] | z[i'] = a) == P(z[i] | z[i'] = b) forall i != i', a != b";
const char* kInter = "P(z[i] | z[j] = a) == P(z[i] | z[j] = b) forall z[i] in G, z[j] in G', G != G', a != b";
const char* kIntra = "P(z[i] | z[i'] = a) != P(z[i] | z[i'] = b) forall z[i] in G, z[i'] in G, i != i', a != b";
const char* kDependent = "P(z[i] | p[k] = a) != P(z[i] | p[k] = b) forall z[i] in G[k], a != b";
const char* kIndependent = "P(z[j] | p[k] = a) == P(z[j] | p[k] = b) forall z[j] not in G[k], a != b";

Symbol sym(SymbolKind kind, std::string name, std::optional<std::string> index = std::nullopt) {
  return Symbol{kind, std::move(name), std::move(index)};
}

}  // namespace

TEST_CASE("disentanglement formula parses to an equality with index and constant distinctness") {
  const FormulaAst ast = parse_formula(kDisentangle);
  REQUIRE(ast.relation.op == RelOp::Equal);
  REQUIRE(ast.relation.rhs.has_value());
  CHECK(ast.relation.lhs.target == sym(SymbolKind::Latent, "z", "i"));
  REQUIRE(ast.relation.lhs.conditions.size() == 1);
  CHECK(ast.relation.lhs.conditions[0].symbol == sym(SymbolKind::Latent, "z", "i'"));
  REQUIRE(ast.quantifier.constraints.size() == 2);
  CHECK(std::get<IndexDistinct>(ast.quantifier.constraints[0]) == IndexDistinct{"i", "i'"});
  CHECK(std::get<ConstDistinct>(ast.quantifier.constraints[1]) ==
        ConstDistinct{sym(SymbolKind::Scalar, "a"), sym(SymbolKind::Scalar, "b")});
  CHECK(ast.source_text == kDisentangle);
}

TEST_CASE("conditional formula carries membership in the property group") {
  const FormulaAst ast = parse_formula(kDependent);
  CHECK(ast.relation.op == RelOp::NotEqual);
  REQUIRE(ast.quantifier.constraints.size() == 2);
  const auto& m = std::get<Membership>(ast.quantifier.constraints[0]);
  CHECK(m.member == sym(SymbolKind::Latent, "z", "i"));
  CHECK(m.group == sym(SymbolKind::Group, "G", "k"));
  CHECK_FALSE(m.negated);
}

TEST_CASE("unicode spellings parse to the ASCII structure") {
  const FormulaAst ascii = parse_formula(kDependent);
  const FormulaAst unicode = parse_formula("P(z[i] ∣ p[k] = α) ≠ P(z[i] ∣ p[k] = β) ∀ z[i] ∈ G[k], α ≠ β");
  CHECK(render(ascii) == render(parse_formula("P(z[i] | p[k] = a) != P(z[i] | p[k] = b) forall z[i] in G[k], a != b")));
  CHECK(classify_bias(unicode) == BiasClass::ConditionalDependent);
  CHECK(ascii.relation.op == unicode.relation.op);
  CHECK(parse_formula("P(z[j] | p[k] = a) == P(z[j] | p[k] = b) ∀ z[j] ∉ G[k], a ≠ b") == parse_formula(kIndependent));
  CHECK(parse_formula("P(z[i] | z[i′] = a) == P(z[i] | z[i′] = b) forall i ≠ i′, a ≠ b") == parse_formula(kDisentangle));
}

TEST_CASE("degenerate identity formula parses but does not classify") {
  const FormulaAst ast = parse_formula("P(z[1] | z[2] = a) == P(z[1] | z[2] = a)");
  CHECK(ast.relation.op == RelOp::Equal);
  CHECK_ERROR_KIND(classify_bias(ast), ErrorKind::UnclassifiableFormula);
}

TEST_CASE("syntax errors report the byte offset") {
  try {
    parse_formula("P(z[i] | z[i'] = a) === P(z[i])");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.kind() == ErrorKind::Syntax);
    CHECK(e.offset() >= 20);
    CHECK(e.offset() <= 22);
  }
  CHECK_ERROR_KIND(parse_formula(""), ErrorKind::Syntax);
  CHECK_ERROR_KIND(parse_formula("P(z[i]"), ErrorKind::Syntax);
}

TEST_CASE("identifiers outside the symbol kinds are rejected") {
  CHECK_ERROR_KIND(parse_formula("P(x[i] | z[j] = a) == P(x[i] | z[j] = b)"), ErrorKind::UnknownSymbolKind);
  CHECK_ERROR_KIND(parse_formula("P(z[i] | z[j] = q) == P(z[i] | z[j] = b)"), ErrorKind::UnknownSymbolKind);
}

TEST_CASE("extract_symbols lists each symbol once in first-appearance order") {
  const auto dis = extract_symbols(parse_formula(kDisentangle));
  REQUIRE(dis.size() == 4);
  CHECK(dis[0] == sym(SymbolKind::Latent, "z", "i"));
  CHECK(dis[1] == sym(SymbolKind::Latent, "z", "i'"));
  CHECK(dis[2] == sym(SymbolKind::Scalar, "a"));
  CHECK(dis[3] == sym(SymbolKind::Scalar, "b"));

  const auto cond = extract_symbols(parse_formula(kDependent));
  REQUIRE(cond.size() == 5);
  CHECK(cond[0] == sym(SymbolKind::Latent, "z", "i"));
  CHECK(cond[1] == sym(SymbolKind::Property, "p", "k"));
  CHECK(cond[2] == sym(SymbolKind::Scalar, "a"));
  CHECK(cond[3] == sym(SymbolKind::Scalar, "b"));
  CHECK(cond[4] == sym(SymbolKind::Group, "G", "k"));

  const auto single = extract_symbols(parse_formula("P(z[1])"));
  REQUIRE(single.size() == 1);
  CHECK(single[0] == sym(SymbolKind::Latent, "z", "1"));
  CHECK(single[0].literal_index() == 1u);
}

TEST_CASE("the five canonical formulas classify bijectively onto the five biases") {
  const std::vector<std::pair<const char*, BiasClass>> cases = {
      {kDisentangle, BiasClass::Disentanglement},
      {kInter, BiasClass::CombinationInterGroup},
      {kIntra, BiasClass::CombinationIntraGroup},
      {kDependent, BiasClass::ConditionalDependent},
      {kIndependent, BiasClass::ConditionalIndependent},
  };
  std::set<BiasClass> seen;
  std::vector<FormulaAst> asts;
  for (const auto& [text, bias] : cases) {
    CAPTURE(text);
    CHECK(classify_bias(parse_formula(text)) == bias);
    seen.insert(bias);
    asts.push_back(parse_formula(text));
  }
  CHECK(seen.size() == 5);
  const auto batch = classify_bias(asts);
  for (std::size_t k = 0; k < cases.size(); ++k) CHECK(batch[k] == cases[k].second);
}

TEST_CASE("concrete indices classify like free ones") {
  CHECK(classify_bias(parse_formula("P(z[1] | z[2] = a) == P(z[1] | z[2] = b) forall a != b")) ==
        BiasClass::Disentanglement);
  CHECK(classify_bias(parse_formula("P(z[1] | z[3] = 0) == P(z[1] | z[3] = 1)")) == BiasClass::Disentanglement);
  CHECK(classify_bias(parse_formula("P(z[1] | z[3] = a) == P(z[1] | z[3] = b) forall z[1] in G[1], z[3] in G[2], a != b")) ==
        BiasClass::CombinationInterGroup);
}

TEST_CASE("formulas outside the patterns are unclassifiable") {
  CHECK_ERROR_KIND(classify_bias(parse_formula("P(z[i] | z[j] = a) == P(z[i] | z[j] = b)")),
                   ErrorKind::UnclassifiableFormula);
  CHECK_ERROR_KIND(classify_bias(parse_formula("P(z[i])")), ErrorKind::UnclassifiableFormula);
  // dependent shape with the wrong relation
  CHECK_ERROR_KIND(classify_bias(parse_formula("P(z[i] | p[k] = a) == P(z[i] | p[k] = b) forall z[i] in G[k], a != b")),
                   ErrorKind::UnclassifiableFormula);
  // membership in a group other than the property's
  CHECK_ERROR_KIND(classify_bias(parse_formula("P(z[i] | p[1] = a) != P(z[i] | p[1] = b) forall z[i] in G[2], a != b")),
                   ErrorKind::UnclassifiableFormula);
}

TEST_CASE("render round-trips random formulas") {
  const std::vector<std::string> targets = {"z[i]", "z[i]", "z[j]", "z[0]", "z[12]"};
  const std::vector<std::string> conds = {"z[i']", "z[i']", "z[k]", "p[k]", "p[2]", "z[3]"};
  const std::vector<std::string> consts = {"a", "b", "alpha", "beta", "0", "-1.5", "3"};
  const std::vector<std::string> extras = {"i != i'", "z[i] in G", "z[j] not in G[k]", "G != G'", "z[i], z[k] in G'"};
  std::mt19937 rng(1234);
  auto pick = [&rng](const std::vector<std::string>& v) { return v[rng() % v.size()]; };
  for (int trial = 0; trial < 500; ++trial) {
    const std::string t = pick(targets);
    const std::string c = pick(conds);
    std::string text = "P(" + t + " | " + c + " = " + pick(consts) + ") " + (rng() % 2 ? "==" : "!=") + " P(" + t +
                       " | " + c + " = " + pick(consts) + ")";
    std::vector<std::string> usable;
    for (const auto& e : extras)
      if (e != "i != i'" || (t == "z[i]" && c == "z[i']")) usable.push_back(e);
    const int n = static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) text += (k == 0 ? " forall " : ", ") + pick(usable);
    CAPTURE(text);
    const FormulaAst a = parse_formula(text);
    const std::string rendered = render(a);
    CAPTURE(rendered);
    CHECK(parse_formula(rendered) == a);
    CHECK(render(parse_formula(rendered)) == rendered);
  }
}

TEST_CASE("classification is total: every formula either classifies or is rejected") {
  const std::vector<std::string> pool = {kDisentangle, kInter, kIntra, kDependent, kIndependent,
                                         "P(z[i] | z[j] = a) != P(z[i] | z[j] = b) forall z[i] in G, z[j] in G', G != G', a != b",
                                         "P(z[i] | p[k] = a) == P(z[i] | p[k] = b) forall z[i] in G[k], a != b",
                                         "P(z[i])"};
  for (const auto& text : pool) {
    CAPTURE(text);
    const auto kind = error_kind([&] { classify_bias(parse_formula(text)); });
    CHECK((!kind || *kind == ErrorKind::UnclassifiableFormula));
  }
}

TEST_CASE("formula files skip comments and blanks and name the failing line") {
  std::istringstream ok("# header\n\n" + std::string(kDisentangle) + "  # trailing\n" + kDependent + "\n");
  const auto lines = parse_formula_file(ok);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].line == 3);
  CHECK(lines[1].line == 4);
  CHECK(classify_bias(lines[1].ast) == BiasClass::ConditionalDependent);

  std::istringstream bad(std::string(kDisentangle) + "\n# c\nP(z[i] | z[i'] = a) === P(z[i])\n");
  try {
    parse_formula_file(bad);
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 3u);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::istringstream empty("# nothing\n\n");
  CHECK_ERROR_KIND(parse_formula_file(empty), ErrorKind::EmptyFormulaSet);
}
