#pragma once

// Inductive-bias formula language.
//
//   formula    := prob [ ("==" | "!=") prob ] [ "," ] [ "forall" constraint { "," constraint } ] [ "." ]
//   prob       := ("P" | "p") "(" symbol [ "|" condition { "," condition } ] ")"
//   condition  := symbol [ "=" scalar ]
//   symbol     := "z" "[" index "]" | "p" "[" index "]" | "G" { "'" } [ "[" index "]" ]
//   index      := identifier { "'" } | integer
//   constraint := index "!=" index                     (index distinctness)
//               | scalar "!=" scalar                   (constant distinctness)
//               | symbol { "," symbol } ("in" | "not in") group
//               | group "!=" group
//
// Unicode aliases: ∀ forall, ≠ !=, ∈ in, ∉ not in, ′ ', α alpha, β beta,
// γ gamma, δ delta, ∣ |.  '#' starts a comment in formula files.

#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace latentx {

enum class SymbolKind { Latent, Property, Group, Scalar };

struct Symbol {
  SymbolKind kind = SymbolKind::Latent;
  std::string name;                  // "z", "p", "G", "G'", "alpha", "1.5"
  std::optional<std::string> index;  // "i", "i'", "k", "0"

  bool operator==(const Symbol&) const = default;

  /// Integer subscript, when the index is a literal.
  std::optional<std::size_t> literal_index() const;
  /// Numeric value, for scalar constants written as numbers.
  std::optional<double> numeric_value() const;
};

std::string render(const Symbol& symbol);

struct Condition {
  Symbol symbol;
  std::optional<Symbol> value;  // free when absent: p(z_i | z_i')

  bool operator==(const Condition&) const = default;
};

struct ProbTerm {
  Symbol target;
  std::vector<Condition> conditions;

  bool operator==(const ProbTerm&) const = default;
};

enum class RelOp { Equal, NotEqual };

struct Relation {
  ProbTerm lhs;
  std::optional<RelOp> op;
  std::optional<ProbTerm> rhs;

  bool operator==(const Relation&) const = default;
};

struct IndexDistinct {
  std::string lhs, rhs;
  bool operator==(const IndexDistinct&) const = default;
};
struct ConstDistinct {
  Symbol lhs, rhs;
  bool operator==(const ConstDistinct&) const = default;
};
struct Membership {
  Symbol member;
  Symbol group;
  bool negated = false;
  bool operator==(const Membership&) const = default;
};
struct GroupDistinct {
  Symbol lhs, rhs;
  bool operator==(const GroupDistinct&) const = default;
};

using Constraint = std::variant<IndexDistinct, ConstDistinct, Membership, GroupDistinct>;

struct Quantifier {
  std::vector<Constraint> constraints;
  bool operator==(const Quantifier&) const = default;
};

struct FormulaAst {
  Relation relation;
  Quantifier quantifier;
  std::string source_text;

  // Structural equality; the source text is not part of the structure.
  bool operator==(const FormulaAst& other) const {
    return relation == other.relation && quantifier == other.quantifier;
  }
};

enum class BiasClass {
  Disentanglement,
  CombinationInterGroup,
  CombinationIntraGroup,
  ConditionalDependent,
  ConditionalIndependent,
};

std::string_view to_string(BiasClass bias);
std::optional<BiasClass> bias_from_string(std::string_view name);
inline bool is_conditional(BiasClass b) {
  return b == BiasClass::ConditionalDependent || b == BiasClass::ConditionalIndependent;
}
inline bool is_combination(BiasClass b) {
  return b == BiasClass::CombinationInterGroup || b == BiasClass::CombinationIntraGroup;
}

FormulaAst parse_formula(std::string_view text);
std::string render(const FormulaAst& ast);

/// Every symbol of the formula once, in order of first appearance.
std::vector<Symbol> extract_symbols(const FormulaAst& ast);

/// Throws Error(UnclassifiableFormula) when the formula matches none of the
/// five supported bias patterns.
BiasClass classify_bias(const FormulaAst& ast);
std::vector<BiasClass> classify_bias(std::span<const FormulaAst> asts);

struct FormulaLine {
  std::size_t line = 0;  // 1-based
  FormulaAst ast;
};

/// One formula per line, '#' comments, blank lines skipped. Errors carry
/// the offending line number; an input without formulas is EmptyFormulaSet.
std::vector<FormulaLine> parse_formula_file(std::istream& in);

}  // namespace latentx
