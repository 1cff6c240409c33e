#include "latentx/formula.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "latentx/error.hpp"

namespace latentx {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Syntax: return "SyntaxError";
    case ErrorKind::UnknownSymbolKind: return "UnknownSymbolKind";
    case ErrorKind::UnclassifiableFormula: return "UnclassifiableFormula";
    case ErrorKind::EmptyFormulaSet: return "EmptyFormulaSet";
    case ErrorKind::NoRuleMatch: return "NoRuleMatch";
    case ErrorKind::MissingProperty: return "MissingProperty";
    case ErrorKind::MissingGroupAssignment: return "MissingGroupAssignment";
    case ErrorKind::NoConfoundAvailable: return "NoConfoundAvailable";
    case ErrorKind::InvalidGrid: return "InvalidGrid";
    case ErrorKind::InvalidPlan: return "InvalidPlan";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::RemoteDecode: return "RemoteDecodeError";
    case ErrorKind::UnsupportedOperation: return "UnsupportedOperation";
    case ErrorKind::RaggedRow: return "RaggedRow";
    case ErrorKind::Transient: return "TransientError";
    case ErrorKind::Gateway: return "GatewayError";
    case ErrorKind::Auth: return "AuthError";
    case ErrorKind::CassetteMiss: return "CassetteMiss";
    case ErrorKind::Precondition: return "PreconditionError";
    case ErrorKind::ZeroNormEmbedding: return "ZeroNormEmbedding";
    case ErrorKind::EmptyCalibrationSet: return "EmptyCalibrationSet";
    case ErrorKind::EmptyHypothesis: return "EmptyHypothesis";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

std::string_view to_string(BiasClass bias) {
  switch (bias) {
    case BiasClass::Disentanglement: return "Disentanglement";
    case BiasClass::CombinationInterGroup: return "CombinationInterGroup";
    case BiasClass::CombinationIntraGroup: return "CombinationIntraGroup";
    case BiasClass::ConditionalDependent: return "ConditionalDependent";
    case BiasClass::ConditionalIndependent: return "ConditionalIndependent";
  }
  return "";
}

std::optional<BiasClass> bias_from_string(std::string_view name) {
  for (auto b : {BiasClass::Disentanglement, BiasClass::CombinationInterGroup,
                 BiasClass::CombinationIntraGroup, BiasClass::ConditionalDependent,
                 BiasClass::ConditionalIndependent}) {
    if (to_string(b) == name) return b;
  }
  return std::nullopt;
}

std::optional<std::size_t> Symbol::literal_index() const {
  if (!index || index->empty()) return std::nullopt;
  std::size_t value = 0;
  const auto* first = index->data();
  const auto* last = first + index->size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return value;
}

std::optional<double> Symbol::numeric_value() const {
  if (kind != SymbolKind::Scalar || name.empty()) return std::nullopt;
  char c = name.front();
  if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '-')) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(name, &used);
    if (used != name.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string render(const Symbol& symbol) {
  std::string out = symbol.name;
  if (symbol.index) out += "[" + *symbol.index + "]";
  return out;
}

namespace {

enum class Tok {
  Ident,
  Number,
  LParen,
  RParen,
  LBrack,
  RBrack,
  Bar,
  Comma,
  Assign,
  EqEq,
  NotEq,
  Dot,
  Forall,
  In,
  Not,
  NotIn,
  End,
};

struct Token {
  Tok kind;
  std::string text;
  std::size_t offset;
};

const std::set<std::string, std::less<>> kScalarNames = {"a",     "b",    "c",     "d",
                                                         "alpha", "beta", "gamma", "delta"};

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_'; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (pos_ >= text_.size()) {
        out.push_back({Tok::End, "", pos_});
        return out;
      }
      out.push_back(next());
    }
  }

 private:
  bool starts_with(std::string_view s) const { return text_.substr(pos_).starts_with(s); }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  // Appends any ASCII or U+2032 primes at the cursor.
  void take_primes(std::string& text) {
    while (true) {
      if (pos_ < text_.size() && text_[pos_] == '\'') {
        text += '\'';
        ++pos_;
      } else if (starts_with("′")) {
        text += '\'';
        pos_ += 3;
      } else {
        return;
      }
    }
  }

  Token next() {
    const std::size_t start = pos_;
    const unsigned char c = static_cast<unsigned char>(text_[pos_]);

    static const std::pair<std::string_view, Tok> kUnicodeOps[] = {
        {"∀", Tok::Forall}, {"≠", Tok::NotEq}, {"∈", Tok::In},
        {"∉", Tok::NotIn},  {"∣", Tok::Bar},
    };
    for (auto [seq, kind] : kUnicodeOps) {
      if (starts_with(seq)) {
        pos_ += seq.size();
        return {kind, std::string(seq), start};
      }
    }
    static const std::pair<std::string_view, std::string_view> kGreek[] = {
        {"α", "alpha"}, {"β", "beta"}, {"γ", "gamma"}, {"δ", "delta"}};
    for (auto [seq, name] : kGreek) {
      if (starts_with(seq)) {
        pos_ += seq.size();
        std::string text(name);
        take_primes(text);
        return {Tok::Ident, text, start};
      }
    }

    if (is_ident_start(c)) {
      std::string text;
      while (pos_ < text_.size() && is_ident_char(static_cast<unsigned char>(text_[pos_])))
        text += text_[pos_++];
      take_primes(text);
      if (text == "forall") return {Tok::Forall, text, start};
      if (text == "in") return {Tok::In, text, start};
      if (text == "not") return {Tok::Not, text, start};
      return {Tok::Ident, text, start};
    }
    const bool negative = c == '-' && pos_ + 1 < text_.size() &&
                          std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]));
    if (std::isdigit(c) || negative) {
      std::string text;
      if (negative) text += text_[pos_++];
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        text += text_[pos_++];
      if (pos_ + 1 < text_.size() && text_[pos_] == '.' &&
          std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
        text += text_[pos_++];
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
          text += text_[pos_++];
      }
      return {Tok::Number, text, start};
    }
    if (starts_with("==")) {
      pos_ += 2;
      return {Tok::EqEq, "==", start};
    }
    if (starts_with("!=")) {
      pos_ += 2;
      return {Tok::NotEq, "!=", start};
    }
    ++pos_;
    switch (c) {
      case '(': return {Tok::LParen, "(", start};
      case ')': return {Tok::RParen, ")", start};
      case '[': return {Tok::LBrack, "[", start};
      case ']': return {Tok::RBrack, "]", start};
      case '|': return {Tok::Bar, "|", start};
      case ',': return {Tok::Comma, ",", start};
      case '=': return {Tok::Assign, "=", start};
      case '.': return {Tok::Dot, ".", start};
      default: break;
    }
    throw SyntaxError(start, "unexpected character '" + std::string(1, static_cast<char>(c)) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(Lexer(text).run()) {}

  FormulaAst parse() {
    FormulaAst ast;
    ast.relation.lhs = parse_prob();
    if (at(Tok::EqEq) || at(Tok::Assign) || at(Tok::NotEq)) {
      ast.relation.op = at(Tok::NotEq) ? RelOp::NotEqual : RelOp::Equal;
      advance();
      const std::size_t rhs_offset = peek().offset;
      ast.relation.rhs = parse_prob();
      if (ast.relation.rhs->target != ast.relation.lhs.target)
        throw SyntaxError(rhs_offset, "both sides must describe the same latent variable");
    }
    collect_indices(ast.relation.lhs);
    if (ast.relation.rhs) collect_indices(*ast.relation.rhs);

    if (at(Tok::Comma)) {
      advance();
      if (!at(Tok::Forall)) throw SyntaxError(peek().offset, "expected 'forall' after ','");
    }
    if (at(Tok::Forall)) {
      advance();
      do {
        parse_constraint(ast.quantifier);
      } while (accept(Tok::Comma));
    }
    accept(Tok::Dot);
    if (!at(Tok::End)) throw SyntaxError(peek().offset, "unexpected '" + peek().text + "'");
    return ast;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  bool at(Tok kind, std::size_t ahead = 0) const { return peek(ahead).kind == kind; }
  const Token& advance() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }
  bool accept(Tok kind) {
    if (!at(kind)) return false;
    advance();
    return true;
  }
  const Token& expect(Tok kind, std::string_view what) {
    if (!at(kind))
      throw SyntaxError(peek().offset, "expected " + std::string(what) +
                                           (at(Tok::End) ? " at end of input"
                                                         : ", found '" + peek().text + "'"));
    return advance();
  }

  static bool symbol_like(const Token& t) {
    if (t.kind != Tok::Ident || t.text.empty()) return false;
    char c = t.text.front();
    return c == 'z' || c == 'p' || c == 'G';
  }

  static Error unknown_symbol(const Token& t) {
    return Error(ErrorKind::UnknownSymbolKind, "unknown symbol kind '" + t.text + "' at byte " +
                                                   std::to_string(t.offset));
  }

  std::string parse_index() {
    if (at(Tok::Ident) || at(Tok::Number)) {
      const Token& t = advance();
      if (t.kind == Tok::Number && !std::all_of(t.text.begin(), t.text.end(), ::isdigit))
        throw SyntaxError(t.offset, "subscript must be a non-negative integer or identifier");
      return t.text;
    }
    throw SyntaxError(peek().offset, "expected subscript");
  }

  Symbol parse_symbol() {
    const Token& t = expect(Tok::Ident, "symbol");
    Symbol s;
    s.name = t.text;
    switch (t.text.front()) {
      case 'z': s.kind = SymbolKind::Latent; break;
      case 'p': s.kind = SymbolKind::Property; break;
      case 'G': s.kind = SymbolKind::Group; break;
      default: throw unknown_symbol(t);
    }
    if (s.kind == SymbolKind::Group) {
      if (accept(Tok::LBrack)) {
        s.index = parse_index();
        expect(Tok::RBrack, "']'");
      }
    } else {
      expect(Tok::LBrack, "'[' after " + t.text);
      s.index = parse_index();
      expect(Tok::RBrack, "']'");
    }
    return s;
  }

  Symbol parse_scalar() {
    const Token& t = advance();
    if (t.kind == Tok::Number) return Symbol{SymbolKind::Scalar, t.text, std::nullopt};
    if (t.kind == Tok::Ident) {
      std::string base = t.text.substr(0, t.text.find('\''));
      if (kScalarNames.contains(base)) return Symbol{SymbolKind::Scalar, t.text, std::nullopt};
      throw unknown_symbol(t);
    }
    throw SyntaxError(t.offset, "expected constant");
  }

  ProbTerm parse_prob() {
    const Token& head = peek();
    if (!(head.kind == Tok::Ident && (head.text == "P" || head.text == "p") && at(Tok::LParen, 1)))
      throw SyntaxError(head.offset, "expected probability term 'P(...)'");
    advance();
    advance();
    ProbTerm term;
    const std::size_t target_offset = peek().offset;
    term.target = parse_symbol();
    if (term.target.kind != SymbolKind::Latent)
      throw SyntaxError(target_offset, "probability target must be a latent variable z[..]");
    if (accept(Tok::Bar)) {
      do {
        const std::size_t offset = peek().offset;
        Condition cond;
        cond.symbol = parse_symbol();
        for (const auto& existing : term.conditions) {
          if (existing.symbol == cond.symbol)
            throw SyntaxError(offset, "duplicate condition on " + render(cond.symbol));
        }
        if (accept(Tok::Assign) || accept(Tok::EqEq)) cond.value = parse_scalar();
        term.conditions.push_back(std::move(cond));
      } while (accept(Tok::Comma));
    }
    expect(Tok::RParen, "')'");
    return term;
  }

  void collect_indices(const ProbTerm& term) {
    if (term.target.index) indices_.insert(*term.target.index);
    for (const auto& c : term.conditions)
      if (c.symbol.index) indices_.insert(*c.symbol.index);
  }

  void parse_constraint(Quantifier& q) {
    const Token& first = peek();
    if (symbol_like(first)) {
      std::vector<Symbol> members{parse_symbol()};
      while (true) {
        if (at(Tok::In) || at(Tok::NotIn) || (at(Tok::Not) && at(Tok::In, 1))) {
          bool negated = !at(Tok::In);
          advance();
          if (at(Tok::In)) advance();
          const std::size_t group_offset = peek().offset;
          Symbol group = parse_symbol();
          if (group.kind != SymbolKind::Group)
            throw SyntaxError(group_offset, "membership target must be a group G");
          for (auto& m : members) {
            if (m.index) indices_.insert(*m.index);
            q.constraints.push_back(Membership{std::move(m), group, negated});
          }
          return;
        }
        if (at(Tok::NotEq) && members.size() == 1 && members[0].kind == SymbolKind::Group) {
          advance();
          const std::size_t rhs_offset = peek().offset;
          Symbol rhs = parse_symbol();
          if (rhs.kind != SymbolKind::Group)
            throw SyntaxError(rhs_offset, "a group can only be compared with a group");
          q.constraints.push_back(GroupDistinct{std::move(members[0]), std::move(rhs)});
          return;
        }
        if (at(Tok::Comma) && symbol_like(peek(1)) && members.back().kind != SymbolKind::Group) {
          advance();
          members.push_back(parse_symbol());
          continue;
        }
        throw SyntaxError(peek().offset, "expected 'in' or 'not in' after " + render(members.back()));
      }
    }

    if (!(first.kind == Tok::Ident || first.kind == Tok::Number))
      throw SyntaxError(first.offset, "expected quantifier constraint");
    const Token lhs = advance();
    expect(Tok::NotEq, "'!='");
    const Token rhs = advance();
    if (!(rhs.kind == Tok::Ident || rhs.kind == Tok::Number))
      throw SyntaxError(rhs.offset, "expected right-hand side of '!='");

    const bool lhs_index = indices_.contains(lhs.text);
    const bool rhs_index = indices_.contains(rhs.text);
    if (lhs_index && rhs_index) {
      q.constraints.push_back(IndexDistinct{lhs.text, rhs.text});
      return;
    }
    if (lhs_index != rhs_index && (lhs.kind == Tok::Ident || rhs.kind == Tok::Ident)) {
      const Token& stray = lhs_index ? rhs : lhs;
      if (stray.kind == Tok::Ident && !kScalarNames.contains(stray.text.substr(0, stray.text.find('\''))))
        throw SyntaxError(stray.offset, "'" + stray.text + "' is not a subscript used in the formula");
    }
    pos_ -= 3;
    Symbol a = parse_scalar();
    expect(Tok::NotEq, "'!='");
    Symbol b = parse_scalar();
    q.constraints.push_back(ConstDistinct{std::move(a), std::move(b)});
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::set<std::string, std::less<>> indices_;
};

std::string render(const ProbTerm& term) {
  std::string out = "P(" + render(term.target);
  if (!term.conditions.empty()) {
    out += " | ";
    for (std::size_t i = 0; i < term.conditions.size(); ++i) {
      if (i) out += ", ";
      out += render(term.conditions[i].symbol);
      if (term.conditions[i].value) out += " = " + render(*term.conditions[i].value);
    }
  }
  return out + ")";
}

std::string render(const Constraint& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, IndexDistinct>) {
          return v.lhs + " != " + v.rhs;
        } else if constexpr (std::is_same_v<T, Membership>) {
          return render(v.member) + (v.negated ? " not in " : " in ") + render(v.group);
        } else {
          return render(v.lhs) + " != " + render(v.rhs);
        }
      },
      c);
}

// Pattern facts gathered once per formula for classification.
struct Shape {
  const Condition* lhs_cond = nullptr;
  const Condition* rhs_cond = nullptr;
  const Membership* target_membership = nullptr;
  const Membership* cond_membership = nullptr;
  bool has_group_constraints = false;
};

bool has_const_distinct(const FormulaAst& ast, const Symbol& a, const Symbol& b) {
  if (auto x = a.numeric_value(), y = b.numeric_value(); x && y && *x != *y) return true;
  for (const auto& c : ast.quantifier.constraints) {
    if (const auto* d = std::get_if<ConstDistinct>(&c)) {
      if ((d->lhs == a && d->rhs == b) || (d->lhs == b && d->rhs == a)) return true;
    }
  }
  return false;
}

bool has_index_distinct(const FormulaAst& ast, const Symbol& a, const Symbol& b) {
  if (!a.index || !b.index) return false;
  if (auto x = a.literal_index(), y = b.literal_index(); x && y) return *x != *y;
  for (const auto& c : ast.quantifier.constraints) {
    if (const auto* d = std::get_if<IndexDistinct>(&c)) {
      if ((d->lhs == *a.index && d->rhs == *b.index) || (d->lhs == *b.index && d->rhs == *a.index))
        return true;
    }
  }
  return false;
}

bool groups_distinct(const FormulaAst& ast, const Symbol& g, const Symbol& h) {
  if (g == h) return false;
  if (auto x = g.literal_index(), y = h.literal_index(); x && y && g.name == h.name) return *x != *y;
  for (const auto& c : ast.quantifier.constraints) {
    if (const auto* d = std::get_if<GroupDistinct>(&c)) {
      if ((d->lhs == g && d->rhs == h) || (d->lhs == h && d->rhs == g)) return true;
    }
  }
  return false;
}

[[noreturn]] void unclassifiable(const FormulaAst& ast, const std::string& why) {
  throw Error(ErrorKind::UnclassifiableFormula,
              "unclassifiable formula '" + render(ast) + "': " + why);
}

}  // namespace

FormulaAst parse_formula(std::string_view text) {
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
    throw SyntaxError(0, "empty formula");
  FormulaAst ast = Parser(text).parse();
  ast.source_text = std::string(text);
  return ast;
}

std::string render(const FormulaAst& ast) {
  std::string out = render(ast.relation.lhs);
  if (ast.relation.op && ast.relation.rhs) {
    out += *ast.relation.op == RelOp::Equal ? " == " : " != ";
    out += render(*ast.relation.rhs);
  }
  const auto& cs = ast.quantifier.constraints;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    out += i == 0 ? " forall " : ", ";
    out += render(cs[i]);
  }
  return out;
}

std::vector<Symbol> extract_symbols(const FormulaAst& ast) {
  std::vector<Symbol> out;
  auto add = [&out](const Symbol& s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  auto add_term = [&](const ProbTerm& t) {
    add(t.target);
    for (const auto& c : t.conditions) {
      add(c.symbol);
      if (c.value) add(*c.value);
    }
  };
  add_term(ast.relation.lhs);
  if (ast.relation.rhs) add_term(*ast.relation.rhs);
  for (const auto& c : ast.quantifier.constraints) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Membership>) {
            add(v.member);
            add(v.group);
          } else if constexpr (std::is_same_v<T, ConstDistinct> || std::is_same_v<T, GroupDistinct>) {
            add(v.lhs);
            add(v.rhs);
          }
        },
        c);
  }
  return out;
}

BiasClass classify_bias(const FormulaAst& ast) {
  const Relation& rel = ast.relation;
  if (!rel.op || !rel.rhs) unclassifiable(ast, "no relation between two probability terms");
  if (rel.lhs.conditions.size() != 1 || rel.rhs->conditions.size() != 1)
    unclassifiable(ast, "each side must carry exactly one condition");

  Shape shape;
  shape.lhs_cond = &rel.lhs.conditions.front();
  shape.rhs_cond = &rel.rhs->conditions.front();
  if (shape.lhs_cond->symbol != shape.rhs_cond->symbol)
    unclassifiable(ast, "both sides must condition on the same symbol");
  if (!shape.lhs_cond->value || !shape.rhs_cond->value)
    unclassifiable(ast, "conditions must assign constants");
  if (!has_const_distinct(ast, *shape.lhs_cond->value, *shape.rhs_cond->value))
    unclassifiable(ast, "the two conditioning constants are not declared distinct");

  const Symbol& target = rel.lhs.target;
  const Symbol& cond = shape.lhs_cond->symbol;
  for (const auto& c : ast.quantifier.constraints) {
    if (const auto* m = std::get_if<Membership>(&c)) {
      shape.has_group_constraints = true;
      if (m->member == target && !shape.target_membership) shape.target_membership = m;
      if (m->member == cond && !shape.cond_membership) shape.cond_membership = m;
    } else if (std::holds_alternative<GroupDistinct>(c)) {
      shape.has_group_constraints = true;
    }
  }
  const RelOp op = *rel.op;

  if (cond.kind == SymbolKind::Property) {
    const Membership* m = shape.target_membership;
    if (!m) unclassifiable(ast, "conditional bias needs the target's group membership");
    if (m->group.index && cond.index && *m->group.index != *cond.index)
      unclassifiable(ast, "group subscript does not match the property subscript");
    if (op == RelOp::NotEqual && !m->negated) return BiasClass::ConditionalDependent;
    if (op == RelOp::Equal && m->negated) return BiasClass::ConditionalIndependent;
    unclassifiable(ast, "relation and membership polarity disagree");
  }
  if (cond.kind != SymbolKind::Latent) unclassifiable(ast, "condition must be a latent or property variable");

  if (!shape.has_group_constraints) {
    if (op == RelOp::Equal && has_index_distinct(ast, target, cond)) return BiasClass::Disentanglement;
    unclassifiable(ast, "no group constraints and no index distinctness for an equality");
  }
  const Membership* mt = shape.target_membership;
  const Membership* mc = shape.cond_membership;
  if (!mt || !mc || mt->negated || mc->negated)
    unclassifiable(ast, "combination bias needs both latents to be members of groups");
  if (mt->group == mc->group) {
    if (op == RelOp::NotEqual && has_index_distinct(ast, target, cond))
      return BiasClass::CombinationIntraGroup;
    unclassifiable(ast, "same-group latents must be related by '!=' with distinct indices");
  }
  if (op == RelOp::Equal && groups_distinct(ast, mt->group, mc->group))
    return BiasClass::CombinationInterGroup;
  unclassifiable(ast, "cross-group latents must be related by '==' in groups declared distinct");
}

std::vector<BiasClass> classify_bias(std::span<const FormulaAst> asts) {
  std::vector<BiasClass> out;
  out.reserve(asts.size());
  for (const auto& a : asts) out.push_back(classify_bias(a));
  return out;
}

std::vector<FormulaLine> parse_formula_file(std::istream& in) {
  std::vector<FormulaLine> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    try {
      out.push_back({number, parse_formula(line)});
    } catch (const SyntaxError& e) {
      throw SyntaxError(e.offset(), e.detail(), number);
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(number) + ": " + e.what());
    }
  }
  if (out.empty()) throw Error(ErrorKind::EmptyFormulaSet, "no formulas in input");
  return out;
}

}  // namespace latentx
