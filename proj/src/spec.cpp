#include "privstream/spec.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>
#include <unordered_map>

namespace privstream {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::array<std::string_view, 4> kConnectiveWords = {"not", "and", "or", "implies"};
constexpr std::array<std::string_view, 8> kTemporalWords = {"G", "always", "F", "eventually",
                                                            "X", "next", "U", "until"};

bool is_temporal_word(std::string_view w) {
  return std::find(kTemporalWords.begin(), kTemporalWords.end(), w) != kTemporalWords.end();
}

bool is_reserved(std::string_view w) {
  return is_temporal_word(w) ||
         std::find(kConnectiveWords.begin(), kConnectiveWords.end(), w) != kConnectiveWords.end();
}

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

enum class Tok { LParen, RParen, Not, And, Or, Implies, Ident, Temporal, End };

struct Token {
  Tok kind;
  std::string text;
  bool quoted = false;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t{Tok::End, {}, false, line_, col_};
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (c == '(') {
        t.kind = Tok::LParen;
        advance(1);
      } else if (c == ')') {
        t.kind = Tok::RParen;
        advance(1);
      } else if (c == '!') {
        t.kind = Tok::Not;
        advance(1);
      } else if (c == '&') {
        t.kind = Tok::And;
        advance(src_.substr(pos_, 2) == "&&" ? 2 : 1);
      } else if (c == '|') {
        t.kind = Tok::Or;
        advance(src_.substr(pos_, 2) == "||" ? 2 : 1);
      } else if (src_.substr(pos_, 2) == "->") {
        t.kind = Tok::Implies;
        advance(2);
      } else if (match_symbol("¬")) {  // ¬
        t.kind = Tok::Not;
      } else if (match_symbol("∧")) {  // ∧
        t.kind = Tok::And;
      } else if (match_symbol("∨")) {  // ∨
        t.kind = Tok::Or;
      } else if (match_symbol("→")) {  // →
        t.kind = Tok::Implies;
      } else if (match_symbol("□")) {  // □
        t.kind = Tok::Temporal;
        t.text = "G";
      } else if (c == '"') {
        advance(1);
        const std::size_t start = pos_;
        while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') advance(1);
        if (pos_ >= src_.size() || src_[pos_] != '"') {
          throw SyntaxError("unterminated quoted proposition", t.line, t.column);
        }
        if (pos_ == start) throw SyntaxError("empty quoted proposition", t.line, t.column);
        t.kind = Tok::Ident;
        t.text = std::string(src_.substr(start, pos_ - start));
        t.quoted = true;
        advance(1);
      } else if (is_ident_start(c)) {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance(1);
        t.text = std::string(src_.substr(start, pos_ - start));
        if (t.text == "not") {
          t.kind = Tok::Not;
        } else if (t.text == "and") {
          t.kind = Tok::And;
        } else if (t.text == "or") {
          t.kind = Tok::Or;
        } else if (t.text == "implies") {
          t.kind = Tok::Implies;
        } else if (is_temporal_word(t.text)) {
          t.kind = Tok::Temporal;
        } else {
          t.kind = Tok::Ident;
        }
      } else {
        throw SyntaxError(std::string("unexpected character '") + c + "'", t.line, t.column);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  bool match_symbol(std::string_view sym) {
    if (src_.substr(pos_, sym.size()) != sym) return false;
    advance(sym.size());
    return true;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance(1);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
      } else {
        break;
      }
    }
  }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i, ++pos_) {
      const auto byte = static_cast<unsigned char>(src_[pos_]);
      if (byte == '\n') {
        ++line_;
        col_ = 1;
      } else if ((byte & 0xC0u) != 0x80u) {  // count code points, not bytes
        ++col_;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

const char* describe(Tok k) {
  switch (k) {
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Not: return "negation";
    case Tok::And: return "conjunction";
    case Tok::Or: return "disjunction";
    case Tok::Implies: return "implication";
    case Tok::Ident: return "proposition";
    case Tok::Temporal: return "temporal operator";
    case Tok::End: return "end of input";
  }
  return "token";
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  SpecFormula parse() {
    if (peek().kind != Tok::Temporal || (peek().text != "G" && peek().text != "always")) {
      throw MissingAlways("specification must be wrapped in G(...) or always(...); found " +
                          std::string(describe(peek().kind)) + " at " + where(peek()));
    }
    next();
    expect(Tok::LParen);
    NodePtr body = expr();
    expect(Tok::RParen);
    if (peek().kind != Tok::End) {
      throw SyntaxError(std::string("unexpected ") + describe(peek().kind) + " after specification",
                        peek().line, peek().column);
    }
    return SpecFormula(std::move(body), std::move(props_));
  }

 private:
  // expr := or_e ( "->" expr )?
  NodePtr expr() {
    NodePtr lhs = or_expr();
    if (peek().kind == Tok::Implies) {
      next();
      NodePtr rhs = expr();
      return make(Implies{std::move(lhs), std::move(rhs)});
    }
    return lhs;
  }

  NodePtr or_expr() {
    NodePtr lhs = and_expr();
    while (peek().kind == Tok::Or) {
      next();
      lhs = make(Or{std::move(lhs), and_expr()});
    }
    return lhs;
  }

  NodePtr and_expr() {
    NodePtr lhs = not_expr();
    while (peek().kind == Tok::And) {
      next();
      lhs = make(And{std::move(lhs), not_expr()});
    }
    return lhs;
  }

  NodePtr not_expr() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Not:
        next();
        return make(Not{not_expr()});
      case Tok::LParen: {
        next();
        NodePtr inner = expr();
        expect(Tok::RParen);
        return inner;
      }
      case Tok::Ident: {
        std::string name = next().text;
        return make(Atom{name, intern(name)});
      }
      case Tok::Temporal:
        throw NestedTemporal("temporal operator '" + t.text + "' at " + where(t) +
                             " is not allowed inside the body of G(...)");
      default:
        throw SyntaxError(std::string("expected proposition, negation or '(' but found ") +
                              describe(t.kind),
                          t.line, t.column);
    }
  }

  std::size_t intern(const std::string& name) {
    auto [it, inserted] = index_.try_emplace(name, props_.size());
    if (inserted) props_.push_back(name);
    return it->second;
  }

  template <class T>
  static NodePtr make(T&& v) {
    return std::make_shared<const FormulaNode>(FormulaNode{std::forward<T>(v)});
  }

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  void expect(Tok kind) {
    if (peek().kind != kind) {
      throw SyntaxError(std::string("expected ") + describe(kind) + " but found " +
                            describe(peek().kind),
                        peek().line, peek().column);
    }
    next();
  }

  static std::string where(const Token& t) {
    return "line " + std::to_string(t.line) + ", column " + std::to_string(t.column);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<std::string> props_;
  std::unordered_map<std::string, std::size_t> index_;
};

int precedence(const FormulaNode& n) {
  return std::visit(overloaded{[](const Implies&) { return 1; }, [](const Or&) { return 2; },
                               [](const And&) { return 3; }, [](const Not&) { return 4; },
                               [](const Atom&) { return 5; }},
                    n.op);
}

std::string render_atom(const std::string& name) {
  const bool plain = !name.empty() && is_ident_start(name[0]) &&
                     std::all_of(name.begin(), name.end(), is_ident_char) && !is_reserved(name);
  return plain ? name : "\"" + name + "\"";
}

void render(const FormulaNode& n, int min_prec, std::ostringstream& os) {
  const int prec = precedence(n);
  const bool paren = prec < min_prec;
  if (paren) os << '(';
  std::visit(overloaded{
                 [&](const Atom& a) { os << render_atom(a.name); },
                 [&](const Not& x) {
                   os << '!';
                   render(*x.child, 4, os);
                 },
                 [&](const And& x) {
                   render(*x.lhs, 3, os);
                   os << " & ";
                   render(*x.rhs, 4, os);
                 },
                 [&](const Or& x) {
                   render(*x.lhs, 2, os);
                   os << " | ";
                   render(*x.rhs, 3, os);
                 },
                 [&](const Implies& x) {
                   render(*x.lhs, 2, os);
                   os << " -> ";
                   render(*x.rhs, 1, os);
                 },
             },
             n.op);
  if (paren) os << ')';
}

template <class Lookup>
bool eval_with(const FormulaNode& n, const Lookup& lookup) {
  return std::visit(
      overloaded{
          [&](const Atom& a) { return lookup(a); },
          [&](const Not& x) { return !eval_with(*x.child, lookup); },
          [&](const And& x) { return eval_with(*x.lhs, lookup) && eval_with(*x.rhs, lookup); },
          [&](const Or& x) { return eval_with(*x.lhs, lookup) || eval_with(*x.rhs, lookup); },
          [&](const Implies& x) { return !eval_with(*x.lhs, lookup) || eval_with(*x.rhs, lookup); },
      },
      n.op);
}

}  // namespace

bool structurally_equal(const FormulaNode& a, const FormulaNode& b) {
  if (a.op.index() != b.op.index()) return false;
  return std::visit(
      overloaded{
          [&](const Atom& x) { return x.name == std::get<Atom>(b.op).name; },
          [&](const Not& x) { return structurally_equal(*x.child, *std::get<Not>(b.op).child); },
          [&](const And& x) {
            const auto& y = std::get<And>(b.op);
            return structurally_equal(*x.lhs, *y.lhs) && structurally_equal(*x.rhs, *y.rhs);
          },
          [&](const Or& x) {
            const auto& y = std::get<Or>(b.op);
            return structurally_equal(*x.lhs, *y.lhs) && structurally_equal(*x.rhs, *y.rhs);
          },
          [&](const Implies& x) {
            const auto& y = std::get<Implies>(b.op);
            return structurally_equal(*x.lhs, *y.lhs) && structurally_equal(*x.rhs, *y.rhs);
          },
      },
      a.op);
}

Assignment::Assignment(std::size_t size, std::uint32_t bits) : size_(size), bits_(bits) {
  if (size > kMaxAssignmentBits) throw TooManyPropositions("assignment wider than supported");
  if (size < 32 && (bits >> size) != 0) throw Error("assignment bits exceed its size");
}

Assignment Assignment::from_values(const std::vector<bool>& values) {
  std::uint32_t bits = 0;
  for (bool v : values) bits = (bits << 1) | (v ? 1u : 0u);
  return Assignment(values.size(), bits);
}

Assignment Assignment::with(std::size_t i, bool value) const {
  const std::uint32_t mask = 1u << (size_ - 1 - i);
  return Assignment(size_, value ? (bits_ | mask) : (bits_ & ~mask));
}

SpecFormula::SpecFormula(NodePtr body, std::vector<std::string> props)
    : body_(std::move(body)), props_(std::move(props)) {}

std::size_t SpecFormula::index_of(std::string_view name) const {
  const auto it = std::find(props_.begin(), props_.end(), name);
  return it == props_.end() ? npos : static_cast<std::size_t>(it - props_.begin());
}

std::string SpecFormula::to_string() const { return "G(" + privstream::to_string(*body_) + ")"; }

SpecFormula parse_spec(std::string_view source) { return Parser(Lexer(source).run()).parse(); }

bool evaluate(const FormulaNode& formula, const std::map<std::string, bool>& values) {
  return eval_with(formula, [&](const Atom& a) {
    const auto it = values.find(a.name);
    if (it == values.end()) throw UnknownProposition("no truth value for proposition '" + a.name + "'");
    return it->second;
  });
}

bool evaluate(const FormulaNode& formula, const Assignment& a) {
  return eval_with(formula, [&](const Atom& atom) {
    if (atom.index >= a.size()) {
      throw UnknownProposition("assignment does not cover proposition '" + atom.name + "'");
    }
    return a[atom.index];
  });
}

bool satisfies(const SpecFormula& spec, const Assignment& a) {
  if (a.size() != spec.num_props()) throw Error("assignment size does not match the specification");
  return evaluate(spec.body(), a);
}

std::vector<Assignment> satisfying_assignments(const SpecFormula& spec, std::size_t cap) {
  const std::size_t n = spec.num_props();
  if (n > cap || n > kMaxAssignmentBits) {
    throw TooManyPropositions("specification has " + std::to_string(n) +
                              " propositions; the cap is " + std::to_string(cap));
  }
  std::vector<Assignment> out;
  const std::uint32_t total = 1u << n;
  for (std::uint32_t bits = 0; bits < total; ++bits) {
    Assignment a(n, bits);
    if (evaluate(spec.body(), a)) out.push_back(a);
  }
  return out;
}

std::size_t specification_complexity(const SpecFormula& spec) { return spec.num_props(); }

std::string to_string(const FormulaNode& formula) {
  std::ostringstream os;
  render(formula, 1, os);
  return os.str();
}

std::map<std::string, bool> to_map(const SpecFormula& spec, const Assignment& a) {
  std::map<std::string, bool> out;
  for (std::size_t i = 0; i < spec.num_props(); ++i) out[spec.props()[i]] = a[i];
  return out;
}

}  // namespace privstream
