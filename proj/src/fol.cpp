#include "dr/fol.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace dr {

namespace {

NodePtr make_node(FormulaNode n) { return std::make_shared<const FormulaNode>(std::move(n)); }

}  // namespace

NodePtr make_atom(PredicateSig pred, std::vector<Term> args) {
  FormulaNode n;
  n.kind = FormulaNode::Kind::Atom;
  n.pred = std::move(pred);
  n.args = std::move(args);
  return make_node(std::move(n));
}

NodePtr make_not(NodePtr child) {
  FormulaNode n;
  n.kind = FormulaNode::Kind::Not;
  n.lhs = std::move(child);
  return make_node(std::move(n));
}

static NodePtr make_binary(FormulaNode::Kind kind, NodePtr lhs, NodePtr rhs) {
  FormulaNode n;
  n.kind = kind;
  n.lhs = std::move(lhs);
  n.rhs = std::move(rhs);
  return make_node(std::move(n));
}

NodePtr make_and(NodePtr lhs, NodePtr rhs) {
  return make_binary(FormulaNode::Kind::And, std::move(lhs), std::move(rhs));
}

NodePtr make_or(NodePtr lhs, NodePtr rhs) {
  return make_binary(FormulaNode::Kind::Or, std::move(lhs), std::move(rhs));
}

NodePtr make_implies(NodePtr antecedent, NodePtr consequent) {
  return make_binary(FormulaNode::Kind::Implies, std::move(antecedent), std::move(consequent));
}

NodePtr make_forall(std::vector<std::string> vars, NodePtr body) {
  FormulaNode n;
  n.kind = FormulaNode::Kind::Forall;
  n.vars = std::move(vars);
  n.lhs = std::move(body);
  return make_node(std::move(n));
}

bool node_equal(const FormulaNode& a, const FormulaNode& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case FormulaNode::Kind::Atom:
      return a.pred == b.pred && a.args == b.args;
    case FormulaNode::Kind::Not:
      return node_equal(*a.lhs, *b.lhs);
    case FormulaNode::Kind::And:
    case FormulaNode::Kind::Or:
    case FormulaNode::Kind::Implies:
      return node_equal(*a.lhs, *b.lhs) && node_equal(*a.rhs, *b.rhs);
    case FormulaNode::Kind::Forall:
      return a.vars == b.vars && node_equal(*a.lhs, *b.lhs);
  }
  return false;
}

Formula::Formula(NodePtr root) : root_(std::move(root)) {
  if (!root_) throw Error("Formula constructed from null node");
  if (root_->kind == FormulaNode::Kind::Forall) {
    vars_ = root_->vars;
    body_ = root_->lhs.get();
  } else {
    body_ = root_.get();
  }
  // Preorder body walk; iterative to keep deep formulas cheap.
  std::vector<const FormulaNode*> stack{body_};
  while (!stack.empty()) {
    const FormulaNode* n = stack.back();
    stack.pop_back();
    index_.emplace(n, preorder_.size());
    preorder_.push_back(n);
    if (n->rhs) stack.push_back(n->rhs.get());
    if (n->lhs) stack.push_back(n->lhs.get());
  }
}

std::size_t Formula::body_index(const FormulaNode* node) const {
  auto it = index_.find(node);
  if (it == index_.end()) throw Error("node does not belong to this formula body");
  return it->second;
}

int Formula::var_position(std::string_view name) const {
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i] == name) return static_cast<int>(i);
  return -1;
}

bool operator==(const Formula& a, const Formula& b) {
  if (!a.root_ || !b.root_) return a.root_ == b.root_;
  return node_equal(*a.root_, *b.root_);
}

int KnowledgeBase::predicate_index(std::string_view name) const {
  for (std::size_t i = 0; i < signature.size(); ++i)
    if (signature[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::pair<std::string, std::vector<int>>> KnowledgeBase::groups() const {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  for (std::size_t i = 0; i < signature.size(); ++i) {
    if (!signature[i].grouped()) continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& g) { return g.first == signature[i].group; });
    if (it == out.end())
      out.emplace_back(signature[i].group, std::vector<int>{static_cast<int>(i)});
    else
      it->second.push_back(static_cast<int>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

struct Token {
  enum class Kind {
    Ident,
    Int,
    Slash,
    At,
    Semi,
    Comma,
    Colon,
    LParen,
    RParen,
    Tilde,
    Amp,
    Pipe,
    Arrow,
    End,
  };
  Kind kind = Kind::End;
  std::string text;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_ws_and_comments();
    Token t;
    t.line = line_;
    t.column = column_;
    if (pos_ >= src_.size()) {
      t.kind = Token::Kind::End;
      return t;
    }
    const char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        t.text += src_[pos_];
        advance();
      }
      t.kind = Token::Kind::Ident;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        t.text += src_[pos_];
        advance();
      }
      t.kind = Token::Kind::Int;
      return t;
    }
    switch (c) {
      case '/': t.kind = Token::Kind::Slash; break;
      case '@': t.kind = Token::Kind::At; break;
      case ';': t.kind = Token::Kind::Semi; break;
      case ',': t.kind = Token::Kind::Comma; break;
      case ':': t.kind = Token::Kind::Colon; break;
      case '(': t.kind = Token::Kind::LParen; break;
      case ')': t.kind = Token::Kind::RParen; break;
      case '~': t.kind = Token::Kind::Tilde; break;
      case '&': t.kind = Token::Kind::Amp; break;
      case '|': t.kind = Token::Kind::Pipe; break;
      case '-':
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
          t.kind = Token::Kind::Arrow;
          t.text = "->";
          advance();
          advance();
          return t;
        }
        throw ParseError("unexpected character '-'", line_, column_);
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", line_, column_);
    }
    t.text = c;
    advance();
    return t;
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_ws_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lexer_(src) { shift(); }

  KnowledgeBase parse() {
    while (cur_.kind != Token::Kind::End) {
      if (cur_.kind == Token::Kind::Ident && cur_.text == "pred") {
        parse_decl();
      } else if (cur_.kind == Token::Kind::Ident && cur_.text == "forall") {
        parse_rule();
      } else {
        fail("expected 'pred' declaration or 'forall' rule");
      }
    }
    return std::move(kb_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, cur_.line, cur_.column);
  }

  void shift() { cur_ = lexer_.next(); }

  Token expect(Token::Kind kind, const char* what) {
    if (cur_.kind != kind) fail(std::string("expected ") + what);
    Token t = cur_;
    shift();
    return t;
  }

  void parse_decl() {
    shift();  // pred
    Token name = expect(Token::Kind::Ident, "predicate name");
    expect(Token::Kind::Slash, "'/'");
    Token arity = expect(Token::Kind::Int, "arity");
    PredicateSig sig;
    sig.name = name.text;
    if (arity.text.size() > 2)
      throw ParseError("unreasonable predicate arity '" + arity.text + "'", arity.line,
                       arity.column);
    sig.arity = std::stoi(arity.text);
    if (sig.arity < 1)
      throw ParseError("predicate arity must be positive", arity.line, arity.column);
    if (cur_.kind == Token::Kind::At) {
      shift();
      sig.group = expect(Token::Kind::Ident, "group name").text;
      if (sig.arity != 1)
        throw ParseError("grouped predicate '" + sig.name + "' must have arity 1", name.line,
                         name.column);
    }
    if (kb_.predicate_index(sig.name) >= 0)
      throw ParseError("duplicate predicate declaration '" + sig.name + "'", name.line,
                       name.column);
    kb_.signature.push_back(std::move(sig));
    if (cur_.kind == Token::Kind::Semi) shift();
  }

  void parse_rule() {
    const Token forall_tok = cur_;
    shift();  // forall
    std::vector<std::string> vars;
    vars.push_back(expect(Token::Kind::Ident, "variable name").text);
    while (cur_.kind == Token::Kind::Comma) {
      shift();
      vars.push_back(expect(Token::Kind::Ident, "variable name").text);
    }
    for (std::size_t i = 0; i < vars.size(); ++i)
      for (std::size_t j = i + 1; j < vars.size(); ++j)
        if (vars[i] == vars[j])
          throw ParseError("duplicate quantified variable '" + vars[i] + "'", forall_tok.line,
                           forall_tok.column);
    expect(Token::Kind::Colon, "':'");
    NodePtr body = parse_expr(vars);
    Formula f(make_forall(std::move(vars), std::move(body)));
    check_rule(f, forall_tok);
    kb_.formulas.push_back(std::move(f));
  }

  NodePtr parse_expr(const std::vector<std::string>& vars) {
    NodePtr lhs = parse_disj(vars);
    if (cur_.kind == Token::Kind::Arrow) {
      shift();
      return make_implies(std::move(lhs), parse_expr(vars));  // right-associative
    }
    return lhs;
  }

  NodePtr parse_disj(const std::vector<std::string>& vars) {
    NodePtr lhs = parse_conj(vars);
    while (cur_.kind == Token::Kind::Pipe) {
      shift();
      lhs = make_or(std::move(lhs), parse_conj(vars));
    }
    return lhs;
  }

  NodePtr parse_conj(const std::vector<std::string>& vars) {
    NodePtr lhs = parse_unary(vars);
    while (cur_.kind == Token::Kind::Amp) {
      shift();
      lhs = make_and(std::move(lhs), parse_unary(vars));
    }
    return lhs;
  }

  NodePtr parse_unary(const std::vector<std::string>& vars) {
    if (cur_.kind == Token::Kind::Tilde) {
      shift();
      return make_not(parse_unary(vars));
    }
    if (cur_.kind == Token::Kind::LParen) {
      shift();
      NodePtr inner = parse_expr(vars);
      expect(Token::Kind::RParen, "')'");
      return inner;
    }
    return parse_atom(vars);
  }

  NodePtr parse_atom(const std::vector<std::string>& vars) {
    Token name = expect(Token::Kind::Ident, "atom");
    const int pred_idx = kb_.predicate_index(name.text);
    if (pred_idx < 0)
      throw ParseError("undeclared predicate '" + name.text + "'", name.line, name.column);
    expect(Token::Kind::LParen, "'('");
    std::vector<Term> args;
    Token arg = expect(Token::Kind::Ident, "variable name");
    check_bound(arg, vars);
    args.push_back(Term::variable(arg.text));
    while (cur_.kind == Token::Kind::Comma) {
      shift();
      arg = expect(Token::Kind::Ident, "variable name");
      check_bound(arg, vars);
      args.push_back(Term::variable(arg.text));
    }
    expect(Token::Kind::RParen, "')'");
    const PredicateSig& sig = kb_.signature[pred_idx];
    if (static_cast<int>(args.size()) != sig.arity)
      throw ParseError("predicate '" + sig.name + "' has arity " + std::to_string(sig.arity) +
                           " but is applied to " + std::to_string(args.size()) + " arguments",
                       name.line, name.column);
    return make_atom(sig, std::move(args));
  }

  void check_bound(const Token& arg, const std::vector<std::string>& vars) const {
    if (std::find(vars.begin(), vars.end(), arg.text) == vars.end())
      throw ParseError("unbound variable '" + arg.text + "'", arg.line, arg.column);
  }

  void check_rule(const Formula& f, const Token& at) const {
    std::set<std::string> used;
    collect_vars(f.body(), used);
    for (const std::string& v : f.quantified_vars())
      if (!used.count(v))
        throw ParseError("quantified variable '" + v + "' is not used by any atom", at.line,
                         at.column);
  }

  static void collect_vars(const FormulaNode* n, std::set<std::string>& out) {
    if (n->kind == FormulaNode::Kind::Atom) {
      for (const Term& t : n->args)
        if (t.kind == Term::Kind::Variable) out.insert(t.var);
      return;
    }
    if (n->lhs) collect_vars(n->lhs.get(), out);
    if (n->rhs) collect_vars(n->rhs.get(), out);
  }

  Lexer lexer_;
  Token cur_;
  KnowledgeBase kb_;
};

}  // namespace

KnowledgeBase parse_kb(std::string_view source_text) {
  KnowledgeBase kb = Parser(source_text).parse();
  auto violations = validate(kb);
  if (!violations.empty())
    throw InputError("parsed knowledge base failed validation: " + violations.front());
  return kb;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

void collect_formula_violations(const KnowledgeBase& kb, std::size_t fi,
                                std::vector<std::string>& out) {
  const Formula& f = kb.formulas[fi];
  const std::string where = "formula " + std::to_string(fi) + ": ";
  std::set<std::string> used_vars;

  // Walk the body: no nested quantifier, declared predicates, matching
  // arities, bound variables.
  std::vector<const FormulaNode*> stack{f.body()};
  while (!stack.empty()) {
    const FormulaNode* n = stack.back();
    stack.pop_back();
    if (n->kind == FormulaNode::Kind::Forall) {
      out.push_back(where + "nested quantifier; formulas must be prenex");
      continue;
    }
    if (n->kind == FormulaNode::Kind::Atom) {
      const int idx = kb.predicate_index(n->pred.name);
      if (idx < 0) {
        out.push_back(where + "predicate '" + n->pred.name + "' is not declared");
      } else if (!(kb.signature[idx] == n->pred)) {
        out.push_back(where + "atom signature for '" + n->pred.name +
                      "' disagrees with its declaration");
      }
      if (static_cast<int>(n->args.size()) != n->pred.arity)
        out.push_back(where + "atom '" + n->pred.name + "' has " +
                      std::to_string(n->args.size()) + " arguments but arity " +
                      std::to_string(n->pred.arity));
      for (const Term& t : n->args) {
        if (t.kind == Term::Kind::Variable) {
          used_vars.insert(t.var);
          if (f.var_position(t.var) < 0)
            out.push_back(where + "variable '" + t.var + "' is not bound by the quantifier");
        } else if (t.object < 0) {
          out.push_back(where + "constant argument with negative object index");
        }
      }
      continue;
    }
    if (n->rhs) stack.push_back(n->rhs.get());
    if (n->lhs) stack.push_back(n->lhs.get());
  }

  for (const std::string& v : f.quantified_vars())
    if (!used_vars.count(v))
      out.push_back(where + "quantified variable '" + v + "' is not used by any atom");
}

}  // namespace

std::vector<std::string> validate(const KnowledgeBase& kb) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kb.signature.size(); ++i) {
    const PredicateSig& s = kb.signature[i];
    if (s.arity < 1)
      out.push_back("predicate '" + s.name + "' has non-positive arity");
    if (s.grouped() && s.arity != 1)
      out.push_back("grouped predicate '" + s.name + "' must have arity 1");
    for (std::size_t j = i + 1; j < kb.signature.size(); ++j)
      if (kb.signature[j].name == s.name)
        out.push_back("duplicate predicate declaration '" + s.name + "'");
  }
  for (std::size_t i = 0; i < kb.formulas.size(); ++i)
    collect_formula_violations(kb, i, out);
  return out;
}

std::optional<std::pair<Formula, Formula>> decompose_implication(const Formula& f) {
  if (!f.is_implication()) return std::nullopt;
  const FormulaNode* body = f.body();
  auto wrap = [&](NodePtr child) {
    if (f.quantified_vars().empty()) return Formula(std::move(child));
    return Formula(make_forall(f.quantified_vars(), std::move(child)));
  };
  return std::make_pair(wrap(body->lhs), wrap(body->rhs));
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

namespace {

int precedence(FormulaNode::Kind k) {
  switch (k) {
    case FormulaNode::Kind::Implies: return 1;
    case FormulaNode::Kind::Or: return 2;
    case FormulaNode::Kind::And: return 3;
    case FormulaNode::Kind::Not: return 4;
    default: return 5;
  }
}

void print_node(const FormulaNode* n, int parent_prec, std::string& out) {
  const int prec = precedence(n->kind);
  const bool parens = prec < parent_prec;
  if (parens) out += '(';
  switch (n->kind) {
    case FormulaNode::Kind::Atom: {
      out += n->pred.name;
      out += '(';
      for (std::size_t i = 0; i < n->args.size(); ++i) {
        if (i) out += ',';
        const Term& t = n->args[i];
        out += t.kind == Term::Kind::Variable ? t.var : "$" + std::to_string(t.object);
      }
      out += ')';
      break;
    }
    case FormulaNode::Kind::Not:
      out += '~';
      print_node(n->lhs.get(), prec, out);
      break;
    case FormulaNode::Kind::And:
      print_node(n->lhs.get(), prec, out);
      out += " & ";
      print_node(n->rhs.get(), prec + 1, out);  // left-associative
      break;
    case FormulaNode::Kind::Or:
      print_node(n->lhs.get(), prec, out);
      out += " | ";
      print_node(n->rhs.get(), prec + 1, out);
      break;
    case FormulaNode::Kind::Implies:
      print_node(n->lhs.get(), prec + 1, out);  // right-associative
      out += " -> ";
      print_node(n->rhs.get(), prec, out);
      break;
    case FormulaNode::Kind::Forall:
      // Quantifiers are printed by to_text(Formula).
      print_node(n->lhs.get(), parent_prec, out);
      break;
  }
  if (parens) out += ')';
}

}  // namespace

std::string to_text(const Formula& f) {
  std::string out;
  if (!f.quantified_vars().empty()) {
    out += "forall ";
    for (std::size_t i = 0; i < f.quantified_vars().size(); ++i) {
      if (i) out += ',';
      out += f.quantified_vars()[i];
    }
    out += ": ";
  }
  print_node(f.body(), 0, out);
  return out;
}

std::string to_text(const KnowledgeBase& kb) {
  std::string out;
  for (const PredicateSig& s : kb.signature) {
    out += "pred " + s.name + "/" + std::to_string(s.arity);
    if (s.grouped()) out += " @" + s.group;
    out += ";\n";
  }
  for (const Formula& f : kb.formulas) out += to_text(f) + "\n";
  return out;
}

}  // namespace dr
