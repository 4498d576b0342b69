#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dr/error.hpp"

namespace dr {

/// Declaration of one predicate symbol. Predicates sharing a non-empty group
/// name are mutually exclusive (softmax-coupled) and must all be unary.
struct PredicateSig {
  std::string name;
  int arity = 1;
  std::string group;  // empty when ungrouped

  bool grouped() const { return !group.empty(); }
  friend bool operator==(const PredicateSig&, const PredicateSig&) = default;
};

struct Term {
  enum class Kind { Variable, Constant };
  Kind kind = Kind::Variable;
  std::string var;     // Kind::Variable
  int object = -1;     // Kind::Constant: object index within a scene

  static Term variable(std::string name) {
    Term t;
    t.kind = Kind::Variable;
    t.var = std::move(name);
    return t;
  }
  static Term constant(int object) {
    Term t;
    t.kind = Kind::Constant;
    t.object = object;
    return t;
  }
  friend bool operator==(const Term&, const Term&) = default;
};

struct FormulaNode;
using NodePtr = std::shared_ptr<const FormulaNode>;

struct FormulaNode {
  enum class Kind { Atom, Not, And, Or, Implies, Forall };
  Kind kind = Kind::Atom;

  // Atom
  PredicateSig pred;
  std::vector<Term> args;

  // Not and Forall use only lhs.
  NodePtr lhs;
  NodePtr rhs;

  // Forall
  std::vector<std::string> vars;

  bool is_binary() const {
    return kind == Kind::And || kind == Kind::Or || kind == Kind::Implies;
  }
};

NodePtr make_atom(PredicateSig pred, std::vector<Term> args);
NodePtr make_not(NodePtr child);
NodePtr make_and(NodePtr lhs, NodePtr rhs);
NodePtr make_or(NodePtr lhs, NodePtr rhs);
NodePtr make_implies(NodePtr antecedent, NodePtr consequent);
NodePtr make_forall(std::vector<std::string> vars, NodePtr body);

bool node_equal(const FormulaNode& a, const FormulaNode& b);

/// An immutable prenex formula. The quantifier prefix (possibly empty) is
/// exposed separately from the quantifier-free body; the body nodes are
/// indexed in preorder so evaluators can cache per-node degrees.
class Formula {
 public:
  Formula() = default;
  explicit Formula(NodePtr root);

  const NodePtr& root() const { return root_; }
  const std::vector<std::string>& quantified_vars() const { return vars_; }
  const FormulaNode* body() const { return body_; }

  /// Body nodes in preorder; index 0 is the body root.
  const std::vector<const FormulaNode*>& body_preorder() const { return preorder_; }
  std::size_t body_index(const FormulaNode* node) const;

  /// Position of a variable in the quantifier prefix, -1 when absent.
  int var_position(std::string_view name) const;

  bool is_implication() const {
    return body_ != nullptr && body_->kind == FormulaNode::Kind::Implies;
  }

  friend bool operator==(const Formula& a, const Formula& b);

 private:
  NodePtr root_;
  const FormulaNode* body_ = nullptr;
  std::vector<std::string> vars_;
  std::vector<const FormulaNode*> preorder_;
  std::unordered_map<const FormulaNode*, std::size_t> index_;
};

struct KnowledgeBase {
  std::vector<PredicateSig> signature;
  std::vector<Formula> formulas;

  int predicate_index(std::string_view name) const;
  bool is_implication(std::size_t i) const { return formulas[i].is_implication(); }

  /// Group name -> member predicate indices in declaration order.
  std::vector<std::pair<std::string, std::vector<int>>> groups() const;
};

/// Parses the KB file grammar:
///   decl := "pred" IDENT "/" INT ("@" IDENT)? ";"?
///   rule := "forall" IDENT ("," IDENT)* ":" expr
///   expr := disj ("->" expr)? ; disj := conj ("|" conj)* ;
///   conj := unary ("&" unary)* ; unary := "~" unary | atom | "(" expr ")"
///   atom := IDENT "(" IDENT ("," IDENT)* ")" ; "#" comments to end of line
/// Throws ParseError (with position) on syntax errors, undeclared predicates,
/// arity mismatches and unbound or unused quantified variables; every
/// KnowledgeBase it returns passes validate() cleanly.
KnowledgeBase parse_kb(std::string_view source_text);

/// Checks every formula and signature invariant; returns human-readable
/// violations instead of throwing.
std::vector<std::string> validate(const KnowledgeBase& kb);

/// Antecedent and consequent of an implication-rooted formula, each carrying
/// the parent's quantifier prefix, or nullopt when the body is not an
/// implication.
std::optional<std::pair<Formula, Formula>> decompose_implication(const Formula& f);

/// Concrete syntax round-trip: parse(to_text(kb)) reproduces the same ASTs.
std::string to_text(const Formula& f);
std::string to_text(const KnowledgeBase& kb);

}  // namespace dr
