#include "dr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dr/parallel.hpp"

namespace dr {

World world_from_labels(const Scene& scene, const HerbrandBase& base) {
  if (!scene.labeled())
    throw InputError("scene '" + scene.scene_id + "' carries no labels");
  World w;
  w.bits.assign(base.size(), 0);
  std::vector<std::uint8_t> seen(base.size(), 0);
  for (const LabeledAtom& a : scene.labels.value()) {
    for (int arg : a.args)
      if (arg < 0 || arg >= scene.size())
        throw InputError("label argument out of range in scene '" + scene.scene_id + "'");
    const std::size_t idx = base.index_of(a.pred, a.args);
    if (seen[idx])
      throw InputError("duplicate label for an atom in scene '" + scene.scene_id + "'");
    seen[idx] = 1;
    if (a.value != 0 && a.value != 1)
      throw InputError("label value must be 0 or 1 in scene '" + scene.scene_id + "'");
    w.bits[idx] = static_cast<std::uint8_t>(a.value);
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw InputError("labels do not cover the Herbrand base of scene '" + scene.scene_id + "'");
  return w;
}

std::vector<LabeledAtom> labels_from_world(const World& w, const HerbrandBase& base) {
  if (w.bits.size() != base.size()) throw InputError("world size disagrees with the base");
  std::vector<LabeledAtom> out;
  out.reserve(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const GroundAtom a = base.atom(i);
    LabeledAtom la;
    la.pred = base.signature()[static_cast<std::size_t>(a.pred)].name;
    la.args = a.args;
    la.value = w.bits[i];
    out.push_back(std::move(la));
  }
  return out;
}

double world_probability(const World& w, std::span<const double> degrees) {
  if (w.bits.size() != degrees.size())
    throw InputError("world and degree table cover different atom sets");
  double p = 1.0;
  for (std::size_t i = 0; i < degrees.size(); ++i)
    p *= w.bits[i] ? degrees[i] : 1.0 - degrees[i];
  return p;
}

std::vector<double> atom_degrees(const HerbrandBase& base, const Scene& scene,
                                 const Params& params) {
  std::vector<double> degrees(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const GroundAtom a = base.atom(i);
    degrees[i] =
        predict(params, base.signature()[static_cast<std::size_t>(a.pred)], scene, a.args);
  }
  return degrees;
}

// ---------------------------------------------------------------------------
// Valuation
// ---------------------------------------------------------------------------

int valuation_at(const FormulaNode* node, const Formula& f, const Binding& binding,
                 const World& w, const HerbrandBase& base) {
  switch (node->kind) {
    case FormulaNode::Kind::Atom: {
      std::vector<int> objects;
      objects.reserve(node->args.size());
      for (const Term& t : node->args) {
        if (t.kind == Term::Kind::Variable) {
          const int pos = f.var_position(t.var);
          if (pos < 0) throw Error("binding does not cover variable '" + t.var + "'");
          objects.push_back(binding.objects[static_cast<std::size_t>(pos)]);
        } else {
          objects.push_back(t.object);
        }
      }
      return w.truth(base.index_of(node->pred.name, objects)) ? 1 : 0;
    }
    case FormulaNode::Kind::Not:
      return 1 - valuation_at(node->lhs.get(), f, binding, w, base);
    case FormulaNode::Kind::And:
      return valuation_at(node->lhs.get(), f, binding, w, base) &&
             valuation_at(node->rhs.get(), f, binding, w, base);
    case FormulaNode::Kind::Or:
      return valuation_at(node->lhs.get(), f, binding, w, base) ||
             valuation_at(node->rhs.get(), f, binding, w, base);
    case FormulaNode::Kind::Implies:
      return !valuation_at(node->lhs.get(), f, binding, w, base) ||
             valuation_at(node->rhs.get(), f, binding, w, base);
    case FormulaNode::Kind::Forall:
      throw Error("quantifier inside a formula body");
  }
  return 0;
}

int valuation(const Formula& f, const World& w, const HerbrandBase& base, const Scene& scene) {
  const std::uint64_t total = binding_count(f, scene);
  for (std::uint64_t i = 0; i < total; ++i) {
    const Binding b = binding_at(f, scene, i);
    if (!valuation_at(f.body(), f, b, w, base)) return 0;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Exact enumeration
// ---------------------------------------------------------------------------

namespace {

/// One formula body compiled for one binding: postfix over base atom indices.
/// Worlds are addressed as bit masks (base index i is bit i).
struct CompiledBody {
  struct Op {
    FormulaNode::Kind kind;
    std::size_t atom = 0;
  };
  std::vector<Op> ops;

  bool eval(std::uint64_t mask) const {
    bool stack[64];
    int top = -1;
    for (const Op& op : ops) {
      switch (op.kind) {
        case FormulaNode::Kind::Atom:
          stack[++top] = (mask >> op.atom) & 1u;
          break;
        case FormulaNode::Kind::Not:
          stack[top] = !stack[top];
          break;
        case FormulaNode::Kind::And:
          --top;
          stack[top] = stack[top] && stack[top + 1];
          break;
        case FormulaNode::Kind::Or:
          --top;
          stack[top] = stack[top] || stack[top + 1];
          break;
        case FormulaNode::Kind::Implies:
          --top;
          stack[top] = !stack[top] || stack[top + 1];
          break;
        case FormulaNode::Kind::Forall:
          break;
      }
    }
    return stack[0];
  }
};

void compile_node(const FormulaNode* node, const Formula& f, const Binding& binding,
                  const HerbrandBase& base, CompiledBody& out) {
  if (node->kind == FormulaNode::Kind::Atom) {
    std::vector<int> objects;
    objects.reserve(node->args.size());
    for (const Term& t : node->args) {
      if (t.kind == Term::Kind::Variable)
        objects.push_back(binding.objects[static_cast<std::size_t>(f.var_position(t.var))]);
      else
        objects.push_back(t.object);
    }
    out.ops.push_back({FormulaNode::Kind::Atom, base.index_of(node->pred.name, objects)});
    return;
  }
  if (node->lhs) compile_node(node->lhs.get(), f, binding, base, out);
  if (node->rhs) compile_node(node->rhs.get(), f, binding, base, out);
  out.ops.push_back({node->kind, 0});
}

/// Every (formula, binding) pair of the KB compiled against one base.
std::vector<CompiledBody> compile_grounding(const KnowledgeBase& kb, const Scene& scene,
                                            const HerbrandBase& base) {
  std::vector<CompiledBody> out;
  for (const Formula& f : kb.formulas) {
    const std::uint64_t total = binding_count(f, scene);
    for (std::uint64_t i = 0; i < total; ++i) {
      const Binding b = binding_at(f, scene, i);
      CompiledBody body;
      if (f.body_preorder().size() >= 64)
        throw InputError("formula body too large for the enumeration oracle");
      compile_node(f.body(), f, b, base, body);
      out.push_back(std::move(body));
    }
  }
  return out;
}

void check_cap(const HerbrandBase& base, std::size_t cap) {
  if (base.size() > cap)
    throw InputError("Herbrand base of " + std::to_string(base.size()) +
                     " atoms exceeds the enumeration cap of " + std::to_string(cap));
  if (base.size() >= 48)
    throw InputError("enumeration cap above 47 atoms is not supported");
}

}  // namespace

double exact_kb_probability(const KnowledgeBase& kb, const Scene& scene, const Params& params,
                            std::size_t cap) {
  const HerbrandBase base(scene, kb.signature);
  check_cap(base, cap);
  const std::vector<double> degrees = atom_degrees(base, scene, params);
  const std::vector<CompiledBody> bodies = compile_grounding(kb, scene, base);
  const std::size_t n = base.size();
  const std::uint64_t n_worlds = 1ULL << n;

  // World probabilities factor over atoms, so the product over a mask splits
  // into two table lookups over its low and high halves.
  const std::size_t low = n / 2;
  const std::uint64_t low_size = 1ULL << low;
  auto build_table = [&](std::size_t first, std::size_t count) {
    std::vector<double> table(1ULL << count, 1.0);
    for (std::uint64_t m = 0; m < (1ULL << count); ++m) {
      double p = 1.0;
      for (std::size_t i = 0; i < count; ++i)
        p *= (m >> i) & 1u ? degrees[first + i] : 1.0 - degrees[first + i];
      table[m] = p;
    }
    return table;
  };
  const std::vector<double> low_table = build_table(0, low);
  const std::vector<double> high_table = build_table(low, n - low);

  return par::shard_sum(static_cast<std::size_t>(n_worlds), [&](std::size_t mask) {
    const double p = low_table[mask & (low_size - 1)] * high_table[mask >> low];
    if (p == 0.0) return 0.0;
    for (const CompiledBody& body : bodies)
      if (!body.eval(mask)) return 0.0;
    return p;
  });
}

double exact_kb_probability_serial(const KnowledgeBase& kb, const Scene& scene,
                                   const Params& params, std::size_t cap) {
  const HerbrandBase base(scene, kb.signature);
  check_cap(base, cap);
  const std::vector<double> degrees = atom_degrees(base, scene, params);
  const std::vector<CompiledBody> bodies = compile_grounding(kb, scene, base);
  const std::size_t n = base.size();

  double total = 0.0;
  // Depth-first assignment with early exit on zero-probability prefixes.
  auto recurse = [&](auto&& self, std::size_t i, std::uint64_t mask, double prefix) -> void {
    if (prefix == 0.0) return;
    if (i == n) {
      for (const CompiledBody& body : bodies)
        if (!body.eval(mask)) return;
      total += prefix;
      return;
    }
    self(self, i + 1, mask, prefix * (1.0 - degrees[i]));
    self(self, i + 1, mask | (1ULL << i), prefix * degrees[i]);
  };
  recurse(recurse, 0, 0, 1.0);
  return total;
}

double prl_kb_product(const KnowledgeBase& kb, const Scene& scene, const Params& params) {
  double product = 1.0;
  for (const Formula& f : kb.formulas) {
    const std::uint64_t total = binding_count(f, scene);
    for (std::uint64_t i = 0; i < total; ++i) {
      const Binding b = binding_at(f, scene, i);
      product *= eval(f, b, scene, params).value;
    }
  }
  return product;
}

std::string ExactnessReport::to_line() const {
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "{\"exact\":%.17g,\"prl\":%.17g,\"assumptions_hold\":%s,\"abs_diff\":%.17g}",
                exact, prl, assumptions_hold ? "true" : "false", abs_diff);
  return buf;
}

ExactnessReport check_prl_exactness(const KnowledgeBase& kb, const Scene& scene,
                                    const Params& params, std::size_t cap) {
  const HerbrandBase base(scene, kb.signature);
  check_cap(base, cap);

  // Single-use premise: every ground atom referenced at most once across all
  // formulas, instantiations and leaf occurrences. (The formula-level and
  // sibling-subformula disjointness conditions both follow from this.)
  std::vector<int> uses(base.size(), 0);
  bool single_use = true;
  for (const CompiledBody& body : compile_grounding(kb, scene, base))
    for (const CompiledBody::Op& op : body.ops)
      if (op.kind == FormulaNode::Kind::Atom && ++uses[op.atom] > 1) single_use = false;

  ExactnessReport report;
  report.exact = exact_kb_probability(kb, scene, params, cap);
  report.prl = prl_kb_product(kb, scene, params);
  report.assumptions_hold = single_use;
  report.abs_diff = std::abs(report.exact - report.prl);
  return report;
}

// ---------------------------------------------------------------------------
// Random instances satisfying the single-use premise by construction
// ---------------------------------------------------------------------------

DisjointInstance random_disjoint_instance(Rng& rng, std::size_t max_atoms) {
  DisjointInstance inst;
  const int n_objects = 1 + static_cast<int>(rng.below(3));  // |D| in {1,2,3}
  const int feature_dim = 2 + static_cast<int>(rng.below(2));

  inst.scene.scene_id = "random";
  for (int i = 0; i < n_objects; ++i) {
    std::vector<double> feat(feature_dim);
    for (double& x : feat) x = rng.normal();
    inst.scene.objects.push_back(std::move(feat));
  }

  const std::size_t n_formulas = 1 + rng.below(3);
  std::size_t atoms_used = 0;
  int fresh = 0;
  for (std::size_t fi = 0; fi < n_formulas; ++fi) {
    // Quantifier arity: leaves of arity k cost |D|^k base atoms each.
    const int k = n_objects <= 2 ? 1 + static_cast<int>(rng.below(2)) : 1;
    const std::size_t leaf_cost =
        k == 1 ? static_cast<std::size_t>(n_objects)
               : static_cast<std::size_t>(n_objects) * static_cast<std::size_t>(n_objects);
    const std::size_t budget = (max_atoms - atoms_used) / leaf_cost;
    if (budget == 0) break;
    const std::size_t n_leaves = 1 + rng.below(std::min<std::uint64_t>(budget, 4));
    atoms_used += n_leaves * leaf_cost;

    std::vector<std::string> vars;
    for (int v = 0; v < k; ++v) vars.push_back(std::string(1, static_cast<char>('x' + v)));

    std::vector<NodePtr> nodes;
    for (std::size_t leaf = 0; leaf < n_leaves; ++leaf) {
      PredicateSig sig;
      sig.name = "p" + std::to_string(fresh++);
      sig.arity = k;
      inst.kb.signature.push_back(sig);
      // Arguments: a permutation of the prefix, so distinct bindings ground
      // to distinct atoms.
      std::vector<int> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
      std::vector<Term> args;
      for (int pos : perm) args.push_back(Term::variable(vars[static_cast<std::size_t>(pos)]));
      NodePtr node = make_atom(sig, std::move(args));
      if (rng.bernoulli(0.25)) node = make_not(std::move(node));
      nodes.push_back(std::move(node));
    }
    while (nodes.size() > 1) {
      const std::size_t i = rng.below(nodes.size() - 1);
      NodePtr combined;
      switch (rng.below(3)) {
        case 0: combined = make_and(nodes[i], nodes[i + 1]); break;
        case 1: combined = make_or(nodes[i], nodes[i + 1]); break;
        default: combined = make_implies(nodes[i], nodes[i + 1]); break;
      }
      if (rng.bernoulli(0.15)) combined = make_not(std::move(combined));
      nodes[i] = std::move(combined);
      nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(i + 1));
    }
    inst.kb.formulas.emplace_back(make_forall(vars, nodes.front()));
  }

  ModelConfig config;
  config.feature_dim = feature_dim;
  config.group_hidden = 2;
  config.unary_hidden = static_cast<int>(rng.below(3));  // 0 exercises the linear heads
  config.relation_hidden = static_cast<int>(rng.below(3));
  inst.params = make_params(inst.kb.signature, config, rng.next_u64());
  return inst;
}

}  // namespace dr
