#include "dr/prl.hpp"

#include <cmath>
#include <limits>

#include "dr/parallel.hpp"

namespace dr {

namespace {

struct PlainAtomEval {
  const Params& params;
  const Scene& scene;
  double atom(const PredicateSig& pred, std::span<const int> objects) const {
    return predict(params, pred, scene, objects);
  }
  static double constant(double c) { return c; }
};

struct TapedAtomEval {
  const Params& params;
  const Scene& scene;
  GradTape& tape;
  Var atom(const PredicateSig& pred, std::span<const int> objects) const {
    return predict(params, pred, scene, objects, tape);
  }
  static Var constant(double c) { return Var{c, -1, nullptr}; }
};

template <class S, class Ctx>
S eval_node(const FormulaNode* n, const Formula& f, const Binding& b, Ctx& ctx,
            std::vector<S>& out) {
  const std::size_t my_index = out.size();
  out.push_back(Ctx::constant(0.0));
  S value = Ctx::constant(0.0);
  switch (n->kind) {
    case FormulaNode::Kind::Atom: {
      std::vector<int> objects;
      objects.reserve(n->args.size());
      for (const Term& t : n->args) {
        if (t.kind == Term::Kind::Variable) {
          const int pos = f.var_position(t.var);
          if (pos < 0) throw Error("binding does not cover variable '" + t.var + "'");
          objects.push_back(b.objects[static_cast<std::size_t>(pos)]);
        } else {
          objects.push_back(t.object);
        }
      }
      value = ctx.atom(n->pred, objects);
      break;
    }
    case FormulaNode::Kind::Not:
      value = 1.0 - eval_node<S>(n->lhs.get(), f, b, ctx, out);
      break;
    case FormulaNode::Kind::And: {
      S l = eval_node<S>(n->lhs.get(), f, b, ctx, out);
      S r = eval_node<S>(n->rhs.get(), f, b, ctx, out);
      value = l * r;
      break;
    }
    case FormulaNode::Kind::Or: {
      S l = eval_node<S>(n->lhs.get(), f, b, ctx, out);
      S r = eval_node<S>(n->rhs.get(), f, b, ctx, out);
      value = 1.0 - (1.0 - l) * (1.0 - r);
      break;
    }
    case FormulaNode::Kind::Implies: {
      S l = eval_node<S>(n->lhs.get(), f, b, ctx, out);
      S r = eval_node<S>(n->rhs.get(), f, b, ctx, out);
      value = 1.0 - l * (1.0 - r);
      break;
    }
    case FormulaNode::Kind::Forall:
      throw Error("quantifier inside a formula body; evaluation requires prenex form");
  }
  out[my_index] = value;
  return value;
}

}  // namespace

EvalResult eval(const Formula& f, const Binding& binding, const Scene& scene,
                const Params& params) {
  PlainAtomEval ctx{params, scene};
  EvalResult r;
  r.formula = &f;
  r.degrees.reserve(f.body_preorder().size());
  r.value = eval_node<double>(f.body(), f, binding, ctx, r.degrees);
  return r;
}

TapedEval eval(const Formula& f, const Binding& binding, const Scene& scene,
               const Params& params, GradTape& tape) {
  TapedAtomEval ctx{params, scene, tape};
  TapedEval r;
  r.formula = &f;
  r.nodes.reserve(f.body_preorder().size());
  r.value = eval_node<Var>(f.body(), f, binding, ctx, r.nodes);
  return r;
}

double forall_loss(const Formula& f, std::span<const Scene> scenes, const Params& params) {
  double loss = 0.0;
  for (const Scene& scene : scenes) {
    const std::uint64_t total = binding_count(f, scene);
    for (std::uint64_t i = 0; i < total; ++i) {
      const Binding b = binding_at(f, scene, i);
      PlainAtomEval ctx{params, scene};
      std::vector<double> cache;
      const double degree = eval_node<double>(f.body(), f, b, ctx, cache);
      loss += -std::log(clamp_unit(degree));
    }
  }
  return loss;
}

Var forall_loss(const Formula& f, std::span<const Scene> scenes, const Params& params,
                GradTape& tape) {
  Var loss = tape.constant(0.0);
  for (const Scene& scene : scenes) {
    const std::uint64_t total = binding_count(f, scene);
    for (std::uint64_t i = 0; i < total; ++i) {
      const Binding b = binding_at(f, scene, i);
      TapedAtomEval ctx{params, scene, tape};
      std::vector<Var> cache;
      const Var degree = eval_node<Var>(f.body(), f, b, ctx, cache);
      loss = loss + -log(clamp_max(clamp_min(degree, kEpsilon), 1.0));
    }
  }
  return loss;
}

double kb_dr_loss_serial(const KnowledgeBase& kb, std::span<const Scene> scenes,
                         const Params& params) {
  double loss = 0.0;
  for (const Formula& f : kb.formulas) loss += forall_loss(f, scenes, params);
  return loss;
}

double kb_dr_loss(const KnowledgeBase& kb, std::span<const Scene> scenes, const Params& params) {
  double loss = 0.0;
  for (const Formula& f : kb.formulas) {
    // Flatten (scene, binding) into one index space with per-scene offsets.
    std::vector<std::uint64_t> cumulative{0};
    for (const Scene& s : scenes) cumulative.push_back(cumulative.back() + binding_count(f, s));
    const std::uint64_t total = cumulative.back();
    loss += par::shard_sum(static_cast<std::size_t>(total), [&](std::size_t flat) {
      std::size_t scene_idx = 0;
      while (cumulative[scene_idx + 1] <= flat) ++scene_idx;
      const Scene& scene = scenes[scene_idx];
      const Binding b = binding_at(f, scene, flat - cumulative[scene_idx]);
      PlainAtomEval ctx{params, scene};
      std::vector<double> cache;
      return -std::log(clamp_unit(eval_node<double>(f.body(), f, b, ctx, cache)));
    });
  }
  return loss;
}

MpMtWeights mp_mt_from_degrees(double p_antecedent, double p_consequent) {
  const double p_implication = 1.0 - p_antecedent * (1.0 - p_consequent);
  const double denom = p_implication < kEpsilon ? kEpsilon : p_implication;
  MpMtWeights w;
  w.d_mp = p_antecedent / denom;
  w.d_mt = (1.0 - p_consequent) / denom;
  return w;
}

MpMtWeights mp_mt_weights(const Formula& f, const Binding& binding, const Scene& scene,
                          const Params& params) {
  if (!f.is_implication())
    throw InputError("MP/MT weights are defined only for implication formulas");
  const EvalResult r = eval(f, binding, scene, params);
  const FormulaNode* body = f.body();
  MpMtWeights w = mp_mt_from_degrees(r.at(body->lhs.get()), r.at(body->rhs.get()));
  w.binding = binding;
  return w;
}

BatchWeights mp_mt_batch_weights(const KnowledgeBase& kb, std::span<const Scene> scenes,
                                 std::span<const SampledTriple> batch, const Params& params) {
  BatchWeights w;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  w.d_mp.assign(batch.size(), nan);
  w.d_mt.assign(batch.size(), nan);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SampledTriple& t = batch[i];
    const Formula& f = kb.formulas[static_cast<std::size_t>(t.formula)];
    if (!f.is_implication()) continue;
    const MpMtWeights mw =
        mp_mt_weights(f, t.binding, scenes[static_cast<std::size_t>(t.scene)], params);
    w.d_mp[i] = mw.d_mp;
    w.d_mt[i] = mw.d_mt;
  }
  return w;
}

namespace {

template <class S, class MakeCtx>
S normalized_loss_impl(const KnowledgeBase& kb, std::span<const Scene> scenes,
                       std::span<const SampledTriple> batch, const BatchWeights& weights,
                       double mu, MakeCtx make_ctx) {
  // Per-formula weight masses over the batch slices.
  std::vector<double> mass_mp(kb.formulas.size(), 0.0);
  std::vector<double> mass_mt(kb.formulas.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t fi = static_cast<std::size_t>(batch[i].formula);
    if (!kb.formulas[fi].is_implication()) continue;
    mass_mp[fi] += weights.d_mp[i];
    mass_mt[fi] += weights.d_mt[i];
  }

  S loss{};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SampledTriple& t = batch[i];
    const Formula& f = kb.formulas[static_cast<std::size_t>(t.formula)];
    const Scene& scene = scenes[static_cast<std::size_t>(t.scene)];
    auto ctx = make_ctx(scene);
    std::vector<S> cache;
    const S degree = eval_node<S>(f.body(), f, t.binding, ctx, cache);
    if (!f.is_implication()) {
      // Non-implication formulas keep the plain log-loss.
      using dr::clamp_max;
      using dr::clamp_min;
      using std::log;
      loss = loss + -log(clamp_max(clamp_min(degree, kEpsilon), 1.0));
      continue;
    }
    const FormulaNode* body = f.body();
    const S& p_phi = cache[f.body_index(body->lhs.get())];
    const S& p_psi = cache[f.body_index(body->rhs.get())];
    const std::size_t fi = static_cast<std::size_t>(t.formula);
    if (mu > 0.0 && mass_mp[fi] > 0.0) {
      const double c = mu * weights.d_mp[i] / mass_mp[fi];
      loss = loss - c * p_psi;
    }
    if (mu < 1.0 && mass_mt[fi] > 0.0) {
      const double c = (1.0 - mu) * weights.d_mt[i] / mass_mt[fi];
      loss = loss - c * (1.0 - p_phi);
    }
  }
  return loss;
}

}  // namespace

double normalized_loss_given(const KnowledgeBase& kb, std::span<const Scene> scenes,
                             std::span<const SampledTriple> batch, const BatchWeights& weights,
                             const Params& params, double mu) {
  return normalized_loss_impl<double>(kb, scenes, batch, weights, mu,
                                      [&](const Scene& s) { return PlainAtomEval{params, s}; });
}

Var normalized_loss_given(const KnowledgeBase& kb, std::span<const Scene> scenes,
                          std::span<const SampledTriple> batch, const BatchWeights& weights,
                          const Params& params, double mu, GradTape& tape) {
  return normalized_loss_impl<Var>(kb, scenes, batch, weights, mu, [&](const Scene& s) {
    return TapedAtomEval{params, s, tape};
  });
}

double normalized_loss(const KnowledgeBase& kb, std::span<const Scene> scenes,
                       std::span<const SampledTriple> batch, const Params& params, double mu) {
  const BatchWeights w = mp_mt_batch_weights(kb, scenes, batch, params);
  return normalized_loss_given(kb, scenes, batch, w, params, mu);
}

Var normalized_loss(const KnowledgeBase& kb, std::span<const Scene> scenes,
                    std::span<const SampledTriple> batch, const Params& params, double mu,
                    GradTape& tape) {
  const BatchWeights w = mp_mt_batch_weights(kb, scenes, batch, params);
  return normalized_loss_given(kb, scenes, batch, w, params, mu, tape);
}

std::pair<std::vector<double>, std::vector<double>> implication_gradient_split(
    const Formula& f, std::span<const Binding> bindings, const Scene& scene,
    const Params& params) {
  if (!f.is_implication())
    throw InputError("gradient split is defined only for implication formulas");
  const std::size_t n = params.size();
  std::vector<double> mp(n, 0.0), mt(n, 0.0);
  const FormulaNode* body = f.body();
  for (const Binding& b : bindings) {
    GradTape tape;
    const TapedEval r = eval(f, b, scene, params, tape);
    const Var& phi = r.at(body->lhs.get());
    const Var& psi = r.at(body->rhs.get());
    const MpMtWeights w = mp_mt_from_degrees(phi.v, psi.v);
    const std::vector<double> g_psi = tape.gradient(psi, n);
    const std::vector<double> g_phi = tape.gradient(phi, n);
    for (std::size_t j = 0; j < n; ++j) {
      mp[j] += w.d_mp * g_psi[j];
      mt[j] -= w.d_mt * g_phi[j];  // d p(~phi)/d theta = -d p(phi)/d theta
    }
  }
  return {std::move(mp), std::move(mt)};
}

}  // namespace dr
