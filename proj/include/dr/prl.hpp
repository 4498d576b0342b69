#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dr/grounding.hpp"
#include "dr/model.hpp"

namespace dr {

/// Probabilities entering a logarithm or a denominator are clamped to
/// [kEpsilon, 1]; the raw formulas are singular at 0.
inline constexpr double kEpsilon = 1e-7;

inline double clamp_unit(double p) {
  if (p < kEpsilon) return kEpsilon;
  if (p > 1.0) return 1.0;
  return p;
}

/// Fuzzy degree of one instantiated formula body plus the degrees of every
/// body subformula, indexed like Formula::body_preorder().
struct EvalResult {
  double value = 0.0;
  std::vector<double> degrees;
  const Formula* formula = nullptr;

  double at(const FormulaNode* node) const { return degrees[formula->body_index(node)]; }
};

/// Taped counterpart; node Vars allow differentiating any subformula degree.
struct TapedEval {
  Var value;
  std::vector<Var> nodes;
  const Formula* formula = nullptr;

  const Var& at(const FormulaNode* node) const { return nodes[formula->body_index(node)]; }
};

/// Product Real Logic semantics on a quantifier-free body:
///   atom       f_P(o...)
///   ~phi       1 - p(phi)
///   phi & psi  p(phi) * p(psi)
///   phi | psi  1 - (1 - p(phi)) * (1 - p(psi))
///   phi -> psi 1 - p(phi) * (1 - p(psi))
EvalResult eval(const Formula& f, const Binding& binding, const Scene& scene,
                const Params& params);
TapedEval eval(const Formula& f, const Binding& binding, const Scene& scene,
               const Params& params, GradTape& tape);

/// -sum over all instantiations in all scenes of log(clamp(p)). The taped and
/// untaped overloads compute identical values.
double forall_loss(const Formula& f, std::span<const Scene> scenes, const Params& params);
Var forall_loss(const Formula& f, std::span<const Scene> scenes, const Params& params,
                GradTape& tape);

/// Full-grounding differentiable-reasoning loss of a knowledge base: the sum
/// of forall_loss over every formula. The default implementation reduces over
/// a fixed shard grid in parallel and is deterministic for any thread count;
/// the serial variant is the reference it is tested against.
double kb_dr_loss(const KnowledgeBase& kb, std::span<const Scene> scenes, const Params& params);
double kb_dr_loss_serial(const KnowledgeBase& kb, std::span<const Scene> scenes,
                         const Params& params);

/// Modus Ponens / Modus Tollens gradient mixing weights of one implication
/// instance:
///   d_mp = p(antecedent) / p(implication)
///   d_mt = p(~consequent) / p(implication)
/// with the denominator clamped to at least kEpsilon.
struct MpMtWeights {
  double d_mp = 0.0;
  double d_mt = 0.0;
  Binding binding;
};

MpMtWeights mp_mt_weights(const Formula& f, const Binding& binding, const Scene& scene,
                          const Params& params);

/// The same arithmetic from raw degrees; the ordering property tests drive
/// this directly.
MpMtWeights mp_mt_from_degrees(double p_antecedent, double p_consequent);

/// Detached MP/MT weights for a sampled batch. Entries for non-implication
/// formulas are left as NaN; they take the plain log-loss path.
struct BatchWeights {
  std::vector<double> d_mp;
  std::vector<double> d_mt;
};

BatchWeights mp_mt_batch_weights(const KnowledgeBase& kb, std::span<const Scene> scenes,
                                 std::span<const SampledTriple> batch, const Params& params);

/// Normalized loss over a sampled batch: per implication formula phi -> psi,
///   -sum_o [ mu * d_mp(o)/sum d_mp * p(psi|o)
///            + (1-mu) * d_mt(o)/sum d_mt * p(~phi|o) ]
/// with weight sums taken over the same batch slice and treated as constants
/// (no gradient flows through the weights). A formula slice with zero MP (or
/// MT) mass skips that side. Non-implication formulas contribute their plain
/// -log(clamp(p)) terms.
double normalized_loss(const KnowledgeBase& kb, std::span<const Scene> scenes,
                       std::span<const SampledTriple> batch, const Params& params, double mu);
Var normalized_loss(const KnowledgeBase& kb, std::span<const Scene> scenes,
                    std::span<const SampledTriple> batch, const Params& params, double mu,
                    GradTape& tape);

/// Same, with the weights supplied by the caller (they are a constant input
/// to the loss, which is what makes its gradient well defined).
double normalized_loss_given(const KnowledgeBase& kb, std::span<const Scene> scenes,
                             std::span<const SampledTriple> batch, const BatchWeights& weights,
                             const Params& params, double mu);
Var normalized_loss_given(const KnowledgeBase& kb, std::span<const Scene> scenes,
                          std::span<const SampledTriple> batch, const BatchWeights& weights,
                          const Params& params, double mu, GradTape& tape);

/// Splits the gradient of sum_o log p(phi -> psi | o) into its MP and MT
/// components:
///   mp = sum_o d_mp(o) * d p(psi|o) / d theta
///   mt = sum_o d_mt(o) * d p(~phi|o) / d theta
/// Their sum equals the tape gradient of the summed log degree.
std::pair<std::vector<double>, std::vector<double>> implication_gradient_split(
    const Formula& f, std::span<const Binding> bindings, const Scene& scene,
    const Params& params);

}  // namespace dr
