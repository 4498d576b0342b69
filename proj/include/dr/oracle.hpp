#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dr/prl.hpp"
#include "dr/rng.hpp"

namespace dr {

/// Binary truth assignment over a Herbrand base, aligned with its ordering.
struct World {
  std::vector<std::uint8_t> bits;

  bool truth(std::size_t atom_index) const { return bits[atom_index] != 0; }
  friend bool operator==(const World&, const World&) = default;
};

/// Materializes a scene's label set into a World; the labels must cover the
/// base exactly (no missing, duplicate or alien atoms).
World world_from_labels(const Scene& scene, const HerbrandBase& base);

/// Decompiles a world back into per-atom label records.
std::vector<LabeledAtom> labels_from_world(const World& w, const HerbrandBase& base);

/// Bernoulli likelihood of a world: prod f^w * (1-f)^(1-w) over the base.
double world_probability(const World& w, std::span<const double> degrees);

/// Truth probability of every base atom under the model.
std::vector<double> atom_degrees(const HerbrandBase& base, const Scene& scene,
                                 const Params& params);

/// Classical two-valued semantics; a quantified formula is the conjunction
/// over all instantiations.
int valuation(const Formula& f, const World& w, const HerbrandBase& base, const Scene& scene);

/// Valuation of one body subformula under a fixed binding (used by the
/// reasoning-quality diagnostics).
int valuation_at(const FormulaNode* node, const Formula& f, const Binding& binding,
                 const World& w, const HerbrandBase& base);

inline constexpr std::size_t kEnumerationCap = 24;

/// Exact knowledge-base probability by exhaustive world enumeration:
/// sum over all 2^|A| worlds of world_probability * prod of valuations.
/// Throws InputError when the base exceeds the cap (the exact marginal is
/// #P-complete; the cap keeps this a seconds-scale utility). The default
/// implementation enumerates fixed world-index shards in parallel and is
/// deterministic for any thread count.
double exact_kb_probability(const KnowledgeBase& kb, const Scene& scene, const Params& params,
                            std::size_t cap = kEnumerationCap);

/// Serial reference: depth-first over atoms with early exit on
/// zero-probability prefixes. Kept for testing the parallel kernel.
double exact_kb_probability_serial(const KnowledgeBase& kb, const Scene& scene,
                                   const Params& params, std::size_t cap = kEnumerationCap);

/// Product Real Logic value of the whole knowledge base on one scene:
/// prod over formulas and instantiations of the body degree.
double prl_kb_product(const KnowledgeBase& kb, const Scene& scene, const Params& params);

struct ExactnessReport {
  double exact = 0.0;
  double prl = 0.0;
  bool assumptions_hold = false;
  double abs_diff = 0.0;

  /// Single-line JSON record for CI logs.
  std::string to_line() const;
};

/// Compares the exact probability against the PRL product. assumptions_hold
/// is true iff every ground atom is referenced at most once across the whole
/// grounded knowledge base (formulas, instantiations and leaf occurrences);
/// under that premise the two values agree to enumeration precision.
ExactnessReport check_prl_exactness(const KnowledgeBase& kb, const Scene& scene,
                                    const Params& params, std::size_t cap = kEnumerationCap);

/// Random (KB, scene, params) instance whose grounding references every atom
/// at most once by construction: each leaf applies a fresh predicate to a
/// permutation of the quantifier prefix. max_atoms bounds the Herbrand base.
struct DisjointInstance {
  KnowledgeBase kb;
  Scene scene;
  Params params;
};

DisjointInstance random_disjoint_instance(Rng& rng, std::size_t max_atoms = 16);

}  // namespace dr
