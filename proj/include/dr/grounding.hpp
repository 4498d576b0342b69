#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dr/fol.hpp"

namespace dr {

/// One labeled ground-atom fact as stored in dataset files.
struct LabeledAtom {
  std::string pred;
  std::vector<int> args;
  int value = 0;  // {0,1}
  friend bool operator==(const LabeledAtom&, const LabeledAtom&) = default;
};

/// One finite domain: objects as feature vectors, optionally a full truth
/// labeling of the scene's Herbrand base.
struct Scene {
  std::string scene_id;
  std::vector<std::vector<double>> objects;  // all of length m
  std::optional<std::vector<LabeledAtom>> labels;

  int size() const { return static_cast<int>(objects.size()); }
  std::span<const double> features(int object) const { return objects[object]; }
  bool labeled() const { return labels.has_value(); }
};

struct GroundAtom {
  int pred = 0;  // index into the owning signature
  std::vector<int> args;
  friend bool operator==(const GroundAtom&, const GroundAtom&) = default;
};

/// All ground atoms formable from a signature over a scene's objects, ordered
/// by predicate declaration order then lexicographic argument tuple. The
/// index map is arithmetic, so lookups never allocate.
class HerbrandBase {
 public:
  HerbrandBase(const Scene& scene, const std::vector<PredicateSig>& signature);

  std::size_t size() const { return size_; }
  int n_objects() const { return n_objects_; }
  const std::vector<PredicateSig>& signature() const { return signature_; }

  GroundAtom atom(std::size_t index) const;
  std::size_t index_of(int pred, std::span<const int> args) const;
  std::size_t index_of(std::string_view pred_name, std::span<const int> args) const;

 private:
  std::vector<PredicateSig> signature_;
  std::vector<std::size_t> offsets_;  // per predicate, into the flat ordering
  int n_objects_ = 0;
  std::size_t size_ = 0;
};

/// Assignment of objects to a formula's quantifier prefix, positionally
/// aligned with Formula::quantified_vars().
struct Binding {
  std::vector<int> objects;
  friend bool operator==(const Binding&, const Binding&) = default;
};

/// Number of instantiations of f over the scene: |D|^k.
std::uint64_t binding_count(const Formula& f, const Scene& scene);

/// The index-th binding in lexicographic order (first variable most
/// significant).
Binding binding_at(const Formula& f, const Scene& scene, std::uint64_t index);

/// All |D|^k bindings in lexicographic order, repeated objects included.
std::vector<Binding> enumerate_bindings(const Formula& f, const Scene& scene);

/// Object bound to a variable name, for callers that address bindings by
/// name rather than position.
int binding_value(const Formula& f, const Binding& b, std::string_view var);

struct SampledTriple {
  int formula = 0;
  int scene = 0;
  Binding binding;
};

/// batch_size triples drawn uniformly with replacement from the pooled
/// (formula, scene, binding) universe; deterministic per seed. Throws
/// InputError when the universe is empty.
std::vector<SampledTriple> sample_batch(const KnowledgeBase& kb,
                                        std::span<const Scene> scenes,
                                        std::size_t batch_size,
                                        std::uint64_t rng_seed);

}  // namespace dr
