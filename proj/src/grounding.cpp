#include "dr/grounding.hpp"

#include <limits>

#include "dr/rng.hpp"

namespace dr {

namespace {

std::uint64_t checked_pow(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (base != 0 && r > std::numeric_limits<std::uint64_t>::max() / base)
      throw InputError("instantiation space overflows 64 bits");
    r *= base;
  }
  return r;
}

}  // namespace

HerbrandBase::HerbrandBase(const Scene& scene, const std::vector<PredicateSig>& signature)
    : signature_(signature), n_objects_(scene.size()) {
  offsets_.reserve(signature_.size());
  std::size_t off = 0;
  for (const PredicateSig& sig : signature_) {
    offsets_.push_back(off);
    off += checked_pow(static_cast<std::uint64_t>(n_objects_), sig.arity);
  }
  size_ = off;
}

GroundAtom HerbrandBase::atom(std::size_t index) const {
  for (std::size_t p = signature_.size(); p-- > 0;) {
    if (index >= offsets_[p]) {
      GroundAtom a;
      a.pred = static_cast<int>(p);
      std::size_t rest = index - offsets_[p];
      const int arity = signature_[p].arity;
      a.args.assign(arity, 0);
      for (int i = arity; i-- > 0;) {
        a.args[i] = static_cast<int>(rest % n_objects_);
        rest /= n_objects_;
      }
      return a;
    }
  }
  throw Error("ground atom index out of range");
}

std::size_t HerbrandBase::index_of(int pred, std::span<const int> args) const {
  const PredicateSig& sig = signature_[pred];
  std::size_t idx = offsets_[pred];
  std::size_t stride = 1;
  for (std::size_t i = sig.arity; i-- > 0;) {
    idx += static_cast<std::size_t>(args[i]) * stride;
    stride *= n_objects_;
  }
  return idx;
}

std::size_t HerbrandBase::index_of(std::string_view pred_name, std::span<const int> args) const {
  for (std::size_t p = 0; p < signature_.size(); ++p)
    if (signature_[p].name == pred_name) return index_of(static_cast<int>(p), args);
  throw InputError("predicate '" + std::string(pred_name) + "' is not in the Herbrand base");
}

std::uint64_t binding_count(const Formula& f, const Scene& scene) {
  return checked_pow(static_cast<std::uint64_t>(scene.size()),
                     static_cast<int>(f.quantified_vars().size()));
}

Binding binding_at(const Formula& f, const Scene& scene, std::uint64_t index) {
  const std::size_t k = f.quantified_vars().size();
  Binding b;
  b.objects.assign(k, 0);
  const std::uint64_t n = static_cast<std::uint64_t>(scene.size());
  for (std::size_t i = k; i-- > 0;) {
    b.objects[i] = static_cast<int>(index % n);
    index /= n;
  }
  return b;
}

std::vector<Binding> enumerate_bindings(const Formula& f, const Scene& scene) {
  const std::uint64_t total = binding_count(f, scene);
  std::vector<Binding> out;
  out.reserve(total);
  if (f.quantified_vars().empty()) {
    out.push_back(Binding{});
    return out;
  }
  if (scene.size() == 0) return out;
  for (std::uint64_t i = 0; i < total; ++i) out.push_back(binding_at(f, scene, i));
  return out;
}

int binding_value(const Formula& f, const Binding& b, std::string_view var) {
  const int pos = f.var_position(var);
  if (pos < 0) throw Error("variable '" + std::string(var) + "' is not quantified");
  return b.objects[pos];
}

std::vector<SampledTriple> sample_batch(const KnowledgeBase& kb,
                                        std::span<const Scene> scenes,
                                        std::size_t batch_size,
                                        std::uint64_t rng_seed) {
  // Cumulative counts over the (formula, scene) grid, formula-major.
  std::vector<std::uint64_t> cumulative;
  cumulative.reserve(kb.formulas.size() * scenes.size() + 1);
  cumulative.push_back(0);
  for (const Formula& f : kb.formulas)
    for (const Scene& s : scenes)
      cumulative.push_back(cumulative.back() + binding_count(f, s));
  const std::uint64_t total = cumulative.back();
  if (total == 0) throw InputError("no (formula, scene, binding) triple exists to sample");

  Rng rng(rng_seed);
  std::vector<SampledTriple> out;
  out.reserve(batch_size);
  const std::size_t n_scenes = scenes.size();
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::uint64_t u = rng.below(total);
    // Find the (formula, scene) cell, then the binding within it.
    std::size_t lo = 0, hi = cumulative.size() - 1;
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cumulative[mid] <= u)
        lo = mid;
      else
        hi = mid;
    }
    SampledTriple t;
    t.formula = static_cast<int>(lo / n_scenes);
    t.scene = static_cast<int>(lo % n_scenes);
    t.binding = binding_at(kb.formulas[t.formula], scenes[t.scene], u - cumulative[lo]);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace dr
