#include "dr/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dr/parallel.hpp"
#include "dr/rng.hpp"

namespace dr {

namespace {

/// Flattened index space over (implication formula, scene, binding).
struct ImplicationSpace {
  std::vector<int> formulas;                // implication formula indices
  std::vector<std::uint64_t> cumulative;    // per (formula, scene) cell
  std::size_t n_scenes = 0;

  std::uint64_t total() const { return cumulative.back(); }

  struct Entry {
    int formula;
    std::size_t scene;
    std::uint64_t binding_index;
  };

  Entry locate(std::uint64_t flat) const {
    std::size_t lo = 0, hi = cumulative.size() - 1;
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cumulative[mid] <= flat)
        lo = mid;
      else
        hi = mid;
    }
    return {formulas[lo / n_scenes], lo % n_scenes, flat - cumulative[lo]};
  }
};

ImplicationSpace implication_space(const KnowledgeBase& kb, std::span<const Scene> scenes) {
  ImplicationSpace space;
  space.n_scenes = scenes.size();
  for (std::size_t fi = 0; fi < kb.formulas.size(); ++fi)
    if (kb.formulas[fi].is_implication()) space.formulas.push_back(static_cast<int>(fi));
  space.cumulative.push_back(0);
  for (int fi : space.formulas)
    for (const Scene& s : scenes)
      space.cumulative.push_back(space.cumulative.back() +
                                 binding_count(kb.formulas[static_cast<std::size_t>(fi)], s));
  return space;
}

}  // namespace

std::pair<double, double> avg_weights(const KnowledgeBase& kb, std::span<const Scene> scenes,
                                      const Params& params) {
  const ImplicationSpace space = implication_space(kb, scenes);
  if (space.formulas.empty())
    throw InputError("the knowledge base has no implication formula");
  const std::uint64_t total = space.total();
  if (total == 0) return {kUndefined, kUndefined};

  struct Sums {
    double mp = 0.0;
    double mt = 0.0;
  };
  auto partials = par::sharded_map<Sums>(static_cast<std::size_t>(total),
                                         [&](std::size_t begin, std::size_t end) {
    Sums acc;
    for (std::size_t flat = begin; flat < end; ++flat) {
      const auto entry = space.locate(flat);
      const Formula& f = kb.formulas[static_cast<std::size_t>(entry.formula)];
      const Scene& scene = scenes[entry.scene];
      const Binding b = binding_at(f, scene, entry.binding_index);
      const EvalResult r = eval(f, b, scene, params);
      const FormulaNode* body = f.body();
      const MpMtWeights w = mp_mt_from_degrees(r.at(body->lhs.get()), r.at(body->rhs.get()));
      acc.mp += w.d_mp;
      acc.mt += w.d_mt;
    }
    return acc;
  });
  Sums sums;
  for (const Sums& p : partials) {
    sums.mp += p.mp;
    sums.mt += p.mt;
  }
  const double n = static_cast<double>(total);
  return {sums.mp / n, sums.mt / n};
}

CrCuRatios cr_cu_ratios(const KnowledgeBase& kb, std::span<const Scene> test_scenes,
                        const Params& params, const DiagnosticsOptions& options) {
  const ImplicationSpace space = implication_space(kb, test_scenes);
  if (space.formulas.empty())
    throw InputError("the knowledge base has no implication formula");

  // Ground-truth worlds per scene.
  std::vector<HerbrandBase> bases;
  std::vector<World> worlds;
  bases.reserve(test_scenes.size());
  for (const Scene& s : test_scenes) {
    bases.emplace_back(s, kb.signature);
    worlds.push_back(world_from_labels(s, bases.back()));
  }

  const std::uint64_t universe = space.total();
  std::vector<std::uint64_t> picks;
  const bool exhaustive = universe <= options.exhaustive_limit;
  if (!exhaustive) {
    Rng rng(mix_seed(options.seed, 0x6372637500ULL));
    picks.reserve(options.sample_size);
    for (std::size_t i = 0; i < options.sample_size; ++i) picks.push_back(rng.below(universe));
  }
  const std::size_t n_items = exhaustive ? static_cast<std::size_t>(universe) : picks.size();

  struct Sums {
    double mp_mass = 0.0, mt_mass = 0.0;
    double cr_mp = 0.0, cr_mt = 0.0, cu_mp = 0.0, cu_mt = 0.0;
  };
  auto partials = par::sharded_map<Sums>(n_items, [&](std::size_t begin, std::size_t end) {
    Sums acc;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint64_t flat = exhaustive ? i : picks[i];
      const auto entry = space.locate(flat);
      const Formula& f = kb.formulas[static_cast<std::size_t>(entry.formula)];
      const Scene& scene = test_scenes[entry.scene];
      const Binding b = binding_at(f, scene, entry.binding_index);
      const EvalResult r = eval(f, b, scene, params);
      const FormulaNode* body = f.body();
      const MpMtWeights w = mp_mt_from_degrees(r.at(body->lhs.get()), r.at(body->rhs.get()));
      const int v_phi = valuation_at(body->lhs.get(), f, b, worlds[entry.scene], bases[entry.scene]);
      const int v_psi = valuation_at(body->rhs.get(), f, b, worlds[entry.scene], bases[entry.scene]);
      acc.mp_mass += w.d_mp;
      acc.mt_mass += w.d_mt;
      acc.cr_mp += v_phi * v_psi * w.d_mp;
      acc.cu_mp += v_psi * w.d_mp;
      acc.cr_mt += (1 - v_phi) * (1 - v_psi) * w.d_mt;
      acc.cu_mt += (1 - v_phi) * w.d_mt;
    }
    return acc;
  });
  Sums sums;
  for (const Sums& p : partials) {
    sums.mp_mass += p.mp_mass;
    sums.mt_mass += p.mt_mass;
    sums.cr_mp += p.cr_mp;
    sums.cr_mt += p.cr_mt;
    sums.cu_mp += p.cu_mp;
    sums.cu_mt += p.cu_mt;
  }

  CrCuRatios out;
  if (sums.mp_mass > 0.0) {
    out.cr_mp = sums.cr_mp / sums.mp_mass;
    out.cu_mp = sums.cu_mp / sums.mp_mass;
  }
  if (sums.mt_mass > 0.0) {
    out.cr_mt = sums.cr_mt / sums.mt_mass;
    out.cu_mt = sums.cu_mt / sums.mt_mass;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kHeader =
    "iteration,avg_d_mp,avg_d_mt,cr_mp,cr_mt,cu_mp,cu_mt,supervised_loss,dr_loss,"
    "type_accuracy,relation_auc";

void put_cell(std::ostream& os, double v) {
  if (!is_defined(v)) return;  // empty cell
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  os << buf;
}

}  // namespace

void emit_csv(std::span<const DiagnosticsRecord> records, std::ostream& os) {
  os << kHeader << '\n';
  for (const DiagnosticsRecord& r : records) {
    os << r.iteration;
    for (double v : {r.avg_d_mp, r.avg_d_mt, r.cr_mp, r.cr_mt, r.cu_mp, r.cu_mt,
                     r.supervised_loss, r.dr_loss, r.type_accuracy, r.relation_auc}) {
      os << ',';
      put_cell(os, v);
    }
    os << '\n';
  }
}

void emit_csv(std::span<const DiagnosticsRecord> records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write CSV file '" + path + "'");
  emit_csv(records, os);
  if (!os) throw InputError("failed writing CSV file '" + path + "'");
}

std::vector<DiagnosticsRecord> parse_csv(std::istream& is) {
  std::vector<DiagnosticsRecord> out;
  std::string line;
  if (!std::getline(is, line)) throw InputError("empty CSV stream");
  if (line != kHeader) throw InputError("unexpected CSV header: " + line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells{""};
    for (char c : line) {
      if (c == ',')
        cells.emplace_back();
      else
        cells.back() += c;
    }
    if (cells.size() != 11) throw InputError("CSV row with wrong cell count: " + line);
    DiagnosticsRecord r;
    r.iteration = std::stoi(cells[0]);
    double* fields[] = {&r.avg_d_mp, &r.avg_d_mt,          &r.cr_mp,   &r.cr_mt,
                        &r.cu_mp,    &r.cu_mt,             &r.supervised_loss,
                        &r.dr_loss,  &r.type_accuracy,     &r.relation_auc};
    for (std::size_t i = 0; i < 10; ++i)
      *fields[i] = cells[i + 1].empty() ? kUndefined : std::stod(cells[i + 1]);
    out.push_back(r);
  }
  return out;
}

}  // namespace dr
