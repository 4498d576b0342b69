#include "dr/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dr/dataset_io.hpp"
#include "dr/kvconfig.hpp"
#include "dr/oracle.hpp"
#include "dr/rng.hpp"

namespace dr {

SynthConfig parse_synth_config(const std::string& text) {
  KvReader kv(parse_kv(text));
  SynthConfig c;
  c.n_labeled_scenes = kv.take_int("n_labeled_scenes", c.n_labeled_scenes);
  c.n_unlabeled_scenes = kv.take_int("n_unlabeled_scenes", c.n_unlabeled_scenes);
  c.n_test_scenes = kv.take_int("n_test_scenes", c.n_test_scenes);
  c.objects_per_scene_min = kv.take_int("objects_per_scene_min", c.objects_per_scene_min);
  c.objects_per_scene_max = kv.take_int("objects_per_scene_max", c.objects_per_scene_max);
  c.n_type_classes = kv.take_int("n_type_classes", c.n_type_classes);
  c.feature_dim = kv.take_int("feature_dim", c.feature_dim);
  c.type_prior = kv.take_double_list("type_prior");
  c.relation_rule_strength = kv.take_double("relation_rule_strength", c.relation_rule_strength);
  c.feature_noise_sigma = kv.take_double("feature_noise_sigma", c.feature_noise_sigma);
  c.seed = kv.take_u64("seed", c.seed);
  kv.expect_empty("synth config");

  if (c.n_labeled_scenes < 0 || c.n_unlabeled_scenes < 0 || c.n_test_scenes < 0)
    throw InputError("scene counts must be nonnegative");
  if (c.objects_per_scene_min < 1 || c.objects_per_scene_max < c.objects_per_scene_min)
    throw InputError("objects_per_scene range is inconsistent");
  if (c.n_type_classes < 2) throw InputError("n_type_classes must be at least 2");
  if (c.feature_dim < 1) throw InputError("feature_dim must be positive");
  if (c.relation_rule_strength < 0.0 || c.relation_rule_strength > 1.0)
    throw InputError("relation_rule_strength must lie in [0, 1]");
  if (c.feature_noise_sigma < 0.0) throw InputError("feature_noise_sigma must be nonnegative");
  if (!c.type_prior.empty()) {
    if (static_cast<int>(c.type_prior.size()) != c.n_type_classes)
      throw InputError("type_prior length disagrees with n_type_classes");
    double total = 0.0;
    for (double p : c.type_prior) {
      if (p < 0.0) throw InputError("type_prior entries must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) throw InputError("type_prior must sum to 1");
  }
  return c;
}

SynthConfig read_synth_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read synth config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_synth_config(buf.str());
}

namespace {

/// Flattens an antecedent into its conjunct atoms; empty when the antecedent
/// contains anything but a conjunction of atoms.
std::vector<const FormulaNode*> conjunct_atoms(const FormulaNode* node) {
  std::vector<const FormulaNode*> out;
  std::vector<const FormulaNode*> stack{node};
  while (!stack.empty()) {
    const FormulaNode* n = stack.back();
    stack.pop_back();
    if (n->kind == FormulaNode::Kind::Atom) {
      out.push_back(n);
      continue;
    }
    if (n->kind != FormulaNode::Kind::And) return {};
    stack.push_back(n->lhs.get());
    stack.push_back(n->rhs.get());
  }
  return out;
}

/// One relation slot mined from an implication antecedent: the relation atom
/// plus the type conditions on its own variables. Pairs whose types fit such
/// a pattern get proposed densely, so relations correlate with types the way
/// part-whole structure does.
struct RelationPattern {
  std::string relation;
  std::vector<std::string> relation_vars;
  std::vector<std::pair<std::string, std::string>> type_conditions;  // (pred, var)
};

std::vector<RelationPattern> mine_relation_patterns(const KnowledgeBase& kb) {
  std::vector<RelationPattern> out;
  for (const Formula& f : kb.formulas) {
    if (!f.is_implication()) continue;
    const auto atoms = conjunct_atoms(f.body()->lhs.get());
    for (const FormulaNode* atom : atoms) {
      if (atom->pred.arity < 2 || atom->pred.grouped()) continue;
      RelationPattern pattern;
      pattern.relation = atom->pred.name;
      bool variables_only = true;
      for (const Term& t : atom->args) {
        if (t.kind != Term::Kind::Variable) variables_only = false;
        pattern.relation_vars.push_back(t.var);
      }
      if (!variables_only) continue;
      bool conditions_ok = true;
      for (const FormulaNode* other : atoms) {
        if (other == atom) continue;
        if (other->pred.arity != 1 || !other->pred.grouped() ||
            other->args.front().kind != Term::Kind::Variable) {
          conditions_ok = false;
          break;
        }
        const std::string& var = other->args.front().var;
        if (std::find(pattern.relation_vars.begin(), pattern.relation_vars.end(), var) ==
            pattern.relation_vars.end()) {
          conditions_ok = false;
          break;
        }
        pattern.type_conditions.emplace_back(other->pred.name, var);
      }
      // A pattern with no type condition matches every pair and carries no
      // structure; skip it.
      if (conditions_ok && !pattern.type_conditions.empty()) out.push_back(std::move(pattern));
    }
  }
  return out;
}

/// Type classes mentioned by one implication (antecedent conditions plus the
/// consequent disjunction). Scenes are themed around these sets so wholes
/// co-occur with their parts, the way objects cluster in images.
struct SceneTheme {
  std::vector<std::string> antecedent_classes;
  std::vector<std::string> consequent_classes;
};

std::vector<const FormulaNode*> disjunct_atoms(const FormulaNode* node) {
  std::vector<const FormulaNode*> out;
  std::vector<const FormulaNode*> stack{node};
  while (!stack.empty()) {
    const FormulaNode* n = stack.back();
    stack.pop_back();
    if (n->kind == FormulaNode::Kind::Atom) {
      out.push_back(n);
      continue;
    }
    if (n->kind != FormulaNode::Kind::Or) return {};
    stack.push_back(n->lhs.get());
    stack.push_back(n->rhs.get());
  }
  return out;
}

std::vector<SceneTheme> mine_themes(const KnowledgeBase& kb) {
  std::vector<SceneTheme> out;
  for (const Formula& f : kb.formulas) {
    if (!f.is_implication()) continue;
    SceneTheme theme;
    for (const FormulaNode* atom : conjunct_atoms(f.body()->lhs.get()))
      if (atom->pred.arity == 1 && atom->pred.grouped())
        theme.antecedent_classes.push_back(atom->pred.name);
    for (const FormulaNode* atom : disjunct_atoms(f.body()->rhs.get()))
      if (atom->pred.arity == 1 && atom->pred.grouped())
        theme.consequent_classes.push_back(atom->pred.name);
    if (!theme.antecedent_classes.empty() || !theme.consequent_classes.empty())
      out.push_back(std::move(theme));
  }
  return out;
}

bool pattern_matches(const RelationPattern& pattern, const PredicateSig& sig,
                     std::span<const int> args, const std::vector<PredicateSig>& signature,
                     const std::vector<int>& type_preds, const std::vector<int>& types) {
  if (pattern.relation != sig.name) return false;
  for (const auto& [type_pred, var] : pattern.type_conditions) {
    const auto slot = std::find(pattern.relation_vars.begin(), pattern.relation_vars.end(), var);
    const int object = args[static_cast<std::size_t>(slot - pattern.relation_vars.begin())];
    const int actual_pred = type_preds[static_cast<std::size_t>(types[static_cast<std::size_t>(object)])];
    if (signature[static_cast<std::size_t>(actual_pred)].name != type_pred) return false;
  }
  return true;
}

/// Base truth density of non-type atoms before the repair passes. Relation
/// pairs whose types fit a mined antecedent pattern are dense; background
/// pairs amount to about half an edge per scene, so the relation stays
/// predictable from the features.
double base_density(const PredicateSig& sig, int n_objects, bool fits_pattern) {
  if (sig.arity >= 2) {
    if (fits_pattern) return 0.7;
    const double n = static_cast<double>(std::max(1, n_objects));
    return std::min(0.05, 0.5 / (n * n));
  }
  return 0.3;
}

bool has_repeated_objects(std::span<const int> args) {
  for (std::size_t i = 0; i < args.size(); ++i)
    for (std::size_t j = i + 1; j < args.size(); ++j)
      if (args[i] == args[j]) return true;
  return false;
}

/// Base indices of the non-type leaf atoms of a body under one binding, in
/// leaf order without duplicates. These are the bits the repair pass may flip.
void collect_flippable(const FormulaNode* node, const Formula& f, const Binding& binding,
                       const HerbrandBase& base, std::vector<std::size_t>& out) {
  if (node->kind == FormulaNode::Kind::Atom) {
    if (node->pred.grouped()) return;  // type assignments are fixed
    std::vector<int> objects;
    for (const Term& t : node->args) {
      if (t.kind == Term::Kind::Variable)
        objects.push_back(binding.objects[static_cast<std::size_t>(f.var_position(t.var))]);
      else
        objects.push_back(t.object);
    }
    const std::size_t idx = base.index_of(node->pred.name, objects);
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
    return;
  }
  if (node->lhs) collect_flippable(node->lhs.get(), f, binding, base, out);
  if (node->rhs) collect_flippable(node->rhs.get(), f, binding, base, out);
}

struct EnforcedInstance {
  std::size_t formula = 0;
  Binding binding;
};

void draw_world(const KnowledgeBase& kb, const Scene& scene, const HerbrandBase& base,
                const std::vector<int>& type_preds, const std::vector<int>& types,
                const std::vector<RelationPattern>& patterns, double rule_strength, Rng& rng,
                World& world) {
  world.bits.assign(base.size(), 0);
  const int n_objects = scene.size();

  for (int i = 0; i < n_objects; ++i) {
    const int pred = type_preds[static_cast<std::size_t>(types[static_cast<std::size_t>(i)])];
    world.bits[base.index_of(pred, {&i, 1})] = 1;
  }

  for (std::size_t idx = 0; idx < base.size(); ++idx) {
    const GroundAtom atom = base.atom(idx);
    const PredicateSig& sig = base.signature()[static_cast<std::size_t>(atom.pred)];
    if (sig.grouped()) continue;
    if (sig.arity >= 2 && has_repeated_objects(atom.args)) continue;
    bool fits = false;
    for (const RelationPattern& pattern : patterns)
      if (pattern_matches(pattern, sig, atom.args, base.signature(), type_preds, types)) {
        fits = true;
        break;
      }
    if (rng.bernoulli(base_density(sig, n_objects, fits))) world.bits[idx] = 1;
  }

  // Enforcement decisions, one per (formula, instantiation).
  std::vector<EnforcedInstance> enforced;
  for (std::size_t fi = 0; fi < kb.formulas.size(); ++fi) {
    const Formula& f = kb.formulas[fi];
    const std::uint64_t total = binding_count(f, scene);
    for (std::uint64_t bi = 0; bi < total; ++bi)
      if (rng.bernoulli(rule_strength)) enforced.push_back({fi, binding_at(f, scene, bi)});
  }

  // Repair: flip single non-type atoms until every enforced instance holds.
  // Flips that satisfy one instance can disturb another, so iterate.
  constexpr int kMaxPasses = 32;
  bool all_satisfied = false;
  for (int pass = 0; pass < kMaxPasses && !all_satisfied; ++pass) {
    all_satisfied = true;
    for (const EnforcedInstance& inst : enforced) {
      const Formula& f = kb.formulas[inst.formula];
      if (valuation_at(f.body(), f, inst.binding, world, base)) continue;
      std::vector<std::size_t> candidates;
      collect_flippable(f.body(), f, inst.binding, base, candidates);
      bool repaired = false;
      for (std::size_t idx : candidates) {
        world.bits[idx] ^= 1;
        if (valuation_at(f.body(), f, inst.binding, world, base)) {
          repaired = true;
          break;
        }
        world.bits[idx] ^= 1;
      }
      if (!repaired) all_satisfied = false;
    }
  }
  if (!all_satisfied && rule_strength >= 1.0)
    throw InputError("generator could not make the knowledge base hold on a drawn world");
}

}  // namespace

GeneratedDataset generate(const SynthConfig& config, const KnowledgeBase& kb) {
  if (auto violations = validate(kb); !violations.empty())
    throw InputError("knowledge base is invalid: " + violations.front());
  const auto groups = kb.groups();
  if (groups.size() != 1)
    throw InputError("the generator requires exactly one type group in the knowledge base");
  const std::vector<int>& type_preds = groups.front().second;
  if (static_cast<int>(type_preds.size()) != config.n_type_classes)
    throw InputError("n_type_classes disagrees with the knowledge base's type group size");

  std::vector<double> prior = config.type_prior;
  if (prior.empty())
    prior.assign(static_cast<std::size_t>(config.n_type_classes),
                 1.0 / config.n_type_classes);

  Rng rng(mix_seed(config.seed, 0x73796e7468ULL));
  const std::vector<RelationPattern> patterns = mine_relation_patterns(kb);

  // Classes serving as antecedent type conditions get well-separated
  // prototypes: detecting an antecedent must be feature-driven even when the
  // class is rare, the way strong detector features behave. The remaining
  // classes stay mutually confusable at the configured noise level.
  constexpr double kAnchorGain = 3.0;
  std::vector<bool> anchored(static_cast<std::size_t>(config.n_type_classes), false);
  for (const RelationPattern& pattern : patterns)
    for (const auto& [type_pred, var] : pattern.type_conditions)
      for (std::size_t mi = 0; mi < type_preds.size(); ++mi)
        if (kb.signature[static_cast<std::size_t>(type_preds[mi])].name == type_pred)
          anchored[mi] = true;

  std::vector<std::vector<double>> prototypes;
  for (int c = 0; c < config.n_type_classes; ++c) {
    std::vector<double> proto(static_cast<std::size_t>(config.feature_dim));
    for (double& x : proto) x = rng.normal();
    if (anchored[static_cast<std::size_t>(c)])
      for (double& x : proto) x *= kAnchorGain;
    prototypes.push_back(std::move(proto));
  }

  // Scene themes: half the scenes are background (types straight from the
  // prior); the rest center on one implication's classes, boosted within the
  // prior, so related objects actually share scenes. Consequent classes (the
  // parts) cluster strongly; antecedent classes (the wholes) appear but stay
  // rare overall. A class that is an antecedent anywhere keeps the small
  // boost everywhere so the prior's imbalance survives theming.
  const std::vector<SceneTheme> themes = mine_themes(kb);
  constexpr double kAntecedentBoost = 3.0;
  constexpr double kConsequentBoost = 60.0;
  std::vector<bool> antecedent_class(static_cast<std::size_t>(config.n_type_classes), false);
  for (const SceneTheme& theme : themes)
    for (std::size_t c = 0; c < antecedent_class.size(); ++c) {
      const std::string& name = kb.signature[static_cast<std::size_t>(type_preds[c])].name;
      if (std::find(theme.antecedent_classes.begin(), theme.antecedent_classes.end(), name) !=
          theme.antecedent_classes.end())
        antecedent_class[c] = true;
    }
  std::vector<std::vector<double>> theme_priors;
  for (const SceneTheme& theme : themes) {
    std::vector<double> p = prior;
    for (std::size_t c = 0; c < p.size(); ++c) {
      const std::string& name =
          kb.signature[static_cast<std::size_t>(type_preds[c])].name;
      const bool in_ante = std::find(theme.antecedent_classes.begin(),
                                     theme.antecedent_classes.end(),
                                     name) != theme.antecedent_classes.end();
      const bool in_cons = std::find(theme.consequent_classes.begin(),
                                     theme.consequent_classes.end(),
                                     name) != theme.consequent_classes.end();
      if (in_ante || in_cons)
        p[c] *= antecedent_class[c] ? kAntecedentBoost : kConsequentBoost;
    }
    theme_priors.push_back(std::move(p));
  }

  auto class_index = [&](const std::string& name) {
    for (std::size_t c = 0; c < type_preds.size(); ++c)
      if (kb.signature[static_cast<std::size_t>(type_preds[c])].name == name)
        return static_cast<int>(c);
    return -1;
  };

  // Themes alternate with background scenes deterministically so every split
  // covers every theme regardless of its size.
  std::size_t scene_counter = 0;
  auto make_scene = [&](const std::string& scene_id, bool keep_labels) {
    Scene scene;
    scene.scene_id = scene_id;
    const int span = config.objects_per_scene_max - config.objects_per_scene_min + 1;
    const int n_objects =
        config.objects_per_scene_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
    const std::vector<double>* scene_prior = &prior;
    int anchor_class = -1;
    const std::size_t slot = scene_counter++;
    if (!theme_priors.empty() && slot % 3 == 0) {
      const std::size_t ti = (slot / 3) % theme_priors.size();
      scene_prior = &theme_priors[ti];
      // A themed scene is built around one object of the implication's
      // antecedent class; its related objects follow the themed prior.
      const auto& ante = themes[ti].antecedent_classes;
      if (!ante.empty()) anchor_class = class_index(ante[rng.below(ante.size())]);
    }
    std::vector<int> types;
    for (int i = 0; i < n_objects; ++i) {
      const int cls = i == 0 && anchor_class >= 0 ? anchor_class : rng.categorical(*scene_prior);
      types.push_back(cls);
      std::vector<double> feat(static_cast<std::size_t>(config.feature_dim));
      for (int d = 0; d < config.feature_dim; ++d)
        feat[static_cast<std::size_t>(d)] = prototypes[static_cast<std::size_t>(cls)]
                                                      [static_cast<std::size_t>(d)] +
                                            rng.normal(0.0, config.feature_noise_sigma);
      scene.objects.push_back(std::move(feat));
    }
    const HerbrandBase base(scene, kb.signature);
    World world;
    draw_world(kb, scene, base, type_preds, types, patterns, config.relation_rule_strength, rng,
               world);
    if (keep_labels) scene.labels = labels_from_world(world, base);
    return scene;
  };

  GeneratedDataset ds;
  ds.feature_dim = config.feature_dim;
  for (int i = 0; i < config.n_labeled_scenes; ++i)
    ds.labeled.push_back(make_scene("L" + std::to_string(i), true));
  for (int i = 0; i < config.n_unlabeled_scenes; ++i)
    ds.unlabeled.push_back(make_scene("U" + std::to_string(i), false));
  for (int i = 0; i < config.n_test_scenes; ++i)
    ds.test.push_back(make_scene("T" + std::to_string(i), true));
  return ds;
}

void write_dataset(const GeneratedDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  write_scenes({ds.feature_dim, ds.labeled}, path("labeled.jsonl"));
  write_scenes({ds.feature_dim, ds.unlabeled}, path("unlabeled.jsonl"));
  write_scenes({ds.feature_dim, ds.test}, path("test.jsonl"));
}

GeneratedDataset read_dataset(const std::string& dir) {
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  SceneFile labeled = read_scenes(path("labeled.jsonl"));
  SceneFile unlabeled = read_scenes(path("unlabeled.jsonl"));
  SceneFile test = read_scenes(path("test.jsonl"));
  if (labeled.feature_dim != unlabeled.feature_dim || labeled.feature_dim != test.feature_dim)
    throw InputError("dataset splits declare different feature dimensions");
  GeneratedDataset ds;
  ds.feature_dim = labeled.feature_dim;
  ds.labeled = std::move(labeled.scenes);
  ds.unlabeled = std::move(unlabeled.scenes);
  ds.test = std::move(test.scenes);
  return ds;
}

}  // namespace dr
