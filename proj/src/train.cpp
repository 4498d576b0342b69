#include "dr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dr/kvconfig.hpp"
#include "dr/oracle.hpp"
#include "dr/rng.hpp"

namespace dr {

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "supervised") return TrainMode::Supervised;
  if (s == "unnormalized") return TrainMode::Unnormalized;
  if (s == "normalized") return TrainMode::Normalized;
  throw InputError("unknown training mode '" + s + "'");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Supervised: return "supervised";
    case TrainMode::Unnormalized: return "unnormalized";
    case TrainMode::Normalized: return "normalized";
  }
  return "?";
}

TrainConfig parse_train_config(const std::string& text) {
  KvReader kv(parse_kv(text));
  TrainConfig c;
  c.mode = train_mode_from_string(kv.take_string("mode", to_string(c.mode)));
  c.mu = kv.take_double("mu", c.mu);
  c.iterations = kv.take_int("iterations", c.iterations);
  c.batch_size_labeled = kv.take_int("batch_size_labeled", c.batch_size_labeled);
  c.batch_size_unlabeled = kv.take_int("batch_size_unlabeled", c.batch_size_unlabeled);
  c.learning_rate = kv.take_double("learning_rate", c.learning_rate);
  c.rmsprop_decay = kv.take_double("rmsprop_decay", c.rmsprop_decay);
  c.rmsprop_epsilon = kv.take_double("rmsprop_epsilon", c.rmsprop_epsilon);
  c.dr_weight = kv.take_double("dr_weight", c.dr_weight);
  c.seed = kv.take_u64("seed", c.seed);
  c.metrics_every = kv.take_int("metrics_every", c.metrics_every);
  kv.expect_empty("train config");

  if (c.mu < 0.0 || c.mu > 1.0) throw InputError("mu must lie in [0, 1]");
  if (c.iterations < 0) throw InputError("iterations must be nonnegative");
  if (c.batch_size_labeled < 1 || c.batch_size_unlabeled < 1)
    throw InputError("batch sizes must be positive");
  if (c.learning_rate <= 0.0) throw InputError("learning_rate must be positive");
  if (c.rmsprop_decay <= 0.0 || c.rmsprop_decay >= 1.0)
    throw InputError("rmsprop_decay must lie in (0, 1)");
  if (c.rmsprop_epsilon <= 0.0) throw InputError("rmsprop_epsilon must be positive");
  if (c.dr_weight < 0.0) throw InputError("dr_weight must be nonnegative");
  if (c.metrics_every < 1) throw InputError("metrics_every must be positive");
  return c;
}

TrainConfig read_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read train config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_train_config(buf.str());
}

// ---------------------------------------------------------------------------
// Supervised targets and loss
// ---------------------------------------------------------------------------

std::vector<LabeledTarget> labeled_targets(const KnowledgeBase& kb, const Scene& scene,
                                           int scene_index) {
  if (!scene.labeled())
    throw InputError("scene '" + scene.scene_id + "' carries no labels");
  const HerbrandBase base(scene, kb.signature);
  const World world = world_from_labels(scene, base);

  std::vector<LabeledTarget> out;
  for (const auto& [group, members] : kb.groups()) {
    for (int obj = 0; obj < scene.size(); ++obj) {
      int labeled_member = -1;
      for (std::size_t mi = 0; mi < members.size(); ++mi) {
        if (world.truth(base.index_of(members[mi], {&obj, 1}))) {
          if (labeled_member >= 0)
            throw InputError("object " + std::to_string(obj) + " in scene '" + scene.scene_id +
                             "' has more than one true type atom");
          labeled_member = static_cast<int>(mi);
        }
      }
      if (labeled_member < 0)
        throw InputError("object " + std::to_string(obj) + " in scene '" + scene.scene_id +
                         "' has no true type atom");
      LabeledTarget t;
      t.scene = scene_index;
      t.is_group = true;
      t.group = group;
      t.object = obj;
      t.member = labeled_member;
      out.push_back(std::move(t));
    }
  }
  for (std::size_t pi = 0; pi < kb.signature.size(); ++pi) {
    const PredicateSig& sig = kb.signature[pi];
    if (sig.grouped()) continue;
    std::uint64_t tuples = 1;
    for (int a = 0; a < sig.arity; ++a) tuples *= static_cast<std::uint64_t>(scene.size());
    for (std::uint64_t ti = 0; ti < tuples; ++ti) {
      LabeledTarget t;
      t.scene = scene_index;
      t.pred = static_cast<int>(pi);
      std::uint64_t rest = ti;
      t.args.assign(static_cast<std::size_t>(sig.arity), 0);
      for (int a = sig.arity; a-- > 0;) {
        t.args[static_cast<std::size_t>(a)] = static_cast<int>(rest % scene.size());
        rest /= static_cast<std::uint64_t>(scene.size());
      }
      t.value = world.truth(base.index_of(static_cast<int>(pi), t.args)) ? 1 : 0;
      out.push_back(std::move(t));
    }
  }
  return out;
}

namespace {

const double kLogEpsilon = std::log(kEpsilon);

template <class S, class AtomFn, class GroupFn>
S target_term(const LabeledTarget& t, AtomFn atom_prob, GroupFn group_logp) {
  using std::log;
  if (t.is_group) {
    // -log(clamp(softmax class likelihood, eps, 1))
    S lp = group_logp(t);
    return -clamp_min(lp, kLogEpsilon);
  }
  S f = atom_prob(t);
  if (t.value) return -log(clamp_max(clamp_min(f, kEpsilon), 1.0));
  return -log(clamp_max(clamp_min(1.0 - f, kEpsilon), 1.0));
}

}  // namespace

double supervised_batch_loss(std::span<const LabeledTarget> batch,
                             std::span<const Scene> scenes, const KnowledgeBase& kb,
                             const Params& params) {
  double loss = 0.0;
  for (const LabeledTarget& t : batch) {
    const Scene& scene = scenes[static_cast<std::size_t>(t.scene)];
    loss += target_term<double>(
        t,
        [&](const LabeledTarget& a) {
          return predict(params, kb.signature[static_cast<std::size_t>(a.pred)], scene, a.args);
        },
        [&](const LabeledTarget& g) {
          return group_log_prob(params, g.group, scene, g.object, g.member);
        });
  }
  return loss;
}

Var supervised_batch_loss(std::span<const LabeledTarget> batch, std::span<const Scene> scenes,
                          const KnowledgeBase& kb, const Params& params, GradTape& tape) {
  Var loss{};
  for (const LabeledTarget& t : batch) {
    const Scene& scene = scenes[static_cast<std::size_t>(t.scene)];
    loss = loss + target_term<Var>(
                      t,
                      [&](const LabeledTarget& a) {
                        return predict(params, kb.signature[static_cast<std::size_t>(a.pred)],
                                       scene, a.args, tape);
                      },
                      [&](const LabeledTarget& g) {
                        return group_log_prob(params, g.group, scene, g.object, g.member, tape);
                      });
  }
  return loss;
}

namespace {

std::vector<LabeledTarget> all_targets(const KnowledgeBase& kb, std::span<const Scene> scenes) {
  std::vector<LabeledTarget> out;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    auto per_scene = labeled_targets(kb, scenes[si], static_cast<int>(si));
    out.insert(out.end(), per_scene.begin(), per_scene.end());
  }
  return out;
}

}  // namespace

double supervised_loss(std::span<const Scene> scenes, const KnowledgeBase& kb,
                       const Params& params) {
  const auto targets = all_targets(kb, scenes);
  return supervised_batch_loss(targets, scenes, kb, params);
}

Var supervised_loss(std::span<const Scene> scenes, const KnowledgeBase& kb, const Params& params,
                    GradTape& tape) {
  const auto targets = all_targets(kb, scenes);
  return supervised_batch_loss(targets, scenes, kb, params, tape);
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

namespace {

template <class S, class SupFn, class UnnormFn, class NormFn>
S objective_impl(const TrainConfig& config, SupFn sup, UnnormFn unnorm, NormFn norm) {
  S loss = sup();
  if (config.mode == TrainMode::Supervised || config.dr_weight == 0.0) return loss;
  if (config.mode == TrainMode::Unnormalized) return loss + config.dr_weight * unnorm();
  return loss + config.dr_weight * norm();
}

double unnormalized_batch_loss(std::span<const SampledTriple> batch,
                               std::span<const Scene> scenes, const KnowledgeBase& kb,
                               const Params& params) {
  double loss = 0.0;
  for (const SampledTriple& t : batch) {
    const Formula& f = kb.formulas[static_cast<std::size_t>(t.formula)];
    const EvalResult r = eval(f, t.binding, scenes[static_cast<std::size_t>(t.scene)], params);
    loss += -std::log(clamp_unit(r.value));
  }
  return loss;
}

Var unnormalized_batch_loss(std::span<const SampledTriple> batch, std::span<const Scene> scenes,
                            const KnowledgeBase& kb, const Params& params, GradTape& tape) {
  Var loss{};
  for (const SampledTriple& t : batch) {
    const Formula& f = kb.formulas[static_cast<std::size_t>(t.formula)];
    const TapedEval r = eval(f, t.binding, scenes[static_cast<std::size_t>(t.scene)], params, tape);
    loss = loss + -log(clamp_max(clamp_min(r.value, kEpsilon), 1.0));
  }
  return loss;
}

}  // namespace

double dr_objective_given(std::span<const LabeledTarget> labeled_batch,
                          std::span<const Scene> labeled_scenes,
                          std::span<const SampledTriple> unlabeled_batch,
                          std::span<const Scene> unlabeled_scenes, const BatchWeights& weights,
                          const KnowledgeBase& kb, const Params& params,
                          const TrainConfig& config) {
  return objective_impl<double>(
      config, [&] { return supervised_batch_loss(labeled_batch, labeled_scenes, kb, params); },
      [&] { return unnormalized_batch_loss(unlabeled_batch, unlabeled_scenes, kb, params); },
      [&] {
        return normalized_loss_given(kb, unlabeled_scenes, unlabeled_batch, weights, params,
                                     config.mu);
      });
}

Var dr_objective_given(std::span<const LabeledTarget> labeled_batch,
                       std::span<const Scene> labeled_scenes,
                       std::span<const SampledTriple> unlabeled_batch,
                       std::span<const Scene> unlabeled_scenes, const BatchWeights& weights,
                       const KnowledgeBase& kb, const Params& params, const TrainConfig& config,
                       GradTape& tape) {
  return objective_impl<Var>(
      config,
      [&] { return supervised_batch_loss(labeled_batch, labeled_scenes, kb, params, tape); },
      [&] { return unnormalized_batch_loss(unlabeled_batch, unlabeled_scenes, kb, params, tape); },
      [&] {
        return normalized_loss_given(kb, unlabeled_scenes, unlabeled_batch, weights, params,
                                     config.mu, tape);
      });
}

double dr_objective(std::span<const LabeledTarget> labeled_batch,
                    std::span<const Scene> labeled_scenes,
                    std::span<const SampledTriple> unlabeled_batch,
                    std::span<const Scene> unlabeled_scenes, const KnowledgeBase& kb,
                    const Params& params, const TrainConfig& config) {
  BatchWeights weights;
  if (config.mode == TrainMode::Normalized)
    weights = mp_mt_batch_weights(kb, unlabeled_scenes, unlabeled_batch, params);
  return dr_objective_given(labeled_batch, labeled_scenes, unlabeled_batch, unlabeled_scenes,
                            weights, kb, params, config);
}

Var dr_objective(std::span<const LabeledTarget> labeled_batch,
                 std::span<const Scene> labeled_scenes,
                 std::span<const SampledTriple> unlabeled_batch,
                 std::span<const Scene> unlabeled_scenes, const KnowledgeBase& kb,
                 const Params& params, const TrainConfig& config, GradTape& tape) {
  BatchWeights weights;
  if (config.mode == TrainMode::Normalized)
    weights = mp_mt_batch_weights(kb, unlabeled_scenes, unlabeled_batch, params);
  return dr_objective_given(labeled_batch, labeled_scenes, unlabeled_batch, unlabeled_scenes,
                            weights, kb, params, config, tape);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

void rmsprop_step(Params& params, std::span<const double> gradient, OptimizerState& state,
                  const TrainConfig& config) {
  if (gradient.size() != params.theta.size())
    throw InputError("gradient length disagrees with the parameter vector");
  if (state.acc.empty()) state.acc.assign(params.theta.size(), 0.0);
  if (state.acc.size() != params.theta.size())
    throw InputError("optimizer state does not match the parameter vector");
  for (double g : gradient)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient; aborting training");
  const double rho = config.rmsprop_decay;
  for (std::size_t j = 0; j < params.theta.size(); ++j) {
    const double g = gradient[j];
    state.acc[j] = rho * state.acc[j] + (1.0 - rho) * g * g;
    params.theta[j] -= config.learning_rate * g / (std::sqrt(state.acc[j]) + config.rmsprop_epsilon);
  }
  ++state.step;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double rank_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks for ties.
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k]) {
      pos_rank_sum += rank[k];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return kUndefined;
  return (pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalMetrics evaluate(const KnowledgeBase& kb, const Params& params,
                     std::span<const Scene> test_scenes) {
  if (test_scenes.empty()) throw InputError("no labeled test data");
  for (const Scene& s : test_scenes)
    if (!s.labeled()) throw InputError("test scene '" + s.scene_id + "' carries no labels");

  std::size_t type_total = 0, type_correct = 0;
  std::vector<double> rel_scores;
  std::vector<int> rel_labels;

  for (const Scene& scene : test_scenes) {
    const HerbrandBase base(scene, kb.signature);
    const World world = world_from_labels(scene, base);
    for (const auto& [group, members] : kb.groups()) {
      for (int obj = 0; obj < scene.size(); ++obj) {
        const std::vector<double> probs = group_predict(params, group, scene, obj);
        const std::size_t argmax =
            static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        int labeled_member = -1;
        for (std::size_t mi = 0; mi < members.size(); ++mi)
          if (world.truth(base.index_of(members[mi], {&obj, 1})))
            labeled_member = static_cast<int>(mi);
        if (labeled_member < 0) continue;
        ++type_total;
        if (static_cast<int>(argmax) == labeled_member) ++type_correct;
      }
    }
    for (std::size_t pi = 0; pi < kb.signature.size(); ++pi) {
      const PredicateSig& sig = kb.signature[pi];
      if (sig.grouped() || sig.arity < 2) continue;
      std::uint64_t tuples = 1;
      for (int a = 0; a < sig.arity; ++a) tuples *= static_cast<std::uint64_t>(scene.size());
      std::vector<int> args(static_cast<std::size_t>(sig.arity));
      for (std::uint64_t ti = 0; ti < tuples; ++ti) {
        std::uint64_t rest = ti;
        for (int a = sig.arity; a-- > 0;) {
          args[static_cast<std::size_t>(a)] = static_cast<int>(rest % scene.size());
          rest /= static_cast<std::uint64_t>(scene.size());
        }
        rel_scores.push_back(predict(params, sig, scene, args));
        rel_labels.push_back(world.truth(base.index_of(static_cast<int>(pi), args)) ? 1 : 0);
      }
    }
  }

  EvalMetrics m;
  if (type_total > 0)
    m.type_accuracy = static_cast<double>(type_correct) / static_cast<double>(type_total);
  if (!rel_scores.empty()) m.relation_auc = rank_auc(rel_scores, rel_labels);
  return m;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

DiagnosticsRecord metrics_record(int iteration, const KnowledgeBase& kb,
                                 std::span<const Scene> labeled,
                                 std::span<const Scene> unlabeled, std::span<const Scene> test,
                                 const Params& params) {
  DiagnosticsRecord rec;
  rec.iteration = iteration;
  const bool has_implication =
      std::any_of(kb.formulas.begin(), kb.formulas.end(),
                  [](const Formula& f) { return f.is_implication(); });
  if (has_implication && !unlabeled.empty()) {
    const auto [mp, mt] = avg_weights(kb, unlabeled, params);
    rec.avg_d_mp = mp;
    rec.avg_d_mt = mt;
  }
  if (has_implication && !test.empty()) {
    const CrCuRatios r = cr_cu_ratios(kb, test, params);
    rec.cr_mp = r.cr_mp;
    rec.cr_mt = r.cr_mt;
    rec.cu_mp = r.cu_mp;
    rec.cu_mt = r.cu_mt;
  }
  if (!labeled.empty()) rec.supervised_loss = supervised_loss(labeled, kb, params);
  if (!unlabeled.empty()) rec.dr_loss = kb_dr_loss(kb, unlabeled, params);
  if (!test.empty()) {
    const EvalMetrics m = evaluate(kb, params, test);
    rec.type_accuracy = m.type_accuracy;
    rec.relation_auc = m.relation_auc;
  }
  return rec;
}

}  // namespace

TrainResult train(const KnowledgeBase& kb, std::span<const Scene> labeled,
                  std::span<const Scene> unlabeled, std::span<const Scene> test,
                  int feature_dim, const TrainConfig& config) {
  if (auto violations = validate(kb); !violations.empty())
    throw InputError("knowledge base is invalid: " + violations.front());
  const bool uses_unlabeled = config.mode != TrainMode::Supervised;
  if (uses_unlabeled && unlabeled.empty())
    throw InputError(to_string(config.mode) + " mode requires unlabeled scenes");

  ModelConfig mc;
  mc.feature_dim = feature_dim;
  TrainResult result;
  result.params = make_params(kb.signature, mc, mix_seed(config.seed, 0x696e6974ULL));

  // Supervised target pool, flattened over the labeled scenes.
  std::vector<LabeledTarget> pool;
  for (std::size_t si = 0; si < labeled.size(); ++si) {
    auto per_scene = labeled_targets(kb, labeled[si], static_cast<int>(si));
    pool.insert(pool.end(), per_scene.begin(), per_scene.end());
  }

  OptimizerState state;
  auto emit = [&](int iteration) {
    result.metrics.push_back(
        metrics_record(iteration, kb, labeled, unlabeled, test, result.params));
  };

  emit(0);
  for (int step = 1; step <= config.iterations; ++step) {
    // Labeled batch: targets drawn uniformly with replacement.
    std::vector<LabeledTarget> lbatch;
    if (!pool.empty()) {
      Rng lrng(mix_seed(config.seed, 2 * static_cast<std::uint64_t>(step)));
      lbatch.reserve(static_cast<std::size_t>(config.batch_size_labeled));
      for (int i = 0; i < config.batch_size_labeled; ++i)
        lbatch.push_back(pool[static_cast<std::size_t>(lrng.below(pool.size()))]);
    }

    std::vector<SampledTriple> ubatch;
    if (uses_unlabeled)
      ubatch = sample_batch(kb, unlabeled, static_cast<std::size_t>(config.batch_size_unlabeled),
                            mix_seed(config.seed, 2 * static_cast<std::uint64_t>(step) + 1));

    GradTape tape;
    const Var loss =
        dr_objective(lbatch, labeled, ubatch, unlabeled, kb, result.params, config, tape);
    if (!std::isfinite(loss.v)) throw NumericError("non-finite loss; aborting training");
    const std::vector<double> grad = tape.gradient(loss, result.params.size());
    rmsprop_step(result.params, grad, state, config);

    if (step % config.metrics_every == 0 || step == config.iterations) emit(step);
  }
  return result;
}

}  // namespace dr
