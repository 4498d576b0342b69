#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dr/diagnostics.hpp"
#include "dr/prl.hpp"

namespace dr {

enum class TrainMode { Supervised, Unnormalized, Normalized };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::Normalized;
  double mu = 0.25;  // used only in normalized mode
  int iterations = 2000;
  int batch_size_labeled = 32;
  int batch_size_unlabeled = 64;
  double learning_rate = 1e-2;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-8;
  double dr_weight = 1.0;
  std::uint64_t seed = 1;
  int metrics_every = 50;
};

TrainConfig parse_train_config(const std::string& text);
TrainConfig read_train_config(const std::string& path);

/// One supervised term: either the categorical log-likelihood of an object's
/// labeled class within a softmax group, or the Bernoulli likelihood of one
/// ungrouped ground atom.
struct LabeledTarget {
  int scene = 0;
  bool is_group = false;
  std::string group;      // is_group
  int object = 0;         // is_group
  int member = 0;         // is_group: index of the labeled class
  int pred = -1;          // atom: index into the signature
  std::vector<int> args;  // atom
  int value = 0;          // atom
};

/// Every supervised target of a labeled scene, in deterministic order.
std::vector<LabeledTarget> labeled_targets(const KnowledgeBase& kb, const Scene& scene,
                                           int scene_index);

/// Cross-entropy over sampled targets: grouped predicates contribute
/// -log softmax(labeled class), ungrouped atoms -[w log f + (1-w) log(1-f)],
/// all clamped by kEpsilon.
double supervised_batch_loss(std::span<const LabeledTarget> batch,
                             std::span<const Scene> scenes, const KnowledgeBase& kb,
                             const Params& params);
Var supervised_batch_loss(std::span<const LabeledTarget> batch, std::span<const Scene> scenes,
                          const KnowledgeBase& kb, const Params& params, GradTape& tape);

/// Full supervised loss over whole labeled scenes.
double supervised_loss(std::span<const Scene> scenes, const KnowledgeBase& kb,
                       const Params& params);
Var supervised_loss(std::span<const Scene> scenes, const KnowledgeBase& kb, const Params& params,
                    GradTape& tape);

/// The semi-supervised objective over one step's batches:
///   supervised term + dr_weight * DR term,
/// where the DR term is the summed -log degree of the sampled instantiations
/// (unnormalized mode), the normalized loss (normalized mode), or absent
/// (supervised mode).
double dr_objective(std::span<const LabeledTarget> labeled_batch,
                    std::span<const Scene> labeled_scenes,
                    std::span<const SampledTriple> unlabeled_batch,
                    std::span<const Scene> unlabeled_scenes, const KnowledgeBase& kb,
                    const Params& params, const TrainConfig& config);
Var dr_objective(std::span<const LabeledTarget> labeled_batch,
                 std::span<const Scene> labeled_scenes,
                 std::span<const SampledTriple> unlabeled_batch,
                 std::span<const Scene> unlabeled_scenes, const KnowledgeBase& kb,
                 const Params& params, const TrainConfig& config, GradTape& tape);

/// Same with the MP/MT weights pinned by the caller (the loss is only
/// differentiable for fixed weights; gradient checks exercise this form).
double dr_objective_given(std::span<const LabeledTarget> labeled_batch,
                          std::span<const Scene> labeled_scenes,
                          std::span<const SampledTriple> unlabeled_batch,
                          std::span<const Scene> unlabeled_scenes, const BatchWeights& weights,
                          const KnowledgeBase& kb, const Params& params,
                          const TrainConfig& config);
Var dr_objective_given(std::span<const LabeledTarget> labeled_batch,
                       std::span<const Scene> labeled_scenes,
                       std::span<const SampledTriple> unlabeled_batch,
                       std::span<const Scene> unlabeled_scenes, const BatchWeights& weights,
                       const KnowledgeBase& kb, const Params& params, const TrainConfig& config,
                       GradTape& tape);

struct OptimizerState {
  std::vector<double> acc;  // squared-gradient accumulator
  std::int64_t step = 0;
};

/// acc <- rho acc + (1-rho) g^2 ; theta <- theta - lr g / (sqrt(acc) + eps).
/// Throws NumericError on a non-finite gradient.
void rmsprop_step(Params& params, std::span<const double> gradient, OptimizerState& state,
                  const TrainConfig& config);

struct EvalMetrics {
  double type_accuracy = kUndefined;
  double relation_auc = kUndefined;
};

/// Accuracy of the argmax group member per labeled object and midrank AUC of
/// the binary-relation scores. Throws InputError without labeled test data.
EvalMetrics evaluate(const KnowledgeBase& kb, const Params& params,
                     std::span<const Scene> test_scenes);

/// Rank-based AUC with midrank tie handling; undefined without both classes.
double rank_auc(std::span<const double> scores, std::span<const int> labels);

struct TrainResult {
  Params params;
  std::vector<DiagnosticsRecord> metrics;
};

/// Minibatch RMSProp over the semi-supervised objective. Deterministic per
/// config; emits a metrics record at iteration 0, every metrics_every
/// iterations, and at the end. Aborts with NumericError if the loss or
/// gradient goes non-finite.
TrainResult train(const KnowledgeBase& kb, std::span<const Scene> labeled,
                  std::span<const Scene> unlabeled, std::span<const Scene> test,
                  int feature_dim, const TrainConfig& config);

}  // namespace dr
