#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dr/fol.hpp"
#include "dr/grounding.hpp"

namespace dr {

struct SynthConfig {
  int n_labeled_scenes = 7;
  int n_unlabeled_scenes = 200;
  int n_test_scenes = 50;
  int objects_per_scene_min = 3;
  int objects_per_scene_max = 8;
  int n_type_classes = 11;
  int feature_dim = 8;
  std::vector<double> type_prior;       // empty: uniform over the classes
  double relation_rule_strength = 1.0;  // P(a KB implication instance is enforced)
  double feature_noise_sigma = 0.9;
  std::uint64_t seed = 1;
};

SynthConfig parse_synth_config(const std::string& text);
SynthConfig read_synth_config(const std::string& path);

/// Labeled and test scenes keep their generating ground-truth worlds as full
/// label sets; unlabeled scenes drop them.
struct GeneratedDataset {
  int feature_dim = 0;
  std::vector<Scene> labeled;
  std::vector<Scene> unlabeled;
  std::vector<Scene> test;
};

/// Draws object types from type_prior (exactly one type atom per object),
/// features as noisy class prototypes, and non-type atoms at a base density
/// followed by repair passes that make each enforced formula instance true by
/// flipping non-type atoms. Deterministic per seed. Requires the KB's type
/// predicates to form one softmax group of n_type_classes members.
GeneratedDataset generate(const SynthConfig& config, const KnowledgeBase& kb);

/// Dataset directory layout: labeled.jsonl, unlabeled.jsonl, test.jsonl in
/// the scene-file format.
void write_dataset(const GeneratedDataset& ds, const std::string& dir);
GeneratedDataset read_dataset(const std::string& dir);

}  // namespace dr
