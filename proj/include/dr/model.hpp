#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dr/grounding.hpp"
#include "dr/tape.hpp"

namespace dr {

/// Weight slice descriptor for one predicate head (or one softmax group).
/// With hidden > 0 the slice holds, in order: W1 [hidden x input_dim],
/// b1 [hidden], W2 [outputs x hidden], b2 [outputs]. With hidden == 0 it
/// holds W [outputs x input_dim], b [outputs].
struct HeadLayout {
  std::string key;                    // predicate name, or group name
  std::vector<std::string> members;   // grouped: member predicate names
  int input_dim = 0;
  int hidden = 0;
  int outputs = 1;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool grouped() const { return !members.empty(); }

  std::size_t w1(int row, int col) const { return offset + static_cast<std::size_t>(row) * input_dim + col; }
  std::size_t b1(int row) const { return offset + static_cast<std::size_t>(hidden) * input_dim + row; }
  std::size_t w2(int out, int row) const {
    return offset + static_cast<std::size_t>(hidden) * input_dim + hidden +
           static_cast<std::size_t>(out) * hidden + row;
  }
  std::size_t b2(int out) const {
    return offset + static_cast<std::size_t>(hidden) * (input_dim + 1) +
           static_cast<std::size_t>(outputs) * hidden + out;
  }
  // hidden == 0 aliases
  std::size_t w(int out, int col) const { return offset + static_cast<std::size_t>(out) * input_dim + col; }
  std::size_t b(int out) const { return offset + static_cast<std::size_t>(outputs) * input_dim + out; }
};

/// Hidden-layer widths per head class.
struct ModelConfig {
  int feature_dim = 0;
  int group_hidden = 10;
  int unary_hidden = 10;
  int relation_hidden = 2;
};

/// Flat parameter vector plus the per-head slice layout. Immutable during an
/// evaluation pass; the trainer replaces theta between steps.
struct Params {
  int feature_dim = 0;
  std::vector<double> theta;
  std::vector<HeadLayout> heads;

  std::size_t size() const { return theta.size(); }

  /// Head serving a predicate (its own head, or its group's).
  const HeadLayout& head_for(const PredicateSig& pred) const;
  const HeadLayout& head_by_key(std::string_view key) const;
  /// Output coordinate of a predicate within its head (0 for ungrouped).
  int output_index(const PredicateSig& pred) const;

  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Builds the layout for a signature and initializes weights uniformly in
/// [-1/sqrt(fan_in), +1/sqrt(fan_in)], deterministically per seed.
Params make_params(const std::vector<PredicateSig>& signature, const ModelConfig& config,
                   std::uint64_t seed);

/// Truth probability of pred(objects...) for a scene's feature vectors.
/// Grouped predicates return their softmax coordinate. The untaped overload
/// is pure; both compute identical values.
double predict(const Params& params, const PredicateSig& pred, const Scene& scene,
               std::span<const int> objects);
Var predict(const Params& params, const PredicateSig& pred, const Scene& scene,
            std::span<const int> objects, GradTape& tape);

/// Full softmax distribution of a group head on one object.
std::vector<double> group_predict(const Params& params, std::string_view group,
                                  const Scene& scene, int object);

/// log softmax(member) of a group head; used by the supervised loss.
double group_log_prob(const Params& params, std::string_view group, const Scene& scene,
                      int object, int member);
Var group_log_prob(const Params& params, std::string_view group, const Scene& scene, int object,
                   int member, GradTape& tape);

/// Checkpoint file: header (format version, feature dim, signature with
/// widths and groups) then theta as 64-bit little-endian reals. Round-trips
/// bit-exactly.
void save_checkpoint(const Params& params, const std::vector<PredicateSig>& signature,
                     const std::string& path);
struct Checkpoint {
  Params params;
  std::vector<PredicateSig> signature;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dr
