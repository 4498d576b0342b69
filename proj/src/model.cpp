#include "dr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dr/rng.hpp"

namespace dr {

const HeadLayout& Params::head_by_key(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) throw InputError("no model head for '" + std::string(key) + "'");
  return heads[it->second];
}

const HeadLayout& Params::head_for(const PredicateSig& pred) const {
  return head_by_key(pred.grouped() ? pred.group : pred.name);
}

int Params::output_index(const PredicateSig& pred) const {
  if (!pred.grouped()) return 0;
  const HeadLayout& h = head_for(pred);
  auto it = std::find(h.members.begin(), h.members.end(), pred.name);
  if (it == h.members.end())
    throw InputError("predicate '" + pred.name + "' is not a member of group '" + pred.group + "'");
  return static_cast<int>(it - h.members.begin());
}

void Params::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < heads.size(); ++i) index_.emplace(heads[i].key, i);
}

Params make_params(const std::vector<PredicateSig>& signature, const ModelConfig& config,
                   std::uint64_t seed) {
  if (config.feature_dim <= 0) throw InputError("model feature dimension must be positive");
  Params p;
  p.feature_dim = config.feature_dim;

  std::vector<std::string> seen_groups;
  std::size_t offset = 0;
  auto add_head = [&](HeadLayout h) {
    h.offset = offset;
    const std::size_t in = static_cast<std::size_t>(h.input_dim);
    h.size = h.hidden > 0 ? h.hidden * in + h.hidden + static_cast<std::size_t>(h.outputs) * h.hidden + h.outputs
                          : static_cast<std::size_t>(h.outputs) * in + h.outputs;
    offset += h.size;
    p.heads.push_back(std::move(h));
  };

  for (const PredicateSig& sig : signature) {
    if (sig.grouped()) {
      if (std::find(seen_groups.begin(), seen_groups.end(), sig.group) != seen_groups.end())
        continue;
      seen_groups.push_back(sig.group);
      HeadLayout h;
      h.key = sig.group;
      for (const PredicateSig& member : signature)
        if (member.group == sig.group) h.members.push_back(member.name);
      h.input_dim = config.feature_dim;
      h.hidden = config.group_hidden;
      h.outputs = static_cast<int>(h.members.size());
      add_head(std::move(h));
    } else {
      HeadLayout h;
      h.key = sig.name;
      h.input_dim = sig.arity * config.feature_dim;
      h.hidden = sig.arity >= 2 ? config.relation_hidden : config.unary_hidden;
      h.outputs = 1;
      add_head(std::move(h));
    }
  }

  p.theta.assign(offset, 0.0);
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  for (const HeadLayout& h : p.heads) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(h.input_dim));
    if (h.hidden > 0) {
      const double s2 = 1.0 / std::sqrt(static_cast<double>(h.hidden));
      const std::size_t layer1 = static_cast<std::size_t>(h.hidden) * (h.input_dim + 1);
      for (std::size_t j = 0; j < h.size; ++j) {
        const double s = j < layer1 ? s1 : s2;
        p.theta[h.offset + j] = rng.uniform(-s, s);
      }
    } else {
      for (std::size_t j = 0; j < h.size; ++j) p.theta[h.offset + j] = rng.uniform(-s1, s1);
    }
  }
  p.rebuild_index();
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass, shared between the plain and the taped path
// ---------------------------------------------------------------------------

namespace {

struct PlainCtx {
  const std::vector<double>& theta;
  double param(std::size_t j) const { return theta[j]; }
  static double value_of(double x) { return x; }
};

struct TapeCtx {
  const std::vector<double>& theta;
  GradTape& tape;
  Var param(std::size_t j) { return tape.param(static_cast<int>(j), theta[j]); }
  static double value_of(const Var& x) { return x.v; }
};

template <class S>
S sigmoid(const S& z) {
  using std::exp;
  return 1.0 / (1.0 + exp(-z));
}

/// Raw output logits of a head on a concatenated input vector.
template <class S, class Ctx>
void head_logits(Ctx& ctx, const HeadLayout& h, std::span<const double> input,
                 std::vector<S>& logits) {
  logits.clear();
  if (h.hidden > 0) {
    std::vector<S> hid;
    hid.reserve(h.hidden);
    for (int i = 0; i < h.hidden; ++i) {
      S z = ctx.param(h.b1(i));
      for (int j = 0; j < h.input_dim; ++j) z = z + ctx.param(h.w1(i, j)) * input[j];
      using std::tanh;
      hid.push_back(tanh(z));
    }
    for (int k = 0; k < h.outputs; ++k) {
      S z = ctx.param(h.b2(k));
      for (int i = 0; i < h.hidden; ++i) z = z + ctx.param(h.w2(k, i)) * hid[i];
      logits.push_back(z);
    }
  } else {
    for (int k = 0; k < h.outputs; ++k) {
      S z = ctx.param(h.b(k));
      for (int j = 0; j < h.input_dim; ++j) z = z + ctx.param(h.w(k, j)) * input[j];
      logits.push_back(z);
    }
  }
}

/// Softmax over logits with a detached max shift (softmax is shift
/// invariant, so subtracting the max as a constant changes neither the value
/// nor the gradient).
template <class S, class Ctx>
void softmax(const std::vector<S>& logits, std::vector<S>& probs) {
  double top = Ctx::value_of(logits[0]);
  for (const S& z : logits) top = std::max(top, Ctx::value_of(z));
  using std::exp;
  std::vector<S> e;
  e.reserve(logits.size());
  for (const S& z : logits) e.push_back(exp(z - top));
  S total = e[0];
  for (std::size_t i = 1; i < e.size(); ++i) total = total + e[i];
  probs.clear();
  for (const S& x : e) probs.push_back(x / total);
}

template <class S, class Ctx>
S log_softmax_member(const std::vector<S>& logits, int member) {
  double top = Ctx::value_of(logits[0]);
  for (const S& z : logits) top = std::max(top, Ctx::value_of(z));
  using std::exp;
  using std::log;
  S total = exp(logits[0] - top);
  for (std::size_t i = 1; i < logits.size(); ++i) total = total + exp(logits[i] - top);
  return logits[member] - (top + log(total));
}

std::vector<double> gather_input(const Params& params, const PredicateSig& pred,
                                 const Scene& scene, std::span<const int> objects) {
  if (static_cast<int>(objects.size()) != pred.arity)
    throw InputError("predicate '" + pred.name + "' expects " + std::to_string(pred.arity) +
                     " objects, got " + std::to_string(objects.size()));
  std::vector<double> input;
  input.reserve(objects.size() * params.feature_dim);
  for (int obj : objects) {
    if (obj < 0 || obj >= scene.size())
      throw InputError("object index out of range in scene '" + scene.scene_id + "'");
    auto f = scene.features(obj);
    if (static_cast<int>(f.size()) != params.feature_dim)
      throw InputError("feature vector length mismatch in scene '" + scene.scene_id + "'");
    input.insert(input.end(), f.begin(), f.end());
  }
  return input;
}

template <class S, class Ctx>
S predict_impl(Ctx& ctx, const Params& params, const PredicateSig& pred, const Scene& scene,
               std::span<const int> objects) {
  const HeadLayout& h = params.head_for(pred);
  const std::vector<double> input = gather_input(params, pred, scene, objects);
  std::vector<S> logits;
  head_logits<S>(ctx, h, input, logits);
  if (!h.grouped()) return sigmoid(logits[0]);
  std::vector<S> probs;
  softmax<S, Ctx>(logits, probs);
  return probs[params.output_index(pred)];
}

}  // namespace

double predict(const Params& params, const PredicateSig& pred, const Scene& scene,
               std::span<const int> objects) {
  PlainCtx ctx{params.theta};
  return predict_impl<double>(ctx, params, pred, scene, objects);
}

Var predict(const Params& params, const PredicateSig& pred, const Scene& scene,
            std::span<const int> objects, GradTape& tape) {
  TapeCtx ctx{params.theta, tape};
  return predict_impl<Var>(ctx, params, pred, scene, objects);
}

std::vector<double> group_predict(const Params& params, std::string_view group,
                                  const Scene& scene, int object) {
  const HeadLayout& h = params.head_by_key(group);
  PlainCtx ctx{params.theta};
  PredicateSig probe{h.members.front(), 1, std::string(group)};
  const std::vector<double> input = gather_input(params, probe, scene, {&object, 1});
  std::vector<double> logits, probs;
  head_logits<double>(ctx, h, input, logits);
  softmax<double, PlainCtx>(logits, probs);
  return probs;
}

namespace {

template <class S, class Ctx>
S group_log_prob_impl(Ctx& ctx, const Params& params, std::string_view group, const Scene& scene,
                      int object, int member) {
  const HeadLayout& h = params.head_by_key(group);
  if (member < 0 || member >= h.outputs)
    throw InputError("group member index out of range for '" + std::string(group) + "'");
  PredicateSig probe{h.members.front(), 1, std::string(group)};
  const std::vector<double> input = gather_input(params, probe, scene, {&object, 1});
  std::vector<S> logits;
  head_logits<S>(ctx, h, input, logits);
  return log_softmax_member<S, Ctx>(logits, member);
}

}  // namespace

double group_log_prob(const Params& params, std::string_view group, const Scene& scene,
                      int object, int member) {
  PlainCtx ctx{params.theta};
  return group_log_prob_impl<double>(ctx, params, group, scene, object, member);
}

Var group_log_prob(const Params& params, std::string_view group, const Scene& scene, int object,
                   int member, GradTape& tape) {
  TapeCtx ctx{params.theta, tape};
  return group_log_prob_impl<Var>(ctx, params, group, scene, object, member);
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'R', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw InputError("truncated checkpoint file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw InputError("truncated checkpoint file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > (1u << 20)) throw InputError("corrupt string length in checkpoint");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw InputError("truncated checkpoint file");
  return s;
}

}  // namespace

void save_checkpoint(const Params& params, const std::vector<PredicateSig>& signature,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write checkpoint '" + path + "'");
  os.write(kMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(params.feature_dim));
  put_u32(os, static_cast<std::uint32_t>(signature.size()));
  for (const PredicateSig& s : signature) {
    put_str(os, s.name);
    put_u32(os, static_cast<std::uint32_t>(s.arity));
    put_str(os, s.group);
  }
  put_u32(os, static_cast<std::uint32_t>(params.heads.size()));
  for (const HeadLayout& h : params.heads) {
    put_str(os, h.key);
    put_u32(os, static_cast<std::uint32_t>(h.hidden));
  }
  put_u64(os, params.theta.size());
  for (double v : params.theta) put_f64(os, v);
  if (!os) throw InputError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot read checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw InputError("'" + path + "' is not a checkpoint file");
  Checkpoint ck;
  const int m = static_cast<int>(get_u32(is));
  const std::uint32_t n_preds = get_u32(is);
  for (std::uint32_t i = 0; i < n_preds; ++i) {
    PredicateSig s;
    s.name = get_str(is);
    s.arity = static_cast<int>(get_u32(is));
    s.group = get_str(is);
    ck.signature.push_back(std::move(s));
  }
  const std::uint32_t n_heads = get_u32(is);
  std::vector<std::pair<std::string, int>> widths;
  for (std::uint32_t i = 0; i < n_heads; ++i) {
    std::string key = get_str(is);
    const int hidden = static_cast<int>(get_u32(is));
    widths.emplace_back(std::move(key), hidden);
  }

  // Rebuild the layout from the stored signature and widths, then overwrite
  // theta with the stored values.
  ModelConfig config;
  config.feature_dim = m;
  Params p = make_params(ck.signature, config, 0);
  for (HeadLayout& h : p.heads) {
    auto it = std::find_if(widths.begin(), widths.end(),
                           [&](const auto& w) { return w.first == h.key; });
    if (it == widths.end()) throw InputError("checkpoint head list mismatch");
    h.hidden = it->second;
  }
  // Recompute offsets for the stored widths.
  std::size_t offset = 0;
  for (HeadLayout& h : p.heads) {
    h.offset = offset;
    const std::size_t in = static_cast<std::size_t>(h.input_dim);
    h.size = h.hidden > 0 ? h.hidden * in + h.hidden + static_cast<std::size_t>(h.outputs) * h.hidden + h.outputs
                          : static_cast<std::size_t>(h.outputs) * in + h.outputs;
    offset += h.size;
  }
  const std::uint64_t n_theta = get_u64(is);
  if (n_theta != offset)
    throw InputError("checkpoint parameter count disagrees with its header layout");
  p.theta.assign(n_theta, 0.0);
  for (std::uint64_t i = 0; i < n_theta; ++i) p.theta[i] = get_f64(is);
  if (!is) throw InputError("truncated checkpoint file");
  p.rebuild_index();
  ck.params = std::move(p);
  return ck;
}

}  // namespace dr
