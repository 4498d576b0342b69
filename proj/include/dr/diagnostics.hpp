#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dr/oracle.hpp"
#include "dr/prl.hpp"

namespace dr {

/// Sentinel for ratios whose gradient mass vanished; the CSV writer emits an
/// empty cell so plots can gap instead of showing a fake zero.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

inline bool is_defined(double x) { return x == x; }

struct DiagnosticsRecord {
  int iteration = 0;
  double avg_d_mp = kUndefined;
  double avg_d_mt = kUndefined;
  double cr_mp = kUndefined;
  double cr_mt = kUndefined;
  double cu_mp = kUndefined;
  double cu_mt = kUndefined;
  double supervised_loss = kUndefined;
  double dr_loss = kUndefined;
  double type_accuracy = kUndefined;
  double relation_auc = kUndefined;
};

/// Arithmetic means of the MP and MT mixing weights over every (implication
/// formula, instantiation) pair in the given scenes. Throws InputError when
/// the knowledge base has no implication formula.
std::pair<double, double> avg_weights(const KnowledgeBase& kb, std::span<const Scene> scenes,
                                      const Params& params);

struct CrCuRatios {
  double cr_mp = kUndefined;
  double cr_mt = kUndefined;
  double cu_mp = kUndefined;
  double cu_mt = kUndefined;
};

struct DiagnosticsOptions {
  /// Evaluate exhaustively up to this many (formula, binding) pairs;
  /// otherwise draw sample_size of them, seeded.
  std::size_t exhaustive_limit = 100000;
  std::size_t sample_size = 2000;
  std::uint64_t seed = 0;
};

/// Correctly-reasoned and correctly-updated ratios against ground-truth
/// worlds: with d summed over implication instances,
///   cr_mp = sum v(phi) v(psi) d_mp / sum d_mp
///   cr_mt = sum v(~phi) v(~psi) d_mt / sum d_mt
///   cu_mp drops the v(phi) factor, cu_mt drops the v(~psi) factor.
/// Ratios with zero weight mass come back as the undefined sentinel.
CrCuRatios cr_cu_ratios(const KnowledgeBase& kb, std::span<const Scene> test_scenes,
                        const Params& params, const DiagnosticsOptions& options = {});

/// CSV columns, in order: iteration, avg_d_mp, avg_d_mt, cr_mp, cr_mt, cu_mp,
/// cu_mt, supervised_loss, dr_loss, type_accuracy, relation_auc. Values carry
/// 9 significant digits; undefined entries are empty cells.
void emit_csv(std::span<const DiagnosticsRecord> records, std::ostream& os);
void emit_csv(std::span<const DiagnosticsRecord> records, const std::string& path);

/// Parses a file produced by emit_csv (round-trip checks, plotting helpers).
std::vector<DiagnosticsRecord> parse_csv(std::istream& is);

}  // namespace dr
