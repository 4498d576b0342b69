#pragma once

#include <map>
#include <string>
#include <vector>

#include "dr/error.hpp"

namespace dr {

/// Flat "key = value" config text; '#' starts a comment, blank lines are
/// skipped, keys may not repeat.
std::map<std::string, std::string> parse_kv(const std::string& text);
std::map<std::string, std::string> read_kv_file(const std::string& path);

/// Typed lookups. Each consumes the key so callers can reject leftovers.
class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string take_string(const std::string& key, const std::string& fallback);
  int take_int(const std::string& key, int fallback);
  double take_double(const std::string& key, double fallback);
  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback);
  std::vector<double> take_double_list(const std::string& key);

  /// Throws InputError when unknown keys remain.
  void expect_empty(const std::string& what) const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace dr
