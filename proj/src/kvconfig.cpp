#include "dr/kvconfig.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

namespace dr {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw InputError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw InputError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_kv(buf.str());
}

std::string KvReader::take_string(const std::string& key, const std::string& fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::string v = it->second;
  kv_.erase(it);
  return v;
}

int KvReader::take_int(const std::string& key, int fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    const int v = std::stoi(it->second);
    kv_.erase(it);
    return v;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "' is not an integer: " + it->second);
  }
}

double KvReader::take_double(const std::string& key, double fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    const double v = std::stod(it->second);
    kv_.erase(it);
    return v;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "' is not a number: " + it->second);
  }
}

std::uint64_t KvReader::take_u64(const std::string& key, std::uint64_t fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    const std::uint64_t v = std::stoull(it->second);
    kv_.erase(it);
    return v;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "' is not an unsigned integer: " + it->second);
  }
}

std::vector<double> KvReader::take_double_list(const std::string& key) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return {};
  std::vector<double> out;
  std::istringstream is(it->second);
  std::string piece;
  while (std::getline(is, piece, ',')) {
    try {
      out.push_back(std::stod(piece));
    } catch (const std::exception&) {
      throw InputError("config key '" + key + "' has a non-numeric entry: " + piece);
    }
  }
  kv_.erase(it);
  return out;
}

void KvReader::expect_empty(const std::string& what) const {
  if (kv_.empty()) return;
  throw InputError("unknown " + what + " key '" + kv_.begin()->first + "'");
}

}  // namespace dr
