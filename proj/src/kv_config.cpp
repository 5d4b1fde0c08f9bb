#include "splatdrive/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace splatdrive {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
    kv.entries_.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse(in, path.string());
}

bool KeyValueFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == key) return it->second;
  }
  return fallback;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const auto nums = parse_numbers(get_string(key, ""), origin_ + ": " + key);
  if (nums.size() != 1) throw ConfigError(origin_ + ": " + key + " expects one number");
  return nums[0];
}

int KeyValueFile::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, "");
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError(origin_ + ": " + key + " expects an integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t KeyValueFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, "");
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError(origin_ + ": " + key + " expects an unsigned integer, got '" + s + "'");
  }
  return v;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, "");
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(origin_ + ": " + key + " expects a boolean, got '" + s + "'");
}

std::vector<std::string> KeyValueFile::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

void KeyValueFile::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [k, v] : entries_) {
    if (!known.count(k)) throw ConfigError(origin_ + ": unknown key '" + k + "'");
  }
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw ConfigError(what + ": '" + tok + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::string format_exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace splatdrive
