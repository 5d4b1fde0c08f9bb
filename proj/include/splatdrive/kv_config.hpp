#pragma once

// `key = value` text files. Blank lines and everything after `#` are
// ignored; a key may repeat when it describes a list of records.

#include "splatdrive/common.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace splatdrive {

class KeyValueFile {
 public:
  /// Throws ConfigError (naming `origin` and the line) on lines without '='.
  static KeyValueFile parse(std::istream& in, const std::string& origin);
  /// Throws ConfigError when the file cannot be opened.
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  /// Last value for the key, or `fallback` when absent.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_all(const std::string& key) const;

  /// Throws ConfigError on the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  const std::string& origin() const { return origin_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::string origin_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Whitespace-separated numbers; throws ConfigError naming `what` on junk.
std::vector<double> parse_numbers(const std::string& text, const std::string& what);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_exact(double v);

}  // namespace splatdrive
