#pragma once

// Minimal binary_little_endian PLY reader/writer. Every column is held as
// double in memory; all supported scalar types round-trip exactly.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace splatdrive {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float64;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
  std::vector<std::vector<double>> columns;  // one per property, `count` long

  void add_property(const std::string& prop, PlyType type);
  std::vector<double>& column(const std::string& prop);
  const std::vector<double>& column(const std::string& prop) const;
  bool has(const std::string& prop) const;
};

struct PlyFile {
  std::vector<std::string> comments;
  std::vector<PlyElement> elements;

  PlyElement& add_element(const std::string& name, std::size_t count);
  const PlyElement* find(const std::string& name) const;
};

void write_ply(const std::filesystem::path& path, const PlyFile& file);
/// Throws LoadError naming the path on malformed headers or truncated data.
PlyFile read_ply(const std::filesystem::path& path);

}  // namespace splatdrive
