#include "splatdrive/ply.hpp"

#include "splatdrive/common.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace splatdrive {

namespace {

struct TypeInfo {
  PlyType type;
  const char* name;
  const char* alias;
  std::size_t size;
};

constexpr TypeInfo kTypes[] = {
    {PlyType::Int8, "char", "int8", 1},      {PlyType::UInt8, "uchar", "uint8", 1},
    {PlyType::Int16, "short", "int16", 2},   {PlyType::UInt16, "ushort", "uint16", 2},
    {PlyType::Int32, "int", "int32", 4},     {PlyType::UInt32, "uint", "uint32", 4},
    {PlyType::Float32, "float", "float32", 4}, {PlyType::Float64, "double", "float64", 8},
};

const TypeInfo& info(PlyType t) {
  for (const auto& ti : kTypes) {
    if (ti.type == t) return ti;
  }
  throw InvalidInput("unknown PLY type");
}

const TypeInfo* parse_type(const std::string& s) {
  for (const auto& ti : kTypes) {
    if (s == ti.name || s == ti.alias) return &ti;
  }
  return nullptr;
}

template <typename T>
void put(std::vector<char>& buf, double v) {
  const T t = static_cast<T>(v);
  const auto* p = reinterpret_cast<const char*>(&t);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
double get(const char* p) {
  T t;
  std::memcpy(&t, p, sizeof(T));
  return static_cast<double>(t);
}

void encode(std::vector<char>& buf, PlyType t, double v) {
  switch (t) {
    case PlyType::Int8: put<std::int8_t>(buf, v); break;
    case PlyType::UInt8: put<std::uint8_t>(buf, v); break;
    case PlyType::Int16: put<std::int16_t>(buf, v); break;
    case PlyType::UInt16: put<std::uint16_t>(buf, v); break;
    case PlyType::Int32: put<std::int32_t>(buf, v); break;
    case PlyType::UInt32: put<std::uint32_t>(buf, v); break;
    case PlyType::Float32: put<float>(buf, v); break;
    case PlyType::Float64: put<double>(buf, v); break;
  }
}

double decode(const char* p, PlyType t) {
  switch (t) {
    case PlyType::Int8: return get<std::int8_t>(p);
    case PlyType::UInt8: return get<std::uint8_t>(p);
    case PlyType::Int16: return get<std::int16_t>(p);
    case PlyType::UInt16: return get<std::uint16_t>(p);
    case PlyType::Int32: return get<std::int32_t>(p);
    case PlyType::UInt32: return get<std::uint32_t>(p);
    case PlyType::Float32: return get<float>(p);
    case PlyType::Float64: return get<double>(p);
  }
  return 0.0;
}

}  // namespace

void PlyElement::add_property(const std::string& prop, PlyType type) {
  properties.push_back({prop, type});
  columns.emplace_back(count, 0.0);
}

std::vector<double>& PlyElement::column(const std::string& prop) {
  for (std::size_t i = 0; i < properties.size(); ++i) {
    if (properties[i].name == prop) return columns[i];
  }
  throw InvalidInput("PLY element '" + name + "' has no property '" + prop + "'");
}

const std::vector<double>& PlyElement::column(const std::string& prop) const {
  return const_cast<PlyElement*>(this)->column(prop);
}

bool PlyElement::has(const std::string& prop) const {
  for (const auto& p : properties) {
    if (p.name == prop) return true;
  }
  return false;
}

PlyElement& PlyFile::add_element(const std::string& name, std::size_t count) {
  PlyElement e;
  e.name = name;
  e.count = count;
  elements.push_back(std::move(e));
  return elements.back();
}

const PlyElement* PlyFile::find(const std::string& name) const {
  for (const auto& e : elements) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void write_ply(const std::filesystem::path& path, const PlyFile& file) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : file.comments) header << "comment " << c << '\n';
  for (const auto& e : file.elements) {
    header << "element " << e.name << ' ' << e.count << '\n';
    for (const auto& p : e.properties) header << "property " << info(p.type).name << ' ' << p.name << '\n';
  }
  header << "end_header\n";

  std::vector<char> body;
  for (const auto& e : file.elements) {
    std::size_t stride = 0;
    for (const auto& p : e.properties) stride += info(p.type).size;
    body.reserve(body.size() + stride * e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      for (std::size_t k = 0; k < e.properties.size(); ++k) encode(body, e.properties[k].type, e.columns[k][i]);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw Error("failed writing " + path.string());
}

PlyFile read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open PLY " + path.string());
  PlyFile file;
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw LoadError("not a PLY file: " + path.string());
  bool format_ok = false;
  while (true) {
    if (!std::getline(in, line)) throw LoadError("PLY header not terminated: " + path.string());
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") {
        throw LoadError("only binary_little_endian PLY is supported: " + path.string());
      }
      format_ok = true;
    } else if (kw == "comment") {
      file.comments.push_back(line.size() > 8 ? line.substr(8) : std::string());
    } else if (kw == "element") {
      std::string name;
      std::size_t count = 0;
      if (!(ls >> name >> count)) throw LoadError("malformed element line in " + path.string());
      file.add_element(name, count);
    } else if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      const TypeInfo* ti = parse_type(type);
      if (ti == nullptr || file.elements.empty()) {
        throw LoadError("unsupported property '" + line + "' in " + path.string());
      }
      file.elements.back().add_property(name, ti->type);
    }
  }
  if (!format_ok) throw LoadError("PLY format line missing: " + path.string());

  for (auto& e : file.elements) {
    std::size_t stride = 0;
    for (const auto& p : e.properties) stride += info(p.type).size;
    std::vector<char> buf(stride * e.count);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      throw LoadError("truncated PLY data in element '" + e.name + "': " + path.string());
    }
    const char* p = buf.data();
    for (std::size_t i = 0; i < e.count; ++i) {
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        e.columns[k][i] = decode(p, e.properties[k].type);
        p += info(e.properties[k].type).size;
      }
    }
  }
  return file;
}

}  // namespace splatdrive
