#include "splatdrive/tensor_blob.hpp"

#include "splatdrive/common.hpp"

#include <fstream>

namespace splatdrive {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'T', 'B', 'L', 'O', 'B', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) throw LoadError("truncated tensor blob: " + path.string());
  return v;
}

}  // namespace

void write_tensor_blob(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    std::uint64_t n = 1;
    for (auto d : t.shape) n *= d;
    if (n != t.data.size()) throw InvalidInput("tensor '" + t.name + "' shape does not match data");
    write_pod(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) write_pod(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<NamedTensor> read_tensor_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open tensor blob " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || !std::equal(magic, magic + 8, kMagic)) {
    throw LoadError("bad tensor blob magic: " + path.string());
  }
  const auto count = read_pod<std::uint32_t>(in, path);
  std::vector<NamedTensor> out(count);
  for (auto& t : out) {
    const auto len = read_pod<std::uint32_t>(in, path);
    if (len > 4096) throw LoadError("corrupt tensor name in " + path.string());
    t.name.resize(len);
    in.read(t.name.data(), len);
    const auto rank = read_pod<std::uint32_t>(in, path);
    if (rank > 8) throw LoadError("corrupt tensor rank in " + path.string());
    std::uint64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.shape.push_back(read_pod<std::uint64_t>(in, path));
      n *= t.shape.back();
    }
    if (n > (std::uint64_t{1} << 32)) throw LoadError("corrupt tensor shape in " + path.string());
    t.data.resize(n);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
      throw LoadError("truncated tensor '" + t.name + "' in " + path.string());
    }
  }
  return out;
}

}  // namespace splatdrive
