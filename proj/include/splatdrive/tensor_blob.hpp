#pragma once

// Named-tensor blob: "SDTBLOB1", u32 count, then per tensor
// u32 name_len, name bytes, u32 rank, u64 dims[rank], f64 data (row-major).
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace splatdrive {

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

void write_tensor_blob(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_blob(const std::filesystem::path& path);

}  // namespace splatdrive
