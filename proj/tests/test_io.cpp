#include "splatdrive/image_io.hpp"
#include "splatdrive/ply.hpp"
#include "splatdrive/tensor_blob.hpp"

#include "splatdrive/common.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include <unistd.h>

using namespace splatdrive;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / ("splatdrive_io_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void truncate_file(const fs::path& p, std::size_t keep) {
  const std::string s = slurp(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(s.data(), static_cast<std::streamsize>(std::min(keep, s.size())));
}

}  // namespace

TEST(ImageIo, PpmMatchesGoldenBytes) {
  Image img(4, 3, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      img.at(x, y, 0) = (x + 1) / 4.0;
      img.at(x, y, 1) = (y + 1) / 3.0;
      img.at(x, y, 2) = ((x + y) % 2) * 0.5;
    }
  }
  const fs::path out = temp_dir() / "gradient.ppm";
  write_ppm(out, img);
  EXPECT_EQ(slurp(out), slurp(fs::path(SPLATDRIVE_TEST_DATA_DIR) / "gradient_4x3.ppm"));
}

TEST(ImageIo, PfmMatchesGoldenBytes) {
  Image img(4, 3, 1);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) img.at(x, y) = 1.5 * x + 10.0 * y + 0.25;
  }
  const fs::path out = temp_dir() / "depth.pfm";
  write_pfm(out, img);
  EXPECT_EQ(slurp(out), slurp(fs::path(SPLATDRIVE_TEST_DATA_DIR) / "depth_4x3.pfm"));
  const Image back = read_pfm(out);
  EXPECT_EQ(back.data, img.data);
}

TEST(ImageIo, PpmRoundTripIsQuantizationIdempotent) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  Image img(17, 9, 3);
  for (auto& v : img.data) v = u(rng);
  const fs::path p = temp_dir() / "rt.ppm";
  write_ppm(p, img);
  const Image once = read_ppm(p);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    EXPECT_LE(std::abs(once.data[i] - std::clamp(img.data[i], 0.0, 1.0)), 0.5 / 255 + 1e-12);
  }
  write_ppm(p, once);
  EXPECT_EQ(read_ppm(p).data, once.data);
}

TEST(ImageIo, TruncatedPpmIsLoadError) {
  const fs::path p = temp_dir() / "trunc.ppm";
  write_ppm(p, Image(8, 8, 3, 0.5));
  truncate_file(p, 40);
  EXPECT_THROW(read_ppm(p), LoadError);
}

TEST(Ply, RoundTripPreservesEveryType) {
  PlyFile f;
  f.comments.push_back("unit test");
  auto& e = f.add_element("vertex", 3);
  e.add_property("x", PlyType::Float64);
  e.add_property("f", PlyType::Float32);
  e.add_property("tag", PlyType::UInt8);
  e.add_property("id", PlyType::Int32);
  e.column("x") = {0.1, -2.5e-7, 1e300};
  e.column("f") = {0.5, -1.25, 3.0};
  e.column("tag") = {0, 1, 255};
  e.column("id") = {-7, 0, 123456};
  auto& e2 = f.add_element("empty", 0);
  e2.add_property("v", PlyType::Float64);
  const fs::path p = temp_dir() / "rt.ply";
  write_ply(p, f);
  const PlyFile back = read_ply(p);
  ASSERT_EQ(back.elements.size(), 2u);
  EXPECT_EQ(back.comments, f.comments);
  for (const char* name : {"x", "f", "tag", "id"}) {
    EXPECT_EQ(back.find("vertex")->column(name), e.column(name)) << name;
  }
  EXPECT_EQ(back.find("empty")->count, 0u);
}

TEST(Ply, TruncatedDataNamesFile) {
  PlyFile f;
  auto& e = f.add_element("vertex", 100);
  e.add_property("x", PlyType::Float64);
  const fs::path p = temp_dir() / "short.ply";
  write_ply(p, f);
  truncate_file(p, 200);
  try {
    read_ply(p);
    FAIL() << "expected LoadError";
  } catch (const LoadError& err) {
    EXPECT_NE(std::string(err.what()).find("short.ply"), std::string::npos);
  }
}

TEST(TensorBlob, RoundTripAndTruncation) {
  std::vector<NamedTensor> t = {{"a.weight", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"b", {1}, {-0.125}}};
  const fs::path p = temp_dir() / "w.bin";
  write_tensor_blob(p, t);
  const auto back = read_tensor_blob(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "a.weight");
  EXPECT_EQ(back[0].shape, t[0].shape);
  EXPECT_EQ(back[0].data, t[0].data);
  EXPECT_EQ(back[1].data, t[1].data);
  truncate_file(p, 30);
  EXPECT_THROW(read_tensor_blob(p), LoadError);
}
