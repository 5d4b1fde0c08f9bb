#include "splatdrive/image_io.hpp"

#include "splatdrive/common.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace splatdrive {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

std::uint8_t quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw InvalidInput("PPM supports 1 or 3 channels, got " + std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << (image.channels == 3 ? "P6" : "P5") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), quantize8);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open image " + path.string());
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw LoadError("not a binary PPM/PGM: " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw LoadError("malformed PPM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw LoadError("unsupported PPM header: " + path.string());
  Image img(w, h, channels);
  std::vector<std::uint8_t> bytes(img.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw LoadError("truncated PPM data: " + path.string());
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw InvalidInput("PFM supports 1 or 3 channels, got " + std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << (image.channels == 3 ? "PF" : "Pf") << '\n'
      << image.width << ' ' << image.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        row[static_cast<std::size_t>(x) * image.channels + c] = static_cast<float>(image.at(x, y, c));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open image " + path.string());
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else throw LoadError("not a PFM: " + path.string());
  int w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    scale = std::stod(next_token(in));
  } catch (const std::exception&) {
    throw LoadError("malformed PFM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || scale >= 0.0) {
    throw LoadError("unsupported PFM (expects little-endian): " + path.string());
  }
  Image img(w, h, channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float))) {
      throw LoadError("truncated PFM data: " + path.string());
    }
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = row[static_cast<std::size_t>(x) * channels + c];
    }
  }
  return img;
}

}  // namespace splatdrive
