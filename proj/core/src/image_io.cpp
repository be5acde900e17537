#include "spg/image_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "spg/error.hpp"
#include "spg/spgt.hpp"

namespace spg {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is, const std::filesystem::path& path) {
  std::string tok;
  while (true) {
    int ch = is.peek();
    if (ch == EOF) break;
    if (std::isspace(ch)) {
      is.get();
      if (!tok.empty()) break;
      continue;
    }
    if (ch == '#' && tok.empty()) {
      std::string ignored;
      std::getline(is, ignored);
      continue;
    }
    tok.push_back(static_cast<char>(is.get()));
  }
  if (tok.empty()) throw ParseError(path.string() + ": truncated netpbm header");
  return tok;
}

int header_int(std::istream& is, const std::filesystem::path& path) {
  const std::string tok = header_token(is, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": bad header field '" + tok + "'");
  }
}

struct Netpbm {
  int width, height;
  std::vector<std::uint8_t> bytes;
};

Netpbm read_netpbm(const std::filesystem::path& path, const char* magic, int channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  if (header_token(is, path) != magic) throw ParseError(path.string() + ": expected " + magic + " file");
  Netpbm img{header_int(is, path), header_int(is, path), {}};
  // header_token consumed the single whitespace after maxval.
  if (header_int(is, path) != 255) throw ParseError(path.string() + ": only maxval 255 is supported");
  img.bytes.resize(static_cast<std::size_t>(img.width) * img.height * channels);
  if (!is.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size())))
    throw ParseError(path.string() + ": truncated pixel data");
  return img;
}

void write_netpbm(const std::filesystem::path& path, const char* magic, int w, int h,
                  const std::vector<std::uint8_t>& bytes) {
  std::ostringstream os(std::ios::binary);
  os << magic << "\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  write_file_atomic(path, os.str());
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_ppm expects (1,3,H,W), got " + s.str());
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(s.h) * s.w * 3);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        bytes[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  write_netpbm(path, "P6", s.w, s.h, bytes);
}

Tensor<float> read_ppm(const std::filesystem::path& path) {
  const Netpbm img = read_netpbm(path, "P6", 3);
  Tensor<float> t(Shape{1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        t(0, c, y, x) = img.bytes[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0f;
  return t;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height)
    throw ShapeError("write_pgm: pixel count does not match dims");
  write_netpbm(path, "P5", image.width, image.height, image.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  Netpbm img = read_netpbm(path, "P5", 1);
  return GrayImage{img.width, img.height, std::move(img.bytes)};
}

}  // namespace spg
