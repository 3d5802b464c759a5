#include "chromalog/image_io.hpp"

#include <cctype>
#include <istream>
#include <ostream>

#include "chromalog/error.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {

namespace {

std::string next_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

PixelImage read_ppm(std::istream& is) {
  if (next_token(is) != "P6") throw FormatError("not a binary PPM (P6) image");
  const int w = textio::parse_int<int>(next_token(is));
  const int h = textio::parse_int<int>(next_token(is));
  const int maxval = textio::parse_int<int>(next_token(is));
  if (w <= 0 || h <= 0) throw FormatError("PPM dimensions must be positive");
  if (maxval != 255) throw FormatError("only 8-bit PPM images are supported");
  std::vector<RgbColour> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (auto& p : px) {
    char rgb[3];
    if (!is.read(rgb, 3)) throw FormatError("PPM pixel data is truncated");
    p = {static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]), static_cast<std::uint8_t>(rgb[2])};
  }
  return PixelImage(w, h, std::move(px));
}

void write_ppm(std::ostream& os, const PixelImage& img) {
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (const auto& p : img.pixels) {
    const char rgb[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    os.write(rgb, 3);
  }
}

PixelImage load_ppm(const std::string& path) {
  auto in = textio::open_in(path, true);
  try {
    return read_ppm(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_ppm(const std::string& path, const PixelImage& img) {
  auto out = textio::open_out(path, true);
  write_ppm(out, img);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace chromalog
