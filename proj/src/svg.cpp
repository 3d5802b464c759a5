#include "chromalog/svg.hpp"

#include <sstream>

#include "chromalog/error.hpp"

namespace chromalog {

std::string palette_svg(const Palette& palette, int columns, int cell) {
  if (columns <= 0 || cell <= 0) throw ValidationError("swatch grid dimensions must be positive");
  const int n = static_cast<int>(palette.size());
  const int rows = (n + columns - 1) / columns;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << columns * cell << "\" height=\"" << rows * cell
     << "\">\n";
  for (int i = 0; i < n; ++i) {
    const auto& bin = palette[static_cast<std::size_t>(i)];
    os << "  <rect x=\"" << (i % columns) * cell << "\" y=\"" << (i / columns) * cell << "\" width=\"" << cell
       << "\" height=\"" << cell << "\" fill=\"" << format_hex(bin.rgb) << "\"><title>" << i << "</title></rect>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string histogram_strip_svg(const ColourHistogram& h, const Palette& palette, std::size_t top, int width,
                                int height) {
  if (h.size() != palette.size()) throw ValidationError("histogram and palette sizes differ");
  const auto bins = h.top_bins(top);
  double total = 0.0;
  for (auto b : bins) total += h[b];
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  double x = 0.0;
  for (auto b : bins) {
    const double w = total > 0.0 ? width * h[b] / total : 0.0;
    os << "  <rect x=\"" << x << "\" y=\"0\" width=\"" << w << "\" height=\"" << height << "\" fill=\""
       << format_hex(palette[b].rgb) << "\"><title>bin " << b << " " << h[b] << "</title></rect>\n";
    x += w;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace chromalog
