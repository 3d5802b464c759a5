#pragma once

#include <string>

#include "chromalog/colour.hpp"
#include "chromalog/histogram.hpp"

namespace chromalog {

// One square per bin, in palette order.
std::string palette_svg(const Palette& palette, int columns = 24, int cell = 20);

// The `top` heaviest bins as adjacent bars whose widths are proportional to
// their mass.
std::string histogram_strip_svg(const ColourHistogram& h, const Palette& palette, std::size_t top = 10,
                                int width = 400, int height = 40);

}  // namespace chromalog
