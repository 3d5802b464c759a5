#pragma once

#include <iosfwd>
#include <string>

#include "chromalog/histogram.hpp"

namespace chromalog {

// Binary PPM (P6, maxval 255). Comments in the header are skipped.
PixelImage read_ppm(std::istream& is);
void write_ppm(std::ostream& os, const PixelImage& img);
PixelImage load_ppm(const std::string& path);
void save_ppm(const std::string& path, const PixelImage& img);

}  // namespace chromalog
