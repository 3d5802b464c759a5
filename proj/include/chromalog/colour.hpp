#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace chromalog {

struct RgbColour {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const RgbColour&, const RgbColour&) = default;
};

// Sarifuddin-Missaoui hue/chroma/luminance. Hue in degrees [0, 360), grey
// colours carry hue 0. Chroma spans [0, 170] and luminance [0, ~127.5] for
// 8-bit sRGB input.
struct HclColour {
  double h = 0.0;
  double c = 0.0;
  double l = 0.0;

  friend bool operator==(const HclColour&, const HclColour&) = default;
};

// CIE 1976 L*u*v* under a D65 white.
struct LuvColour {
  double L = 0.0;
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const LuvColour&, const LuvColour&) = default;
};

// Real-valued RGB on the 0..255 scale; out-of-gamut values are representable.
using RgbReal = std::array<double, 3>;

HclColour rgb_to_hcl(RgbColour c);
HclColour rgb_to_hcl(const RgbReal& c);

// Exact inverse of rgb_to_hcl, without clamping.
RgbReal hcl_to_rgb_real(HclColour c);

// Rounds and clamps each channel into [0, 255].
RgbColour hcl_to_rgb(HclColour c);

LuvColour rgb_to_luv(RgbColour c);
LuvColour rgb_to_luv(const RgbReal& c);  // channels clamped to [0, 255]
LuvColour hcl_to_luv(HclColour c);

// Euclidean distance in the cylindrical HCL embedding (c cos h, c sin h, l).
double hcl_distance(const HclColour& a, const HclColour& b);
double luv_distance_sq(const LuvColour& a, const LuvColour& b);

double hue_difference(double h1, double h2);  // absolute, in [0, 180]

inline constexpr double kMaxChroma = 170.0;
inline constexpr double kMaxLuminance = 127.5;

struct PaletteBin {
  HclColour hcl;
  LuvColour luv;
  RgbColour rgb;

  friend bool operator==(const PaletteBin&, const PaletteBin&) = default;
};

struct PaletteConfig {
  int bins = 327;
  int hue_steps = 36;
  int chroma_steps = 12;
  int luminance_steps = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

class Palette {
 public:
  explicit Palette(std::vector<PaletteBin> bins);

  std::size_t size() const { return bins_.size(); }
  const PaletteBin& operator[](std::size_t i) const { return bins_[i]; }
  std::span<const PaletteBin> bins() const { return bins_; }

  // Index of the bin nearest in LUV; ties go to the lowest index.
  std::size_t nearest(const LuvColour& c) const;
  std::size_t nearest(const HclColour& c) const { return nearest(hcl_to_luv(c)); }
  std::size_t nearest(RgbColour c) const { return nearest(rgb_to_luv(c)); }

  double median_chroma() const;

  friend bool operator==(const Palette&, const Palette&) = default;

 private:
  std::vector<PaletteBin> bins_;
};

// Candidate bin centres: the in-gamut points of the (H, C, L) grid, rounded
// to 8-bit sRGB and deduplicated, in grid order.
std::vector<RgbColour> palette_candidates(const PaletteConfig& cfg);

// Grid, gamut filter, then farthest-point subsampling to exactly cfg.bins.
// Throws ValidationError if the grid has fewer in-gamut points than bins.
Palette generate_palette(const PaletteConfig& cfg);

std::size_t nearest_bin(const Palette& p, const HclColour& c);

void write_palette(std::ostream& os, const Palette& p);
Palette read_palette(std::istream& is);
void save_palette(const std::string& path, const Palette& p);
Palette load_palette(const std::string& path);

std::string format_hex(RgbColour c);  // "#rrggbb"
RgbColour parse_hex(const std::string& s);

}  // namespace chromalog
