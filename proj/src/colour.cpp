#include "chromalog/colour.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <string>
#include <tuple>

#include "chromalog/error.hpp"
#include "chromalog/random.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {
namespace {

constexpr double kY0 = 100.0;
constexpr double kGamma = 3.0;
constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_hue(double h) {
  h = std::fmod(h, 360.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return h;
}

double hcl_q(double mn, double mx) {
  if (mx <= 0.0) return 1.0;
  return std::exp((mn / mx) / kY0 * kGamma);
}

double srgb_to_linear(double c) {
  c /= 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

const std::array<double, 256>& linear_lut() {
  static const std::array<double, 256> lut = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = srgb_to_linear(i);
    return t;
  }();
  return lut;
}

struct Xyz {
  double x, y, z;
};

Xyz linear_to_xyz(double r, double g, double b) {
  return {0.4124564 * r + 0.3575761 * g + 0.1804375 * b,
          0.2126729 * r + 0.7151522 * g + 0.0721750 * b,
          0.0193339 * r + 0.1191920 * g + 0.9503041 * b};
}

// D65 white as the image of linear (1, 1, 1), so sRGB white lands on u = v = 0.
const Xyz& white() {
  static const Xyz w = linear_to_xyz(1.0, 1.0, 1.0);
  return w;
}

LuvColour xyz_to_luv(const Xyz& c) {
  const Xyz& w = white();
  const double yr = c.y / w.y;
  constexpr double eps = 216.0 / 24389.0;
  constexpr double kappa = 24389.0 / 27.0;
  const double L = yr > eps ? 116.0 * std::cbrt(yr) - 16.0 : kappa * yr;
  const double den = c.x + 15.0 * c.y + 3.0 * c.z;
  if (den <= 0.0) return {L, 0.0, 0.0};
  const double wden = w.x + 15.0 * w.y + 3.0 * w.z;
  const double up = 4.0 * c.x / den;
  const double vp = 9.0 * c.y / den;
  const double upn = 4.0 * w.x / wden;
  const double vpn = 9.0 * w.y / wden;
  return {L, 13.0 * L * (up - upn), 13.0 * L * (vp - vpn)};
}

}  // namespace

HclColour rgb_to_hcl(const RgbReal& c) {
  const double r = c[0], g = c[1], b = c[2];
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double q = hcl_q(mn, mx);
  const double rg = r - g;
  const double gb = g - b;
  const double br = b - r;

  HclColour out;
  out.l = (q * mx + (1.0 - q) * mn) / 2.0;
  out.c = q * (std::abs(rg) + std::abs(gb) + std::abs(br)) / 3.0;
  if (mx == mn) {
    out.c = 0.0;
    out.h = 0.0;
    return out;
  }
  const double a = rg == 0.0 ? (gb > 0.0 ? 90.0 : -90.0) : std::atan(gb / rg) / kDeg;
  double h;
  if (rg >= 0.0 && gb >= 0.0) {
    h = 2.0 * a / 3.0;
  } else if (rg >= 0.0) {
    h = 4.0 * a / 3.0;
  } else if (gb >= 0.0) {
    h = 180.0 + 4.0 * a / 3.0;
  } else {
    h = 2.0 * a / 3.0 - 180.0;
  }
  out.h = wrap_hue(h);
  return out;
}

HclColour rgb_to_hcl(RgbColour c) { return rgb_to_hcl(RgbReal{double(c.r), double(c.g), double(c.b)}); }

RgbReal hcl_to_rgb_real(HclColour c) {
  const double chroma = std::max(c.c, 0.0);
  if (chroma == 0.0) {
    const double v = 2.0 * c.l;
    return {v, v, v};
  }
  // Max - Min and Max follow from C and L once Q is known; Q depends on
  // Min / Max only weakly, so a fixed-point iteration converges in a few steps.
  double q = 1.0, mx = 0.0, mn = 0.0, span = 0.0;
  for (int it = 0; it < 100; ++it) {
    span = 3.0 * chroma / (2.0 * q);
    mx = 2.0 * c.l + (1.0 - q) * span;
    mn = mx - span;
    const double next = hcl_q(mn, mx);
    if (next == q) break;
    q = next;
  }
  span = mx - mn;

  double hs = wrap_hue(c.h);
  if (hs > 180.0) hs -= 360.0;

  double r, g, b;
  if (hs >= 0.0 && hs <= 60.0) {
    const double th = 1.5 * hs * kDeg;
    r = mx;
    b = mn;
    g = mn + span * std::sin(th) / (std::sin(th) + std::cos(th));
  } else if (hs > 60.0) {
    const double a = 0.75 * (hs - 180.0) * kDeg;  // (-90, 0]
    g = mx;
    if (hs <= 120.0) {
      b = mn;
      r = mx - span * std::cos(a) / (-std::sin(a));
    } else {
      r = mn;
      b = mx + std::tan(a) * span;
    }
  } else if (hs >= -60.0) {
    const double a = 0.75 * hs * kDeg;  // [-45, 0)
    r = mx;
    g = mn;
    b = mn - std::tan(a) * span;
  } else if (hs >= -120.0) {
    const double a = 0.75 * hs * kDeg;  // [-90, -45)
    b = mx;
    g = mn;
    r = mn + span * std::cos(a) / (-std::sin(a));
  } else {
    const double th = 1.5 * (hs + 180.0) * kDeg;  // (0, 90)
    b = mx;
    r = mn;
    g = mx - span * std::sin(th) / (std::sin(th) + std::cos(th));
  }
  return {r, g, b};
}

RgbColour hcl_to_rgb(HclColour c) {
  const RgbReal v = hcl_to_rgb_real(c);
  auto ch = [](double x) { return static_cast<std::uint8_t>(std::clamp(std::lround(x), 0L, 255L)); };
  return {ch(v[0]), ch(v[1]), ch(v[2])};
}

LuvColour rgb_to_luv(RgbColour c) {
  const auto& lut = linear_lut();
  return xyz_to_luv(linear_to_xyz(lut[c.r], lut[c.g], lut[c.b]));
}

LuvColour rgb_to_luv(const RgbReal& c) {
  auto lin = [](double x) { return srgb_to_linear(std::clamp(x, 0.0, 255.0)); };
  return xyz_to_luv(linear_to_xyz(lin(c[0]), lin(c[1]), lin(c[2])));
}

LuvColour hcl_to_luv(HclColour c) { return rgb_to_luv(hcl_to_rgb_real(c)); }

double hue_difference(double h1, double h2) {
  const double d = std::abs(wrap_hue(h1) - wrap_hue(h2));
  return d > 180.0 ? 360.0 - d : d;
}

double hcl_distance(const HclColour& a, const HclColour& b) {
  const double ax = a.c * std::cos(a.h * kDeg), ay = a.c * std::sin(a.h * kDeg);
  const double bx = b.c * std::cos(b.h * kDeg), by = b.c * std::sin(b.h * kDeg);
  const double dl = a.l - b.l;
  return std::sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by) + dl * dl);
}

double luv_distance_sq(const LuvColour& a, const LuvColour& b) {
  const double dl = a.L - b.L, du = a.u - b.u, dv = a.v - b.v;
  return dl * dl + du * du + dv * dv;
}

void PaletteConfig::validate() const {
  if (bins < 2) throw ValidationError("palette needs at least 2 bins");
  if (hue_steps < 1 || chroma_steps < 1 || luminance_steps < 1) {
    throw ValidationError("palette grid resolutions must be >= 1");
  }
}

Palette::Palette(std::vector<PaletteBin> bins) : bins_(std::move(bins)) {
  if (bins_.empty()) throw ValidationError("palette must have at least one bin");
  std::set<std::tuple<double, double, double>> seen;
  for (const auto& b : bins_) {
    if (!seen.emplace(b.hcl.h, b.hcl.c, b.hcl.l).second) {
      throw ValidationError("palette bins must have distinct HCL coordinates");
    }
  }
}

std::size_t Palette::nearest(const LuvColour& c) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bins_.size(); ++k) {
    const double d = luv_distance_sq(bins_[k].luv, c);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double Palette::median_chroma() const {
  std::vector<double> cs;
  cs.reserve(bins_.size());
  for (const auto& b : bins_) cs.push_back(b.hcl.c);
  std::sort(cs.begin(), cs.end());
  const std::size_t n = cs.size();
  return n % 2 ? cs[n / 2] : 0.5 * (cs[n / 2 - 1] + cs[n / 2]);
}

std::size_t nearest_bin(const Palette& p, const HclColour& c) { return p.nearest(c); }

std::vector<RgbColour> palette_candidates(const PaletteConfig& cfg) {
  cfg.validate();
  auto axis = [](int steps, double hi) {
    std::vector<double> v;
    if (steps == 1) return std::vector<double>{0.0};
    for (int i = 0; i < steps; ++i) v.push_back(hi * i / (steps - 1));
    return v;
  };
  const auto cs = axis(cfg.chroma_steps, kMaxChroma);
  const auto ls = axis(cfg.luminance_steps, kMaxLuminance);
  constexpr double tol = 1e-9;

  std::vector<RgbColour> out;
  std::set<std::tuple<int, int, int>> seen;
  for (double l : ls) {
    for (double c : cs) {
      const int hsteps = c == 0.0 ? 1 : cfg.hue_steps;
      for (int hi = 0; hi < hsteps; ++hi) {
        const HclColour p{360.0 * hi / cfg.hue_steps, c, l};
        const RgbReal v = hcl_to_rgb_real(p);
        bool in_gamut = true;
        for (double x : v) in_gamut = in_gamut && x >= -tol && x <= 255.0 + tol;
        if (!in_gamut) continue;
        const RgbColour q = hcl_to_rgb(p);
        if (seen.emplace(q.r, q.g, q.b).second) out.push_back(q);
      }
    }
  }
  return out;
}

Palette generate_palette(const PaletteConfig& cfg) {
  const auto cand = palette_candidates(cfg);
  const std::size_t n = cand.size();
  const auto want = static_cast<std::size_t>(cfg.bins);
  if (n < want) {
    throw ValidationError("palette grid yields " + std::to_string(n) + " in-gamut colours, fewer than " +
                          std::to_string(want) + " bins; increase the grid resolution");
  }
  std::vector<HclColour> hcl(n);
  for (std::size_t i = 0; i < n; ++i) hcl[i] = rgb_to_hcl(cand[i]);

  std::vector<std::size_t> chosen;
  chosen.reserve(want);
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::size_t next = splitmix64(cfg.seed) % n;
  while (chosen.size() < want) {
    chosen.push_back(next);
    mind[next] = -1.0;
    std::size_t arg = 0;
    double far = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (mind[i] < 0.0) continue;
      mind[i] = std::min(mind[i], hcl_distance(hcl[i], hcl[next]));
      if (mind[i] > far) {
        far = mind[i];
        arg = i;
      }
    }
    next = arg;
  }

  std::vector<PaletteBin> bins;
  bins.reserve(want);
  for (std::size_t i : chosen) bins.push_back({hcl[i], rgb_to_luv(cand[i]), cand[i]});
  std::sort(bins.begin(), bins.end(), [](const PaletteBin& a, const PaletteBin& b) {
    const bool ga = a.hcl.c == 0.0, gb = b.hcl.c == 0.0;
    if (ga != gb) return ga;
    if (ga) return a.hcl.l < b.hcl.l;
    return std::tie(a.hcl.h, a.hcl.l, a.hcl.c) < std::tie(b.hcl.h, b.hcl.l, b.hcl.c);
  });
  return Palette(std::move(bins));
}

void write_palette(std::ostream& os, const Palette& p) {
  using textio::format_double;
  os << "chromalog-palette v1 B=" << p.size() << '\n';
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto& b = p[k];
    os << k << ' ' << format_double(b.hcl.h) << ' ' << format_double(b.hcl.c) << ' ' << format_double(b.hcl.l)
       << ' ' << format_double(b.luv.L) << ' ' << format_double(b.luv.u) << ' ' << format_double(b.luv.v) << ' '
       << int(b.rgb.r) << ' ' << int(b.rgb.g) << ' ' << int(b.rgb.b) << '\n';
  }
}

Palette read_palette(std::istream& is) {
  using namespace textio;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty palette file", 1);
  const auto head = split_ws(line);
  if (head.size() != 3 || head[0] != "chromalog-palette" || head[1] != "v1") {
    throw FormatError("expected header 'chromalog-palette v1 B=<n>'", 1);
  }
  const auto n = parse_int<std::size_t>(header_value(head[2], "B", 1), 1);
  std::vector<PaletteBin> bins;
  bins.reserve(n);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_ws(line);
    if (f.size() != 10) throw FormatError("palette line needs 10 fields", lineno);
    if (parse_int<std::size_t>(f[0], lineno) != bins.size()) throw FormatError("bin index out of order", lineno);
    PaletteBin b;
    b.hcl = {parse_double(f[1], lineno), parse_double(f[2], lineno), parse_double(f[3], lineno)};
    b.luv = {parse_double(f[4], lineno), parse_double(f[5], lineno), parse_double(f[6], lineno)};
    int ch[3];
    for (int i = 0; i < 3; ++i) {
      ch[i] = parse_int<int>(f[7 + i], lineno);
      if (ch[i] < 0 || ch[i] > 255) throw FormatError("channel out of range", lineno);
    }
    b.rgb = {std::uint8_t(ch[0]), std::uint8_t(ch[1]), std::uint8_t(ch[2])};
    bins.push_back(b);
  }
  if (bins.size() != n) throw FormatError("header says B=" + std::to_string(n) + " but found " +
                                          std::to_string(bins.size()) + " bins");
  try {
    return Palette(std::move(bins));
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
}

void save_palette(const std::string& path, const Palette& p) {
  auto out = textio::open_out(path);
  write_palette(out, p);
  if (!out) throw IoError("write failed: " + path);
}

Palette load_palette(const std::string& path) {
  auto in = textio::open_in(path);
  return read_palette(in);
}

std::string format_hex(RgbColour c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

RgbColour parse_hex(const std::string& s) {
  if (s.size() != 7 || s[0] != '#') throw FormatError("expected #rrggbb colour, got '" + s + "'");
  int v[3];
  for (int i = 0; i < 3; ++i) {
    auto sv = std::string_view(s).substr(1 + 2 * i, 2);
    auto res = std::from_chars(sv.data(), sv.data() + 2, v[i], 16);
    if (res.ec != std::errc() || res.ptr != sv.data() + 2) throw FormatError("bad hex colour '" + s + "'");
  }
  return {std::uint8_t(v[0]), std::uint8_t(v[1]), std::uint8_t(v[2])};
}

}  // namespace chromalog
