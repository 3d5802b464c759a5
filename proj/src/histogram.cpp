#include "chromalog/histogram.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "chromalog/error.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {

ColourHistogram::ColourHistogram(std::vector<double> weights) : w_(std::move(weights)) {
  if (w_.empty()) throw ValidationError("histogram must have at least one bin");
  double sum = 0.0;
  for (double x : w_) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("histogram weights must be finite and >= 0");
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw ValidationError("histogram weights sum to " + textio::format_double(sum) + ", expected 1");
  }
}

ColourHistogram ColourHistogram::one_hot(std::size_t bins, std::size_t k) {
  if (k >= bins) throw ValidationError("one-hot index out of range");
  std::vector<double> w(bins, 0.0);
  w[k] = 1.0;
  return ColourHistogram(std::move(w));
}

ColourHistogram ColourHistogram::uniform(std::size_t bins) {
  return ColourHistogram(std::vector<double>(bins, 1.0 / static_cast<double>(bins)));
}

std::vector<std::size_t> ColourHistogram::top_bins(std::size_t n) const {
  std::vector<std::size_t> idx(w_.size());
  std::iota(idx.begin(), idx.end(), 0);
  n = std::min(n, idx.size());
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w_[a] > w_[b]; });
  idx.resize(n);
  return idx;
}

PixelImage::PixelImage(int w, int h, std::vector<RgbColour> px) : width(w), height(h), pixels(std::move(px)) {
  if (w <= 0 || h <= 0) throw ValidationError("image dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    throw ValidationError("pixel count does not match image dimensions");
  }
}

PixelImage PixelImage::solid(int w, int h, RgbColour c) {
  return PixelImage(w, h, std::vector<RgbColour>(static_cast<std::size_t>(w) * h, c));
}

namespace {

void check_image(const PixelImage& img) {
  if (img.pixels.empty()) throw ValidationError("cannot histogram an empty image");
}

ColourHistogram normalise_counts(const std::vector<std::size_t>& counts, std::size_t total) {
  std::vector<double> w(counts.size());
  const double inv = 1.0 / static_cast<double>(total);
  for (std::size_t k = 0; k < counts.size(); ++k) w[k] = static_cast<double>(counts[k]) * inv;
  return ColourHistogram(std::move(w));
}

std::uint32_t pack(RgbColour c) { return (std::uint32_t(c.r) << 16) | (std::uint32_t(c.g) << 8) | c.b; }

}  // namespace

ColourHistogram image_to_histogram_serial(const PixelImage& img, const Palette& p) {
  check_image(img);
  std::vector<std::size_t> counts(p.size(), 0);
  for (const auto& px : img.pixels) ++counts[p.nearest(px)];
  return normalise_counts(counts, img.pixels.size());
}

ColourHistogram image_to_histogram(const PixelImage& img, const Palette& p) {
  check_image(img);
  const std::size_t bins = p.size();
  const auto n = static_cast<std::ptrdiff_t>(img.pixels.size());
  std::vector<std::size_t> counts(bins, 0);
#pragma omp parallel
  {
    std::vector<std::size_t> local(bins, 0);
    // Photographs repeat colours heavily; memoise the bin search per thread.
    std::unordered_map<std::uint32_t, std::size_t> memo;
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const RgbColour px = img.pixels[static_cast<std::size_t>(i)];
      auto [it, fresh] = memo.try_emplace(pack(px), 0);
      if (fresh) it->second = p.nearest(px);
      ++local[it->second];
    }
#pragma omp critical
    for (std::size_t k = 0; k < bins; ++k) counts[k] += local[k];
  }
  return normalise_counts(counts, img.pixels.size());
}

std::vector<ColourHistogram> images_to_histograms(std::span<const PixelImage> imgs, const Palette& p, int workers) {
  std::vector<ColourHistogram> out(imgs.size());
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(imgs.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = image_to_histogram_serial(imgs[static_cast<std::size_t>(i)], p);
  }
  return out;
}

ColourHistogram average_histograms(std::span<const ColourHistogram> hs) {
  if (hs.empty()) throw ValidationError("cannot average an empty list of histograms");
  const std::size_t bins = hs.front().size();
  std::vector<double> sum(bins, 0.0);
  for (const auto& h : hs) {
    if (h.size() != bins) throw ValidationError("histogram lengths differ");
    for (std::size_t k = 0; k < bins; ++k) sum[k] += h[k];
  }
  const double inv = 1.0 / static_cast<double>(hs.size());
  for (double& x : sum) x *= inv;
  return ColourHistogram(std::move(sum));
}

LuvSummary luv_summary(std::span<const double> w, const Palette& p) {
  if (w.size() != p.size()) throw ValidationError("histogram length does not match palette");
  LuvSummary s;
  double mean = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    mean += w[k] * p[k].luv.L;
    s.mu += w[k] * Eigen::Vector2d(p[k].luv.u, p[k].luv.v);
  }
  double var = 0.0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double dl = p[k].luv.L - mean;
    var += w[k] * dl * dl;
    const Eigen::Vector2d d = Eigen::Vector2d(p[k].luv.u, p[k].luv.v) - s.mu;
    cov += w[k] * d * d.transpose();
  }
  s.lum = {mean, std::sqrt(std::max(var, 0.0))};
  cov(1, 0) = cov(0, 1);
  s.sigma = cov + kCovarianceRidge * Eigen::Matrix2d::Identity();
  return s;
}

LuvSummary histogram_to_luv_summary(const ColourHistogram& h, const Palette& p) { return luv_summary(h.weights(), p); }

ColourHistogram point_to_onehot(RgbColour c, const Palette& p) { return ColourHistogram::one_hot(p.size(), p.nearest(c)); }

void write_histograms(std::ostream& os, const HistogramTable& t, std::size_t bins) {
  os << "chromalog-hist v1 B=" << bins << '\n';
  for (const auto& [key, h] : t) {
    if (h.size() != bins) throw ValidationError("histogram '" + key + "' has wrong length");
    if (key.empty() || key.find_first_of("\t\n") != std::string::npos) {
      throw ValidationError("histogram key must be non-empty without tabs or newlines");
    }
    os << key << (key.find(' ') != std::string::npos ? '\t' : ' ');
    for (std::size_t k = 0; k < bins; ++k) {
      if (k) os << ' ';
      os << textio::format_double(h[k]);
    }
    os << '\n';
  }
}

HistogramTable read_histograms(std::istream& is, std::size_t* bins_out) {
  using namespace textio;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty histogram file", 1);
  const auto head = split_ws(line);
  if (head.size() != 3 || head[0] != "chromalog-hist" || head[1] != "v1") {
    throw FormatError("expected header 'chromalog-hist v1 B=<n>'", 1);
  }
  const auto bins = parse_int<std::size_t>(header_value(head[2], "B", 1), 1);
  if (bins_out) *bins_out = bins;
  HistogramTable out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string_view sv(line);
    std::size_t cut = sv.find('\t');
    if (cut == std::string_view::npos) cut = sv.find(' ');
    if (cut == std::string_view::npos || cut == 0) throw FormatError("missing key", lineno);
    std::string key(sv.substr(0, cut));
    const auto f = split_ws(sv.substr(cut + 1));
    if (f.size() != bins) {
      throw FormatError("expected " + std::to_string(bins) + " weights, got " + std::to_string(f.size()), lineno);
    }
    std::vector<double> w(bins);
    for (std::size_t k = 0; k < bins; ++k) w[k] = parse_double(f[k], lineno);
    try {
      if (!out.emplace(key, ColourHistogram(std::move(w))).second) throw FormatError("duplicate key '" + key + "'", lineno);
    } catch (const ValidationError& e) {
      throw FormatError(e.what(), lineno);
    }
  }
  return out;
}

void save_histograms(const std::string& path, const HistogramTable& t, std::size_t bins) {
  auto out = textio::open_out(path);
  write_histograms(out, t, bins);
  if (!out) throw IoError("write failed: " + path);
}

HistogramTable load_histograms(const std::string& path, std::size_t* bins_out) {
  auto in = textio::open_in(path);
  return read_histograms(in, bins_out);
}

}  // namespace chromalog
