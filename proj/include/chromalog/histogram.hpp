#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chromalog/colour.hpp"

namespace chromalog {

// A probability distribution over the bins of a palette.
class ColourHistogram {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ColourHistogram() = default;
  // Validates non-negativity and unit mass.
  explicit ColourHistogram(std::vector<double> weights);

  static ColourHistogram one_hot(std::size_t bins, std::size_t k);
  static ColourHistogram uniform(std::size_t bins);

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> weights() const { return w_; }
  operator std::span<const double>() const { return w_; }

  // Top bins by mass, heaviest first; ties keep the lower index first.
  std::vector<std::size_t> top_bins(std::size_t n) const;

  friend bool operator==(const ColourHistogram&, const ColourHistogram&) = default;

 private:
  std::vector<double> w_;
};

struct PixelImage {
  int width = 0;
  int height = 0;
  std::vector<RgbColour> pixels;  // row-major

  PixelImage() = default;
  PixelImage(int w, int h, std::vector<RgbColour> px);
  static PixelImage solid(int w, int h, RgbColour c);
};

// Mass-weighted luminance and chrominance statistics of a histogram over
// the palette's bin centres.
struct LuvSummary {
  std::array<double, 2> lum{};  // mean and standard deviation of L
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
};

inline constexpr double kCovarianceRidge = 1e-4;

// OpenMP kernel; splits pixels across threads and merges integer counts, so
// the result does not depend on the thread count.
ColourHistogram image_to_histogram(const PixelImage& img, const Palette& p);
// Plain loop, kept as the reference the parallel kernel is tested against.
ColourHistogram image_to_histogram_serial(const PixelImage& img, const Palette& p);

// Parallel over images with the given worker count (0 = OpenMP default).
std::vector<ColourHistogram> images_to_histograms(std::span<const PixelImage> imgs, const Palette& p,
                                                  int workers = 0);

ColourHistogram average_histograms(std::span<const ColourHistogram> hs);

// Statistics over raw weights; used directly by the gradient code, where
// weights leave the simplex.
LuvSummary luv_summary(std::span<const double> w, const Palette& p);
LuvSummary histogram_to_luv_summary(const ColourHistogram& h, const Palette& p);

ColourHistogram point_to_onehot(RgbColour c, const Palette& p);

// Histogram table files: header `chromalog-hist v1 B=<n>` followed by
// `<key> w_0 ... w_{B-1}` lines. Keys containing spaces are separated from
// the weights by a tab.
using HistogramTable = std::map<std::string, ColourHistogram>;

void write_histograms(std::ostream& os, const HistogramTable& t, std::size_t bins);
HistogramTable read_histograms(std::istream& is, std::size_t* bins_out = nullptr);
void save_histograms(const std::string& path, const HistogramTable& t, std::size_t bins);
HistogramTable load_histograms(const std::string& path, std::size_t* bins_out = nullptr);

}  // namespace chromalog
