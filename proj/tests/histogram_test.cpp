#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "chromalog/error.hpp"
#include "chromalog/histogram.hpp"
#include "chromalog/random.hpp"

namespace chromalog {
namespace {

const Palette& palette() {
  static const Palette p = generate_palette({});
  return p;
}

PixelImage random_image(Rng& rng, int w, int h) {
  std::vector<RgbColour> px(static_cast<std::size_t>(w * h));
  for (auto& c : px) {
    c = {static_cast<std::uint8_t>(rng.index(256)), static_cast<std::uint8_t>(rng.index(256)),
         static_cast<std::uint8_t>(rng.index(256))};
  }
  return PixelImage(w, h, std::move(px));
}

ColourHistogram random_histogram(Rng& rng, std::size_t bins) {
  std::vector<double> w(bins);
  double s = 0;
  for (auto& x : w) s += (x = rng.uniform() < 0.3 ? rng.uniform() : 0.0);
  if (s == 0) {
    w[0] = 1;
    s = 1;
  }
  for (auto& x : w) x /= s;
  return ColourHistogram(std::move(w));
}

double sum(const ColourHistogram& h) {
  double s = 0;
  for (double x : h.weights()) s += x;
  return s;
}

TEST(ColourHistogram, RejectsInvalidWeights) {
  EXPECT_THROW(ColourHistogram({0.5, 0.6}), ValidationError);
  EXPECT_THROW(ColourHistogram({1.5, -0.5}), ValidationError);
  EXPECT_NO_THROW(ColourHistogram({0.25, 0.75}));
}

TEST(ImageToHistogram, SolidBinCentreIsOneHot) {
  const auto& p = palette();
  for (std::size_t k : {0u, 17u, 200u, 326u}) {
    const auto h = image_to_histogram(PixelImage::solid(4, 3, p[k].rgb), p);
    EXPECT_EQ(h, ColourHistogram::one_hot(p.size(), k));
  }
}

TEST(ImageToHistogram, HalfAndHalf) {
  const auto& p = palette();
  std::vector<RgbColour> px(10, p[5].rgb);
  std::fill(px.begin() + 5, px.end(), p[40].rgb);
  const auto h = image_to_histogram(PixelImage(5, 2, px), p);
  EXPECT_DOUBLE_EQ(h[5], 0.5);
  EXPECT_DOUBLE_EQ(h[40], 0.5);
}

TEST(ImageToHistogram, SumsToOneAndMatchesSerial) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto img = random_image(rng, 1 + static_cast<int>(rng.index(40)), 1 + static_cast<int>(rng.index(40)));
    const auto h = image_to_histogram(img, palette());
    EXPECT_NEAR(sum(h), 1.0, 1e-9);
    EXPECT_EQ(h, image_to_histogram_serial(img, palette()));
  }
}

TEST(ImageToHistogram, CountsMatchBruteForce) {
  Rng rng(2);
  const auto img = random_image(rng, 9, 7);
  std::vector<double> want(palette().size(), 0.0);
  for (const auto& c : img.pixels) want[palette().nearest(c)] += 1.0 / 63.0;
  const auto h = image_to_histogram(img, palette());
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(h[k], want[k], 1e-12);
}

TEST(ImageToHistogram, EmptyImageRejected) {
  EXPECT_THROW(image_to_histogram(PixelImage{}, palette()), ValidationError);
}

TEST(ImageToHistogram, PermutationInvariant) {
  Rng rng(3);
  auto img = random_image(rng, 12, 12);
  const auto h = image_to_histogram(img, palette());
  for (std::size_t i = img.pixels.size() - 1; i > 0; --i) std::swap(img.pixels[i], img.pixels[rng.index(i + 1)]);
  const auto g = image_to_histogram(img, palette());
  for (std::size_t k = 0; k < h.size(); ++k) EXPECT_NEAR(h[k], g[k], 1e-12);
}

TEST(ImageToHistogram, PixelReplicationInvariant) {
  Rng rng(4);
  const auto img = random_image(rng, 6, 5);
  for (int n : {2, 3, 7}) {
    std::vector<RgbColour> px;
    for (const auto& c : img.pixels) px.insert(px.end(), static_cast<std::size_t>(n), c);
    const auto big = PixelImage(img.width * n, img.height, px);
    const auto a = image_to_histogram(img, palette()), b = image_to_histogram(big, palette());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(ImageToHistogram, WorkerCountDoesNotMatter) {
  Rng rng(5);
  std::vector<PixelImage> imgs;
  for (int i = 0; i < 16; ++i) imgs.push_back(random_image(rng, 10, 10));
  const auto one = images_to_histograms(imgs, palette(), 1);
  const auto eight = images_to_histograms(imgs, palette(), 8);
  EXPECT_EQ(one, eight);
}

TEST(AverageHistograms, Basics) {
  const auto h = ColourHistogram({0.2, 0.3, 0.5});
  const std::vector<ColourHistogram> same{h, h};
  EXPECT_EQ(average_histograms(same), h);
  const std::vector<ColourHistogram> two{ColourHistogram::one_hot(3, 0), ColourHistogram::one_hot(3, 2)};
  const auto avg = average_histograms(two);
  EXPECT_DOUBLE_EQ(avg[0], 0.5);
  EXPECT_DOUBLE_EQ(avg[1], 0.0);
  EXPECT_DOUBLE_EQ(avg[2], 0.5);
  EXPECT_THROW(average_histograms({}), ValidationError);
  const std::vector<ColourHistogram> mixed{ColourHistogram::one_hot(3, 0), ColourHistogram::one_hot(4, 0)};
  EXPECT_THROW(average_histograms(mixed), ValidationError);
}

TEST(AverageHistograms, MatchesElementwiseOracleAndStaysInBounds) {
  Rng rng(6);
  std::vector<ColourHistogram> hs;
  for (int i = 0; i < 4; ++i) hs.push_back(random_histogram(rng, 30));
  const auto avg = average_histograms(hs);
  for (std::size_t k = 0; k < 30; ++k) {
    const double want = (hs[0][k] + hs[1][k] + hs[2][k] + hs[3][k]) / 4.0;
    EXPECT_NEAR(avg[k], want, 1e-15);
    double lo = 1, hi = 0;
    for (const auto& h : hs) {
      lo = std::min(lo, h[k]);
      hi = std::max(hi, h[k]);
    }
    EXPECT_GE(avg[k], lo - 1e-15);
    EXPECT_LE(avg[k], hi + 1e-15);
  }
}

TEST(LuvSummary, PointMass) {
  const auto& p = palette();
  const auto s = histogram_to_luv_summary(ColourHistogram::one_hot(p.size(), 100), p);
  EXPECT_NEAR(s.lum[0], p[100].luv.L, 1e-12);
  EXPECT_NEAR(s.lum[1], 0.0, 1e-12);
  EXPECT_NEAR(s.mu[0], p[100].luv.u, 1e-12);
  EXPECT_NEAR(s.mu[1], p[100].luv.v, 1e-12);
  EXPECT_NEAR(s.sigma(0, 0), kCovarianceRidge, 1e-12);
  EXPECT_NEAR(s.sigma(1, 1), kCovarianceRidge, 1e-12);
  EXPECT_NEAR(s.sigma(0, 1), 0.0, 1e-12);
}

TEST(LuvSummary, TwoBinMidpoint) {
  const auto& p = palette();
  std::vector<double> w(p.size(), 0.0);
  w[3] = w[250] = 0.5;
  const auto s = histogram_to_luv_summary(ColourHistogram(w), p);
  EXPECT_NEAR(s.mu[0], 0.5 * (p[3].luv.u + p[250].luv.u), 1e-12);
  EXPECT_NEAR(s.mu[1], 0.5 * (p[3].luv.v + p[250].luv.v), 1e-12);
}

TEST(LuvSummary, MatchesBruteForceMoments) {
  const auto& p = palette();
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const auto h = random_histogram(rng, p.size());
    double mL = 0, mu = 0, mv = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      mL += h[k] * p[k].luv.L;
      mu += h[k] * p[k].luv.u;
      mv += h[k] * p[k].luv.v;
    }
    double vL = 0, suu = 0, suv = 0, svv = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double dL = p[k].luv.L - mL, du = p[k].luv.u - mu, dv = p[k].luv.v - mv;
      vL += h[k] * dL * dL;
      suu += h[k] * du * du;
      suv += h[k] * du * dv;
      svv += h[k] * dv * dv;
    }
    const auto s = histogram_to_luv_summary(h, p);
    EXPECT_NEAR(s.lum[0], mL, 1e-12);
    EXPECT_NEAR(s.lum[1], std::sqrt(vL), 1e-12);
    EXPECT_NEAR(s.mu[0], mu, 1e-12);
    EXPECT_NEAR(s.mu[1], mv, 1e-12);
    EXPECT_NEAR(s.sigma(0, 0), suu + kCovarianceRidge, 1e-9);
    EXPECT_NEAR(s.sigma(0, 1), suv, 1e-9);
    EXPECT_NEAR(s.sigma(1, 1), svv + kCovarianceRidge, 1e-9);
    EXPECT_EQ(s.sigma(0, 1), s.sigma(1, 0));
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(s.sigma);
    EXPECT_GE(eig.eigenvalues().minCoeff(), kCovarianceRidge * (1 - 1e-9));
  }
}

TEST(PointToOnehot, MatchesNearestBin) {
  const auto& p = palette();
  EXPECT_EQ(point_to_onehot(p[9].rgb, p), ColourHistogram::one_hot(p.size(), 9));
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const RgbColour c{static_cast<std::uint8_t>(rng.index(256)), static_cast<std::uint8_t>(rng.index(256)),
                      static_cast<std::uint8_t>(rng.index(256))};
    const auto h = point_to_onehot(c, p);
    std::size_t nz = 0;
    for (double x : h.weights()) nz += x != 0.0;
    EXPECT_EQ(nz, 1u);
    EXPECT_EQ(h[p.nearest(c)], 1.0);
  }
}

TEST(HistogramFile, RoundTripIsExact) {
  Rng rng(9);
  HistogramTable t;
  t["img1"] = random_histogram(rng, 12);
  t["red car"] = random_histogram(rng, 12);
  std::stringstream ss;
  write_histograms(ss, t, 12);
  std::size_t bins = 0;
  EXPECT_EQ(read_histograms(ss, &bins), t);
  EXPECT_EQ(bins, 12u);
}

TEST(HistogramFile, RejectsWrongWidth) {
  std::stringstream ss("chromalog-hist v1 B=2\nimg 0.5 0.5\nimg2 1\n");
  EXPECT_THROW(read_histograms(ss), FormatError);
}

}  // namespace
}  // namespace chromalog
