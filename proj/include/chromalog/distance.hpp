#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "chromalog/colour.hpp"

namespace chromalog {

enum class DistanceKind { KL, HistogramIntersection, Luv };

inline constexpr DistanceKind kAllDistanceKinds[] = {DistanceKind::KL, DistanceKind::HistogramIntersection,
                                                     DistanceKind::Luv};

std::string to_string(DistanceKind k);  // "kl", "hi", "luv"
DistanceKind parse_distance_kind(std::string_view s);

// Additive smoothing applied to both sides of the KL divergence:
// x -> (x + eps) / (1 + B eps).
inline constexpr double kKlSmoothing = 1e-8;
// Offset added to |mu_P - mu_Q| inside the Gaussian Hellinger term.
inline constexpr double kHellingerOffset = 1.0;

struct Gaussian2 {
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity();
};

// All distances take P (reference) first and Q (compared/predicted) second.
double d_kl(std::span<const double> p, std::span<const double> q);
double d_hi(std::span<const double> p, std::span<const double> q);
double hellinger_gauss2d(const Gaussian2& np, const Gaussian2& nq);
double d_luv(std::span<const double> p, std::span<const double> q, const Palette& palette);
// Negative log-likelihood of q at the bins where the label has mass. No
// smoothing: q must be strictly positive there.
double d_xkcd(std::span<const double> label, std::span<const double> q);

struct DistanceGradients {
  double value = 0.0;
  std::vector<double> dp;
  std::vector<double> dq;
};

// A distance bound to the palette it needs (only Luv uses it).
class ColourDistance {
 public:
  ColourDistance(DistanceKind kind, const Palette* palette = nullptr);

  DistanceKind kind() const { return kind_; }
  double operator()(std::span<const double> p, std::span<const double> q) const;
  // Analytic partials in both arguments. Histogram intersection takes the
  // subgradient 0 on ties; Luv takes 0 where a chrominance mean difference
  // or a luminance spread vanishes.
  DistanceGradients gradients(std::span<const double> p, std::span<const double> q) const;

 private:
  DistanceKind kind_;
  const Palette* palette_;
};

// dD/dQ.
std::vector<double> distance_gradient(DistanceKind kind, std::span<const double> p, std::span<const double> q,
                                      const Palette* palette = nullptr);

}  // namespace chromalog
