#include "chromalog/distance.hpp"

#include <Eigen/LU>
#include <cmath>

#include "chromalog/error.hpp"
#include "chromalog/histogram.hpp"

namespace chromalog {

std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::KL:
      return "kl";
    case DistanceKind::HistogramIntersection:
      return "hi";
    case DistanceKind::Luv:
      return "luv";
  }
  return "?";
}

DistanceKind parse_distance_kind(std::string_view s) {
  if (s == "kl") return DistanceKind::KL;
  if (s == "hi") return DistanceKind::HistogramIntersection;
  if (s == "luv") return DistanceKind::Luv;
  throw ValidationError("unknown distance '" + std::string(s) + "' (expected kl, hi or luv)");
}

namespace {

void check_lengths(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("histogram lengths differ");
  if (p.empty()) throw ValidationError("empty histogram");
}

double smooth_norm(std::size_t bins) { return 1.0 + static_cast<double>(bins) * kKlSmoothing; }

int sign(double x) { return (x > 0.0) - (x < 0.0); }

struct HellingerParts {
  double value;
  double a;      // determinant prefactor
  double e;      // exp(-E / 8)
  Eigen::Matrix2d bar_inv;
  Eigen::Vector2d bar_mu;
};

HellingerParts hellinger_parts(const Gaussian2& np, const Gaussian2& nq) {
  const Eigen::Matrix2d bar = 0.5 * (np.sigma + nq.sigma);
  const double det_bar = bar.determinant();
  const double det_p = np.sigma.determinant();
  const double det_q = nq.sigma.determinant();
  if (!(det_bar > 0.0) || !(det_p > 0.0) || !(det_q > 0.0)) {
    throw ValidationError("Hellinger distance needs positive-definite covariances");
  }
  HellingerParts h;
  h.bar_inv = bar.inverse();
  h.bar_mu = (np.mu - nq.mu).cwiseAbs().array() + kHellingerOffset;
  h.a = std::pow(det_p * det_q, 0.25) / std::sqrt(det_bar);
  h.e = std::exp(-0.125 * h.bar_mu.dot(h.bar_inv * h.bar_mu));
  h.value = 1.0 - h.a * h.e;
  return h;
}

// Partials of the Hellinger term with respect to one side's mean and
// covariance; `sigma` is that side's covariance, `diff` its mean minus the
// other side's.
void hellinger_side_grad(const HellingerParts& h, const Eigen::Matrix2d& sigma, const Eigen::Vector2d& diff,
                         Eigen::Vector2d& g_mu, Eigen::Matrix2d& g_sigma) {
  const Eigen::Vector2d bm = h.bar_inv * h.bar_mu;
  const double ae = h.a * h.e;
  g_mu = 0.25 * ae * bm;
  for (int i = 0; i < 2; ++i) g_mu[i] *= sign(diff[i]);
  g_sigma = -ae * (0.25 * (sigma.inverse() - h.bar_inv) + (1.0 / 16.0) * bm * bm.transpose());
}

Gaussian2 chroma_gaussian(const LuvSummary& s) { return {s.mu, s.sigma}; }

// Chain rule from summary statistics back to raw histogram weights.
std::vector<double> summary_backward(std::span<const double> w, const Palette& pal, const LuvSummary& s,
                                     double g_mean, double g_std, const Eigen::Vector2d& g_mu,
                                     const Eigen::Matrix2d& g_sigma) {
  const std::size_t n = w.size();
  const double mean = s.lum[0];
  const double sd = s.lum[1];
  double r_l = 0.0;
  Eigen::Vector2d r_x = Eigen::Vector2d::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    r_l += w[k] * (pal[k].luv.L - mean);
    r_x += w[k] * (Eigen::Vector2d(pal[k].luv.u, pal[k].luv.v) - s.mu);
  }
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double li = pal[i].luv.L;
    const Eigen::Vector2d xi(pal[i].luv.u, pal[i].luv.v);
    const double dvar = (li - mean) * (li - mean) - 2.0 * li * r_l;
    const double dsd = sd > 0.0 ? dvar / (2.0 * sd) : 0.0;
    const Eigen::Vector2d d = xi - s.mu;
    const Eigen::Matrix2d dsig = d * d.transpose() - (xi * r_x.transpose() + r_x * xi.transpose());
    g[i] = g_mean * li + g_std * dsd + g_mu.dot(xi) + (g_sigma.array() * dsig.array()).sum();
  }
  return g;
}

}  // namespace

double d_kl(std::span<const double> p, std::span<const double> q) {
  check_lengths(p, q);
  const double z = smooth_norm(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double sp = (p[i] + kKlSmoothing) / z;
    const double sq = (q[i] + kKlSmoothing) / z;
    acc += sp * (std::log(sp) - std::log(sq));
  }
  return acc;
}

double d_hi(std::span<const double> p, std::span<const double> q) {
  check_lengths(p, q);
  double overlap = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) overlap += std::min(p[i], q[i]);
  return 1.0 - overlap;
}

double hellinger_gauss2d(const Gaussian2& np, const Gaussian2& nq) { return hellinger_parts(np, nq).value; }

double d_luv(std::span<const double> p, std::span<const double> q, const Palette& palette) {
  check_lengths(p, q);
  const LuvSummary sp = luv_summary(p, palette);
  const LuvSummary sq = luv_summary(q, palette);
  const double dm = sp.lum[0] - sq.lum[0];
  const double ds = sp.lum[1] - sq.lum[1];
  const double de2 = dm * dm + ds * ds;
  return de2 * hellinger_gauss2d(chroma_gaussian(sp), chroma_gaussian(sq));
}

double d_xkcd(std::span<const double> label, std::span<const double> q) {
  check_lengths(label, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] == 0.0) continue;
    if (!(q[i] > 0.0)) throw ValidationError("prediction has no mass at a labelled bin " + std::to_string(i));
    acc -= std::log(q[i]);
  }
  return acc;
}

ColourDistance::ColourDistance(DistanceKind kind, const Palette* palette) : kind_(kind), palette_(palette) {
  if (kind == DistanceKind::Luv && palette == nullptr) throw ValidationError("LUV distance needs a palette");
}

double ColourDistance::operator()(std::span<const double> p, std::span<const double> q) const {
  switch (kind_) {
    case DistanceKind::KL:
      return d_kl(p, q);
    case DistanceKind::HistogramIntersection:
      return d_hi(p, q);
    case DistanceKind::Luv:
      return d_luv(p, q, *palette_);
  }
  return 0.0;
}

DistanceGradients ColourDistance::gradients(std::span<const double> p, std::span<const double> q) const {
  check_lengths(p, q);
  const std::size_t n = p.size();
  DistanceGradients g;
  g.dp.assign(n, 0.0);
  g.dq.assign(n, 0.0);
  switch (kind_) {
    case DistanceKind::KL: {
      const double z = smooth_norm(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double sp = (p[i] + kKlSmoothing) / z;
        const double sq = (q[i] + kKlSmoothing) / z;
        const double lr = std::log(sp) - std::log(sq);
        g.value += sp * lr;
        g.dp[i] = (lr + 1.0) / z;
        g.dq[i] = -sp / (q[i] + kKlSmoothing);
      }
      break;
    }
    case DistanceKind::HistogramIntersection: {
      double overlap = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        overlap += std::min(p[i], q[i]);
        if (q[i] < p[i]) g.dq[i] = -1.0;
        if (p[i] < q[i]) g.dp[i] = -1.0;
      }
      g.value = 1.0 - overlap;
      break;
    }
    case DistanceKind::Luv: {
      const Palette& pal = *palette_;
      const LuvSummary sp = luv_summary(p, pal);
      const LuvSummary sq = luv_summary(q, pal);
      const HellingerParts h = hellinger_parts(chroma_gaussian(sp), chroma_gaussian(sq));
      const double dm = sp.lum[0] - sq.lum[0];
      const double ds = sp.lum[1] - sq.lum[1];
      const double de2 = dm * dm + ds * ds;
      g.value = de2 * h.value;

      Eigen::Vector2d gmu;
      Eigen::Matrix2d gsig;
      hellinger_side_grad(h, sp.sigma, sp.mu - sq.mu, gmu, gsig);
      g.dp = summary_backward(p, pal, sp, 2.0 * dm * h.value, 2.0 * ds * h.value, de2 * gmu, de2 * gsig);
      hellinger_side_grad(h, sq.sigma, sq.mu - sp.mu, gmu, gsig);
      g.dq = summary_backward(q, pal, sq, -2.0 * dm * h.value, -2.0 * ds * h.value, de2 * gmu, de2 * gsig);
      break;
    }
  }
  return g;
}

std::vector<double> distance_gradient(DistanceKind kind, std::span<const double> p, std::span<const double> q,
                                      const Palette* palette) {
  return ColourDistance(kind, palette).gradients(p, q).dq;
}

}  // namespace chromalog
