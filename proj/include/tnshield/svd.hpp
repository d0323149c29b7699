#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/SVD>

#include "tnshield/tensor.hpp"

namespace tnshield {

/// Thin SVD factors; columns of u and v are the singular vectors, s is non-increasing.
struct SVDFactors {
  Matrix u;
  Vector s;
  Matrix v;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(s.size()); }
  Matrix reconstruct() const { return u * s.asDiagonal() * v.transpose(); }
};

namespace detail {

// First entry above this fraction of the column's max magnitude decides the sign.
inline constexpr double kSignThreshold = 1e-12;

inline void canonicalize_signs(SVDFactors& f) {
  for (Eigen::Index j = 0; j < f.u.cols(); ++j) {
    const double peak = f.u.col(j).cwiseAbs().maxCoeff();
    if (peak == 0.0) continue;
    for (Eigen::Index i = 0; i < f.u.rows(); ++i) {
      const double x = f.u(i, j);
      if (std::abs(x) > kSignThreshold * peak) {
        if (x < 0.0) {
          f.u.col(j) *= -1.0;
          f.v.col(j) *= -1.0;
        }
        break;
      }
    }
  }
}

}  // namespace detail

/// Full thin SVD. Signs are canonical: the first significant entry of every
/// left singular vector is positive.
inline SVDFactors svd(const Matrix& a) {
  if (a.size() == 0) fail(ErrorCode::InvalidArgument, "svd of an empty matrix");
  if (!a.allFinite()) fail(ErrorCode::ConvergenceFailure, "matrix has non-finite entries");
  Eigen::BDCSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) fail(ErrorCode::ConvergenceFailure, "SVD did not converge");
  SVDFactors f{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  if (!f.s.allFinite() || !f.u.allFinite() || !f.v.allFinite())
    fail(ErrorCode::ConvergenceFailure, "SVD produced non-finite factors");
  detail::canonicalize_signs(f);
  return f;
}

//
// truncation
//

struct KeepRank {
  std::size_t rank;
};
/// Discarded energy may not exceed delta * ||A||_F, with ||A||_F taken from the spectrum.
struct RelativeTolerance {
  double delta;
};
/// Discarded energy may not exceed an absolute budget.
struct AbsoluteTolerance {
  double budget;
};
using TruncationPolicy = std::variant<KeepRank, RelativeTolerance, AbsoluteTolerance>;

struct Truncated {
  SVDFactors factors;
  double discarded_energy = 0.0;
};

/// Number of leading values kept under an absolute energy budget. A zero budget keeps everything.
inline std::size_t rank_for_budget(const Vector& s, double budget) {
  const auto n = static_cast<std::size_t>(s.size());
  if (n == 0 || !(budget > 0.0)) return n;
  // tail[i] = sum of squares of s[i..n)
  std::vector<double> tail(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) tail[i] = tail[i + 1] + s[static_cast<Eigen::Index>(i)] * s[static_cast<Eigen::Index>(i)];
  const double limit = budget * budget;
  for (std::size_t r = 1; r < n; ++r)
    if (tail[r] <= limit) return r;
  return n;
}

inline Truncated truncate(const SVDFactors& f, const TruncationPolicy& policy) {
  const std::size_t full = f.rank();
  std::size_t keep = full;
  if (const auto* p = std::get_if<KeepRank>(&policy)) {
    if (p->rank > full) fail(ErrorCode::InvalidArgument, "requested rank exceeds available rank");
    keep = p->rank;
  } else if (const auto* p = std::get_if<RelativeTolerance>(&policy)) {
    if (p->delta < 0.0) fail(ErrorCode::InvalidArgument, "negative tolerance");
    keep = rank_for_budget(f.s, p->delta * f.s.norm());
  } else {
    const double budget = std::get<AbsoluteTolerance>(policy).budget;
    if (budget < 0.0) fail(ErrorCode::InvalidArgument, "negative tolerance");
    keep = rank_for_budget(f.s, budget);
  }
  const auto k = static_cast<Eigen::Index>(keep);
  Truncated out;
  out.factors = {f.u.leftCols(k), f.s.head(k), f.v.leftCols(k)};
  out.discarded_energy = f.s.tail(f.s.size() - k).norm();
  return out;
}

//
// Robust SVD: singular values whose reverse cumulative sums share an
// exponentially-spaced bin are merged (values summed, vectors averaged).
//

struct RobustBinConfig {
  /// Growth rate of the bin edges alpha * exp(beta * z).
  double beta = 0.03;
  /// First edge; when unset, alpha = sum(S) * exp(-beta * max_bins).
  std::optional<double> alpha;
  std::size_t max_bins = 512;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) fail(ErrorCode::InvalidArgument, "beta must be positive");
    if (alpha && (!(*alpha > 0.0) || !std::isfinite(*alpha))) fail(ErrorCode::InvalidArgument, "alpha must be positive");
    if (max_bins == 0) fail(ErrorCode::InvalidArgument, "max_bins must be positive");
  }

  double alpha_for(double spectrum_sum) const {
    if (alpha) return *alpha;
    return spectrum_sum * std::exp(-beta * static_cast<double>(max_bins));
  }
};

struct RobustSVD {
  SVDFactors factors;
  /// For each input singular value (descending order), the output column it was merged into.
  std::vector<std::size_t> merged_into;
  /// All values landed in one bin; the output is a rank-1 summary.
  bool degenerate_bins = false;
};

/// Bin index of a non-negative value under edges [0, alpha*e^{beta z}]: 0 for a
/// zero value, otherwise z + 1 for the smallest z >= 0 with value <= alpha*e^{beta z}.
inline std::size_t robust_bin_index(double value, double alpha, double beta) {
  if (!(value > 0.0)) return 0;
  if (value <= alpha) return 1;
  auto z = static_cast<std::size_t>(std::max(0.0, std::ceil(std::log(value / alpha) / beta)));
  while (alpha * std::exp(beta * static_cast<double>(z)) < value) ++z;
  while (z > 0 && alpha * std::exp(beta * static_cast<double>(z - 1)) >= value) --z;
  return z + 1;
}

inline RobustSVD robust_svd(const Matrix& a, const RobustBinConfig& cfg,
                            const std::optional<TruncationPolicy>& truncation = std::nullopt) {
  cfg.validate();
  const SVDFactors base = svd(a);
  const std::size_t n = base.rank();

  // reverse cumulative sum
  std::vector<double> tail(n);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    acc += base.s[static_cast<Eigen::Index>(i)];
    tail[i] = acc;
  }
  const double alpha = cfg.alpha_for(acc);

  // tail sums are non-increasing, so each bin is a contiguous run of indices
  struct Bin {
    std::size_t first, last;
    double value;
  };
  std::vector<Bin> bins;
  std::size_t current = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = robust_bin_index(tail[i], alpha, cfg.beta);
    if (bins.empty() || b != current) {
      bins.push_back({i, i, 0.0});
      current = b;
    }
    bins.back().last = i;
    bins.back().value += base.s[static_cast<Eigen::Index>(i)];
  }

  std::vector<std::size_t> order(bins.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return bins[x].value > bins[y].value; });

  RobustSVD out;
  out.factors.u.resize(base.u.rows(), static_cast<Eigen::Index>(bins.size()));
  out.factors.v.resize(base.v.rows(), static_cast<Eigen::Index>(bins.size()));
  out.factors.s.resize(static_cast<Eigen::Index>(bins.size()));
  out.merged_into.assign(n, 0);

  auto merged_column = [](const Matrix& m, const Bin& bin) -> Vector {
    const auto first = static_cast<Eigen::Index>(bin.first);
    const auto count = static_cast<Eigen::Index>(bin.last - bin.first + 1);
    Vector mean = m.middleCols(first, count).rowwise().mean();
    const double norm = mean.norm();
    // members may cancel; fall back to the leading member
    if (!(norm > 1e-12)) return m.col(first);
    return mean / norm;
  };

  for (std::size_t j = 0; j < order.size(); ++j) {
    const Bin& bin = bins[order[j]];
    const auto col = static_cast<Eigen::Index>(j);
    out.factors.s[col] = bin.value;
    out.factors.u.col(col) = merged_column(base.u, bin);
    out.factors.v.col(col) = merged_column(base.v, bin);
    for (std::size_t i = bin.first; i <= bin.last; ++i) out.merged_into[i] = j;
  }
  out.degenerate_bins = bins.size() == 1 && n > 1;

  if (truncation) {
    Truncated t = truncate(out.factors, *truncation);
    const std::size_t kept = t.factors.rank();
    out.factors = std::move(t.factors);
    for (auto& m : out.merged_into)
      if (m >= kept) m = kept;  // sentinel: discarded
  }
  return out;
}

//
// Decay slope of ln S(k) over 1-based indices [lo, hi].
//

struct SlopeEstimate {
  double slope = 0.0;
  double std_error = 0.0;
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline SlopeEstimate decay_slope(std::span<const double> s, std::size_t lo = 5, std::size_t hi = 25) {
  if (lo < 1 || hi <= lo) fail(ErrorCode::InvalidArgument, "slope index range must satisfy 1 <= lo < hi");
  if (s.size() < hi)
    fail(ErrorCode::InsufficientRank, "spectrum has " + std::to_string(s.size()) + " values, need " + std::to_string(hi));
  for (std::size_t k = lo; k <= hi; ++k)
    if (!(s[k - 1] > 0.0)) fail(ErrorCode::NonPositiveValue, "singular value " + std::to_string(k) + " is not positive");

  const auto n = static_cast<double>(hi - lo + 1);
  const double mean_k = 0.5 * static_cast<double>(lo + hi);
  double mean_y = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) mean_y += std::log(s[k - 1]);
  mean_y /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) {
    const double dx = static_cast<double>(k) - mean_k;
    sxx += dx * dx;
    sxy += dx * (std::log(s[k - 1]) - mean_y);
  }
  SlopeEstimate est{sxy / sxx, 0.0, lo, hi};
  if (hi - lo + 1 > 2) {
    const double intercept = mean_y - est.slope * mean_k;
    double ssr = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      const double r = std::log(s[k - 1]) - (intercept + est.slope * static_cast<double>(k));
      ssr += r * r;
    }
    est.std_error = std::sqrt(ssr / (n - 2.0) / sxx);
  }
  return est;
}

inline SlopeEstimate decay_slope(const Vector& s, std::size_t lo = 5, std::size_t hi = 25) {
  return decay_slope(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), lo, hi);
}

/// As decay_slope, but lowers hi to the available rank; the clamp shows in the returned range.
inline SlopeEstimate decay_slope_clamped(std::span<const double> s, std::size_t lo = 5, std::size_t hi = 25) {
  const std::size_t top = std::min(hi, s.size());
  if (top <= lo)
    fail(ErrorCode::InsufficientRank, "spectrum too short for slope starting at index " + std::to_string(lo));
  return decay_slope(s, lo, top);
}

/// Rebuilds `target` from its own singular vectors and the spectrum of `source`.
/// With rescale, the transferred spectrum keeps the target's singular-value sum.
inline Matrix transfer_singular_values(const Matrix& source, const Matrix& target, bool rescale = true) {
  const SVDFactors src = svd(source);
  const SVDFactors tgt = svd(target);
  const auto r = static_cast<Eigen::Index>(std::min(src.rank(), tgt.rank()));
  Vector spectrum = src.s.head(r);
  if (rescale) {
    const double src_sum = spectrum.sum();
    if (src_sum > 0.0) spectrum *= tgt.s.head(r).sum() / src_sum;
  }
  return tgt.u.leftCols(r) * spectrum.asDiagonal() * tgt.v.leftCols(r).transpose();
}

}  // namespace tnshield
