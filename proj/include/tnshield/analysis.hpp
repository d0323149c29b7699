#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "tnshield/svd.hpp"
#include "tnshield/tensor.hpp"
#include "tnshield/tt.hpp"

namespace tnshield {

//
// normalized l2-dissimilarity
//

inline double l2_dissimilarity(const DenseTensor& original, const DenseTensor& perturbed) {
  if (original.size() != perturbed.size()) fail(ErrorCode::ShapeMismatch, "tensors differ in size");
  const double norm = frobenius_norm(original);
  if (norm == 0.0) fail(ErrorCode::ZeroNormInput, "original tensor has zero norm");
  return frobenius_distance(original, perturbed) / norm;
}

/// Mean over the batch of ||x - x'|| / ||x||.
inline double normalized_l2_dissimilarity(std::span<const DenseTensor> originals, std::span<const DenseTensor> perturbed) {
  if (originals.size() != perturbed.size()) fail(ErrorCode::ShapeMismatch, "batches differ in size");
  if (originals.empty()) fail(ErrorCode::InvalidArgument, "empty batch");
  double total = 0.0;
  for (std::size_t n = 0; n < originals.size(); ++n) {
    if (originals[n].shape() != perturbed[n].shape()) fail(ErrorCode::ShapeMismatch, "batch entries differ in shape");
    total += l2_dissimilarity(originals[n], perturbed[n]);
  }
  return total / static_cast<double>(originals.size());
}

/// Adds i.i.d. U(-amplitude, amplitude) noise; no clipping.
inline DenseTensor add_uniform_noise(const DenseTensor& t, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DenseTensor out = t;
  for (auto& v : out.data()) v += amplitude * u(rng);
  return out;
}

//
// TT-SVD slope
//

/// H x W x C images become (rows, channels, columns); order-2 images pass through.
inline DenseTensor to_tt_order(const DenseTensor& image) {
  if (image.order() == 2) return image;
  if (image.order() != 3) fail(ErrorCode::ShapeMismatch, "images must be H x W or H x W x C");
  return permute_modes(image, {0, 2, 1});
}

inline DenseTensor from_tt_order(const DenseTensor& t) {
  if (t.order() == 2) return t;
  if (t.order() != 3) fail(ErrorCode::ShapeMismatch, "images must be order 2 or 3");
  return permute_modes(t, {0, 2, 1});
}

struct SlopeReport {
  std::vector<SlopeEstimate> steps;
  double mean_slope = 0.0;
};

/// Decay slope over singular values lo..hi at every step of an untruncated
/// TT-SVD sweep, averaged. The tensor is used in the given mode order.
inline SlopeReport tt_svd_slope(const DenseTensor& t, std::size_t lo = 5, std::size_t hi = 25) {
  SlopeReport report;
  for (const Vector& s : tt_sweep_spectra(t)) {
    report.steps.push_back(decay_slope_clamped(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), lo, hi));
    report.mean_slope += report.steps.back().slope;
  }
  report.mean_slope /= static_cast<double>(report.steps.size());
  return report;
}

/// tt_svd_slope after reordering an image to (rows, channels, columns).
inline SlopeReport image_slope(const DenseTensor& image) { return tt_svd_slope(to_tt_order(image)); }

struct SlopeSummary {
  double mean = 0.0;
  double population_std = 0.0;
  std::size_t count = 0;
};

/// Mean and population standard deviation, accumulated in index order.
inline SlopeSummary summarize_slopes(std::span<const double> slopes) {
  SlopeSummary s;
  s.count = slopes.size();
  if (slopes.empty()) return s;
  for (double v : slopes) s.mean += v;
  s.mean /= static_cast<double>(slopes.size());
  double var = 0.0;
  for (double v : slopes) var += (v - s.mean) * (v - s.mean);
  s.population_std = std::sqrt(var / static_cast<double>(slopes.size()));
  return s;
}

//
// normalized mutual information
//

enum class NmiNormalization { Arithmetic, Geometric };

struct NMIResult {
  double value = 0.0;
  std::size_t bins = 0;
  double entropy_a = 0.0;
  double entropy_b = 0.0;
  double mutual_information = 0.0;
  /// Number of leading elements compared (the shorter input length).
  std::size_t length = 0;
};

namespace detail {

inline std::vector<std::uint32_t> equal_width_bins(std::span<const double> x, std::size_t bins) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  std::vector<std::uint32_t> idx(x.size(), 0);
  if (*hi == *lo) return idx;
  const double width = (*hi - *lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto b = static_cast<std::size_t>((x[i] - *lo) / width);
    idx[i] = static_cast<std::uint32_t>(std::min(b, bins - 1));
  }
  return idx;
}

inline double entropy_bits(const std::vector<std::size_t>& counts, double n) {
  double h = 0.0;
  for (auto c : counts)
    if (c) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log2(p);
    }
  return h;
}

}  // namespace detail

/// Histogram NMI with equal-width bins over each array's own range, entropies
/// in bits. Inputs are truncated to the shorter length. A constant input scores
/// 1 against an identical array and 0 otherwise.
inline NMIResult nmi(std::span<const double> a, std::span<const double> b, std::size_t bins = 256,
                     NmiNormalization normalization = NmiNormalization::Arithmetic) {
  if (a.empty() || b.empty()) fail(ErrorCode::InvalidArgument, "nmi needs non-empty arrays");
  if (bins < 2) fail(ErrorCode::InvalidArgument, "nmi needs at least two bins");
  const std::size_t n = std::min(a.size(), b.size());
  a = a.first(n);
  b = b.first(n);
  // evaluate in a canonical argument order so nmi(a, b) and nmi(b, a) agree bitwise
  const bool swapped = std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
  if (swapped) std::swap(a, b);

  const auto xa = detail::equal_width_bins(a, bins);
  const auto xb = detail::equal_width_bins(b, bins);
  std::vector<std::size_t> ca(bins, 0), cb(bins, 0), joint(bins * bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++ca[xa[i]];
    ++cb[xb[i]];
    ++joint[xa[i] * bins + xb[i]];
  }
  const auto total = static_cast<double>(n);
  NMIResult r;
  r.bins = bins;
  r.length = n;
  r.entropy_a = detail::entropy_bits(ca, total);
  r.entropy_b = detail::entropy_bits(cb, total);
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t j = 0; j < bins; ++j) {
      const std::size_t c = joint[i * bins + j];
      if (!c) continue;
      const double pxy = static_cast<double>(c) / total;
      r.mutual_information += pxy * std::log2(pxy * total * total / (static_cast<double>(ca[i]) * static_cast<double>(cb[j])));
    }
  if (swapped) std::swap(r.entropy_a, r.entropy_b);

  if (std::equal(a.begin(), a.end(), b.begin())) {
    r.value = 1.0;
  } else if (r.entropy_a == 0.0 || r.entropy_b == 0.0) {
    r.value = 0.0;
  } else {
    const double denom = normalization == NmiNormalization::Arithmetic ? 0.5 * (r.entropy_a + r.entropy_b)
                                                                       : std::sqrt(r.entropy_a * r.entropy_b);
    r.value = std::clamp(r.mutual_information / denom, 0.0, 1.0);
  }
  return r;
}

//
// top-k reconstruction
//

inline Matrix topk_reconstruct(const Matrix& m, std::size_t k) {
  const SVDFactors f = svd(m);
  if (k < 1 || k > f.rank()) fail(ErrorCode::InvalidArgument, "k must lie in [1, rank]");
  return truncate(f, KeepRank{k}).factors.reconstruct();
}

//
// smoothing
//

struct Gaussian {
  double sigma;
};
struct Median {
  std::size_t window;
};
using SmoothingKernel = std::variant<Gaussian, Median>;

namespace detail {

// Mirror index into [0, n) with the edge sample repeated (d c b a | a b c d | d c b a).
inline std::size_t reflect_index(long i, long n) {
  const long period = 2 * n;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

struct ImageView {
  std::size_t height, width, channels;
};

inline ImageView image_view(const DenseTensor& t) {
  if (t.order() == 2) return {t.dim(0), t.dim(1), 1};
  if (t.order() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  fail(ErrorCode::InvalidKernel, "smoothing needs an H x W or H x W x C image");
}

inline DenseTensor gaussian_filter(const DenseTensor& t, double sigma) {
  const ImageView v = image_view(t);
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    taps[static_cast<std::size_t>(k + radius)] = w;
    sum += w;
  }
  for (auto& w : taps) w /= sum;

  const long h = static_cast<long>(v.height), wd = static_cast<long>(v.width);
  const std::size_t c = v.channels;
  DenseTensor rows(t.shape()), out(t.shape());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < wd; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k)
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 t[(static_cast<std::size_t>(y) * v.width + reflect_index(x + k, wd)) * c + ch];
        rows[(static_cast<std::size_t>(y) * v.width + static_cast<std::size_t>(x)) * c + ch] = acc;
      }
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < wd; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k)
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 rows[(reflect_index(y + k, h) * v.width + static_cast<std::size_t>(x)) * c + ch];
        out[(static_cast<std::size_t>(y) * v.width + static_cast<std::size_t>(x)) * c + ch] = acc;
      }
  return out;
}

inline DenseTensor median_filter(const DenseTensor& t, std::size_t window) {
  const ImageView v = image_view(t);
  const long half = static_cast<long>(window / 2);
  const long h = static_cast<long>(v.height), wd = static_cast<long>(v.width);
  const std::size_t c = v.channels;
  DenseTensor out(t.shape());
  std::vector<double> buf(window * window);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < wd; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t n = 0;
        for (long dy = -half; dy <= half; ++dy)
          for (long dx = -half; dx <= half; ++dx)
            buf[n++] = t[(reflect_index(y + dy, h) * v.width + reflect_index(x + dx, wd)) * c + ch];
        std::nth_element(buf.begin(), buf.begin() + static_cast<long>(n / 2), buf.end());
        out[(static_cast<std::size_t>(y) * v.width + static_cast<std::size_t>(x)) * c + ch] = buf[n / 2];
      }
  return out;
}

}  // namespace detail

/// Per-channel 2-D Gaussian or median filtering with reflected borders.
inline DenseTensor smooth(const DenseTensor& image, const SmoothingKernel& kernel) {
  if (const auto* g = std::get_if<Gaussian>(&kernel)) {
    if (!(g->sigma > 0.0) || !std::isfinite(g->sigma)) fail(ErrorCode::InvalidKernel, "gaussian sigma must be positive");
    return detail::gaussian_filter(image, g->sigma);
  }
  const std::size_t w = std::get<Median>(kernel).window;
  if (w < 3 || w % 2 == 0) fail(ErrorCode::InvalidKernel, "median window must be odd and at least 3");
  return detail::median_filter(image, w);
}

}  // namespace tnshield
