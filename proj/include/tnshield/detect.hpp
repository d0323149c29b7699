#pragma once

#include <cmath>
#include <cstddef>
#include <optional>

#include "tnshield/analysis.hpp"
#include "tnshield/svd.hpp"
#include "tnshield/tensor.hpp"
#include "tnshield/tt.hpp"

namespace tnshield {

struct DetectionConfig {
  /// Decay rate of the binned cumulative spectrum; the bins grow by exp(|target_slope|).
  double target_slope = -0.03;
  /// Relative TT truncation tolerance of the robust reconstruction.
  double truncation_error = 0.03;
  /// Residual threshold in pixel units for a reference-sized image.
  double l2_threshold = 1000.0;
  double pixel_max = 255.0;
  /// Element count at which l2_threshold applies unscaled (299 x 299 x 3).
  std::size_t reference_elements = 299 * 299 * 3;
  std::optional<double> alpha;
  std::size_t max_bins = 512;

  void validate() const {
    if (!(std::abs(target_slope) > 0.0) || !std::isfinite(target_slope))
      fail(ErrorCode::InvalidConfig, "target slope must be finite and non-zero");
    if (!(truncation_error >= 0.0)) fail(ErrorCode::InvalidConfig, "truncation error must be >= 0");
    if (!(l2_threshold > 0.0)) fail(ErrorCode::InvalidConfig, "l2 threshold must be positive");
    if (!(pixel_max > 0.0)) fail(ErrorCode::InvalidConfig, "pixel scale must be positive");
    if (reference_elements == 0) fail(ErrorCode::InvalidConfig, "reference element count must be positive");
    robust_config().validate();
  }

  RobustBinConfig robust_config() const { return RobustBinConfig{std::abs(target_slope), alpha, max_bins}; }

  /// Threshold for an image of `elements` values: the per-element residual stays fixed.
  double threshold_for(std::size_t elements) const {
    return l2_threshold * std::sqrt(static_cast<double>(elements) / static_cast<double>(reference_elements));
  }
};

struct RobustReconstruction {
  DenseTensor reconstruction;
  double residual_norm = 0.0;
};

/// Robust TT-SVD reconstruction of an H x W (x C) image in pixel units,
/// returned in the input layout.
inline RobustReconstruction robust_reconstruct(const DenseTensor& image, const DetectionConfig& cfg) {
  cfg.validate();
  const DenseTensor ordered = to_tt_order(image);
  const TTTensor tt = tt_svd(ordered, Tolerance{cfg.truncation_error}, cfg.robust_config());
  RobustReconstruction out{from_tt_order(tt_reconstruct(tt)), 0.0};
  out.residual_norm = frobenius_distance(image, out.reconstruction);
  return out;
}

struct DetectionVerdict {
  bool eligible = false;
  double residual_norm = 0.0;
  bool flagged = false;
  /// ||image - reconstruction|| / ||image||.
  double reconstruction_dissimilarity = 0.0;
  /// No baseline was supplied, so eligibility was taken for granted.
  bool eligibility_assumed = false;
  std::optional<double> baseline_residual;
  double threshold = 0.0;
};

/// Flags an image when its robust-reconstruction residual exceeds the threshold.
/// With a clean baseline, only images whose baseline residual is below the
/// threshold are eligible; without one eligibility is assumed.
inline DetectionVerdict detect(const DenseTensor& image, const DetectionConfig& cfg,
                               const std::optional<DenseTensor>& baseline = std::nullopt) {
  cfg.validate();
  DetectionVerdict v;
  v.threshold = cfg.threshold_for(image.size());
  const RobustReconstruction r = robust_reconstruct(image, cfg);
  v.residual_norm = r.residual_norm;
  const double norm = frobenius_norm(image);
  v.reconstruction_dissimilarity = norm > 0.0 ? r.residual_norm / norm : 0.0;
  if (baseline) {
    if (baseline->shape() != image.shape()) fail(ErrorCode::ShapeMismatch, "baseline shape differs from the image");
    v.baseline_residual = robust_reconstruct(*baseline, cfg).residual_norm;
    v.eligible = *v.baseline_residual < v.threshold;
  } else {
    v.eligible = true;
    v.eligibility_assumed = true;
  }
  v.flagged = v.eligible && v.residual_norm > v.threshold;
  return v;
}

}  // namespace tnshield
