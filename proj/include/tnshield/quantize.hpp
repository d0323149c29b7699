#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tnshield/network.hpp"
#include "tnshield/tensor.hpp"

namespace tnshield {

enum class QuantKind : std::uint8_t { Uniform = 0, Lloyd = 1 };

/// 8-bit reproduction codebook. Uniform codebooks store only min and step;
/// Lloyd codebooks store up to 256 strictly increasing levels.
struct Codebook {
  QuantKind kind = QuantKind::Uniform;
  double min = 0.0;
  double step = 0.0;
  std::vector<double> levels;
  std::size_t trained_iterations = 0;

  std::size_t level_count() const { return kind == QuantKind::Uniform ? 256 : levels.size(); }

  double value(std::uint8_t code) const {
    if (kind == QuantKind::Uniform) return min + static_cast<double>(code) * step;
    return levels.at(code);
  }

  /// Serialized size in bytes (see tnz.hpp).
  std::size_t encoded_bytes() const { return kind == QuantKind::Uniform ? 16 : 2 + 8 * levels.size(); }
};

struct QuantizedArray {
  std::vector<std::uint8_t> codes;
  Codebook codebook;

  std::size_t original_length() const noexcept { return codes.size(); }
};

inline QuantizedArray quantize_uniform(std::span<const double> x) {
  QuantizedArray q;
  q.codebook.kind = QuantKind::Uniform;
  q.codes.resize(x.size(), 0);
  if (x.empty()) return q;
  for (double v : x)
    if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "cannot quantize non-finite values");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  q.codebook.min = *lo;
  // a constant array keeps step 0 and decodes exactly
  if (*hi == *lo) return q;
  q.codebook.step = (*hi - *lo) / 255.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double c = std::round((x[i] - q.codebook.min) / q.codebook.step);
    q.codes[i] = static_cast<std::uint8_t>(std::clamp(c, 0.0, 255.0));
  }
  return q;
}

struct LloydOptions {
  std::size_t max_iter = 100;
  /// Stop when the relative distortion improvement drops below this.
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

namespace detail {

// Nearest-level codes; ties at a midpoint go to the lower level. Returns the MSE.
inline double lloyd_assign(std::span<const double> x, const std::vector<double>& levels, std::vector<std::uint8_t>& codes) {
  std::vector<double> mids(levels.size() - 1);
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) mids[i] = 0.5 * (levels[i] + levels[i + 1]);
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto c = static_cast<std::size_t>(std::lower_bound(mids.begin(), mids.end(), x[i]) - mids.begin());
    codes[i] = static_cast<std::uint8_t>(c);
    const double e = x[i] - levels[c];
    sse += e * e;
  }
  return sse / static_cast<double>(x.size());
}

}  // namespace detail

/// Lloyd-Max quantizer initialised from the uniform codebook. Inputs with at most
/// 256 distinct values are coded exactly. When `distortion_trace` is given it
/// receives the MSE after every assignment step.
inline QuantizedArray quantize_lloyd(std::span<const double> x, const LloydOptions& opts = {},
                                     std::vector<double>* distortion_trace = nullptr) {
  QuantizedArray q;
  q.codebook.kind = QuantKind::Lloyd;
  q.codes.resize(x.size(), 0);
  if (distortion_trace) distortion_trace->clear();
  if (x.empty()) return q;
  for (double v : x)
    if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "cannot quantize non-finite values");

  std::vector<double> distinct(x.begin(), x.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() <= 256) {
    q.codebook.levels = distinct;
    for (std::size_t i = 0; i < x.size(); ++i)
      q.codes[i] = static_cast<std::uint8_t>(std::lower_bound(distinct.begin(), distinct.end(), x[i]) - distinct.begin());
    if (distortion_trace) distortion_trace->push_back(0.0);
    return q;
  }

  const double lo = distinct.front();
  const double step = (distinct.back() - lo) / 255.0;
  std::vector<double> levels(256);
  for (std::size_t i = 0; i < 256; ++i) levels[i] = lo + static_cast<double>(i) * step;

  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  double distortion = detail::lloyd_assign(x, levels, q.codes);
  if (distortion_trace) distortion_trace->push_back(distortion);

  std::size_t iter = 0;
  for (iter = 1; iter <= opts.max_iter && distortion > 0.0; ++iter) {
    std::vector<double> sum(levels.size(), 0.0);
    std::vector<std::size_t> count(levels.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum[q.codes[i]] += x[i];
      ++count[q.codes[i]];
    }
    for (std::size_t c = 0; c < levels.size(); ++c)
      if (count[c] > 0) levels[c] = sum[c] / static_cast<double>(count[c]);
    // an unused level moves to a random sample; this cannot raise the distortion
    for (std::size_t c = 0; c < levels.size(); ++c) {
      if (count[c] > 0) continue;
      const double candidate = x[pick(rng)];
      if (std::find(levels.begin(), levels.end(), candidate) == levels.end()) levels[c] = candidate;
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    const double next = detail::lloyd_assign(x, levels, q.codes);
    if (distortion_trace) distortion_trace->push_back(next);
    const double improvement = (distortion - next) / distortion;
    distortion = next;
    if (improvement < opts.tol) break;
  }
  q.codebook.levels = std::move(levels);
  q.codebook.trained_iterations = std::min(iter, opts.max_iter);
  return q;
}

inline std::vector<double> dequantize(const QuantizedArray& q) {
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = q.codebook.value(q.codes[i]);
  return out;
}

inline double mean_squared_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "arrays differ in length");
  if (a.empty()) return 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
  return sse / static_cast<double>(a.size());
}

/// Excess kurtosis m4 / m2^2 - 3; zero for constant input.
inline double excess_kurtosis(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double c = (v - mean) * (v - mean);
    m2 += c;
    m4 += c * c;
  }
  m2 /= static_cast<double>(x.size());
  m4 /= static_cast<double>(x.size());
  if (m2 == 0.0) return 0.0;
  return m4 / (m2 * m2) - 3.0;
}

//
// whole networks
//

enum class QuantizerChoice { Auto, Uniform, Lloyd };

struct QuantizerSettings {
  QuantizerChoice choice = QuantizerChoice::Auto;
  /// Auto picks Lloyd when the subtensor's excess kurtosis exceeds this.
  double kurtosis_threshold = 1.0;
  /// Per-subtensor kind, overriding `choice` where set.
  std::vector<std::optional<QuantKind>> overrides;
  LloydOptions lloyd;
};

struct QuantizedNetwork {
  NetworkLayout layout;
  std::vector<QuantizedArray> blocks;
};

inline QuantKind select_quantizer(std::span<const double> values, const QuantizerSettings& settings, std::size_t index) {
  if (index < settings.overrides.size() && settings.overrides[index]) return *settings.overrides[index];
  switch (settings.choice) {
    case QuantizerChoice::Uniform: return QuantKind::Uniform;
    case QuantizerChoice::Lloyd: return QuantKind::Lloyd;
    case QuantizerChoice::Auto: break;
  }
  return excess_kurtosis(values) > settings.kurtosis_threshold ? QuantKind::Lloyd : QuantKind::Uniform;
}

inline QuantizedArray quantize_block(std::span<const double> values, QuantKind kind, const LloydOptions& lloyd) {
  return kind == QuantKind::Lloyd ? quantize_lloyd(values, lloyd) : quantize_uniform(values);
}

inline QuantizedNetwork quantize_network(const TensorNetwork& net, const QuantizerSettings& settings = {}) {
  QuantizedNetwork q{layout_of(net), {}};
  const auto blocks = subtensors(net);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto values = blocks[i].get().data();
    q.blocks.push_back(quantize_block(values, select_quantizer(values, settings, i), settings.lloyd));
  }
  return q;
}

inline TensorNetwork dequantize_network(const QuantizedNetwork& q) {
  const auto shapes = subtensor_shapes(q.layout);
  if (shapes.size() != q.blocks.size()) fail(ErrorCode::ShapeMismatch, "block count does not match the layout");
  std::vector<DenseTensor> blocks;
  for (std::size_t i = 0; i < shapes.size(); ++i) blocks.emplace_back(shapes[i], dequantize(q.blocks[i]));
  return assemble(q.layout, std::move(blocks));
}

/// Total scalar count across all blocks; equals storage_count of the source network.
inline std::size_t code_count(const QuantizedNetwork& q) {
  std::size_t n = 0;
  for (const auto& b : q.blocks) n += b.codes.size();
  return n;
}

/// Bytes of the TNZ container for `q`: one byte per code plus header, codebooks,
/// per-block framing and the CRC trailer.
inline std::size_t encoded_size(const QuantizedNetwork& q) {
  const std::size_t d = q.layout.shape.size();
  std::size_t bytes = 4 + 1 + 1 + 4 + 4 * d + 4 * q.layout.ranks.size() + 4;
  for (const auto& b : q.blocks) bytes += 1 + b.codebook.encoded_bytes() + 4 + b.codes.size();
  return bytes + 4;
}

/// Compressed bytes over the original size at one byte per 8-bit channel value.
inline double compression_ratio(const QuantizedNetwork& q, const DenseTensor& original) {
  return static_cast<double>(encoded_size(q)) / static_cast<double>(original.size());
}

}  // namespace tnshield
