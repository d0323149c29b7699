#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tnshield/cp.hpp"
#include "tnshield/ht.hpp"
#include "tnshield/tensor.hpp"
#include "tnshield/tt.hpp"
#include "tnshield/tucker.hpp"

namespace tnshield {

enum class Format : std::uint8_t { CP = 0, TD = 1, HT = 2, TT = 3 };

constexpr std::string_view to_string(Format f) {
  switch (f) {
    case Format::CP: return "cp";
    case Format::TD: return "td";
    case Format::HT: return "ht";
    case Format::TT: return "tt";
  }
  return "?";
}

inline Format parse_format(std::string_view s) {
  if (s == "cp") return Format::CP;
  if (s == "td") return Format::TD;
  if (s == "ht") return Format::HT;
  if (s == "tt") return Format::TT;
  fail(ErrorCode::InvalidArgument, "unknown format '" + std::string(s) + "'");
}

/// Any of the four formats; the variant index equals the Format tag.
struct TensorNetwork {
  std::variant<CPTensor, TuckerTensor, HTTensor, TTTensor> value;

  Format format() const noexcept { return static_cast<Format>(value.index()); }
  Shape shape() const {
    return std::visit([](const auto& n) -> Shape { return n.shape(); }, value);
  }
};

inline TensorNetwork to_network(CPTensor cp) { return {absorb_weights(std::move(cp))}; }
inline TensorNetwork to_network(TuckerTensor tk) { return {std::move(tk)}; }
inline TensorNetwork to_network(HTTensor ht) { return {std::move(ht)}; }
inline TensorNetwork to_network(TTTensor tt) { return {std::move(tt)}; }

inline DenseTensor reconstruct(const TensorNetwork& net) {
  switch (net.format()) {
    case Format::CP: return cp_reconstruct(std::get<CPTensor>(net.value));
    case Format::TD: return tucker_reconstruct(std::get<TuckerTensor>(net.value));
    case Format::HT: return ht_reconstruct(std::get<HTTensor>(net.value));
    case Format::TT: return tt_reconstruct(std::get<TTTensor>(net.value));
  }
  fail(ErrorCode::InvalidArgument, "unknown network format");
}

//
// Layout: format, shape and rank metadata, enough to rebuild every subtensor shape.
//   CP: {R}   TD: {R_1..R_d}   HT: one rank per tree node (pre-order, root 1)   TT: {r_0..r_d}
//

struct NetworkLayout {
  Format format = Format::TT;
  Shape shape;
  std::vector<std::size_t> ranks;

  friend bool operator==(const NetworkLayout&, const NetworkLayout&) = default;
};

inline std::size_t expected_rank_count(Format format, std::size_t order) {
  switch (format) {
    case Format::CP: return 1;
    case Format::TD: return order;
    case Format::HT: return 2 * order - 1;
    case Format::TT: return order + 1;
  }
  return 0;
}

inline void validate(const NetworkLayout& layout) {
  const std::size_t d = layout.shape.size();
  if (d < 2) fail(ErrorCode::ShapeMismatch, "networks need order >= 2");
  for (auto n : layout.shape)
    if (n == 0) fail(ErrorCode::ShapeMismatch, "mode sizes must be positive");
  if (layout.ranks.size() != expected_rank_count(layout.format, d))
    fail(ErrorCode::ShapeMismatch, "rank metadata has the wrong length");
  for (auto r : layout.ranks)
    if (r == 0) fail(ErrorCode::ShapeMismatch, "ranks must be positive");
  if (layout.format == Format::TT && (layout.ranks.front() != 1 || layout.ranks.back() != 1))
    fail(ErrorCode::ShapeMismatch, "TT boundary ranks must be 1");
  if (layout.format == Format::HT && layout.ranks.front() != 1) fail(ErrorCode::ShapeMismatch, "HT root rank must be 1");
}

inline NetworkLayout layout_of(const TensorNetwork& net) {
  NetworkLayout layout{net.format(), net.shape(), {}};
  switch (net.format()) {
    case Format::CP: {
      const auto& cp = std::get<CPTensor>(net.value);
      if (!cp.weights.empty()) fail(ErrorCode::InvalidArgument, "CP weights must be absorbed before serialization");
      layout.ranks = {cp.rank()};
      break;
    }
    case Format::TD: layout.ranks = std::get<TuckerTensor>(net.value).ranks(); break;
    case Format::HT: layout.ranks = std::get<HTTensor>(net.value).ranks(); break;
    case Format::TT: layout.ranks = std::get<TTTensor>(net.value).ranks(); break;
  }
  return layout;
}

/// Shapes of the subtensors in canonical order: CP factors; TD core then factors;
/// HT blocks in tree pre-order; TT cores.
inline std::vector<Shape> subtensor_shapes(const NetworkLayout& layout) {
  validate(layout);
  const Shape& s = layout.shape;
  const auto& r = layout.ranks;
  const std::size_t d = s.size();
  std::vector<Shape> out;
  switch (layout.format) {
    case Format::CP:
      for (std::size_t k = 0; k < d; ++k) out.push_back({s[k], r[0]});
      break;
    case Format::TD:
      out.push_back(r);
      for (std::size_t k = 0; k < d; ++k) out.push_back({s[k], r[k]});
      break;
    case Format::HT: {
      const auto tree = DimensionTree::balanced(d);
      for (std::size_t i = 0; i < tree.size(); ++i) {
        const auto& node = tree[i];
        if (node.is_leaf())
          out.push_back({s[node.first_mode], r[i]});
        else
          out.push_back({r[static_cast<std::size_t>(node.left)], r[static_cast<std::size_t>(node.right)], r[i]});
      }
      break;
    }
    case Format::TT:
      for (std::size_t k = 0; k < d; ++k) out.push_back({r[k], s[k], r[k + 1]});
      break;
  }
  return out;
}

inline TensorNetwork assemble(const NetworkLayout& layout, std::vector<DenseTensor> blocks) {
  const auto shapes = subtensor_shapes(layout);
  if (blocks.size() != shapes.size()) fail(ErrorCode::ShapeMismatch, "wrong number of subtensors for layout");
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].reshape_in_place(shapes[i]);
  switch (layout.format) {
    case Format::CP: return {CPTensor{std::move(blocks), {}}};
    case Format::TD: {
      TuckerTensor tk;
      tk.core = std::move(blocks.front());
      tk.factors.assign(std::make_move_iterator(blocks.begin() + 1), std::make_move_iterator(blocks.end()));
      return {std::move(tk)};
    }
    case Format::HT: return {HTTensor{DimensionTree::balanced(layout.shape.size()), layout.shape, std::move(blocks)}};
    case Format::TT: return {TTTensor{std::move(blocks)}};
  }
  fail(ErrorCode::InvalidArgument, "unknown network format");
}

//
// subtensor access
//

inline std::vector<std::reference_wrapper<const DenseTensor>> subtensors(const TensorNetwork& net) {
  std::vector<std::reference_wrapper<const DenseTensor>> out;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, CPTensor>) {
          for (const auto& f : n.factors) out.emplace_back(f);
        } else if constexpr (std::is_same_v<T, TuckerTensor>) {
          out.emplace_back(n.core);
          for (const auto& f : n.factors) out.emplace_back(f);
        } else if constexpr (std::is_same_v<T, HTTensor>) {
          for (const auto& b : n.blocks) out.emplace_back(b);
        } else {
          for (const auto& c : n.cores) out.emplace_back(c);
        }
      },
      net.value);
  return out;
}

inline DenseTensor& mutable_subtensor(TensorNetwork& net, std::size_t index) {
  auto refs = subtensors(net);
  if (index >= refs.size())
    fail(ErrorCode::InvalidSelector, "subtensor " + std::to_string(index) + " out of " + std::to_string(refs.size()));
  return const_cast<DenseTensor&>(refs[index].get());
}

/// Parameter count from the closed-form storage expressions of each format.
inline std::size_t storage_count(const TensorNetwork& net) {
  const Shape s = net.shape();
  const std::size_t d = s.size();
  std::size_t total = 0;
  switch (net.format()) {
    case Format::CP: {
      const auto& cp = std::get<CPTensor>(net.value);
      for (std::size_t k = 0; k < d; ++k) total += s[k] * cp.rank();
      total += cp.weights.size();
      break;
    }
    case Format::TD: {
      const auto r = std::get<TuckerTensor>(net.value).ranks();
      std::size_t core = 1;
      for (std::size_t k = 0; k < d; ++k) {
        total += s[k] * r[k];
        core *= r[k];
      }
      total += core;
      break;
    }
    case Format::HT: {
      const auto& ht = std::get<HTTensor>(net.value);
      const auto r = ht.ranks();
      for (std::size_t i = 0; i < ht.tree.size(); ++i) {
        const auto& node = ht.tree[i];
        if (node.is_leaf())
          total += s[node.first_mode] * r[i];
        else
          total += r[static_cast<std::size_t>(node.left)] * r[static_cast<std::size_t>(node.right)] * r[i];
      }
      break;
    }
    case Format::TT: {
      const auto r = std::get<TTTensor>(net.value).ranks();
      for (std::size_t k = 0; k < d; ++k) total += s[k] * r[k] * r[k + 1];
      break;
    }
  }
  return total;
}

//
// perturbation
//

enum class PerturbMode { AdditiveUniform, RandomizeSequence };

/// Picks the subtensor to perturb; an empty index selects one with the seeded generator.
inline std::size_t resolve_selector(const TensorNetwork& net, std::optional<std::size_t> index, std::uint64_t seed) {
  const std::size_t count = subtensors(net).size();
  if (index) {
    if (*index >= count)
      fail(ErrorCode::InvalidSelector, "subtensor " + std::to_string(*index) + " out of " + std::to_string(count));
    return *index;
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return static_cast<std::size_t>(rng() % count);
}

/// Additive mode adds U(-a, a) noise with a = noise_level * max|entry|; randomize
/// mode shuffles the entries. Other subtensors are copied untouched.
inline TensorNetwork perturb_subtensor(const TensorNetwork& net, std::optional<std::size_t> index, double noise_level,
                                       PerturbMode mode, std::uint64_t seed) {
  if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) fail(ErrorCode::InvalidArgument, "noise level must be >= 0");
  const std::size_t target = resolve_selector(net, index, seed);
  TensorNetwork out = net;
  DenseTensor& block = mutable_subtensor(out, target);
  auto values = block.data();
  std::mt19937_64 rng(seed);
  if (mode == PerturbMode::RandomizeSequence) {
    std::shuffle(values.begin(), values.end(), rng);
    return out;
  }
  if (noise_level == 0.0) return out;
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  const double amplitude = noise_level * peak;
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (double& v : values) v += amplitude * noise(rng);
  return out;
}

}  // namespace tnshield
