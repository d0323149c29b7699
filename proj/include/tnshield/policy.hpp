#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "tnshield/error.hpp"

namespace tnshield {

/// Relative Frobenius error target for the whole decomposition.
struct Tolerance {
  double epsilon = 0.0;
};

/// Rank caps, one per truncation slot; a single entry applies to every slot.
struct MaxRanks {
  std::vector<std::size_t> ranks;

  std::size_t at(std::size_t slot, std::size_t slots) const {
    if (ranks.size() == 1) return ranks.front();
    if (ranks.size() != slots)
      fail(ErrorCode::InvalidArgument, "expected " + std::to_string(slots) + " ranks, got " + std::to_string(ranks.size()));
    return ranks[slot];
  }
};

using RankPolicy = std::variant<Tolerance, MaxRanks>;

inline void validate(const RankPolicy& policy) {
  if (const auto* t = std::get_if<Tolerance>(&policy)) {
    if (!(t->epsilon >= 0.0)) fail(ErrorCode::InvalidArgument, "tolerance must be non-negative");
  } else {
    const auto& r = std::get<MaxRanks>(policy).ranks;
    if (r.empty()) fail(ErrorCode::InvalidArgument, "empty rank list");
    for (auto v : r)
      if (v == 0) fail(ErrorCode::InvalidArgument, "ranks must be positive");
  }
}

}  // namespace tnshield
