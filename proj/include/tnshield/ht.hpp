#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "tnshield/policy.hpp"
#include "tnshield/svd.hpp"
#include "tnshield/tensor.hpp"
#include "tnshield/tucker.hpp"

namespace tnshield {

/// Binary dimension tree, nodes stored in pre-order with the root at index 0.
/// Every node owns a contiguous, ascending range of modes.
struct DimensionTree {
  struct Node {
    std::size_t first_mode = 0;
    std::size_t mode_count = 0;
    int left = -1;
    int right = -1;
    int parent = -1;

    bool is_leaf() const noexcept { return left < 0; }
  };

  std::vector<Node> nodes;

  /// Splits {first ceil(n/2) modes} from the rest, recursively.
  static DimensionTree balanced(std::size_t order) {
    if (order < 2) fail(ErrorCode::InvalidArgument, "dimension tree needs order >= 2");
    DimensionTree tree;
    std::function<int(std::size_t, std::size_t, int)> build = [&](std::size_t first, std::size_t count, int parent) {
      const int id = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({first, count, -1, -1, parent});
      if (count > 1) {
        const std::size_t left_count = (count + 1) / 2;
        const int l = build(first, left_count, id);
        const int r = build(first + left_count, count - left_count, id);
        tree.nodes[static_cast<std::size_t>(id)].left = l;
        tree.nodes[static_cast<std::size_t>(id)].right = r;
      }
      return id;
    };
    build(0, order, -1);
    return tree;
  }

  std::size_t order() const { return nodes.empty() ? 0 : nodes.front().mode_count; }
  const Node& operator[](std::size_t i) const { return nodes.at(i); }
  std::size_t size() const noexcept { return nodes.size(); }
};

/// Hierarchical Tucker tensor. blocks[i] belongs to tree node i: leaves hold
/// frames (I_t, R_t); internal nodes hold transfer tensors (R_left, R_right, R_t),
/// with R_root = 1.
struct HTTensor {
  DimensionTree tree;
  Shape mode_sizes;
  std::vector<DenseTensor> blocks;

  const Shape& shape() const noexcept { return mode_sizes; }

  std::vector<std::size_t> ranks() const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < tree.size(); ++i) r.push_back(tree[i].is_leaf() ? blocks[i].dim(1) : blocks[i].dim(2));
    return r;
  }

  void validate() const {
    if (tree.size() == 0 || blocks.size() != tree.size()) fail(ErrorCode::ShapeMismatch, "HT block count must match the tree");
    if (tree.order() != mode_sizes.size()) fail(ErrorCode::ShapeMismatch, "HT tree does not cover the tensor modes");
    const auto r = ranks();
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const auto& node = tree[i];
      const auto& b = blocks[i];
      if (node.is_leaf()) {
        if (b.order() != 2 || b.dim(0) != mode_sizes[node.first_mode])
          fail(ErrorCode::ShapeMismatch, "HT leaf frame has the wrong shape");
      } else {
        if (b.order() != 3 || b.dim(0) != r[static_cast<std::size_t>(node.left)] ||
            b.dim(1) != r[static_cast<std::size_t>(node.right)])
          fail(ErrorCode::ShapeMismatch, "HT transfer tensor does not match its children");
      }
    }
    if (r.front() != 1) fail(ErrorCode::ShapeMismatch, "HT root rank must be 1");
  }
};

namespace detail {

inline std::size_t node_extent(const Shape& shape, const DimensionTree::Node& node) {
  std::size_t n = 1;
  for (std::size_t k = 0; k < node.mode_count; ++k) n *= shape[node.first_mode + k];
  return n;
}

// Rows indexed by the node's modes, columns by the remaining modes.
inline Matrix node_unfolding(const DenseTensor& t, const DimensionTree::Node& node) {
  std::vector<std::size_t> perm;
  for (std::size_t k = 0; k < node.mode_count; ++k) perm.push_back(node.first_mode + k);
  for (std::size_t k = 0; k < t.order(); ++k)
    if (k < node.first_mode || k >= node.first_mode + node.mode_count) perm.push_back(k);
  const DenseTensor p = permute_modes(t, perm);
  const std::size_t rows = node_extent(t.shape(), node);
  return p.as_matrix(rows, t.size() / rows);
}

// Contracts the children frames into (R_u, R_v, R_t) for a parent frame of shape (I_u * I_v, R_t).
inline DenseTensor transfer_from(const Matrix& parent_frame, const Matrix& left, const Matrix& right) {
  const auto r_t = static_cast<std::size_t>(parent_frame.cols());
  DenseTensor frame = fold(parent_frame, {static_cast<std::size_t>(left.rows()), static_cast<std::size_t>(right.rows()), r_t});
  frame = mode_product(frame, left.transpose(), 0);
  return mode_product(frame, right.transpose(), 1);
}

}  // namespace detail

/// Leaves-to-root truncation on the balanced tree. Every non-root node keeps
/// the leading left singular vectors of its matricization; in tolerance mode
/// each of the 2d-2 nodes may discard eps*||t||/sqrt(2d-2).
inline HTTensor ht_decompose(const DenseTensor& t, const RankPolicy& policy) {
  validate(policy);
  const std::size_t d = t.order();
  if (d < 2) fail(ErrorCode::InvalidArgument, "HT decomposition needs order >= 2");

  HTTensor ht;
  ht.tree = DimensionTree::balanced(d);
  ht.mode_sizes = t.shape();
  const std::size_t slots = ht.tree.size() - 1;

  double budget = 0.0;
  if (const auto* tol = std::get_if<Tolerance>(&policy))
    budget = tol->epsilon * frobenius_norm(t) / std::sqrt(static_cast<double>(slots));

  std::vector<Matrix> frames(ht.tree.size());
  for (std::size_t i = 1; i < ht.tree.size(); ++i) {
    const SVDFactors f = svd(detail::node_unfolding(t, ht.tree[i]));
    TruncationPolicy trunc = AbsoluteTolerance{budget};
    if (const auto* caps = std::get_if<MaxRanks>(&policy)) trunc = KeepRank{std::min(caps->at(i - 1, slots), f.rank())};
    frames[i] = truncate(f, trunc).factors.u;
  }

  ht.blocks.resize(ht.tree.size());
  for (std::size_t i = 0; i < ht.tree.size(); ++i) {
    const auto& node = ht.tree[i];
    if (node.is_leaf()) {
      ht.blocks[i] = fold(frames[i], {static_cast<std::size_t>(frames[i].rows()), static_cast<std::size_t>(frames[i].cols())});
      continue;
    }
    const Matrix& left = frames[static_cast<std::size_t>(node.left)];
    const Matrix& right = frames[static_cast<std::size_t>(node.right)];
    if (i == 0) {
      const Matrix whole = t.as_matrix(static_cast<std::size_t>(left.rows()), static_cast<std::size_t>(right.rows()));
      ht.blocks[i] = fold(left.transpose() * whole * right,
                          {static_cast<std::size_t>(left.cols()), static_cast<std::size_t>(right.cols()), 1});
    } else {
      ht.blocks[i] = detail::transfer_from(frames[i], left, right);
    }
  }
  return ht;
}

namespace detail {

// Frame of node i: rows indexed by its modes (row-major), one column per rank.
inline RowMatrix ht_frame(const HTTensor& ht, std::size_t i) {
  const auto& node = ht.tree[i];
  const DenseTensor& b = ht.blocks[i];
  if (node.is_leaf()) return b.as_matrix(b.dim(0), b.dim(1));
  const RowMatrix left = ht_frame(ht, static_cast<std::size_t>(node.left));
  const RowMatrix right = ht_frame(ht, static_cast<std::size_t>(node.right));
  const std::size_t r_u = b.dim(0), r_v = b.dim(1), r_t = b.dim(2);
  RowMatrix frame(left.rows() * right.rows(), static_cast<Eigen::Index>(r_t));
  Matrix slice(static_cast<Eigen::Index>(r_u), static_cast<Eigen::Index>(r_v));
  for (std::size_t c = 0; c < r_t; ++c) {
    for (std::size_t a = 0; a < r_u; ++a)
      for (std::size_t v = 0; v < r_v; ++v) slice(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(v)) = b[(a * r_v + v) * r_t + c];
    const RowMatrix block = left * slice * right.transpose();
    frame.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Vector>(block.data(), block.size());
  }
  return frame;
}

}  // namespace detail

inline DenseTensor ht_reconstruct(const HTTensor& ht) {
  ht.validate();
  const RowMatrix root = detail::ht_frame(ht, 0);
  return from_row_matrix(root, ht.mode_sizes);
}

}  // namespace tnshield
