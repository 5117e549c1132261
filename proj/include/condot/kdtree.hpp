#pragma once

#include "condot/common.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <vector>

namespace condot {

/// Static k-d tree over the rows of a point matrix. Median splits on the
/// dimension of largest spread, leaves of up to 16 points. Queries return
/// neighbours sorted by (distance, index) so ties are deterministic.
class KdTree {
 public:
  explicit KdTree(Mat points) : pts_(std::move(points)) {
    require(pts_.rows() > 0, "KdTree: empty point set");
    idx_.resize(static_cast<std::size_t>(pts_.rows()));
    std::iota(idx_.begin(), idx_.end(), 0);
    nodes_.reserve(static_cast<std::size_t>(2 * pts_.rows() / kLeafSize + 2));
    root_ = build(0, pts_.rows());
  }

  const Mat& points() const { return pts_; }

  struct Neighbor {
    double sq_dist;
    Eigen::Index index;
  };

  /// k nearest neighbours of `query` in squared Euclidean distance.
  std::vector<Neighbor> knn(const Vec& query, Eigen::Index k) const {
    require(query.size() == pts_.cols(), "KdTree::knn: query dimension mismatch");
    require(k >= 1, "KdTree::knn: k must be >= 1");
    k = std::min(k, pts_.rows());

    // max-heap on (sq_dist, -index) keeps the k best with deterministic ties
    using Entry = std::pair<double, Eigen::Index>;
    std::priority_queue<Entry> heap;
    search(root_, query, k, heap);

    std::vector<Neighbor> out(static_cast<std::size_t>(heap.size()));
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
      it->sq_dist = heap.top().first;
      it->index = -heap.top().second;
      heap.pop();
    }
    return out;
  }

  /// Per-node max of a per-point value; companion index for
  /// scan_offset_below. Recompute whenever the values change.
  std::vector<double> subtree_max(const Vec& per_point_value) const {
    require(per_point_value.size() == pts_.rows(), "KdTree::subtree_max: size mismatch");
    std::vector<double> node_max(nodes_.size(), -kForbidden);
    accumulate_max(root_, per_point_value, node_max);
    return node_max;
  }

  /// Emits (index, keyed_value) for every point p with
  /// ||p - query||^2 - offsets[p] < threshold, pruning subtrees through the
  /// bound box_dist^2 - subtree_max(offsets). Collection stops per subtree
  /// once `emit` returns false.
  template <typename F>
  void scan_offset_below(const Vec& query, const Vec& offsets, const std::vector<double>& node_max,
                         double threshold, F&& emit) const {
    scan_node(root_, query, offsets, node_max, threshold, emit);
  }

 private:
  static constexpr Eigen::Index kLeafSize = 16;

  struct Node {
    Eigen::Index begin, end;       // range in idx_
    int split_dim = -1;            // -1 for leaves
    double split_value = 0.0;
    Eigen::Index left = -1, right = -1;
    Vec box_lo, box_hi;
  };

  Eigen::Index build(Eigen::Index begin, Eigen::Index end) {
    const auto id = static_cast<Eigen::Index>(nodes_.size());
    nodes_.push_back({begin, end});
    {
      Vec lo = pts_.row(idx_[static_cast<std::size_t>(begin)]);
      Vec hi = lo;
      for (Eigen::Index t = begin + 1; t < end; ++t) {
        lo = lo.cwiseMin(pts_.row(idx_[static_cast<std::size_t>(t)]).transpose());
        hi = hi.cwiseMax(pts_.row(idx_[static_cast<std::size_t>(t)]).transpose());
      }
      nodes_[static_cast<std::size_t>(id)].box_lo = std::move(lo);
      nodes_[static_cast<std::size_t>(id)].box_hi = std::move(hi);
    }
    if (end - begin <= kLeafSize) return id;

    int dim = 0;
    double best_spread = -1.0;
    for (int d = 0; d < pts_.cols(); ++d) {
      double lo = kForbidden, hi = -kForbidden;
      for (Eigen::Index t = begin; t < end; ++t) {
        const double x = pts_(idx_[static_cast<std::size_t>(t)], d);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        dim = d;
      }
    }
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                     [&](Eigen::Index a, Eigen::Index b) { return pts_(a, dim) < pts_(b, dim); });
    nodes_[static_cast<std::size_t>(id)].split_dim = dim;
    nodes_[static_cast<std::size_t>(id)].split_value = pts_(idx_[static_cast<std::size_t>(mid)], dim);
    const Eigen::Index l = build(begin, mid);
    const Eigen::Index r = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(Eigen::Index node_id, const Vec& q, Eigen::Index k,
              std::priority_queue<std::pair<double, Eigen::Index>>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.split_dim < 0) {
      for (Eigen::Index t = node.begin; t < node.end; ++t) {
        const Eigen::Index p = idx_[static_cast<std::size_t>(t)];
        const double d2 = (pts_.row(p).transpose() - q).squaredNorm();
        if (static_cast<Eigen::Index>(heap.size()) < k) {
          heap.push({d2, -p});
        } else if (d2 < heap.top().first || (d2 == heap.top().first && -p < heap.top().second)) {
          heap.pop();
          heap.push({d2, -p});
        }
      }
      return;
    }
    const double delta = q[node.split_dim] - node.split_value;
    const Eigen::Index near = delta <= 0.0 ? node.left : node.right;
    const Eigen::Index far = delta <= 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    if (static_cast<Eigen::Index>(heap.size()) < k || delta * delta <= heap.top().first)
      search(far, q, k, heap);
  }

  double accumulate_max(Eigen::Index node_id, const Vec& values, std::vector<double>& node_max) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    double mx = -kForbidden;
    if (node.split_dim < 0) {
      for (Eigen::Index t = node.begin; t < node.end; ++t)
        mx = std::max(mx, values[idx_[static_cast<std::size_t>(t)]]);
    } else {
      mx = std::max(accumulate_max(node.left, values, node_max),
                    accumulate_max(node.right, values, node_max));
    }
    node_max[static_cast<std::size_t>(node_id)] = mx;
    return mx;
  }

  double box_sq_dist(const Node& node, const Vec& q) const {
    double d2 = 0.0;
    for (Eigen::Index d = 0; d < q.size(); ++d) {
      const double gap = std::max({0.0, node.box_lo[d] - q[d], q[d] - node.box_hi[d]});
      d2 += gap * gap;
    }
    return d2;
  }

  template <typename F>
  bool scan_node(Eigen::Index node_id, const Vec& q, const Vec& offsets,
                 const std::vector<double>& node_max, double threshold, F&& emit) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (box_sq_dist(node, q) - node_max[static_cast<std::size_t>(node_id)] >= threshold) return true;
    if (node.split_dim < 0) {
      for (Eigen::Index t = node.begin; t < node.end; ++t) {
        const Eigen::Index p = idx_[static_cast<std::size_t>(t)];
        const double val = (pts_.row(p).transpose() - q).squaredNorm() - offsets[p];
        if (val < threshold && !emit(p, val)) return false;
      }
      return true;
    }
    if (!scan_node(node.left, q, offsets, node_max, threshold, emit)) return false;
    return scan_node(node.right, q, offsets, node_max, threshold, emit);
  }

  Mat pts_;
  std::vector<Eigen::Index> idx_;
  std::vector<Node> nodes_;
  Eigen::Index root_ = 0;
};

}  // namespace condot
