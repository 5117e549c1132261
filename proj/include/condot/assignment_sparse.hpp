#pragma once
#include <memory>

#include "condot/assignment.hpp"
#include "condot/common.hpp"
#include "condot/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <vector>

namespace condot {

/// Candidate-edge bipartite graph in CSR layout; costs must be nonnegative.
struct SparseCostGraph {
  Eigen::Index n = 0;               // rows == columns
  std::vector<std::size_t> row_ptr;  // n + 1
  std::vector<Eigen::Index> col;
  std::vector<double> cost;
};

/// Exact assignment on a sparse candidate graph by successive shortest
/// augmenting paths with dual potentials (heap Dijkstra over reduced costs).
/// Throws infeasible_error when the candidate graph admits no perfect
/// matching. The duals are feasible on every candidate edge and tight on
/// the matching, which is the certificate used for column generation.
inline AssignmentResult solve_assignment_sparse(const SparseCostGraph& g) {
  const Eigen::Index n = g.n;
  require(n > 0, "solve_assignment_sparse: empty graph");

  std::vector<double> u(static_cast<std::size_t>(n), 0.0), v(static_cast<std::size_t>(n), 0.0);
  std::vector<Eigen::Index> row_match(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> col_match(static_cast<std::size_t>(n), -1);

  // Row reduction keeps reduced costs nonnegative from the start and a
  // greedy pass matches rows whose cheapest column is still free.
  for (Eigen::Index i = 0; i < n; ++i) {
    double mn = kForbidden;
    for (std::size_t e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e)
      mn = std::min(mn, g.cost[e]);
    if (is_forbidden(mn)) throw infeasible_error("solve_assignment_sparse: row without candidates");
    u[static_cast<std::size_t>(i)] = mn;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
      const Eigen::Index j = g.col[e];
      if (col_match[static_cast<std::size_t>(j)] < 0 &&
          g.cost[e] - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)] <= 0.0) {
        col_match[static_cast<std::size_t>(j)] = i;
        row_match[static_cast<std::size_t>(i)] = j;
        break;
      }
    }
  }

  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<char> finalized(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> row_from_col(static_cast<std::size_t>(n));
  using HeapItem = std::pair<double, Eigen::Index>;

  for (Eigen::Index r = 0; r < n; ++r) {
    if (row_match[static_cast<std::size_t>(r)] >= 0) continue;

    std::fill(dist.begin(), dist.end(), kForbidden);
    std::fill(finalized.begin(), finalized.end(), 0);
    std::fill(row_from_col.begin(), row_from_col.end(), -1);
    std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<HeapItem>> heap;

    for (std::size_t e = g.row_ptr[static_cast<std::size_t>(r)]; e < g.row_ptr[static_cast<std::size_t>(r) + 1]; ++e) {
      const Eigen::Index j = g.col[e];
      const double slack = g.cost[e] - u[static_cast<std::size_t>(r)] - v[static_cast<std::size_t>(j)];
      if (slack < dist[static_cast<std::size_t>(j)]) {
        dist[static_cast<std::size_t>(j)] = slack;
        row_from_col[static_cast<std::size_t>(j)] = r;
        heap.push({slack, j});
      }
    }

    Eigen::Index free_col = -1;
    double free_dist = kForbidden;
    while (!heap.empty()) {
      const auto [d, j] = heap.top();
      heap.pop();
      if (finalized[static_cast<std::size_t>(j)] || d > dist[static_cast<std::size_t>(j)]) continue;
      finalized[static_cast<std::size_t>(j)] = 1;
      if (col_match[static_cast<std::size_t>(j)] < 0) {
        free_col = j;
        free_dist = d;
        break;
      }
      const Eigen::Index i2 = col_match[static_cast<std::size_t>(j)];
      for (std::size_t e = g.row_ptr[static_cast<std::size_t>(i2)]; e < g.row_ptr[static_cast<std::size_t>(i2) + 1]; ++e) {
        const Eigen::Index j2 = g.col[e];
        if (finalized[static_cast<std::size_t>(j2)]) continue;
        const double nd = d + g.cost[e] - u[static_cast<std::size_t>(i2)] - v[static_cast<std::size_t>(j2)];
        if (nd < dist[static_cast<std::size_t>(j2)]) {
          dist[static_cast<std::size_t>(j2)] = nd;
          row_from_col[static_cast<std::size_t>(j2)] = i2;
          heap.push({nd, j2});
        }
      }
    }
    if (free_col < 0)
      throw infeasible_error("solve_assignment_sparse: no augmenting path in candidate graph");

    // dual update keeps feasibility and makes the augmenting path tight
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!finalized[static_cast<std::size_t>(j)] || j == free_col) continue;
      const double dj = dist[static_cast<std::size_t>(j)];
      v[static_cast<std::size_t>(j)] += dj - free_dist;
      const Eigen::Index mi = col_match[static_cast<std::size_t>(j)];
      if (mi >= 0) u[static_cast<std::size_t>(mi)] += free_dist - dj;
    }
    u[static_cast<std::size_t>(r)] += free_dist;

    // augment along parent pointers
    Eigen::Index j = free_col;
    while (j >= 0) {
      const Eigen::Index i2 = row_from_col[static_cast<std::size_t>(j)];
      const Eigen::Index jprev = row_match[static_cast<std::size_t>(i2)];
      row_match[static_cast<std::size_t>(i2)] = j;
      col_match[static_cast<std::size_t>(j)] = i2;
      j = jprev;
    }
  }

  AssignmentResult out;
  out.sigma.assign(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i) out.sigma[static_cast<std::size_t>(i)] = row_match[static_cast<std::size_t>(i)];
  out.row_duals = Eigen::Map<Vec>(u.data(), n);
  out.col_duals = Eigen::Map<Vec>(v.data(), n);
  KahanAccumulator acc;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = out.sigma[static_cast<std::size_t>(i)];
    bool found = false;
    for (std::size_t e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e)
      if (g.col[e] == j) {
        acc.add(g.cost[e]);
        found = true;
        break;
      }
    require(found, "solve_assignment_sparse: internal matching error");
  }
  out.cost = acc.value() / static_cast<double>(n);
  return out;
}

/// Blockwise squared Euclidean distances ||a_i - b_j||^2, clamped at zero.
inline Mat pairwise_sq_dists(const Mat& a_block, const Mat& b) {
  Mat d = (-2.0 * a_block * b.transpose()).colwise() + a_block.rowwise().squaredNorm();
  d.rowwise() += b.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

struct GeometricAssignmentOptions {
  int k_candidates = 48;        // initial nearest-neighbour candidates per row
  int k_max = 4096;             // feasibility expansion cap
  int max_generation_rounds = 25;
  int violated_per_row = 24;    // violated edges adopted per row per round
  double violation_tol = 1e-9;  // relative dual-feasibility tolerance
  bool include_diagonal = true; // always keep edge (i, i); makes matched
                                // pair_reference instances feasible from round one
  bool certify = true;          // run the all-pairs dual check (O(n^2 d) per round)
  Eigen::Index block_rows = 512;
};

struct GeometricAssignmentResult {
  AssignmentResult assignment;
  int generation_rounds = 0;
  bool certified = false;   // dual feasibility verified over all pairs
  double worst_violation = 0.0;
};

/// Assignment between point clouds under squared Euclidean cost at scales
/// where the dense matrix does not fit: solve on k-nearest-neighbour
/// candidate edges (k-d tree in low dimension, blocked matrix products
/// otherwise), then verify the LP optimality certificate (dual feasibility
/// over all n^2 pairs) and add violated edges until it holds. The result is
/// the exact optimum once `certified` is set; with certify = false it is the
/// optimum over the candidate graph only.
inline GeometricAssignmentResult solve_assignment_geometric(const Mat& ref_pts, const Mat& tgt_pts,
                                                            const GeometricAssignmentOptions& opt = {}) {
  require(ref_pts.rows() == tgt_pts.rows(), "solve_assignment_geometric: sizes differ");
  require(ref_pts.cols() == tgt_pts.cols(), "solve_assignment_geometric: dimensions differ");
  const Eigen::Index n = ref_pts.rows();

  std::vector<std::vector<Eigen::Index>> adj(static_cast<std::size_t>(n));
  const bool low_dim = ref_pts.cols() <= 8;
  KdTree* tree = nullptr;
  std::unique_ptr<KdTree> tree_holder;
  if (low_dim) {
    tree_holder = std::make_unique<KdTree>(tgt_pts);
    tree = tree_holder.get();
  }

  auto add_knn = [&](int k) {
    const auto kk = static_cast<Eigen::Index>(std::min<std::int64_t>(k, n));
    if (low_dim) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto nb = tree->knn(ref_pts.row(i), kk);
        auto& lst = adj[static_cast<std::size_t>(i)];
        for (const auto& x : nb) lst.push_back(x.index);
      }
    } else {
      std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
      for (Eigen::Index i0 = 0; i0 < n; i0 += opt.block_rows) {
        const Eigen::Index rows = std::min(opt.block_rows, n - i0);
        const Mat d = pairwise_sq_dists(ref_pts.middleRows(i0, rows), tgt_pts);
        for (Eigen::Index r = 0; r < rows; ++r) {
          std::iota(order.begin(), order.end(), 0);
          std::nth_element(order.begin(), order.begin() + (kk - 1), order.end(),
                           [&](Eigen::Index a, Eigen::Index b) { return d(r, a) < d(r, b); });
          auto& lst = adj[static_cast<std::size_t>(i0 + r)];
          lst.insert(lst.end(), order.begin(), order.begin() + kk);
        }
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& lst = adj[static_cast<std::size_t>(i)];
      if (opt.include_diagonal) lst.push_back(i);
      std::sort(lst.begin(), lst.end());
      lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
    }
  };
  add_knn(opt.k_candidates);

  auto build_graph = [&]() {
    SparseCostGraph g;
    g.n = n;
    g.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    for (Eigen::Index i = 0; i < n; ++i)
      g.row_ptr[static_cast<std::size_t>(i) + 1] =
          g.row_ptr[static_cast<std::size_t>(i)] + adj[static_cast<std::size_t>(i)].size();
    g.col.resize(g.row_ptr.back());
    g.cost.resize(g.row_ptr.back());
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t e = g.row_ptr[static_cast<std::size_t>(i)];
      for (Eigen::Index j : adj[static_cast<std::size_t>(i)]) {
        g.col[e] = j;
        g.cost[e] = (ref_pts.row(i) - tgt_pts.row(j)).squaredNorm();
        ++e;
      }
    }
    return g;
  };

  GeometricAssignmentResult out;
  int k_now = opt.k_candidates;
  for (int round = 1; round <= opt.max_generation_rounds; ++round) {
    out.generation_rounds = round;
    AssignmentResult sol;
    try {
      sol = solve_assignment_sparse(build_graph());
    } catch (const infeasible_error&) {
      if (k_now >= std::min<std::int64_t>(opt.k_max, n)) throw;
      k_now = static_cast<int>(std::min<std::int64_t>(2LL * k_now, std::min<std::int64_t>(opt.k_max, n)));
      add_knn(k_now);
      continue;
    }

    if (!opt.certify) {
      out.assignment = std::move(sol);
      return out;
    }

    // verify the certificate: c_ij - u_i - v_j >= -tol for every pair;
    // adopt the most violated columns per row
    const double scale = 1.0 + std::max(std::abs(sol.row_duals.maxCoeff()), std::abs(sol.col_duals.maxCoeff()));
    const double tol = opt.violation_tol * scale;
    double worst = 0.0;
    bool added = false;
    std::vector<std::pair<double, Eigen::Index>> viol;
    auto adopt_row = [&](Eigen::Index row) {
      if (viol.empty()) return;
      added = true;
      const auto keep = std::min<std::size_t>(viol.size(), static_cast<std::size_t>(opt.violated_per_row));
      std::partial_sort(viol.begin(), viol.begin() + static_cast<std::ptrdiff_t>(keep), viol.end());
      worst = std::max(worst, sol.row_duals[row] - viol.front().first);
      auto& lst = adj[static_cast<std::size_t>(row)];
      for (std::size_t t = 0; t < keep; ++t) lst.push_back(viol[t].second);
      std::sort(lst.begin(), lst.end());
      lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
    };
    if (low_dim) {
      // per row, report columns with ||a_i - b_j||^2 - v_j < u_i - tol via
      // bound-pruned tree scan instead of the O(n^2) sweep
      const auto node_max = tree->subtree_max(sol.col_duals);
      for (Eigen::Index i = 0; i < n; ++i) {
        viol.clear();
        std::size_t hits = 0;
        tree->scan_offset_below(ref_pts.row(i), sol.col_duals, node_max,
                                sol.row_duals[i] - tol, [&](Eigen::Index j, double val) {
                                  viol.push_back({val, j});
                                  return ++hits < 512;
                                });
        adopt_row(i);
      }
    } else {
      for (Eigen::Index i0 = 0; i0 < n; i0 += opt.block_rows) {
        const Eigen::Index rows = std::min(opt.block_rows, n - i0);
        Mat slack = pairwise_sq_dists(ref_pts.middleRows(i0, rows), tgt_pts);
        slack.colwise() -= sol.row_duals.segment(i0, rows);
        slack.rowwise() -= sol.col_duals.transpose();
        for (Eigen::Index r = 0; r < rows; ++r) {
          viol.clear();
          for (Eigen::Index j = 0; j < n; ++j)
            if (slack(r, j) < -tol) viol.push_back({slack(r, j) + sol.row_duals[i0 + r], j});
          adopt_row(i0 + r);
        }
      }
    }
    out.assignment = std::move(sol);
    out.worst_violation = worst;
    if (!added) {
      out.certified = true;
      return out;
    }
  }
  return out;  // uncertified after round cap; assignment is best-on-candidates
}

}  // namespace condot
