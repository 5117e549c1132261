#pragma once

#include "condot/common.hpp"
#include "condot/transport.hpp"

#include <algorithm>
#include <vector>

namespace condot {

/// Solution of a balanced assignment problem with uniform marginals.
/// `cost` carries the 1/n weight: cost = (1/n) sum_i c(i, sigma[i]).
/// The duals satisfy u_i + v_j <= c_ij on finite entries with equality on
/// the assignment (unweighted convention; divide by n to match plan mass).
struct AssignmentResult {
  std::vector<Eigen::Index> sigma;
  double cost = 0.0;
  Vec row_duals;
  Vec col_duals;

  TransportPlan plan() const {
    return permutation_plan(sigma, 1.0 / static_cast<double>(sigma.size()));
  }
};

namespace detail {

/// Kuhn augmenting-path matching; returns true if every row in `rows` can be
/// matched into the adjacency `adj` given the current partial matching.
inline bool kuhn_try(Eigen::Index row, const std::vector<std::vector<Eigen::Index>>& adj,
                     std::vector<Eigen::Index>& match_col, std::vector<char>& visited) {
  for (Eigen::Index j : adj[static_cast<std::size_t>(row)]) {
    if (visited[static_cast<std::size_t>(j)]) continue;
    visited[static_cast<std::size_t>(j)] = 1;
    if (match_col[static_cast<std::size_t>(j)] < 0 ||
        kuhn_try(match_col[static_cast<std::size_t>(j)], adj, match_col, visited)) {
      match_col[static_cast<std::size_t>(j)] = row;
      return true;
    }
  }
  return false;
}

inline bool perfect_matching_exists(const std::vector<std::vector<Eigen::Index>>& adj,
                                    Eigen::Index n_cols,
                                    const std::vector<Eigen::Index>& fixed_cols) {
  std::vector<Eigen::Index> match_col(static_cast<std::size_t>(n_cols), -1);
  for (std::size_t r = 0; r < fixed_cols.size(); ++r)
    if (fixed_cols[r] >= 0) match_col[static_cast<std::size_t>(fixed_cols[r])] = static_cast<Eigen::Index>(r);
  std::vector<char> visited(static_cast<std::size_t>(n_cols), 0);
  for (std::size_t r = 0; r < adj.size(); ++r) {
    if (fixed_cols[r] >= 0) continue;
    std::fill(visited.begin(), visited.end(), 0);
    if (!kuhn_try(static_cast<Eigen::Index>(r), adj, match_col, visited)) return false;
  }
  return true;
}

/// Replaces sigma by the lexicographically smallest permutation supported on
/// the tight-edge graph of the optimal duals. Equally optimal permutations
/// are exactly the perfect matchings on tight edges, so the result keeps the
/// optimal cost. Skipped for large or pathologically dense tie structures.
inline void canonicalize_ties(const CostMatrix& c, AssignmentResult& r) {
  const Eigen::Index n = c.rows();
  if (n > 512) return;
  const double tol = 1e-12 * (1.0 + c.finite_scale());

  std::vector<std::vector<Eigen::Index>> adj(static_cast<std::size_t>(n));
  std::size_t edges = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double cij = c(i, j);
      if (is_forbidden(cij)) continue;
      if (cij - r.row_duals[i] - r.col_duals[j] <= tol || r.sigma[static_cast<std::size_t>(i)] == j)
        adj[static_cast<std::size_t>(i)].push_back(j);
    }
    edges += adj[static_cast<std::size_t>(i)].size();
  }
  if (edges == static_cast<std::size_t>(n)) return;  // unique optimum
  if (n > 32 && edges > static_cast<std::size_t>(4 * n)) return;

  std::vector<Eigen::Index> fixed(static_cast<std::size_t>(n), -1);
  std::vector<char> col_taken(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    bool found = false;
    for (Eigen::Index j : adj[static_cast<std::size_t>(i)]) {
      if (col_taken[static_cast<std::size_t>(j)]) continue;
      fixed[static_cast<std::size_t>(i)] = j;
      col_taken[static_cast<std::size_t>(j)] = 1;
      if (perfect_matching_exists(adj, n, fixed)) {
        found = true;
        break;
      }
      fixed[static_cast<std::size_t>(i)] = -1;
      col_taken[static_cast<std::size_t>(j)] = 0;
    }
    if (!found) return;  // numerically inconsistent tight graph; keep solver output
  }
  r.sigma.assign(fixed.begin(), fixed.end());
  KahanAccumulator acc;
  for (Eigen::Index i = 0; i < n; ++i) acc.add(c(i, r.sigma[static_cast<std::size_t>(i)]));
  r.cost = acc.value() / static_cast<double>(n);
}

}  // namespace detail

/// Exact solver for the balanced assignment problem by shortest augmenting
/// paths with dual potentials (Jonker-Volgenant family). Forbidden entries
/// are treated as absent edges; if no feasible permutation exists the search
/// runs out of reachable columns and an infeasible_error is thrown.
/// Ties between optimal permutations are broken lexicographically.
inline AssignmentResult solve_assignment(const CostMatrix& c) {
  require(c.rows() == c.cols(), "solve_assignment: non-square cost matrix");
  const Eigen::Index n = c.rows();
  require(n > 0, "solve_assignment: empty cost matrix");

  // 1-based with column 0 as the virtual source column.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<Eigen::Index> match(static_cast<std::size_t>(n) + 1, 0);  // column -> row (1-based)
  std::vector<Eigen::Index> way(static_cast<std::size_t>(n) + 1, 0);

  for (Eigen::Index i = 1; i <= n; ++i) {
    match[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kForbidden);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Eigen::Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = kForbidden;
      Eigen::Index j1 = -1;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cij = c(i0 - 1, j - 1);
        if (!is_forbidden(cij)) {
          const double cur = cij - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
          if (cur < minv[static_cast<std::size_t>(j)]) {
            minv[static_cast<std::size_t>(j)] = cur;
            way[static_cast<std::size_t>(j)] = j0;
          }
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      if (j1 < 0 || is_forbidden(delta))
        throw infeasible_error("solve_assignment: every completion hits a forbidden entry");
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else if (!is_forbidden(minv[static_cast<std::size_t>(j)])) {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult r;
  r.sigma.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 1; j <= n; ++j) r.sigma[static_cast<std::size_t>(match[static_cast<std::size_t>(j)]) - 1] = j - 1;
  r.row_duals = Vec(n);
  r.col_duals = Vec(n);
  for (Eigen::Index i = 0; i < n; ++i) r.row_duals[i] = u[static_cast<std::size_t>(i) + 1];
  for (Eigen::Index j = 0; j < n; ++j) r.col_duals[j] = v[static_cast<std::size_t>(j) + 1];
  KahanAccumulator acc;
  for (Eigen::Index i = 0; i < n; ++i) acc.add(c(i, r.sigma[static_cast<std::size_t>(i)]));
  r.cost = acc.value() / static_cast<double>(n);

  detail::canonicalize_ties(c, r);
  return r;
}

}  // namespace condot
