#pragma once

#include "condot/common.hpp"
#include "condot/transport.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace condot {

/// Exhaustive minimum over all permutations of a square cost matrix with
/// uniform marginals 1/n. Test oracle; n <= 8.
inline double brute_force_assignment(const CostMatrix& c) {
  require(c.rows() == c.cols(), "brute_force_assignment: non-square input");
  const Eigen::Index n = c.rows();
  require(n >= 1 && n <= 8, "brute_force_assignment: instance too large");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = kForbidden;
  do {
    KahanAccumulator acc;
    bool feasible = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double cij = c(i, perm[static_cast<std::size_t>(i)]);
      if (is_forbidden(cij)) {
        feasible = false;
        break;
      }
      acc.add(cij);
    }
    if (feasible) best = std::min(best, acc.value() / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (is_forbidden(best))
    throw infeasible_error("brute_force_assignment: every permutation hits a forbidden entry");
  return best;
}

namespace detail {

/// Flow on a spanning tree of the bipartite transportation graph is uniquely
/// determined by the marginals; solved by repeated leaf elimination.
/// Returns false if the edge set is not a spanning tree or a flow is
/// negative beyond round-off.
inline bool tree_flow(const std::vector<std::pair<Eigen::Index, Eigen::Index>>& edges,
                      Vec supplies, Vec demands, std::vector<double>& flows) {
  const Eigen::Index n = supplies.size(), m = demands.size();
  const std::size_t total = static_cast<std::size_t>(n + m);
  std::vector<std::vector<std::size_t>> incident(total);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    incident[static_cast<std::size_t>(edges[e].first)].push_back(e);
    incident[static_cast<std::size_t>(n + edges[e].second)].push_back(e);
  }
  flows.assign(edges.size(), 0.0);
  std::vector<char> edge_done(edges.size(), 0), node_done(total, 0);
  std::vector<int> degree(total);
  for (std::size_t v = 0; v < total; ++v) degree[v] = static_cast<int>(incident[v].size());

  std::vector<std::size_t> leaves;
  for (std::size_t v = 0; v < total; ++v)
    if (degree[v] == 1) leaves.push_back(v);

  std::size_t processed = 0;
  while (!leaves.empty()) {
    const std::size_t v = leaves.back();
    leaves.pop_back();
    if (node_done[v] || degree[v] != 1) continue;
    std::size_t e = 0;
    bool found = false;
    for (std::size_t cand : incident[v])
      if (!edge_done[cand]) {
        e = cand;
        found = true;
        break;
      }
    if (!found) return false;
    const bool is_row = v < static_cast<std::size_t>(n);
    const double residual = is_row ? supplies[static_cast<Eigen::Index>(v)]
                                   : demands[static_cast<Eigen::Index>(v - static_cast<std::size_t>(n))];
    flows[e] = residual;
    if (residual < -1e-9) return false;
    const std::size_t other = (v == static_cast<std::size_t>(edges[e].first))
                                  ? static_cast<std::size_t>(n + edges[e].second)
                                  : static_cast<std::size_t>(edges[e].first);
    if (other < static_cast<std::size_t>(n))
      supplies[static_cast<Eigen::Index>(other)] -= residual;
    else
      demands[static_cast<Eigen::Index>(other - static_cast<std::size_t>(n))] -= residual;
    edge_done[e] = 1;
    node_done[v] = 1;
    ++processed;
    if (--degree[other] == 1) leaves.push_back(other);
    degree[v] = 0;
  }
  return processed == edges.size();
}

}  // namespace detail

namespace detail {

/// Minimum over flows on spanning trees of one connected block.
inline double enumerate_trees(const std::vector<std::pair<Eigen::Index, Eigen::Index>>& all_edges,
                              const Vec& a, const Vec& b, const CostMatrix& c,
                              Eigen::Index n_nodes_rows, Eigen::Index n_nodes_cols) {
  const std::size_t tree_size = static_cast<std::size_t>(n_nodes_rows + n_nodes_cols - 1);
  if (tree_size == 0 || all_edges.size() < tree_size) return kForbidden;

  double best = kForbidden;
  std::vector<std::size_t> pick(tree_size);
  std::iota(pick.begin(), pick.end(), 0);
  std::vector<double> flows;
  while (true) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
    edges.reserve(tree_size);
    for (std::size_t p : pick) edges.push_back(all_edges[p]);
    if (tree_flow(edges, a, b, flows)) {
      KahanAccumulator acc;
      bool ok = true;
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (flows[e] < -1e-9) {
          ok = false;
          break;
        }
        acc.add(std::max(flows[e], 0.0) * c(edges[e].first, edges[e].second));
      }
      if (ok) best = std::min(best, acc.value());
    }
    std::size_t k = tree_size;
    bool done = false;
    while (k > 0) {
      --k;
      if (pick[k] != all_edges.size() - tree_size + k) break;
      if (k == 0) done = true;
    }
    if (done) return best;
    ++pick[k];
    for (std::size_t t = k + 1; t < tree_size; ++t) pick[t] = pick[t - 1] + 1;
  }
}

}  // namespace detail

/// Exact optimum of a small balanced transportation LP by enumerating the
/// vertices of the feasible polytope (flows on spanning trees of the
/// bipartite graph, per connected component of the finite-cost edges, so
/// chi-cost block structures are handled). Test oracle; n*m <= 20.
inline double brute_force_transport(const CostMatrix& c, const Vec& a, const Vec& b) {
  const Eigen::Index n = c.rows(), m = c.cols();
  require(a.size() == n && b.size() == m, "brute_force_transport: marginal size mismatch");
  require(std::abs(a.sum() - b.sum()) < 1e-12, "brute_force_transport: unbalanced marginals");
  require(n * m <= 20, "brute_force_transport: instance too large");

  // Union-find over rows (0..n-1) and columns (n..n+m-1).
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(n + m));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](Eigen::Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (!is_forbidden(c(i, j))) parent[static_cast<std::size_t>(find(i))] = find(n + j);

  KahanAccumulator total;
  std::vector<Eigen::Index> roots;
  for (Eigen::Index v = 0; v < n + m; ++v) {
    const Eigen::Index r = find(v);
    if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
  }
  for (Eigen::Index root : roots) {
    std::vector<Eigen::Index> comp_rows, comp_cols;
    for (Eigen::Index i = 0; i < n; ++i)
      if (find(i) == root) comp_rows.push_back(i);
    for (Eigen::Index j = 0; j < m; ++j)
      if (find(n + j) == root) comp_cols.push_back(j);
    double mass_a = 0.0, mass_b = 0.0;
    for (Eigen::Index i : comp_rows) mass_a += a[i];
    for (Eigen::Index j : comp_cols) mass_b += b[j];
    if (std::abs(mass_a - mass_b) > 1e-12)
      throw infeasible_error("brute_force_transport: unbalanced component of finite entries");
    if (comp_rows.empty() || comp_cols.empty()) continue;  // weightless isolated nodes

    // Local subproblem on the component.
    CostMatrix sub;
    sub.entries = Mat(static_cast<Eigen::Index>(comp_rows.size()), static_cast<Eigen::Index>(comp_cols.size()));
    Vec sa(static_cast<Eigen::Index>(comp_rows.size())), sb(static_cast<Eigen::Index>(comp_cols.size()));
    for (std::size_t i = 0; i < comp_rows.size(); ++i) {
      sa[static_cast<Eigen::Index>(i)] = a[comp_rows[i]];
      for (std::size_t j = 0; j < comp_cols.size(); ++j)
        sub.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c(comp_rows[i], comp_cols[j]);
    }
    for (std::size_t j = 0; j < comp_cols.size(); ++j) sb[static_cast<Eigen::Index>(j)] = b[comp_cols[j]];

    std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
    for (Eigen::Index i = 0; i < sub.rows(); ++i)
      for (Eigen::Index j = 0; j < sub.cols(); ++j)
        if (!is_forbidden(sub(i, j))) edges.push_back({i, j});
    const double opt = detail::enumerate_trees(edges, sa, sb, sub, sub.rows(), sub.cols());
    if (is_forbidden(opt))
      throw infeasible_error("brute_force_transport: no feasible basic solution in component");
    total.add(opt);
  }
  return total.value();
}

}  // namespace condot
