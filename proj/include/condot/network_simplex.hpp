#pragma once

#include "condot/common.hpp"
#include "condot/transport.hpp"

#include <utility>
#include <vector>

namespace condot {

struct LpResult {
  TransportPlan plan;
  double cost = 0.0;
  DualPotentials duals;  // feasible on finite entries, tight on the basis
};

/// Balanced transportation LP solved by network simplex on the bipartite
/// graph. The basis is a spanning tree over rows, columns and a virtual
/// root; artificial root arcs carry a big cost so that any positive
/// artificial flow left at optimality certifies infeasibility structurally
/// (forbidden entries are never priced, so the chi-cost's infinities stay
/// exact). Dantzig pricing with a Bland fallback against degenerate cycling.
inline LpResult solve_lp(const CostMatrix& c, const Vec& a, const Vec& b) {
  const Eigen::Index n = c.rows(), m = c.cols();
  require(a.size() == n && b.size() == m, "solve_lp: marginal size mismatch");
  require((a.array() >= 0).all() && (b.array() >= 0).all(), "solve_lp: negative weight");
  require(std::abs(a.sum() - b.sum()) <= 1e-12, "solve_lp: unbalanced marginals");

  const double scale = c.finite_scale();
  const double big = (scale + 1.0) * static_cast<double>(n + m) + 1.0;
  const double tol_rc = 1e-11 * (1.0 + scale);

  struct Arc {
    Eigen::Index from, to;  // node ids: rows 0..n-1, cols n..n+m-1, root n+m
    double cost, flow = 0.0;
    bool in_basis = false, artificial = false;
  };
  const Eigen::Index root = n + m;
  std::vector<Arc> arcs;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> real_idx;  // (i, j) -> arc index map
  Eigen::MatrixXi arc_of = Eigen::MatrixXi::Constant(n, m, -1);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (!is_forbidden(c(i, j))) {
        arc_of(i, j) = static_cast<int>(arcs.size());
        arcs.push_back({i, n + j, c(i, j)});
      }
  const std::size_t n_real = arcs.size();
  for (Eigen::Index i = 0; i < n; ++i) arcs.push_back({i, root, big, a[i], true, true});
  for (Eigen::Index j = 0; j < m; ++j) arcs.push_back({root, n + j, big, b[j], true, true});

  const std::size_t n_nodes = static_cast<std::size_t>(n + m + 1);
  std::vector<double> potential(n_nodes, 0.0);
  std::vector<std::vector<std::size_t>> basis_adj(n_nodes);

  auto rebuild = [&]() {
    for (auto& adj : basis_adj) adj.clear();
    for (std::size_t e = 0; e < arcs.size(); ++e)
      if (arcs[e].in_basis) {
        basis_adj[static_cast<std::size_t>(arcs[e].from)].push_back(e);
        basis_adj[static_cast<std::size_t>(arcs[e].to)].push_back(e);
      }
    // potentials from the root along the basis tree
    std::vector<char> seen(n_nodes, 0);
    std::vector<Eigen::Index> stack{root};
    potential[static_cast<std::size_t>(root)] = 0.0;
    seen[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      const Eigen::Index v = stack.back();
      stack.pop_back();
      for (std::size_t e : basis_adj[static_cast<std::size_t>(v)]) {
        const Arc& arc = arcs[e];
        const Eigen::Index w = (arc.from == v) ? arc.to : arc.from;
        if (seen[static_cast<std::size_t>(w)]) continue;
        seen[static_cast<std::size_t>(w)] = 1;
        potential[static_cast<std::size_t>(w)] = (arc.from == v)
                                                     ? potential[static_cast<std::size_t>(v)] + arc.cost
                                                     : potential[static_cast<std::size_t>(v)] - arc.cost;
        stack.push_back(w);
      }
    }
  };
  rebuild();

  // Path from node to the root in the current basis tree.
  auto path_to_root = [&](Eigen::Index start) {
    std::vector<std::size_t> parent_arc(n_nodes, SIZE_MAX);
    std::vector<Eigen::Index> parent(n_nodes, -1);
    std::vector<char> seen(n_nodes, 0);
    std::vector<Eigen::Index> stack{root};
    seen[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      const Eigen::Index v = stack.back();
      stack.pop_back();
      for (std::size_t e : basis_adj[static_cast<std::size_t>(v)]) {
        const Eigen::Index w = (arcs[e].from == v) ? arcs[e].to : arcs[e].from;
        if (seen[static_cast<std::size_t>(w)]) continue;
        seen[static_cast<std::size_t>(w)] = 1;
        parent[static_cast<std::size_t>(w)] = v;
        parent_arc[static_cast<std::size_t>(w)] = e;
        stack.push_back(w);
      }
    }
    std::vector<std::size_t> path;
    for (Eigen::Index v = start; v != root; v = parent[static_cast<std::size_t>(v)])
      path.push_back(parent_arc[static_cast<std::size_t>(v)]);
    return path;
  };

  long degenerate_streak = 0;
  bool bland = false;
  const long max_pivots = 2000L * static_cast<long>(n + m) * static_cast<long>(n + m) + 10000L;
  for (long pivot = 0;; ++pivot) {
    if (pivot > max_pivots) throw numerical_error("solve_lp: pivot limit exceeded");

    // entering arc among real non-basis arcs
    std::size_t enter = SIZE_MAX;
    double best_rc = -tol_rc;
    for (std::size_t e = 0; e < n_real; ++e) {
      if (arcs[e].in_basis) continue;
      const double rc = arcs[e].cost - (potential[static_cast<std::size_t>(arcs[e].to)] -
                                        potential[static_cast<std::size_t>(arcs[e].from)]);
      if (rc < best_rc) {
        enter = e;
        best_rc = rc;
        if (bland) break;
      }
    }
    if (enter == SIZE_MAX) break;  // optimal

    // unique cycle: entering arc forward, then tree path from its head back
    // to its tail. Orientation bookkeeping: +1 means the arc gains flow.
    std::vector<std::pair<std::size_t, int>> cycle{{enter, +1}};
    const auto up_from = path_to_root(arcs[enter].to);
    const auto up_to = path_to_root(arcs[enter].from);
    // strip the shared tail towards the root
    std::size_t sf = up_from.size(), st = up_to.size();
    while (sf > 0 && st > 0 && up_from[sf - 1] == up_to[st - 1]) {
      --sf;
      --st;
    }
    Eigen::Index v = arcs[enter].to;
    for (std::size_t k = 0; k < sf; ++k) {
      const std::size_t e = up_from[k];
      const int dir = (arcs[e].to == v) ? -1 : +1;  // moving v -> parent
      cycle.push_back({e, dir});
      v = (arcs[e].from == v) ? arcs[e].to : arcs[e].from;
    }
    std::vector<std::pair<std::size_t, int>> down;
    v = arcs[enter].from;
    for (std::size_t k = 0; k < st; ++k) {
      const std::size_t e = up_to[k];
      const int dir = (arcs[e].to == v) ? +1 : -1;  // traversed parent -> v in cycle order
      down.push_back({e, dir});
      v = (arcs[e].from == v) ? arcs[e].to : arcs[e].from;
    }
    for (auto it = down.rbegin(); it != down.rend(); ++it) cycle.push_back(*it);

    double t = kForbidden;
    std::size_t leave = SIZE_MAX;
    for (const auto& [e, dir] : cycle) {
      if (dir < 0 && (arcs[e].flow < t || (arcs[e].flow == t && e < leave))) {
        t = arcs[e].flow;
        leave = e;
      }
    }
    if (leave == SIZE_MAX) throw numerical_error("solve_lp: unbounded pivot cycle");

    for (const auto& [e, dir] : cycle) arcs[e].flow += dir * t;
    arcs[enter].in_basis = true;
    arcs[leave].in_basis = false;
    arcs[leave].flow = 0.0;
    rebuild();

    degenerate_streak = (t == 0.0) ? degenerate_streak + 1 : 0;
    if (degenerate_streak > static_cast<long>(4 * n_nodes)) bland = true;
  }

  const double mass_tol = 1e-12 * (1.0 + a.sum());
  for (std::size_t e = n_real; e < arcs.size(); ++e)
    if (arcs[e].flow > mass_tol)
      throw infeasible_error("solve_lp: no feasible plan on finite-cost entries");

  Mat x = Mat::Zero(n, m);
  KahanAccumulator acc;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (arc_of(i, j) >= 0) {
        const double f = arcs[static_cast<std::size_t>(arc_of(i, j))].flow;
        x(i, j) = f;
        if (f != 0.0) acc.add(f * c(i, j));
      }

  LpResult out;
  out.plan = matrix_plan(std::move(x), a, b);
  out.cost = acc.value();
  out.duals.psi = Vec(n);
  out.duals.phi = Vec(m);
  for (Eigen::Index i = 0; i < n; ++i) out.duals.psi[i] = potential[static_cast<std::size_t>(i)];
  for (Eigen::Index j = 0; j < m; ++j) out.duals.phi[j] = potential[static_cast<std::size_t>(n + j)];
  return out;
}

}  // namespace condot
