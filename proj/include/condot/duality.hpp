#pragma once

#include "condot/common.hpp"
#include "condot/transport.hpp"

#include <vector>

namespace condot {

/// Recovers feasible dual potentials for an optimal plan from complementary
/// slackness, by shortest paths in the residual graph: every finite-cost
/// pair (i, j) gives an arc i -> j of length c_ij, every support pair gives
/// the reverse arc j -> i of length -c_ij. The plan is optimal iff this
/// graph has no negative cycle; in that case the distances from any source
/// produce tight potentials on the support. A duality gap beyond tolerance
/// reports a non-optimal plan.
inline DualPotentials extract_duals(const CostMatrix& c, const TransportPlan& plan,
                                    double gap_tol = 1e-8) {
  const Eigen::Index n = c.rows(), m = c.cols();
  require(plan.rows() == n && plan.cols() == m, "extract_duals: shape mismatch");

  const double primal = plan_cost(c, plan);
  require(!is_forbidden(primal), "extract_duals: plan puts mass on a forbidden entry");
  const double support_tol = 0.0;  // strict: any positive mass counts as support

  // Bellman-Ford over n+m nodes from a virtual source connected to all rows
  // with zero-length arcs.
  const std::size_t nn = static_cast<std::size_t>(n + m);
  std::vector<double> dist(nn, 0.0);  // virtual source: dist 0 to every row and column
  bool changed = true;
  for (Eigen::Index pass = 0; pass <= n + m && changed; ++pass) {
    changed = false;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        const double cij = c(i, j);
        if (is_forbidden(cij)) continue;
        const std::size_t si = static_cast<std::size_t>(i), sj = static_cast<std::size_t>(n + j);
        if (dist[si] + cij < dist[sj] - 1e-15) {
          dist[sj] = dist[si] + cij;
          changed = true;
        }
        if (plan.mass(i, j) > support_tol && dist[sj] - cij < dist[si] - 1e-15) {
          dist[si] = dist[sj] - cij;
          changed = true;
        }
      }
    if (pass == n + m && changed)
      throw std::invalid_argument("extract_duals: plan is not optimal (improving cycle found)");
  }

  DualPotentials d;
  d.psi = Vec(n);
  d.phi = Vec(m);
  for (Eigen::Index i = 0; i < n; ++i) d.psi[i] = dist[static_cast<std::size_t>(i)];
  for (Eigen::Index j = 0; j < m; ++j) d.phi[j] = dist[static_cast<std::size_t>(n + j)];

  const double dual = d.value(plan.row_weights, plan.col_weights);
  if (std::abs(primal - dual) > gap_tol * (1.0 + std::abs(primal)))
    throw std::invalid_argument("extract_duals: irreducible duality gap; plan is not optimal");
  return d;
}

}  // namespace condot
