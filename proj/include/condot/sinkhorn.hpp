#pragma once

#include "condot/common.hpp"
#include "condot/transport.hpp"

namespace condot {

struct SinkhornResult {
  TransportPlan plan;        // rounded onto the transport polytope
  double cost = 0.0;
  double residual = 0.0;     // pre-rounding L1 marginal violation at the last iterate
  int iterations = 0;
  bool converged = false;    // residual <= tol within max_iters
};

/// Entropically regularized transport by Sinkhorn iteration in the log
/// domain (stable down to reg ~ 1e-3 on O(1) costs). The alternating
/// iteration converges linearly with a factor that degrades as reg shrinks,
/// so the last iterate is rounded onto the feasible polytope (row/column
/// rescaling plus a rank-one correction); the returned plan satisfies the
/// marginal constraints to round-off regardless of the achieved residual,
/// which is reported alongside a convergence flag.
inline SinkhornResult solve_sinkhorn(const CostMatrix& c, const Vec& a, const Vec& b,
                                     double entropic_reg, int max_iters = 50000,
                                     double tol = 1e-6) {
  const Eigen::Index n = c.rows(), m = c.cols();
  require(a.size() == n && b.size() == m, "solve_sinkhorn: marginal size mismatch");
  require(entropic_reg > 0.0, "solve_sinkhorn: entropic_reg must be positive");
  require(all_finite(c.entries), "solve_sinkhorn: cost matrix must be finite");
  require((a.array() > 0).all() && (b.array() > 0).all(),
          "solve_sinkhorn: marginals must be strictly positive");

  const Mat neg_c_over_reg = -c.entries / entropic_reg;
  const Vec log_a = a.array().log().matrix();
  const Vec log_b = b.array().log().matrix();
  Vec f = Vec::Zero(n), g = Vec::Zero(m);

  auto logsumexp_rows = [](const Mat& mat) -> Vec {
    const Vec mx = mat.rowwise().maxCoeff();
    return (mx.array() + (mat.colwise() - mx).array().exp().rowwise().sum().log()).matrix();
  };
  auto assemble = [&]() -> Mat { return (neg_c_over_reg.colwise() + f).rowwise() + g.transpose(); };

  SinkhornResult out;
  out.residual = kForbidden;
  for (int it = 1; it <= max_iters; ++it) {
    f += log_a - logsumexp_rows(assemble());
    g += log_b - logsumexp_rows(assemble().transpose());
    out.iterations = it;
    if (it % 10 == 0 || it == max_iters) {
      const Mat plan = assemble().array().exp();
      out.residual = (plan.rowwise().sum() - a).cwiseAbs().sum() +
                     (plan.colwise().sum().transpose() - b).cwiseAbs().sum();
      if (out.residual <= tol) {
        out.converged = true;
        break;
      }
    }
  }

  // Round onto the polytope: shrink overfull rows/columns, then repair the
  // remaining deficit with a rank-one term.
  Mat plan = assemble().array().exp();
  if (!out.converged) {
    out.residual = (plan.rowwise().sum() - a).cwiseAbs().sum() +
                   (plan.colwise().sum().transpose() - b).cwiseAbs().sum();
  }
  const Vec row_scale = (a.array() / plan.rowwise().sum().array()).min(1.0);
  plan = row_scale.asDiagonal() * plan;
  const Vec col_scale = (b.array() / plan.colwise().sum().transpose().array()).min(1.0);
  plan = plan * col_scale.asDiagonal();
  const Vec err_a = a - plan.rowwise().sum();
  const Vec err_b = b - plan.colwise().sum().transpose();
  const double deficit = err_a.sum();
  if (deficit > 0.0) plan += (err_a / deficit) * err_b.transpose();

  out.plan = matrix_plan(plan, a, b);
  out.cost = (plan.array() * c.entries.array()).sum();
  return out;
}

}  // namespace condot
