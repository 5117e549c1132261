#pragma once

#include "condot/common.hpp"

#include <limits>
#include <vector>

namespace condot {

/// Marker for structurally disallowed pairings (the infinite penalty of the
/// chi-cost). Kept as +infinity so feasibility is decided structurally and
/// no large-but-finite surrogate ever leaks into cost arithmetic.
inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

inline bool is_forbidden(double c) { return c == kForbidden; }

/// Pairwise cost matrix between reference atoms (rows) and target atoms
/// (columns). Entries are finite costs or the forbidden sentinel.
struct CostMatrix {
  Mat entries;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries(i, j); }

  /// Largest absolute finite entry; 0 for an all-forbidden matrix.
  double finite_scale() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < rows(); ++i)
      for (Eigen::Index j = 0; j < cols(); ++j)
        if (!is_forbidden(entries(i, j))) s = std::max(s, std::abs(entries(i, j)));
    return s;
  }

  bool has_forbidden() const {
    for (Eigen::Index i = 0; i < rows(); ++i)
      for (Eigen::Index j = 0; j < cols(); ++j)
        if (is_forbidden(entries(i, j))) return true;
    return false;
  }
};

inline CostMatrix make_cost_matrix(Mat entries) {
  for (Eigen::Index i = 0; i < entries.rows(); ++i)
    for (Eigen::Index j = 0; j < entries.cols(); ++j)
      require(!std::isnan(entries(i, j)) && (entries(i, j) != -kForbidden),
              "cost matrix entries must be finite or the forbidden sentinel");
  return CostMatrix{std::move(entries)};
}

/// Coupling between two discrete measures, either as a permutation (equal
/// sizes, uniform marginals) or as a dense nonnegative matrix.
struct TransportPlan {
  enum class Form { permutation, matrix };

  Form form = Form::matrix;
  std::vector<Eigen::Index> sigma;  // permutation form: row i -> column sigma[i]
  Mat matrix;                       // matrix form
  Vec row_weights;
  Vec col_weights;

  Eigen::Index rows() const { return row_weights.size(); }
  Eigen::Index cols() const { return col_weights.size(); }

  double mass(Eigen::Index i, Eigen::Index j) const {
    if (form == Form::permutation) return sigma[static_cast<std::size_t>(i)] == j ? row_weights[i] : 0.0;
    return matrix(i, j);
  }

  Mat dense() const {
    if (form == Form::matrix) return matrix;
    Mat m = Mat::Zero(rows(), cols());
    for (Eigen::Index i = 0; i < rows(); ++i) m(i, sigma[static_cast<std::size_t>(i)]) = row_weights[i];
    return m;
  }

  /// Max L_inf violation of the marginal constraints.
  double marginal_violation() const {
    const Mat m = dense();
    double v = (m.rowwise().sum() - row_weights).cwiseAbs().maxCoeff();
    v = std::max(v, (m.colwise().sum().transpose() - col_weights).cwiseAbs().maxCoeff());
    return v;
  }
};

inline TransportPlan permutation_plan(std::vector<Eigen::Index> sigma, double atom_weight) {
  const auto n = static_cast<Eigen::Index>(sigma.size());
  std::vector<bool> seen(sigma.size(), false);
  for (Eigen::Index j : sigma) {
    require(j >= 0 && j < n && !seen[static_cast<std::size_t>(j)],
            "permutation_plan: sigma is not a bijection");
    seen[static_cast<std::size_t>(j)] = true;
  }
  TransportPlan p;
  p.form = TransportPlan::Form::permutation;
  p.sigma = std::move(sigma);
  p.row_weights = Vec::Constant(n, atom_weight);
  p.col_weights = Vec::Constant(n, atom_weight);
  return p;
}

inline TransportPlan matrix_plan(Mat m, Vec row_weights, Vec col_weights) {
  require(m.rows() == row_weights.size() && m.cols() == col_weights.size(),
          "matrix_plan: shape mismatch");
  TransportPlan p;
  p.form = TransportPlan::Form::matrix;
  p.matrix = std::move(m);
  p.row_weights = std::move(row_weights);
  p.col_weights = std::move(col_weights);
  return p;
}

/// Transport cost <plan, c> accumulated with compensated summation.
/// Positive mass on a forbidden entry yields +infinity.
inline double plan_cost(const CostMatrix& c, const TransportPlan& plan) {
  require(c.rows() == plan.rows() && c.cols() == plan.cols(), "plan_cost: shape mismatch");
  KahanAccumulator acc;
  if (plan.form == TransportPlan::Form::permutation) {
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      const double cij = c(i, plan.sigma[static_cast<std::size_t>(i)]);
      if (is_forbidden(cij)) return kForbidden;
      acc.add(plan.row_weights[i] * cij);
    }
  } else {
    for (Eigen::Index i = 0; i < plan.rows(); ++i)
      for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        const double m = plan.matrix(i, j);
        if (m == 0.0) continue;
        if (is_forbidden(c(i, j))) return kForbidden;
        acc.add(m * c(i, j));
      }
  }
  return acc.value();
}

/// Dual potentials on the support points: psi on reference atoms (rows),
/// phi on target atoms (columns). Feasibility: phi_j - psi_i <= c_ij on
/// every finite-cost pair.
struct DualPotentials {
  Vec psi;
  Vec phi;

  double value(const Vec& row_weights, const Vec& col_weights) const {
    return col_weights.dot(phi) - row_weights.dot(psi);
  }

  double max_feasibility_violation(const CostMatrix& c) const {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
      for (Eigen::Index j = 0; j < c.cols(); ++j)
        if (!is_forbidden(c(i, j))) worst = std::max(worst, phi[j] - psi[i] - c(i, j));
    return worst;
  }
};

}  // namespace condot
