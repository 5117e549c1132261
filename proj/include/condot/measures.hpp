#pragma once

#include "condot/common.hpp"
#include "condot/rng.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace condot {

/// Weighted point cloud on R^d. Rows of `points` are atoms; `weights` are
/// nonnegative and sum to one. Immutable by convention after construction.
struct EmpiricalMeasure {
  Mat points;   // n x d, one atom per row
  Vec weights;  // n, sums to 1

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  bool uniform_weights(double tol = 1e-12) const {
    const double w = 1.0 / static_cast<double>(size());
    return ((weights.array() - w).abs() < tol).all();
  }
};

/// One draw (y_j, u_j) from the target: conditioning coordinate plus
/// parameter coordinate.
struct PairedSample {
  Vec y;
  Vec u;
};

/// Sampler over the reference space V; receives the caller's generator.
using RefSampler = std::function<Vec(Rng&)>;

inline RefSampler standard_normal_sampler(Eigen::Index dim) {
  return [dim](Rng& rng) { return rng.normal_vec(dim); };
}

inline RefSampler constant_sampler(Vec value) {
  return [v = std::move(value)](Rng&) { return v; };
}

inline EmpiricalMeasure make_empirical(const Mat& points, const Vec& weights = Vec()) {
  require(points.rows() > 0, "make_empirical: empty point set");
  require(all_finite(points), "make_empirical: non-finite coordinate");
  Vec w;
  if (weights.size() == 0) {
    w = Vec::Constant(points.rows(), 1.0 / static_cast<double>(points.rows()));
  } else {
    require(weights.size() == points.rows(), "make_empirical: weight count mismatch");
    require((weights.array() >= 0.0).all(), "make_empirical: negative weight");
    const double total = weights.sum();
    require(total > 0.0, "make_empirical: zero total weight");
    w = weights / total;
  }
  return EmpiricalMeasure{points, w};
}

inline EmpiricalMeasure make_empirical(const std::vector<Vec>& points, const Vec& weights = Vec()) {
  require(!points.empty(), "make_empirical: empty point set");
  const Eigen::Index d = points.front().size();
  Mat m(static_cast<Eigen::Index>(points.size()), d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    require(points[i].size() == d, "make_empirical: dimension mismatch");
    m.row(static_cast<Eigen::Index>(i)) = points[i];
  }
  return make_empirical(m, weights);
}

/// Builds the paired reference for a target sample set: the reference keeps
/// the exact y-atoms of the target (bitwise, same order) and replaces each
/// u_j with a fresh reference draw v_j. Returns (reference, target) as
/// uniformly weighted empirical measures on Y x V and Y x U, so the two
/// y-marginals match atom for atom.
inline std::pair<EmpiricalMeasure, EmpiricalMeasure> pair_reference(
    const std::vector<PairedSample>& targets, const RefSampler& sampler,
    std::uint64_t seed) {
  require(!targets.empty(), "pair_reference: empty target set");
  Rng rng(derive_seed(seed, "pair_reference"));

  const Eigen::Index dy = targets.front().y.size();
  const Eigen::Index du = targets.front().u.size();
  const Vec v0 = sampler(rng);
  const Eigen::Index dv = v0.size();

  const auto n = static_cast<Eigen::Index>(targets.size());
  Mat ref(n, dy + dv), tgt(n, dy + du);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& s = targets[static_cast<std::size_t>(j)];
    require(s.y.size() == dy && s.u.size() == du, "pair_reference: ragged sample dimensions");
    require(all_finite(s.y) && all_finite(s.u), "pair_reference: non-finite sample");
    const Vec v = (j == 0) ? v0 : sampler(rng);
    require(v.size() == dv, "pair_reference: sampler dimension changed between draws");
    ref.row(j) << s.y.transpose(), v.transpose();
    tgt.row(j) << s.y.transpose(), s.u.transpose();
  }
  return {make_empirical(ref), make_empirical(tgt)};
}

/// Sum_j w_j ||x_j||^2; the p = 2 moment used for feasibility checks.
inline double second_moment(const EmpiricalMeasure& m) {
  return (m.points.rowwise().squaredNorm().array() * m.weights.array()).sum();
}

}  // namespace condot
