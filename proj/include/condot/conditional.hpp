#pragma once

#include "condot/assignment.hpp"
#include "condot/common.hpp"
#include "condot/duality.hpp"
#include "condot/measures.hpp"
#include "condot/network_simplex.hpp"
#include "condot/transport.hpp"

#include <functional>
#include <map>
#include <utility>
#include <vector>

namespace condot {

/// Cost c_eps(z, v; y, u) = ||z - y||^p + eps * ||v - u||^q. The default
/// exponents p = q = 2 give the quadratic perturbed cost whose optimal plans
/// approach the conditional solution as eps -> 0.
struct PerturbedCostSpec {
  double epsilon;
  double y_exponent = 2.0;
  double u_exponent = 2.0;
};

inline void validate(const PerturbedCostSpec& s) {
  require(s.epsilon > 0.0, "PerturbedCostSpec: epsilon must be positive");
  require(s.y_exponent > 1.0 && std::isfinite(s.y_exponent), "PerturbedCostSpec: y_exponent in (1, inf)");
  require(s.u_exponent > 1.0 && std::isfinite(s.u_exponent), "PerturbedCostSpec: u_exponent in (1, inf)");
}

/// Cost between points in the non-conditioning coordinates of one y-slice.
using VuCost = std::function<double(const Vec& v, const Vec& u)>;

inline VuCost squared_distance_cost() {
  return [](const Vec& v, const Vec& u) { return (v - u).squaredNorm(); };
}

/// Atoms grouped by exactly equal y-coordinates, with the per-slice optimal
/// plans. Groups partition both index sets.
struct SliceGroup {
  Vec y_atom;
  std::vector<Eigen::Index> ref_indices;
  std::vector<Eigen::Index> tgt_indices;
  TransportPlan plan;  // slice-local indices; marginals carry original masses
  double cost = 0.0;
  DualPotentials duals;  // slice-local, tight on the plan support
};

struct SliceDecomposition {
  std::vector<SliceGroup> groups;
  double total_cost = 0.0;

  /// Row index in the reference -> paired target index (uniform equal-size
  /// slices only, where every slice plan is a permutation).
  std::vector<Eigen::Index> induced_map(Eigen::Index n_ref) const {
    std::vector<Eigen::Index> to(static_cast<std::size_t>(n_ref), -1);
    for (const auto& g : groups) {
      require(g.plan.form == TransportPlan::Form::permutation,
              "induced_map: slice plan is not a permutation");
      for (std::size_t r = 0; r < g.ref_indices.size(); ++r)
        to[static_cast<std::size_t>(g.ref_indices[r])] =
            g.tgt_indices[static_cast<std::size_t>(g.plan.sigma[r])];
    }
    return to;
  }
};

namespace detail {

struct VecLess {
  bool operator()(const Vec& a, const Vec& b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return a[i] < b[i];
    return false;
  }
};

/// Groups reference/target atoms by bitwise-equal leading y-coordinates.
/// Exact comparison is intentional: pair_reference copies atoms verbatim, so
/// a tolerance would only hide construction bugs.
inline std::map<Vec, std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>, VecLess>
group_by_y(const EmpiricalMeasure& ref, const EmpiricalMeasure& tgt, Eigen::Index dy) {
  require(dy >= 1 && dy <= ref.dim() && dy <= tgt.dim(),
          "group_by_y: invalid conditioning dimension");
  std::map<Vec, std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>, VecLess> groups;
  for (Eigen::Index i = 0; i < ref.size(); ++i)
    groups[ref.points.row(i).head(dy)].first.push_back(i);
  for (Eigen::Index j = 0; j < tgt.size(); ++j)
    groups[tgt.points.row(j).head(dy)].second.push_back(j);
  return groups;
}

}  // namespace detail

/// Perturbed cost matrix: entry(i, j) = ||z_i - y_j||^p + eps ||v_i - u_j||^q
/// between reference atoms (z, v) and target atoms (y, u).
inline CostMatrix build_perturbed_cost(const EmpiricalMeasure& ref, const EmpiricalMeasure& tgt,
                                       Eigen::Index dy, const PerturbedCostSpec& spec) {
  validate(spec);
  require(dy >= 1 && dy <= ref.dim() && dy <= tgt.dim(), "build_perturbed_cost: bad y dimension");
  require(ref.dim() - dy == tgt.dim() - dy, "build_perturbed_cost: v/u dimension mismatch");
  const Eigen::Index n = ref.size(), m = tgt.size();
  Mat c(n, m);
  const bool quadratic = (spec.y_exponent == 2.0 && spec.u_exponent == 2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double ry = (ref.points.row(i).head(dy) - tgt.points.row(j).head(dy)).norm();
      const double ru = (ref.points.row(i).tail(ref.dim() - dy) -
                         tgt.points.row(j).tail(tgt.dim() - dy))
                            .norm();
      c(i, j) = quadratic ? ry * ry + spec.epsilon * ru * ru
                          : std::pow(ry, spec.y_exponent) + spec.epsilon * std::pow(ru, spec.u_exponent);
    }
  }
  return CostMatrix{std::move(c)};
}

/// Chi-cost matrix: the vu-cost where the y-atoms coincide exactly, the
/// forbidden sentinel elsewhere. Throws if some atom has no finite pairing
/// (empty constrained coupling set; the y-marginals cannot match).
inline CostMatrix build_chi_cost(const EmpiricalMeasure& ref, const EmpiricalMeasure& tgt,
                                 Eigen::Index dy, const VuCost& vu_cost) {
  require(dy >= 1 && dy <= ref.dim() && dy <= tgt.dim(), "build_chi_cost: bad y dimension");
  const Eigen::Index n = ref.size(), m = tgt.size();
  Mat c(n, m);
  std::vector<bool> row_ok(static_cast<std::size_t>(n), false), col_ok(static_cast<std::size_t>(m), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec v = ref.points.row(i).tail(ref.dim() - dy);
    for (Eigen::Index j = 0; j < m; ++j) {
      const bool same_y =
          (ref.points.row(i).head(dy).array() == tgt.points.row(j).head(dy).array()).all();
      if (same_y) {
        c(i, j) = vu_cost(v, tgt.points.row(j).tail(tgt.dim() - dy));
        row_ok[static_cast<std::size_t>(i)] = true;
        col_ok[static_cast<std::size_t>(j)] = true;
      } else {
        c(i, j) = kForbidden;
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!row_ok[static_cast<std::size_t>(i)])
      throw infeasible_error("build_chi_cost: reference atom with unmatched y (empty coupling set)");
  for (Eigen::Index j = 0; j < m; ++j)
    if (!col_ok[static_cast<std::size_t>(j)])
      throw infeasible_error("build_chi_cost: target atom with unmatched y (empty coupling set)");
  return CostMatrix{std::move(c)};
}

/// Solves the constrained problem by its per-slice decomposition: group the
/// atoms by equal y, solve an independent transport problem on (v, u) within
/// each slice, and sum the slice optima. Equal-size uniform slices use the
/// exact assignment solver; weighted slices fall back to the LP.
inline SliceDecomposition solve_conditional_kantorovich(const EmpiricalMeasure& ref,
                                                        const EmpiricalMeasure& tgt,
                                                        Eigen::Index dy, const VuCost& vu_cost) {
  const auto groups = detail::group_by_y(ref, tgt, dy);
  SliceDecomposition out;
  KahanAccumulator total;
  const Eigen::Index dv = ref.dim() - dy, du = tgt.dim() - dy;
  for (const auto& [y, idx] : groups) {
    const auto& [ref_idx, tgt_idx] = idx;
    if (ref_idx.empty() || tgt_idx.empty())
      throw infeasible_error("solve_conditional_kantorovich: one-sided y-atom (Assumption on matching y-marginals violated)");

    SliceGroup g;
    g.y_atom = y;
    g.ref_indices = ref_idx;
    g.tgt_indices = tgt_idx;

    Vec a(static_cast<Eigen::Index>(ref_idx.size())), b(static_cast<Eigen::Index>(tgt_idx.size()));
    for (std::size_t r = 0; r < ref_idx.size(); ++r) a[static_cast<Eigen::Index>(r)] = ref.weights[ref_idx[r]];
    for (std::size_t t = 0; t < tgt_idx.size(); ++t) b[static_cast<Eigen::Index>(t)] = tgt.weights[tgt_idx[t]];
    if (std::abs(a.sum() - b.sum()) > 1e-12)
      throw infeasible_error("solve_conditional_kantorovich: slice masses differ (y-marginals do not match)");

    Mat c(a.size(), b.size());
    for (std::size_t r = 0; r < ref_idx.size(); ++r) {
      const Vec v = ref.points.row(ref_idx[r]).tail(dv);
      for (std::size_t t = 0; t < tgt_idx.size(); ++t)
        c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) =
            vu_cost(v, tgt.points.row(tgt_idx[t]).tail(du));
    }
    const CostMatrix cm{std::move(c)};

    const bool uniform_slice = a.size() == b.size() &&
                               ((a.array() - a[0]).abs() < 1e-15).all() &&
                               ((b.array() - a[0]).abs() < 1e-15).all();
    if (uniform_slice) {
      auto r = solve_assignment(cm);
      g.plan = permutation_plan(r.sigma, a[0]);
      g.cost = r.cost * static_cast<double>(a.size()) * a[0];
      g.duals.psi = -r.row_duals;
      g.duals.phi = r.col_duals;
    } else {
      if (a.size() != b.size() && ref.uniform_weights() && tgt.uniform_weights())
        throw infeasible_error("solve_conditional_kantorovich: slice sizes differ under uniform weights");
      const double mass = a.sum();
      auto r = solve_lp(cm, a / mass, b / mass);
      g.plan = matrix_plan(r.plan.matrix * mass, a, b);
      g.cost = r.cost * mass;
      g.duals.psi = r.duals.psi;
      g.duals.phi = r.duals.phi;
    }
    total.add(g.cost);
    out.groups.push_back(std::move(g));
  }
  out.total_cost = total.value();
  return out;
}

/// Optimal coupling under the perturbed cost c_eps between equal-size
/// uniform measures; a permutation plan.
inline std::pair<TransportPlan, double> solve_perturbed(const EmpiricalMeasure& ref,
                                                        const EmpiricalMeasure& tgt, Eigen::Index dy,
                                                        const PerturbedCostSpec& spec) {
  require(ref.size() == tgt.size(), "solve_perturbed: measures must have equal size");
  require(ref.uniform_weights() && tgt.uniform_weights(),
          "solve_perturbed: measures must be uniformly weighted");
  const auto c = build_perturbed_cost(ref, tgt, dy, spec);
  auto r = solve_assignment(c);
  return {r.plan(), r.cost};
}

struct EpsilonSweepEntry {
  double epsilon;
  TransportPlan plan;
  double distance_to_conditional;  // weighted L2 between induced sample maps
  double off_diagonal_mass;        // mass on pairs with z_i != y_j
};

/// Solves the perturbed problem along a list of epsilons and reports, for
/// each, the L2 distance between the induced sample map and the per-slice
/// conditional optimum. On matched discrete instances the distance hits
/// exactly zero once epsilon falls below the instance's threshold.
inline std::vector<EpsilonSweepEntry> epsilon_sweep(const EmpiricalMeasure& ref,
                                                    const EmpiricalMeasure& tgt, Eigen::Index dy,
                                                    const std::vector<double>& eps_list) {
  const auto conditional = solve_conditional_kantorovich(ref, tgt, dy, squared_distance_cost());
  const auto star = conditional.induced_map(ref.size());

  std::vector<EpsilonSweepEntry> out;
  for (double eps : eps_list) {
    PerturbedCostSpec spec{eps};
    auto [plan, cost] = solve_perturbed(ref, tgt, dy, spec);
    EpsilonSweepEntry e;
    e.epsilon = eps;
    KahanAccumulator d2, off;
    for (Eigen::Index i = 0; i < ref.size(); ++i) {
      const Eigen::Index je = plan.sigma[static_cast<std::size_t>(i)];
      const Eigen::Index js = star[static_cast<std::size_t>(i)];
      d2.add(ref.weights[i] * (tgt.points.row(je) - tgt.points.row(js)).squaredNorm());
      const bool same_y =
          (ref.points.row(i).head(dy).array() == tgt.points.row(je).head(dy).array()).all();
      if (!same_y) off.add(ref.weights[i]);
    }
    e.distance_to_conditional = std::sqrt(d2.value());
    e.off_diagonal_mass = off.value();
    e.plan = std::move(plan);
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<double> default_epsilon_list() { return {1.0, 1e-1, 1e-2, 5e-3, 1e-3, 1e-4}; }

/// Partial c-transform of psi on one slice: for each target atom u of the
/// slice, inf over the slice's v-support of psi(v) + c(v, u).
inline Vec partial_c_transform_psi(const Vec& psi, const VuCost& vu_cost, const Mat& slice_v,
                                   const Mat& slice_u) {
  require(slice_v.rows() == psi.size(), "partial_c_transform_psi: psi size mismatch");
  require(slice_v.rows() > 0, "partial_c_transform_psi: empty slice");
  Vec out(slice_u.rows());
  for (Eigen::Index j = 0; j < slice_u.rows(); ++j) {
    double best = kForbidden;
    for (Eigen::Index i = 0; i < slice_v.rows(); ++i)
      best = std::min(best, psi[i] + vu_cost(slice_v.row(i), slice_u.row(j)));
    out[j] = best;
  }
  return out;
}

/// Partial c-transform of phi on one slice: for each reference atom v, sup
/// over the slice's u-support of phi(u) - c(v, u).
inline Vec partial_c_transform_phi(const Vec& phi, const VuCost& vu_cost, const Mat& slice_u,
                                   const Mat& slice_v) {
  require(slice_u.rows() == phi.size(), "partial_c_transform_phi: phi size mismatch");
  require(slice_u.rows() > 0, "partial_c_transform_phi: empty slice");
  Vec out(slice_v.rows());
  for (Eigen::Index i = 0; i < slice_v.rows(); ++i) {
    double best = -kForbidden;
    for (Eigen::Index j = 0; j < slice_u.rows(); ++j)
      best = std::max(best, phi[j] - vu_cost(slice_v.row(i), slice_u.row(j)));
    out[i] = best;
  }
  return out;
}

/// Primal minus dual value of the conditional problem, with the dual
/// assembled from per-slice optimal potentials. Must be ~0 at optimality
/// (strong duality at the discrete level).
inline double conditional_duality_gap(const EmpiricalMeasure& ref, const EmpiricalMeasure& tgt,
                                      Eigen::Index dy, const VuCost& vu_cost) {
  const auto dec = solve_conditional_kantorovich(ref, tgt, dy, vu_cost);
  KahanAccumulator dual;
  for (const auto& g : dec.groups) {
    for (std::size_t t = 0; t < g.tgt_indices.size(); ++t)
      dual.add(tgt.weights[g.tgt_indices[t]] * g.duals.phi[static_cast<Eigen::Index>(t)]);
    for (std::size_t r = 0; r < g.ref_indices.size(); ++r)
      dual.add(-ref.weights[g.ref_indices[r]] * g.duals.psi[static_cast<Eigen::Index>(r)]);
  }
  return dec.total_cost - dual.value();
}

/// Cost of the conditional independence coupling (v and u drawn
/// independently within each slice); an upper bound for the optimum.
inline double conditional_independence_cost(const EmpiricalMeasure& ref, const EmpiricalMeasure& tgt,
                                            Eigen::Index dy, const VuCost& vu_cost) {
  const auto groups = detail::group_by_y(ref, tgt, dy);
  const Eigen::Index dv = ref.dim() - dy, du = tgt.dim() - dy;
  KahanAccumulator acc;
  for (const auto& [y, idx] : groups) {
    const auto& [ref_idx, tgt_idx] = idx;
    if (ref_idx.empty() || tgt_idx.empty())
      throw infeasible_error("conditional_independence_cost: one-sided y-atom");
    double wr = 0.0, wt = 0.0;
    for (auto i : ref_idx) wr += ref.weights[i];
    for (auto j : tgt_idx) wt += tgt.weights[j];
    for (auto i : ref_idx)
      for (auto j : tgt_idx)
        acc.add((ref.weights[i] / wr) * (tgt.weights[j] / wt) * wr *
                vu_cost(ref.points.row(i).tail(dv), tgt.points.row(j).tail(du)));
  }
  return acc.value();
}

/// Two-stage triangular composition for measures whose y-marginals need not
/// match: stage 1 transports the y-marginals optimally under quadratic cost,
/// stage 2 relabels the reference y-atoms accordingly and solves the
/// conditional problem. The composite pairing realizes
/// (Id x T_U) o (T_Y x Id) on the sample set.
struct TriangularComposition {
  std::vector<Eigen::Index> sigma_y;     // stage-1 permutation on y-marginals
  double stage1_cost = 0.0;              // mean squared y-displacement
  SliceDecomposition conditional;        // stage-2 decomposition (relabeled reference)
  std::vector<Eigen::Index> composite;   // reference atom -> target atom
  double stage2_cost = 0.0;
};

inline TriangularComposition triangular_compose(const EmpiricalMeasure& ref,
                                                const EmpiricalMeasure& tgt, Eigen::Index dy) {
  require(ref.size() == tgt.size(), "triangular_compose: equal sizes required");
  require(ref.uniform_weights() && tgt.uniform_weights(),
          "triangular_compose: uniform weights required");
  const Eigen::Index n = ref.size();

  Mat ycost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      ycost(i, j) = (ref.points.row(i).head(dy) - tgt.points.row(j).head(dy)).squaredNorm();
  auto stage1 = solve_assignment(CostMatrix{std::move(ycost)});

  Mat relabeled = ref.points;
  for (Eigen::Index i = 0; i < n; ++i)
    relabeled.row(i).head(dy) = tgt.points.row(stage1.sigma[static_cast<std::size_t>(i)]).head(dy);
  const auto ref2 = make_empirical(relabeled);

  TriangularComposition out;
  out.sigma_y = stage1.sigma;
  out.stage1_cost = stage1.cost;
  out.conditional = solve_conditional_kantorovich(ref2, tgt, dy, squared_distance_cost());
  out.stage2_cost = out.conditional.total_cost;
  out.composite = out.conditional.induced_map(n);
  return out;
}

}  // namespace condot
