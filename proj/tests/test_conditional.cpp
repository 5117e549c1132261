#include "condot/conditional.hpp"
#include "condot/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

using namespace condot;

namespace {

/// Matched-marginal instance: n_groups distinct y-atoms, group_size atoms
/// per slice on both sides, y-separation >= 1 between groups.
std::pair<EmpiricalMeasure, EmpiricalMeasure> matched_instance(Rng& rng, int n_groups,
                                                               int group_size, int dv = 1) {
  const int n = n_groups * group_size;
  Mat ref(n, 1 + dv), tgt(n, 1 + dv);
  int row = 0;
  for (int gidx = 0; gidx < n_groups; ++gidx) {
    const double y = static_cast<double>(gidx) * 1.5 + rng.uniform() * 0.2;
    for (int k = 0; k < group_size; ++k) {
      ref(row, 0) = y;
      tgt(row, 0) = y;
      for (int d = 0; d < dv; ++d) {
        ref(row, 1 + d) = rng.uniform(-1.0, 1.0);
        tgt(row, 1 + d) = rng.uniform(-1.0, 1.0);
      }
      ++row;
    }
  }
  return {make_empirical(ref), make_empirical(tgt)};
}

double plan_y_cost(const TransportPlan& plan, const EmpiricalMeasure& ref,
                   const EmpiricalMeasure& tgt, Eigen::Index dy) {
  KahanAccumulator acc;
  for (Eigen::Index i = 0; i < ref.size(); ++i) {
    const Eigen::Index j = plan.sigma[static_cast<std::size_t>(i)];
    acc.add(plan.row_weights[i] *
            (ref.points.row(i).head(dy) - tgt.points.row(j).head(dy)).squaredNorm());
  }
  return acc.value();
}

}  // namespace

TEST_CASE("perturbed cost formula") {
  Mat rp(1, 3), tp(1, 3);
  rp << 0, 0, 1;  // z = (0,0), v = (1)
  tp << 1, 0, 3;  // y = (1,0), u = (3)
  const auto ref = make_empirical(rp), tgt = make_empirical(tp);
  const auto c = build_perturbed_cost(ref, tgt, 2, {0.5});
  REQUIRE(c(0, 0) == Catch::Approx(1.0 + 0.5 * 4.0));
}

TEST_CASE("perturbed cost: identical atoms give zero diagonal") {
  Rng rng(1);
  Mat pts(4, 3);
  for (int i = 0; i < 4; ++i) pts.row(i) = rng.normal_vec(3).transpose();
  const auto m = make_empirical(pts);
  const auto c = build_perturbed_cost(m, m, 1, {1e-2});
  for (int i = 0; i < 4; ++i) REQUIRE(c(i, i) == 0.0);
}

TEST_CASE("epsilon = 0 rejected") {
  Mat pts(1, 2);
  pts << 0, 0;
  const auto m = make_empirical(pts);
  REQUIRE_THROWS_AS(build_perturbed_cost(m, m, 1, {0.0}), std::invalid_argument);
}

TEST_CASE("chi cost: distinct y-atoms force the diagonal") {
  Mat rp(3, 2), tp(3, 2);
  rp << 0, 0.1, 1, 0.2, 2, 0.3;
  tp << 0, 0.5, 1, 0.6, 2, 0.7;
  const auto c = build_chi_cost(make_empirical(rp), make_empirical(tp), 1, squared_distance_cost());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j)
        REQUIRE_FALSE(is_forbidden(c(i, j)));
      else
        REQUIRE(is_forbidden(c(i, j)));
    }
}

TEST_CASE("chi cost: two y-groups give a block-diagonal finite pattern") {
  Mat rp(4, 2), tp(4, 2);
  rp << 0, 1, 0, 2, 5, 3, 5, 4;
  tp << 0, 5, 0, 6, 5, 7, 5, 8;
  const auto c = build_chi_cost(make_empirical(rp), make_empirical(tp), 1, squared_distance_cost());
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const bool same_block = (i < 2) == (j < 2);
      REQUIRE(is_forbidden(c(i, j)) == !same_block);
    }
}

TEST_CASE("chi cost: mismatched y-marginals flagged infeasible") {
  Mat rp(2, 2), tp(2, 2);
  rp << 0, 1, 1, 2;
  tp << 0, 3, 2, 4;  // y = 2 unmatched on the reference side
  REQUIRE_THROWS_AS(build_chi_cost(make_empirical(rp), make_empirical(tp), 1, squared_distance_cost()),
                    infeasible_error);
}

TEST_CASE("single y-atom reduces to unconditional OT") {
  Rng rng(3);
  auto [ref, tgt] = matched_instance(rng, 1, 6, 2);
  const auto dec = solve_conditional_kantorovich(ref, tgt, 1, squared_distance_cost());
  REQUIRE(dec.groups.size() == 1);

  Mat vu(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      vu(i, j) = (ref.points.row(i).tail(2) - tgt.points.row(j).tail(2)).squaredNorm();
  const auto as = solve_assignment(CostMatrix{vu});
  REQUIRE(dec.total_cost == Catch::Approx(as.cost).margin(1e-12));
}

TEST_CASE("one pair per y-atom forces the pairing") {
  Rng rng(4);
  auto [ref, tgt] = matched_instance(rng, 5, 1, 1);
  const auto dec = solve_conditional_kantorovich(ref, tgt, 1, squared_distance_cost());
  KahanAccumulator expect;
  for (int j = 0; j < 5; ++j)
    expect.add((ref.points.row(j).tail(1) - tgt.points.row(j).tail(1)).squaredNorm() / 5.0);
  REQUIRE(dec.total_cost == Catch::Approx(expect.value()).margin(1e-12));
}

TEST_CASE("conditional decomposition equals LP on the chi cost") {
  Rng rng(5);
  for (int rep = 0; rep < 12; ++rep) {
    const int n_groups = 2 + static_cast<int>(rng.uniform_index(2));
    auto [ref, tgt] = matched_instance(rng, n_groups, 3, 1);
    const auto dec = solve_conditional_kantorovich(ref, tgt, 1, squared_distance_cost());
    const auto chi = build_chi_cost(ref, tgt, 1, squared_distance_cost());
    const auto lp = solve_lp(chi, ref.weights, tgt.weights);
    REQUIRE(std::abs(dec.total_cost - lp.cost) <= 1e-9);
  }
}

TEST_CASE("huge epsilon with equal y reduces to OT on (v, u)") {
  Rng rng(6);
  auto [ref, tgt] = matched_instance(rng, 1, 7, 1);
  auto [plan, cost] = solve_perturbed(ref, tgt, 1, {1e6});
  Mat vu(7, 7);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j)
      vu(i, j) = (ref.points.row(i).tail(1) - tgt.points.row(j).tail(1)).squaredNorm();
  const auto as = solve_assignment(CostMatrix{vu});
  REQUIRE(plan.sigma == as.sigma);
  REQUIRE(cost == Catch::Approx(1e6 * as.cost).epsilon(1e-9));
}

TEST_CASE("small epsilon recovers the conditional solution on separated groups") {
  Rng rng(7);
  auto [ref, tgt] = matched_instance(rng, 2, 4, 1);
  auto [plan, cost] = solve_perturbed(ref, tgt, 1, {1e-6});
  const auto dec = solve_conditional_kantorovich(ref, tgt, 1, squared_distance_cost());
  const auto star = dec.induced_map(ref.size());
  for (Eigen::Index i = 0; i < ref.size(); ++i)
    REQUIRE(plan.sigma[static_cast<std::size_t>(i)] == star[static_cast<std::size_t>(i)]);
}

TEST_CASE("epsilon sweep: distances non-increasing, zero at the smallest epsilon") {
  Rng rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    auto [ref, tgt] = matched_instance(rng, 3, 3, 1);
    const auto sweep = epsilon_sweep(ref, tgt, 1, default_epsilon_list());
    for (std::size_t k = 1; k < sweep.size(); ++k)
      REQUIRE(sweep[k].distance_to_conditional <= sweep[k - 1].distance_to_conditional + 1e-12);
    REQUIRE(sweep.back().distance_to_conditional == 0.0);
    REQUIRE(sweep.back().off_diagonal_mass == 0.0);
  }
}

TEST_CASE("single-slice instance has zero sweep distance for every epsilon") {
  Rng rng(9);
  auto [ref, tgt] = matched_instance(rng, 1, 5, 1);
  const auto sweep = epsilon_sweep(ref, tgt, 1, default_epsilon_list());
  for (const auto& e : sweep) REQUIRE(e.distance_to_conditional == 0.0);
}

TEST_CASE("monotone y-fidelity along decreasing epsilon") {
  Rng rng(10);
  auto [ref, tgt] = matched_instance(rng, 3, 4, 2);
  double prev_y_cost = kForbidden;
  for (double eps : default_epsilon_list()) {
    auto [plan, cost] = solve_perturbed(ref, tgt, 1, {eps});
    const double yc = plan_y_cost(plan, ref, tgt, 1);
    REQUIRE(yc <= prev_y_cost + 1e-12);
    prev_y_cost = yc;
  }
}

TEST_CASE("partial c-transforms: trivial cases") {
  const auto cost = squared_distance_cost();
  Mat v(3, 1), u(3, 1);
  v << 0, 1, 2;
  u << 1, 0, 2;
  // psi = 0 and u present in the v-support: inf attained at v = u, value 0
  const Vec psi = Vec::Zero(3);
  const Vec t = partial_c_transform_psi(psi, cost, v, u);
  for (int j = 0; j < 3; ++j) REQUIRE(t[j] == 0.0);

  // singleton slice
  Mat v1(1, 1), u1(1, 1);
  v1 << 0.5;
  u1 << 2.0;
  Vec psi1(1);
  psi1 << 0.7;
  const Vec t1 = partial_c_transform_psi(psi1, cost, v1, u1);
  REQUIRE(t1[0] == Catch::Approx(0.7 + 2.25));

  Vec phi1(1);
  phi1 << 0.3;
  const Vec s1 = partial_c_transform_phi(phi1, cost, u1, v1);
  REQUIRE(s1[0] == Catch::Approx(0.3 - 2.25));
}

TEST_CASE("partial c-transforms match exhaustive extremum on a 5-point slice") {
  Rng rng(11);
  const auto cost = squared_distance_cost();
  Mat v(5, 2), u(5, 2);
  for (int i = 0; i < 5; ++i) {
    v.row(i) = rng.normal_vec(2).transpose();
    u.row(i) = rng.normal_vec(2).transpose();
  }
  Vec psi = rng.normal_vec(5), phi = rng.normal_vec(5);
  const Vec tpsi = partial_c_transform_psi(psi, cost, v, u);
  const Vec tphi = partial_c_transform_phi(phi, cost, u, v);
  for (int j = 0; j < 5; ++j) {
    double mn = kForbidden, mx = -kForbidden;
    for (int i = 0; i < 5; ++i) {
      mn = std::min(mn, psi[i] + (v.row(i) - u.row(j)).squaredNorm());
      mx = std::max(mx, phi[i] - (v.row(j) - u.row(i)).squaredNorm());
    }
    REQUIRE(tpsi[j] == Catch::Approx(mn));
    REQUIRE(tphi[j] == Catch::Approx(mx));
  }
}

TEST_CASE("conditional duality gap is negligible") {
  Rng rng(12);
  // forced pairing: one atom per slice
  auto [fr, ft] = matched_instance(rng, 4, 1, 1);
  REQUIRE(std::abs(conditional_duality_gap(fr, ft, 1, squared_distance_cost())) <= 1e-12);

  for (int rep = 0; rep < 8; ++rep) {
    auto [ref, tgt] = matched_instance(rng, 2, 4, 1);
    REQUIRE(std::abs(conditional_duality_gap(ref, tgt, 1, squared_distance_cost())) <= 1e-8);
  }
}

TEST_CASE("independence coupling upper-bounds the conditional optimum") {
  Rng rng(13);
  for (int rep = 0; rep < 6; ++rep) {
    auto [ref, tgt] = matched_instance(rng, 2, 3, 2);
    const auto dec = solve_conditional_kantorovich(ref, tgt, 1, squared_distance_cost());
    const double indep = conditional_independence_cost(ref, tgt, 1, squared_distance_cost());
    REQUIRE(indep >= dec.total_cost - 1e-12);
  }
}

TEST_CASE("complementary slackness on every slice") {
  Rng rng(14);
  auto [ref, tgt] = matched_instance(rng, 3, 4, 1);
  const auto dec = solve_conditional_kantorovich(ref, tgt, 1, squared_distance_cost());
  for (const auto& g : dec.groups) {
    for (std::size_t r = 0; r < g.ref_indices.size(); ++r) {
      const Eigen::Index jl = g.plan.sigma[r];
      const double c = (ref.points.row(g.ref_indices[r]).tail(1) -
                        tgt.points.row(g.tgt_indices[static_cast<std::size_t>(jl)]).tail(1))
                           .squaredNorm();
      REQUIRE(std::abs(g.duals.phi[jl] - g.duals.psi[static_cast<Eigen::Index>(r)] - c) <= 1e-8);
    }
  }
}

TEST_CASE("triangular composition with matched marginals is the conditional solution") {
  Rng rng(15);
  auto [ref, tgt] = matched_instance(rng, 3, 2, 1);
  const auto tc = triangular_compose(ref, tgt, 1);
  for (Eigen::Index i = 0; i < ref.size(); ++i)
    REQUIRE(tc.sigma_y[static_cast<std::size_t>(i)] == i);
  REQUIRE(tc.stage1_cost == 0.0);
  const auto dec = solve_conditional_kantorovich(ref, tgt, 1, squared_distance_cost());
  REQUIRE(tc.stage2_cost == Catch::Approx(dec.total_cost).margin(1e-12));
}

TEST_CASE("1D y-shift composes through the sorted matching") {
  Rng rng(16);
  const int n = 9;
  Mat rp(n, 2), tp(n, 2);
  for (int i = 0; i < n; ++i) {
    rp(i, 0) = rng.uniform(-1.0, 1.0);
    rp(i, 1) = rng.uniform(-1.0, 1.0);
    tp(i, 0) = rp(i, 0) + 3.0;  // rigid shift
    tp(i, 1) = rng.uniform(-1.0, 1.0);
  }
  // shuffle target rows so the sorted matching is nontrivial
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
    tp.row(i).swap(tp.row(j));
  }
  const auto tc = triangular_compose(make_empirical(rp), make_empirical(tp), 1);

  // oracle: monotone (sorted) matching in 1D
  std::vector<int> ridx(n), tidx(n);
  std::iota(ridx.begin(), ridx.end(), 0);
  std::iota(tidx.begin(), tidx.end(), 0);
  std::sort(ridx.begin(), ridx.end(), [&](int a, int b) { return rp(a, 0) < rp(b, 0); });
  std::sort(tidx.begin(), tidx.end(), [&](int a, int b) { return tp(a, 0) < tp(b, 0); });
  for (int k = 0; k < n; ++k)
    REQUIRE(tc.sigma_y[static_cast<std::size_t>(ridx[static_cast<std::size_t>(k)])] ==
            tidx[static_cast<std::size_t>(k)]);
}

TEST_CASE("stage-2 cost dominates the unconstrained (v, u) optimum") {
  Rng rng(17);
  const int n = 8;
  Mat rp(n, 2), tp(n, 2);
  for (int i = 0; i < n; ++i) {
    rp(i, 0) = rng.uniform(0.0, 1.0);
    rp(i, 1) = rng.uniform(-1.0, 1.0);
    tp(i, 0) = rng.uniform(5.0, 6.0);
    tp(i, 1) = rng.uniform(-1.0, 1.0);
  }
  const auto ref = make_empirical(rp), tgt = make_empirical(tp);
  const auto tc = triangular_compose(ref, tgt, 1);
  Mat vu(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) vu(i, j) = (rp.row(i).tail(1) - tp.row(j).tail(1)).squaredNorm();
  const auto unconstrained = solve_assignment(CostMatrix{vu});
  REQUIRE(tc.stage2_cost >= unconstrained.cost - 1e-12);
}
