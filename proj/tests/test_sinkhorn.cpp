#include "condot/network_simplex.hpp"
#include "condot/rng.hpp"
#include "condot/sinkhorn.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace condot;

namespace {

Vec uniform_weights(Eigen::Index n) { return Vec::Constant(n, 1.0 / static_cast<double>(n)); }

}  // namespace

TEST_CASE("1x1 problem independent of regularization") {
  Mat c(1, 1);
  c << 4.2;
  Vec one = Vec::Ones(1);
  for (double reg : {1.0, 1e-2, 1e-4}) {
    auto r = solve_sinkhorn(make_cost_matrix(c), one, one, reg);
    REQUIRE(r.plan.matrix(0, 0) == Catch::Approx(1.0));
    REQUIRE(r.cost == Catch::Approx(4.2));
  }
}

TEST_CASE("small regularization reaches LP optimum within 2%") {
  Rng rng(77);
  Mat c(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) c(i, j) = rng.uniform();
  auto cm = make_cost_matrix(c);
  Vec a = uniform_weights(4), b = uniform_weights(4);
  const double lp = solve_lp(cm, a, b).cost;
  auto sk = solve_sinkhorn(cm, a, b, 1e-3, 400000, 1e-7);
  REQUIRE(std::abs(sk.cost - lp) <= 0.02 * std::abs(lp));
}

TEST_CASE("cost gap to LP optimum non-increasing along a reg sweep") {
  Rng rng(78);
  Mat c(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) c(i, j) = rng.uniform();
  auto cm = make_cost_matrix(c);
  Vec a = uniform_weights(5), b = uniform_weights(5);
  const double lp = solve_lp(cm, a, b).cost;
  double prev_gap = kForbidden;
  for (double reg : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
    auto sk = solve_sinkhorn(cm, a, b, reg, 400000, 1e-8);
    const double gap = std::abs(sk.cost - lp);
    REQUIRE(gap <= prev_gap + 1e-6);
    prev_gap = gap;
  }
}

TEST_CASE("returned plan satisfies marginals to round-off") {
  Rng rng(79);
  Mat c(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) c(i, j) = rng.uniform() * 3.0;
  Vec a = uniform_weights(6);
  Vec b(3);
  b << 0.2, 0.5, 0.3;
  auto sk = solve_sinkhorn(make_cost_matrix(c), a, b, 5e-2, 20000, 1e-6);
  REQUIRE(sk.plan.marginal_violation() <= 1e-12);
  REQUIRE((sk.plan.matrix.array() >= 0).all());
}

TEST_CASE("non-convergence is reported, plan still returned") {
  Rng rng(80);
  Mat c(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) c(i, j) = rng.uniform();
  auto sk = solve_sinkhorn(make_cost_matrix(c), uniform_weights(4), uniform_weights(4), 1e-3, 3, 1e-14);
  REQUIRE_FALSE(sk.converged);
  REQUIRE(sk.residual > 0.0);
  REQUIRE(sk.plan.marginal_violation() <= 1e-12);
}

TEST_CASE("invalid regularization rejected") {
  Mat c(1, 1);
  c << 1.0;
  Vec one = Vec::Ones(1);
  REQUIRE_THROWS_AS(solve_sinkhorn(make_cost_matrix(c), one, one, 0.0), std::invalid_argument);
}
