#include "condot/plugin_map.hpp"
#include "condot/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace condot;

namespace {

Mat col(std::initializer_list<double> xs) {
  Mat m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("kd-tree knn agrees with brute force") {
  Rng rng(90);
  const Eigen::Index n = 700, d = 3;
  Mat pts(n, d);
  for (Eigen::Index i = 0; i < n; ++i) pts.row(i) = rng.normal_vec(d).transpose();
  KdTree tree(pts);
  for (int rep = 0; rep < 50; ++rep) {
    const Vec q = rng.normal_vec(d);
    const auto nb = tree.knn(q, 5);
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index i = 0; i < n; ++i) all.push_back({(pts.row(i).transpose() - q).squaredNorm(), i});
    std::sort(all.begin(), all.end());
    for (int t = 0; t < 5; ++t) {
      REQUIRE(nb[static_cast<std::size_t>(t)].index == all[static_cast<std::size_t>(t)].second);
      REQUIRE(nb[static_cast<std::size_t>(t)].sq_dist == Catch::Approx(all[static_cast<std::size_t>(t)].first));
    }
  }
}

TEST_CASE("exact anchor hit returns the stored u") {
  Rng rng(91);
  const int n = 40;
  Mat ay(n, 1), av(n, 1), au(n, 1);
  for (int i = 0; i < n; ++i) {
    ay(i, 0) = rng.uniform(-1, 1);
    av(i, 0) = rng.normal();
    au(i, 0) = rng.normal();
  }
  PluginConditionalMap map(ay, av, au, 2);
  for (int i = 0; i < n; ++i) {
    const Vec got = map.evaluate(ay.row(i), av.row(i));
    REQUIRE(got[0] == au(i, 0));
  }
}

TEST_CASE("query equidistant from two anchors averages their u-values") {
  Mat ay = col({-1.0, 1.0}), av = col({0.0, 0.0}), au = col({0.0, 2.0});
  PluginConditionalMap map(ay, av, au, 2);
  Vec y(1), v(1);
  y << 0.0;
  v << 0.0;
  REQUIRE(map.evaluate(y, v)[0] == Catch::Approx(1.0));
}

TEST_CASE("output lies in the convex hull of the selected anchor u-values") {
  Rng rng(92);
  const int n = 120;
  Mat ay(n, 2), av(n, 1), au(n, 1);
  for (int i = 0; i < n; ++i) {
    ay.row(i) = rng.normal_vec(2).transpose();
    av(i, 0) = rng.normal();
    au(i, 0) = rng.uniform(-3.0, 7.0);
  }
  PluginConditionalMap map(ay, av, au, 4);
  const double lo = au.minCoeff(), hi = au.maxCoeff();
  for (int rep = 0; rep < 200; ++rep) {
    const Vec y = rng.normal_vec(2), v = rng.normal_vec(1);
    const double out = map.evaluate(y, v)[0];
    REQUIRE(out >= lo - 1e-12);
    REQUIRE(out <= hi + 1e-12);
  }
}

TEST_CASE("dense anchor grid reproduces a smooth synthetic map") {
  // anchors on a grid of (y, v) with u = f(y, v); f is 1-Lipschitz-ish
  auto f = [](double y, double v) { return 0.5 * y + 0.3 * std::sin(v); };
  const int g = 41;
  const double spacing = 2.0 / (g - 1);
  Mat ay(g * g, 1), av(g * g, 1), au(g * g, 1);
  int row = 0;
  for (int a = 0; a < g; ++a)
    for (int b = 0; b < g; ++b) {
      const double y = -1.0 + a * spacing, v = -1.0 + b * spacing;
      ay(row, 0) = y;
      av(row, 0) = v;
      au(row, 0) = f(y, v);
      ++row;
    }
  PluginConditionalMap map(ay, av, au, 2);
  Rng rng(93);
  double sup_err = 0.0;
  for (int rep = 0; rep < 400; ++rep) {
    const double y = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
    Vec yy(1), vv(1);
    yy << y;
    vv << v;
    sup_err = std::max(sup_err, std::abs(map.evaluate(yy, vv)[0] - f(y, v)));
  }
  const double lipschitz = 1.0;
  REQUIRE(sup_err <= 2.0 * spacing * lipschitz);
}

TEST_CASE("fit_plugin on a single sample gives a constant map") {
  std::vector<PairedSample> targets(1);
  targets[0].y = col({0.3}).row(0);
  targets[0].u = col({1.7}).row(0);
  auto fit = fit_plugin(targets, standard_normal_sampler(1), {5e-3}, 1, 4);
  Vec y(1), v(1);
  y << -2.0;
  v << 0.4;
  REQUIRE(fit.map.evaluate(y, v)[0] == Catch::Approx(1.7));
}

TEST_CASE("all-equal y with achievable pairing recovers the monotone matching") {
  // v_j and u_j both standard normal draws; at a single shared y-atom the
  // quadratic OT pairs them monotonically (1D sorted matching oracle)
  Rng rng(94);
  const int n = 31;
  std::vector<PairedSample> targets;
  Vec y0(1);
  y0 << 0.25;
  std::vector<double> us;
  for (int j = 0; j < n; ++j) {
    PairedSample s;
    s.y = y0;
    s.u = rng.normal_vec(1);
    us.push_back(s.u[0]);
    targets.push_back(s);
  }
  auto fit = fit_plugin(targets, standard_normal_sampler(1), {5e-3}, 1, 11);

  // oracle: sort anchors by v; their u must be the sorted u-multiset
  std::vector<std::pair<double, double>> pairs;
  for (int j = 0; j < n; ++j) pairs.push_back({fit.map.anchors_v()(j, 0), fit.map.anchors_u()(j, 0)});
  std::sort(pairs.begin(), pairs.end());
  std::sort(us.begin(), us.end());
  for (int j = 0; j < n; ++j) REQUIRE(pairs[static_cast<std::size_t>(j)].second == Catch::Approx(us[static_cast<std::size_t>(j)]));
}

TEST_CASE("interpolation constraints hold at the anchors after fitting") {
  Rng rng(95);
  std::vector<PairedSample> targets;
  for (int j = 0; j < 200; ++j) targets.push_back({rng.normal_vec(1), rng.normal_vec(1)});
  auto fit = fit_plugin(targets, standard_normal_sampler(1), {5e-3}, 2, 5);
  const auto& m = fit.map;
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const Vec got = m.evaluate(m.anchors_y().row(j), m.anchors_v().row(j));
    REQUIRE(got[0] == m.anchors_u()(j, 0));
  }
}

TEST_CASE("sparse and dense fit paths agree on mid-size instances") {
  Rng rng(96);
  std::vector<PairedSample> targets;
  for (int j = 0; j < 600; ++j) targets.push_back({rng.normal_vec(1), rng.normal_vec(1)});
  PluginFitOptions dense_opt;
  dense_opt.dense_limit = 10000;
  auto dense = fit_plugin(targets, standard_normal_sampler(1), {5e-3}, 2, 6, dense_opt);
  PluginFitOptions sparse_opt;
  sparse_opt.dense_limit = 10;
  auto sparse = fit_plugin(targets, standard_normal_sampler(1), {5e-3}, 2, 6, sparse_opt);
  REQUIRE(sparse.certified_optimum);
  REQUIRE(sparse.ot_cost == Catch::Approx(dense.ot_cost).margin(1e-10));
}

TEST_CASE("conditional_sample is deterministic and constant maps stay constant") {
  Mat ay = col({0.0}), av = col({0.0}), au = col({2.5});
  PluginConditionalMap map(ay, av, au, 1);
  Vec y(1);
  y << 0.1;
  const Mat s1 = map.conditional_sample(y, 32, standard_normal_sampler(1), 7);
  const Mat s2 = map.conditional_sample(y, 32, standard_normal_sampler(1), 7);
  REQUIRE((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((s1.array() == 2.5).all());
}

TEST_CASE("Monte Carlo mean of conditional samples converges to the pushforward mean") {
  Rng rng(97);
  const int n = 150;
  Mat ay(n, 1), av(n, 1), au(n, 1);
  for (int i = 0; i < n; ++i) {
    ay(i, 0) = rng.uniform(-1, 1);
    av(i, 0) = rng.normal();
    au(i, 0) = std::tanh(av(i, 0));
  }
  PluginConditionalMap map(ay, av, au, 2);
  Vec y(1);
  y << 0.0;

  // oracle: the pushforward mean under a dense quadrature of N(0,1)
  double ref_mean = 0.0;
  const int quad = 20000;
  Rng qr(98);
  Vec vq(1);
  for (int t = 0; t < quad; ++t) {
    vq[0] = qr.normal();
    ref_mean += map.evaluate(y, vq)[0];
  }
  ref_mean /= quad;

  const Eigen::Index m = 20000;
  const Mat s = map.conditional_sample(y, m, standard_normal_sampler(1), 123);
  const double mc_mean = s.col(0).mean();
  const double mc_sd = std::sqrt((s.col(0).array() - mc_mean).square().sum() / (m - 1));
  REQUIRE(std::abs(mc_mean - ref_mean) <= 3.0 * mc_sd / std::sqrt(static_cast<double>(m)) + 1e-3);
}
