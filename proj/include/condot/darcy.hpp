#pragma once

#include "condot/common.hpp"
#include "condot/grf.hpp"
#include "condot/rng.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <utility>
#include <vector>

namespace condot {

/// Darcy problem setup: -div(exp(u) grad p) = f on the unit square with
/// homogeneous Dirichlet boundary, observed at interior sensor locations
/// under additive Gaussian noise.
struct DarcyProblem {
  Grid2D grid;
  Vec source;            // per-node f; defaults to constant 1
  Mat sensors;           // m x 2 interior locations
  double noise_sigma = 0.01;
};

/// Uniform s x s sensor lattice inset from the boundary (pressure is pinned
/// to zero there, so measurements on the boundary carry no information).
inline Mat sensor_lattice(Eigen::Index s, double inset) {
  require(s >= 1, "sensor_lattice: need at least one sensor per side");
  require(inset > 0.0 && inset < 0.5, "sensor_lattice: inset must be in (0, 1/2)");
  Mat out(s * s, 2);
  for (Eigen::Index a = 0; a < s; ++a)
    for (Eigen::Index b = 0; b < s; ++b) {
      const double t = (s == 1) ? 0.5 : inset + (1.0 - 2.0 * inset) * static_cast<double>(a) /
                                                    static_cast<double>(s - 1);
      const double q = (s == 1) ? 0.5 : inset + (1.0 - 2.0 * inset) * static_cast<double>(b) /
                                                    static_cast<double>(s - 1);
      out(a * s + b, 0) = t;
      out(a * s + b, 1) = q;
    }
  return out;
}

inline DarcyProblem make_darcy_problem(Grid2D grid, double noise_sigma = 0.01,
                                       Eigen::Index sensors_per_side = 8) {
  DarcyProblem p;
  p.grid = grid;
  p.source = Vec::Ones(grid.nodes());
  p.sensors = sensor_lattice(sensors_per_side, std::max(grid.hx(), grid.hy()));
  p.noise_sigma = noise_sigma;
  require(noise_sigma > 0.0, "make_darcy_problem: noise_sigma must be positive");
  return p;
}

/// 5-point finite-difference solve of the Darcy PDE for log-permeability u
/// (per grid node). Interface conductivities are harmonic means of exp(u)
/// at the adjacent nodes; the interior system is SPD and solved by sparse
/// Cholesky. Returns the full pressure field with zero boundary values.
inline Vec solve_darcy(const DarcyProblem& problem, const Vec& u) {
  const auto& g = problem.grid;
  require(u.size() == g.nodes(), "solve_darcy: field size mismatch");
  require(all_finite(u), "solve_darcy: non-finite log-permeability");
  require(problem.source.size() == g.nodes(), "solve_darcy: source size mismatch");

  const Eigen::Index nx = g.nx, ny = g.ny;
  const Eigen::Index ix = nx - 2, iy = ny - 2;  // interior extent
  const double hx2 = g.hx() * g.hx(), hy2 = g.hy() * g.hy();
  const Vec a = u.array().exp();

  auto node = [nx](Eigen::Index i, Eigen::Index j) { return j * nx + i; };
  auto interior = [ix](Eigen::Index i, Eigen::Index j) { return (j - 1) * ix + (i - 1); };
  auto harmonic = [&](Eigen::Index p, Eigen::Index q) {
    return 2.0 / (1.0 / a[p] + 1.0 / a[q]);
  };

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(5 * ix * iy));
  Vec rhs(ix * iy);
  for (Eigen::Index j = 1; j <= iy; ++j) {
    for (Eigen::Index i = 1; i <= ix; ++i) {
      const Eigen::Index row = interior(i, j);
      const double aw = harmonic(node(i, j), node(i - 1, j)) / hx2;
      const double ae = harmonic(node(i, j), node(i + 1, j)) / hx2;
      const double as = harmonic(node(i, j), node(i, j - 1)) / hy2;
      const double an = harmonic(node(i, j), node(i, j + 1)) / hy2;
      trips.emplace_back(row, row, aw + ae + as + an);
      if (i > 1) trips.emplace_back(row, interior(i - 1, j), -aw);
      if (i < ix) trips.emplace_back(row, interior(i + 1, j), -ae);
      if (j > 1) trips.emplace_back(row, interior(i, j - 1), -as);
      if (j < iy) trips.emplace_back(row, interior(i, j + 1), -an);
      rhs[row] = problem.source[node(i, j)];
    }
  }
  Eigen::SparseMatrix<double> mat(ix * iy, ix * iy);
  mat.setFromTriplets(trips.begin(), trips.end());

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(mat);
  if (solver.info() != Eigen::Success)
    throw numerical_error("solve_darcy: factorization failed (system not SPD?)");
  const Vec sol = solver.solve(rhs);
  if (solver.info() != Eigen::Success) throw numerical_error("solve_darcy: solve failed");

  Vec p = Vec::Zero(g.nodes());
  for (Eigen::Index j = 1; j <= iy; ++j)
    for (Eigen::Index i = 1; i <= ix; ++i) p[node(i, j)] = sol[interior(i, j)];
  return p;
}

/// Bilinear interpolation of the pressure field at each sensor.
inline Vec observe(const DarcyProblem& problem, const Vec& p) {
  const auto& g = problem.grid;
  require(p.size() == g.nodes(), "observe: field size mismatch");
  Vec out(problem.sensors.rows());
  for (Eigen::Index s = 0; s < problem.sensors.rows(); ++s) {
    const double x = problem.sensors(s, 0), y = problem.sensors(s, 1);
    require(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0, "observe: sensor outside the domain");
    const double fx = x / g.hx(), fy = y / g.hy();
    const auto i0 = std::min(static_cast<Eigen::Index>(fx), g.nx - 2);
    const auto j0 = std::min(static_cast<Eigen::Index>(fy), g.ny - 2);
    const double tx = fx - static_cast<double>(i0), ty = fy - static_cast<double>(j0);
    const double p00 = p[j0 * g.nx + i0], p10 = p[j0 * g.nx + i0 + 1];
    const double p01 = p[(j0 + 1) * g.nx + i0], p11 = p[(j0 + 1) * g.nx + i0 + 1];
    out[s] = (1 - tx) * (1 - ty) * p00 + tx * (1 - ty) * p10 + (1 - tx) * ty * p01 + tx * ty * p11;
  }
  return out;
}

/// Forward model with measurement noise: observe(solve(u)) + N(0, sigma^2 I).
inline Vec simulate_data(const DarcyProblem& problem, const Vec& u, std::uint64_t seed) {
  Vec y = observe(problem, solve_darcy(problem, u));
  Rng rng(derive_seed(seed, "darcy_noise"));
  for (Eigen::Index s = 0; s < y.size(); ++s) y[s] += problem.noise_sigma * rng.normal();
  return y;
}

/// Negative log-likelihood Phi(u; y) = (1 / 2 sigma^2) sum_j (p(u)(x_j) - y_j)^2.
inline double likelihood_phi(const DarcyProblem& problem, const Vec& u, const Vec& y) {
  require(y.size() == problem.sensors.rows(), "likelihood_phi: observation size mismatch");
  const Vec pred = observe(problem, solve_darcy(problem, u));
  return (pred - y).squaredNorm() / (2.0 * problem.noise_sigma * problem.noise_sigma);
}

}  // namespace condot
