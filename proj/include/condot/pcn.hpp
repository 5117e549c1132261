#pragma once

#include "condot/common.hpp"
#include "condot/rng.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace condot {

using Potential = std::function<double(const Vec&)>;
using PriorSampler = std::function<Vec(Rng&)>;

struct PcnConfig {
  double beta = 0.2;              // proposal step in (0, 1]
  long iterations = 100000;
  long burn_in = 10000;
  long thinning = 10;
  double target_acceptance = 0.25;
  bool adapt = true;              // Robbins-Monro on log(beta) during burn-in
  std::uint64_t seed = 0;
};

inline void validate(const PcnConfig& c) {
  require(c.beta > 0.0 && c.beta <= 1.0, "PcnConfig: beta must lie in (0, 1]");
  require(c.iterations > 0 && c.burn_in >= 0 && c.burn_in < c.iterations,
          "PcnConfig: burn_in must be smaller than iterations");
  require(c.thinning >= 1, "PcnConfig: thinning must be >= 1");
  require(c.target_acceptance > 0.0 && c.target_acceptance < 1.0,
          "PcnConfig: target acceptance in (0, 1)");
}

struct Chain {
  Mat states;              // post-burn-in, thinned; rows are fields
  double acceptance_rate;  // post-burn-in
  std::vector<double> beta_trace;
  double final_beta;
};

/// One pCN transition: proposal sqrt(1 - beta^2) u + beta xi with a fresh
/// prior draw xi, accepted with probability min(1, exp(Phi(u) - Phi(u'))).
/// Prior-reversible, so Phi == 0 accepts always. Returns the new state, its
/// potential value and the acceptance flag.
inline std::tuple<Vec, double, bool> pcn_step(const Vec& u, double phi_u, const Potential& phi,
                                              const PriorSampler& prior, double beta, Rng& rng) {
  const Vec xi = prior(rng);
  const Vec proposal = std::sqrt(1.0 - beta * beta) * u + beta * xi;
  const double phi_prop = phi(proposal);
  const double log_ratio = phi_u - phi_prop;
  if (log_ratio >= 0.0 || rng.uniform() < std::exp(log_ratio)) return {proposal, phi_prop, true};
  return {u, phi_u, false};
}

inline std::pair<Vec, bool> pcn_step(const Vec& u, const Potential& phi, const PriorSampler& prior,
                                     double beta, Rng& rng) {
  auto [state, value, accepted] = pcn_step(u, phi(u), phi, prior, beta, rng);
  return {state, accepted};
}

/// Runs a pCN chain. During burn-in, beta optionally adapts by
/// Robbins-Monro on log(beta) with step 1/sqrt(t) toward the target
/// acceptance rate, and is frozen afterwards so the stationary distribution
/// of the recorded segment is exact. Deterministic given cfg.seed.
inline Chain run_chain(const PcnConfig& cfg, const Potential& phi, const PriorSampler& prior,
                       const Vec& u0) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, "pcn_chain"));

  Vec u = u0;
  double phi_u = phi(u);
  double beta = cfg.beta;

  Chain chain;
  chain.beta_trace.reserve(static_cast<std::size_t>(cfg.burn_in / 100 + 2));
  const long kept = (cfg.iterations - cfg.burn_in) / cfg.thinning;
  chain.states = Mat(kept, u0.size());

  long accepted_post = 0, post_steps = 0, stored = 0;
  for (long t = 1; t <= cfg.iterations; ++t) {
    auto [nu, nphi, acc] = pcn_step(u, phi_u, phi, prior, beta, rng);
    u = std::move(nu);
    phi_u = nphi;

    if (t <= cfg.burn_in) {
      if (cfg.adapt) {
        const double step = 0.7 / std::sqrt(static_cast<double>(t));
        beta = std::clamp(beta * std::exp(step * ((acc ? 1.0 : 0.0) - cfg.target_acceptance)),
                          1e-6, 1.0);
        if (t % 100 == 0) chain.beta_trace.push_back(beta);
      }
    } else {
      ++post_steps;
      if (acc) ++accepted_post;
      if ((t - cfg.burn_in) % cfg.thinning == 0 && stored < kept)
        chain.states.row(stored++) = u.transpose();
    }
  }
  chain.states.conservativeResize(stored, Eigen::NoChange);
  chain.acceptance_rate = post_steps > 0 ? static_cast<double>(accepted_post) / static_cast<double>(post_steps) : 0.0;
  chain.final_beta = beta;
  return chain;
}

/// Node-wise sample mean and unbiased variance of the stored states.
inline std::pair<Vec, Vec> posterior_stats(const Chain& chain) {
  require(chain.states.rows() > 0, "posterior_stats: empty chain");
  const Vec mean = chain.states.colwise().mean().transpose();
  if (chain.states.rows() == 1) return {mean, Vec::Zero(chain.states.cols())};
  const Vec var = ((chain.states.rowwise() - mean.transpose()).colwise().squaredNorm() /
                   static_cast<double>(chain.states.rows() - 1))
                      .transpose();
  return {mean, var};
}

}  // namespace condot
