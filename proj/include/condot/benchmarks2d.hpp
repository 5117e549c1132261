#pragma once

#include "condot/common.hpp"
#include "condot/measures.hpp"
#include "condot/rng.hpp"

#include <string>
#include <vector>

namespace condot {

/// Two-dimensional benchmark targets normalized into [-1, 1]^2; the first
/// coordinate is the conditioning variable y, the second the parameter u.
/// Parameterizations follow the standard definitions of these families; the
/// per-family raw box and scale are fixed constants (recorded with each
/// dataset), and raw draws falling outside the box are rejected and redrawn
/// so the normalization contract holds for every sample.
enum class BenchmarkFamily { pinwheel, two_moons, checkerboard, swiss_roll };

inline BenchmarkFamily benchmark_family_from_string(const std::string& name) {
  if (name == "pinwheel") return BenchmarkFamily::pinwheel;
  if (name == "two_moons") return BenchmarkFamily::two_moons;
  if (name == "checkerboard") return BenchmarkFamily::checkerboard;
  if (name == "swiss_roll") return BenchmarkFamily::swiss_roll;
  throw std::invalid_argument("unknown benchmark family: " + name);
}

inline std::string to_string(BenchmarkFamily f) {
  switch (f) {
    case BenchmarkFamily::pinwheel: return "pinwheel";
    case BenchmarkFamily::two_moons: return "two_moons";
    case BenchmarkFamily::checkerboard: return "checkerboard";
    case BenchmarkFamily::swiss_roll: return "swiss_roll";
  }
  throw std::invalid_argument("unknown benchmark family");
}

struct Benchmark2D {
  BenchmarkFamily family = BenchmarkFamily::pinwheel;
  double noise_scale = 1.0;  // multiplies the family's intrinsic noise
  double raw_box = 4.0;      // raw draws are confined to [-raw_box, raw_box]^2
};

namespace detail {

/// One raw (pre-normalization) draw of the family.
inline Vec raw_benchmark_draw(const Benchmark2D& b, Rng& rng) {
  Vec p(2);
  switch (b.family) {
    case BenchmarkFamily::pinwheel: {
      // five Gaussian arms swirled proportionally to their radial coordinate
      const int arm = static_cast<int>(rng.uniform_index(5));
      const double radial = 0.3 * rng.normal() + 2.0;
      const double tangential = 0.15 * b.noise_scale * rng.normal();
      const double base = 2.0 * M_PI * arm / 5.0;
      const double swirl = base + 0.6 * radial;
      p << radial * std::cos(swirl) - tangential * std::sin(swirl),
          radial * std::sin(swirl) + tangential * std::cos(swirl);
      return p;
    }
    case BenchmarkFamily::two_moons: {
      const double t = M_PI * rng.uniform();
      const double n1 = 0.1 * b.noise_scale * rng.normal();
      const double n2 = 0.1 * b.noise_scale * rng.normal();
      if (rng.uniform() < 0.5)
        p << std::cos(t) - 0.5 + n1, std::sin(t) - 0.25 + n2;
      else
        p << 0.5 - std::cos(t) + n1, 0.25 - std::sin(t) + n2;
      p *= 2.0;
      return p;
    }
    case BenchmarkFamily::checkerboard: {
      // uniform over the dark cells of a 4x4 board on [-2, 2]^2
      const int ix = static_cast<int>(rng.uniform_index(4));
      const int iy_options[2] = {0, 2};
      const int iy = iy_options[rng.uniform_index(2)] + (ix % 2);
      p << -2.0 + ix + rng.uniform(), -2.0 + iy + rng.uniform();
      return p;
    }
    case BenchmarkFamily::swiss_roll: {
      const double t = 1.5 * M_PI * (1.0 + 2.0 * rng.uniform());
      p << t * std::cos(t) / 7.0, t * std::sin(t) / 7.0;
      p[0] += 0.05 * b.noise_scale * rng.normal();
      p[1] += 0.05 * b.noise_scale * rng.normal();
      return p;
    }
  }
  throw std::invalid_argument("unknown benchmark family");
}

}  // namespace detail

/// n i.i.d. draws normalized into [-1, 1]^2 by the fixed affine map
/// x -> x / raw_box. Deterministic given the seed.
inline std::vector<PairedSample> sample_benchmark(const Benchmark2D& b, Eigen::Index n,
                                                  std::uint64_t seed) {
  require(n >= 1, "sample_benchmark: n must be >= 1");
  Rng rng(derive_seed(seed, "benchmark2d"));
  std::vector<PairedSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    Vec raw;
    do {
      raw = detail::raw_benchmark_draw(b, rng);
    } while (raw.cwiseAbs().maxCoeff() > b.raw_box);
    PairedSample s;
    s.y = Vec::Constant(1, raw[0] / b.raw_box);
    s.u = Vec::Constant(1, raw[1] / b.raw_box);
    out.push_back(std::move(s));
  }
  return out;
}

struct SlabResult {
  std::vector<double> u_values;
  double acceptance_rate = 0.0;
  bool complete = false;  // false when the slab acceptance rate collapsed
};

/// Rejection-based conditional ground truth: draws from the benchmark and
/// keeps u-values of samples with |y - y0| <= delta until n_keep are
/// collected. If the acceptance rate falls below 1e-5 the partial result is
/// returned with complete = false.
inline SlabResult conditional_truth_slab(const Benchmark2D& b, double y0, double delta,
                                         Eigen::Index n_keep, std::uint64_t seed) {
  require(delta > 0.0, "conditional_truth_slab: delta must be positive");
  require(n_keep >= 1, "conditional_truth_slab: n_keep must be >= 1");
  Rng rng(derive_seed(seed, "slab"));
  SlabResult out;
  long drawn = 0;
  const long min_probe = 200000;
  while (static_cast<Eigen::Index>(out.u_values.size()) < n_keep) {
    Vec raw;
    do {
      raw = detail::raw_benchmark_draw(b, rng);
    } while (raw.cwiseAbs().maxCoeff() > b.raw_box);
    ++drawn;
    const double y = raw[0] / b.raw_box;
    if (std::abs(y - y0) <= delta) out.u_values.push_back(raw[1] / b.raw_box);
    if (drawn >= min_probe &&
        static_cast<double>(out.u_values.size()) / static_cast<double>(drawn) < 1e-5)
      break;
  }
  out.acceptance_rate = static_cast<double>(out.u_values.size()) / static_cast<double>(drawn);
  out.complete = static_cast<Eigen::Index>(out.u_values.size()) >= n_keep;
  return out;
}

}  // namespace condot
