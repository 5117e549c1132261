#pragma once

#include "condot/common.hpp"
#include "condot/measures.hpp"
#include "condot/rng.hpp"

#include <utility>
#include <vector>

namespace condot {

/// Random Fourier feature expansion of the (y, v) input: frequencies drawn
/// once from N(0, bandwidth^-2), phases uniform on [0, 2pi); fixed after
/// construction.
struct FeatureExpansion {
  Mat frequencies;  // R x d_in
  Vec phases;       // R
  double bandwidth = 1.0;

  Eigen::Index count() const { return frequencies.rows(); }
  Eigen::Index input_dim() const { return frequencies.cols(); }

  /// Row-wise features of a batch: sqrt(2/R) cos(X W^T + b).
  Mat operator()(const Mat& inputs) const {
    const double scale = std::sqrt(2.0 / static_cast<double>(count()));
    return (((inputs * frequencies.transpose()).rowwise() + phases.transpose()).array().cos() *
            scale)
        .matrix();
  }
};

inline FeatureExpansion make_feature_expansion(Eigen::Index n_features, Eigen::Index input_dim,
                                               double bandwidth, std::uint64_t seed) {
  require(n_features >= 1, "make_feature_expansion: need at least one feature");
  require(bandwidth > 0.0, "make_feature_expansion: bandwidth must be positive");
  Rng rng(derive_seed(seed, "feature_expansion"));
  FeatureExpansion f;
  f.bandwidth = bandwidth;
  f.frequencies = Mat(n_features, input_dim);
  for (Eigen::Index i = 0; i < n_features; ++i)
    f.frequencies.row(i) = (rng.normal_vec(input_dim) / bandwidth).transpose();
  f.phases = Vec(n_features);
  for (Eigen::Index i = 0; i < n_features; ++i) f.phases[i] = rng.uniform(0.0, 2.0 * M_PI);
  return f;
}

/// Triangular map candidate T(y, v) = W [features(y, v); 1]: linear in the
/// readout weights, so the training objective has closed-form gradients.
/// The y-coordinate is passed through unchanged by construction.
struct LinearReadoutMap {
  Mat weights;  // d_u x (R + 1), bias in the last column
  FeatureExpansion features;
  Eigen::Index dim_y = 0;

  Eigen::Index dim_u() const { return weights.rows(); }
  Eigen::Index dim_v() const { return features.input_dim() - dim_y; }

  /// Applies T to a batch given as rows (y_j, v_j).
  Mat apply_joint(const Mat& yv) const {
    require(yv.cols() == features.input_dim(), "LinearReadoutMap: input dimension mismatch");
    const Mat f = features(yv);
    Mat out = f * weights.leftCols(weights.cols() - 1).transpose();
    out.rowwise() += weights.col(weights.cols() - 1).transpose();
    return out;
  }

  Vec evaluate(const Vec& y, const Vec& v) const {
    Mat yv(1, y.size() + v.size());
    yv << y.transpose(), v.transpose();
    return apply_joint(yv).row(0);
  }
};

/// Squared maximum mean discrepancy with a Gaussian kernel
/// k(a, b) = exp(-||a - b||^2 / (2 h^2)), V-statistic form.
inline double mmd2(const Mat& xs, const Mat& ys, double bandwidth) {
  require(xs.rows() > 0 && ys.rows() > 0, "mmd2: empty sample set");
  require(xs.cols() == ys.cols(), "mmd2: dimension mismatch");
  require(bandwidth > 0.0, "mmd2: bandwidth must be positive");
  const double inv = -1.0 / (2.0 * bandwidth * bandwidth);
  auto mean_kernel = [inv](const Mat& a, const Mat& b) {
    Mat d = (-2.0 * a * b.transpose()).colwise() + a.rowwise().squaredNorm();
    d.rowwise() += b.rowwise().squaredNorm().transpose();
    return (d.cwiseMax(0.0) * inv).array().exp().mean();
  };
  return mean_kernel(xs, xs) + mean_kernel(ys, ys) - 2.0 * mean_kernel(xs, ys);
}

/// Median pairwise distance over (a subsample of) the rows; the bandwidth
/// default used throughout training.
inline double median_heuristic_bandwidth(const Mat& samples, std::uint64_t seed,
                                         Eigen::Index max_points = 512) {
  Rng rng(derive_seed(seed, "median_heuristic"));
  Mat sub;
  if (samples.rows() <= max_points) {
    sub = samples;
  } else {
    sub = Mat(max_points, samples.cols());
    for (Eigen::Index i = 0; i < max_points; ++i)
      sub.row(i) = samples.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(samples.rows()))));
  }
  std::vector<double> d;
  for (Eigen::Index i = 0; i < sub.rows(); ++i)
    for (Eigen::Index j = i + 1; j < sub.rows(); ++j) {
      const double dist = (sub.row(i) - sub.row(j)).norm();
      if (dist > 0.0) d.push_back(dist);
    }
  require(!d.empty(), "median_heuristic_bandwidth: degenerate sample set");
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

struct TrainConfig {
  double lambda = 0.1;           // divergence weight is 1/lambda
  double kernel_bandwidth = 0.0; // 0: median heuristic on the targets at train start
  Eigen::Index batch_size = 128;
  double learning_rate = 0.05;
  int iterations = 2000;
  std::uint64_t seed = 0;
  double monge_weight = 1.0;     // 0 trains the divergence-only ablation
};

inline void validate(const TrainConfig& c) {
  require(c.lambda > 0.0 && c.kernel_bandwidth >= 0.0 && c.batch_size > 0 &&
              c.learning_rate > 0.0 && c.iterations >= 0 && c.monge_weight >= 0.0,
          "TrainConfig: all parameters must be positive");
}

struct LossBreakdown {
  double monge = 0.0;
  double mmd = 0.0;
  double total = 0.0;
};

/// Objective on one batch: mean ||v_j - T(y_j, v_j)||^2 plus (1/lambda)
/// times the MMD between {(y_j, T(y_j, v_j))} and the target batch.
inline LossBreakdown monge_mmd_loss_parts(const LinearReadoutMap& map, const Mat& batch_ref,
                                          const Mat& batch_tgt, const TrainConfig& cfg) {
  validate(cfg);
  require(batch_ref.rows() > 0 && batch_tgt.rows() > 0, "monge_mmd_loss: empty batch");
  require(cfg.kernel_bandwidth > 0.0, "monge_mmd_loss: bandwidth must be resolved");
  const Eigen::Index dy = map.dim_y, dv = map.dim_v();
  require(batch_ref.cols() == dy + dv, "monge_mmd_loss: reference batch dimension mismatch");
  require(dv == map.dim_u(), "monge_mmd_loss: Monge term requires dim V == dim U");

  const Mat t = map.apply_joint(batch_ref);
  LossBreakdown out;
  out.monge = (batch_ref.rightCols(dv) - t).rowwise().squaredNorm().mean();
  Mat push(batch_ref.rows(), dy + map.dim_u());
  push << batch_ref.leftCols(dy), t;
  out.mmd = mmd2(push, batch_tgt, cfg.kernel_bandwidth);
  out.total = cfg.monge_weight * out.monge + out.mmd / cfg.lambda;
  return out;
}

inline double monge_mmd_loss(const LinearReadoutMap& map, const Mat& batch_ref,
                             const Mat& batch_tgt, const TrainConfig& cfg) {
  return monge_mmd_loss_parts(map, batch_ref, batch_tgt, cfg).total;
}

/// Closed-form gradient of the batch objective in the readout weights.
inline Mat grad_loss(const LinearReadoutMap& map, const Mat& batch_ref, const Mat& batch_tgt,
                     const TrainConfig& cfg) {
  validate(cfg);
  require(cfg.kernel_bandwidth > 0.0, "grad_loss: bandwidth must be resolved");
  const Eigen::Index dy = map.dim_y, dv = map.dim_v(), du = map.dim_u();
  require(dv == du, "grad_loss: Monge term requires dim V == dim U");
  const Eigen::Index mb = batch_ref.rows(), mt = batch_tgt.rows();

  const Mat feats = map.features(batch_ref);  // mb x R
  Mat aug(mb, feats.cols() + 1);
  aug << feats, Vec::Ones(mb);
  const Mat t = (aug * map.weights.transpose());  // mb x du

  Mat push(mb, dy + du);
  push << batch_ref.leftCols(dy), t;

  const double h2 = cfg.kernel_bandwidth * cfg.kernel_bandwidth;

  // dLoss/dT_j, assembled batch-wise
  Mat g = 2.0 * cfg.monge_weight / static_cast<double>(mb) * (t - batch_ref.rightCols(dv));

  auto kernel = [&](const Mat& a, const Mat& b) -> Mat {
    Mat d = (-2.0 * a * b.transpose()).colwise() + a.rowwise().squaredNorm();
    d.rowwise() += b.rowwise().squaredNorm().transpose();
    return (d.cwiseMax(0.0) * (-1.0 / (2.0 * h2))).array().exp().matrix();
  };
  const Mat kxx = kernel(push, push);        // mb x mb
  const Mat kxz = kernel(push, batch_tgt);   // mb x mt

  // self term: (2/(mb^2)) sum_b dk(X_j, X_b)/dX_j = -(2/(mb^2 h^2)) (X_j - X_b) k_jb
  const Vec kxx_rowsum = kxx.rowwise().sum();
  Mat mmd_grad = (-2.0 / (static_cast<double>(mb) * static_cast<double>(mb) * h2)) *
                 (kxx_rowsum.asDiagonal() * t - kxx * t);
  // cross term: -(2/(mb mt)) sum_l dk(X_j, Z_l)/dX_j
  const Vec kxz_rowsum = kxz.rowwise().sum();
  mmd_grad += (2.0 / (static_cast<double>(mb) * static_cast<double>(mt) * h2)) *
              (kxz_rowsum.asDiagonal() * t - kxz * batch_tgt.rightCols(du));
  g += mmd_grad / cfg.lambda;

  return g.transpose() * aug;  // du x (R+1)
}

struct LossTraceRow {
  int iteration;
  double monge_term;
  double mmd_term;
  double total;
};

/// Raised when the training loss turns non-finite; carries the trace up to
/// the failing iteration.
class training_diverged : public numerical_error {
 public:
  training_diverged(const std::string& msg, std::vector<LossTraceRow> trace)
      : numerical_error(msg), trace_(std::move(trace)) {}
  const std::vector<LossTraceRow>& trace() const { return trace_; }

 private:
  std::vector<LossTraceRow> trace_;
};

struct TrainResult {
  LinearReadoutMap map;
  std::vector<LossTraceRow> trace;
  double bandwidth = 0.0;
};

struct TrainOptions {
  Eigen::Index n_features = 256;
  double feature_bandwidth = 0.0;  // 0: median heuristic on reference inputs
  Eigen::Index ridge_warmstart_batch = 512;
  double ridge = 1e-6;
};

/// Mini-batch gradient descent on the Monge + divergence objective. The
/// readout is warm-started by ridge regression of v on the features (the
/// unconstrained optimum of the Monge term alone), then descends the full
/// objective. Deterministic given cfg.seed; zero iterations returns the
/// initialized map unchanged.
inline TrainResult train(const std::vector<PairedSample>& targets, const RefSampler& sampler,
                         TrainConfig cfg, const TrainOptions& opt = {}) {
  validate(cfg);
  require(targets.size() >= 2 * static_cast<std::size_t>(cfg.batch_size),
          "train: need at least 2 x batch_size samples");
  Rng rng(derive_seed(cfg.seed, "monge_train"));
  const Eigen::Index dy = targets.front().y.size();
  const Eigen::Index du = targets.front().u.size();
  const Vec v_probe = sampler(rng);
  const Eigen::Index dv = v_probe.size();
  require(dv == du, "train: Monge objective requires dim V == dim U");

  const auto n = static_cast<Eigen::Index>(targets.size());
  Mat tgt(n, dy + du);
  for (Eigen::Index j = 0; j < n; ++j)
    tgt.row(j) << targets[static_cast<std::size_t>(j)].y.transpose(),
        targets[static_cast<std::size_t>(j)].u.transpose();

  if (cfg.kernel_bandwidth <= 0.0)
    cfg.kernel_bandwidth = median_heuristic_bandwidth(tgt, cfg.seed);

  // warm-start batch of reference inputs (y_j, v) with fresh v draws
  const Eigen::Index m0 = std::min(opt.ridge_warmstart_batch, n);
  Mat init(m0, dy + dv);
  for (Eigen::Index j = 0; j < m0; ++j) {
    const auto pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    init.row(j) << targets[static_cast<std::size_t>(pick)].y.transpose(), sampler(rng).transpose();
  }

  double fb = opt.feature_bandwidth;
  if (fb <= 0.0) fb = median_heuristic_bandwidth(init, cfg.seed + 1);

  LinearReadoutMap map;
  map.dim_y = dy;
  map.features = make_feature_expansion(opt.n_features, dy + dv, fb, cfg.seed);
  {
    const Mat f = map.features(init);
    Mat aug(m0, f.cols() + 1);
    aug << f, Vec::Ones(m0);
    const Mat gram = aug.transpose() * aug +
                     opt.ridge * static_cast<double>(m0) * Mat::Identity(aug.cols(), aug.cols());
    map.weights = gram.ldlt().solve(aug.transpose() * init.rightCols(dv)).transpose();
  }

  TrainResult out;
  out.bandwidth = cfg.kernel_bandwidth;
  for (int it = 1; it <= cfg.iterations; ++it) {
    Mat bref(cfg.batch_size, dy + dv), btgt(cfg.batch_size, dy + du);
    for (Eigen::Index j = 0; j < cfg.batch_size; ++j) {
      const auto pr = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      bref.row(j) << targets[static_cast<std::size_t>(pr)].y.transpose(), sampler(rng).transpose();
      const auto pt = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      btgt.row(j) = tgt.row(pt);
    }
    const auto parts = monge_mmd_loss_parts(map, bref, btgt, cfg);
    out.trace.push_back({it, parts.monge, parts.mmd, parts.total});
    if (!std::isfinite(parts.total))
      throw training_diverged("train: loss became non-finite at iteration " + std::to_string(it),
                              out.trace);
    map.weights -= cfg.learning_rate * grad_loss(map, bref, btgt, cfg);
  }
  out.map = std::move(map);
  return out;
}

/// Fraction of probe triples (y, z1, z2) with
/// <T(y, z1) - T(y, z2), z1 - z2> >= 0.
struct MonotonicityProbe {
  Vec y, z1, z2;
};

inline double monotonicity_fraction(const LinearReadoutMap& map,
                                    const std::vector<MonotonicityProbe>& probes) {
  require(!probes.empty(), "monotonicity_fraction: no probes");
  std::size_t good = 0;
  for (const auto& p : probes) {
    const Vec d = map.evaluate(p.y, p.z1) - map.evaluate(p.y, p.z2);
    if (d.dot(p.z1 - p.z2) >= 0.0) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(probes.size());
}

}  // namespace condot
