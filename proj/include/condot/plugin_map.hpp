#pragma once

#include "condot/assignment_sparse.hpp"
#include "condot/conditional.hpp"
#include "condot/kdtree.hpp"
#include "condot/measures.hpp"

#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace condot {

/// Conditional map fitted from the empirical perturbed-OT solution: stores
/// the training triples (y_j, v_j, u_j) and extends them off-sample by
/// distance-weighted k-nearest-neighbour interpolation in (y, v).
class PluginConditionalMap {
 public:
  PluginConditionalMap(Mat anchors_y, Mat anchors_v, Mat anchors_u, Eigen::Index k,
                       Vec input_metric_weights = Vec())
      : y_(std::move(anchors_y)), v_(std::move(anchors_v)), u_(std::move(anchors_u)), k_(k) {
    require(y_.rows() > 0, "PluginConditionalMap: no anchors");
    require(y_.rows() == v_.rows() && y_.rows() == u_.rows(),
            "PluginConditionalMap: anchor count mismatch");
    require(k_ >= 1 && k_ <= y_.rows(), "PluginConditionalMap: k out of range");
    const Eigen::Index din = y_.cols() + v_.cols();
    if (input_metric_weights.size() == 0) input_metric_weights = Vec::Ones(din);
    require(input_metric_weights.size() == din,
            "PluginConditionalMap: metric weight size mismatch");
    require((input_metric_weights.array() > 0).all(),
            "PluginConditionalMap: metric weights must be positive");
    weights_ = std::move(input_metric_weights);

    Mat scaled(y_.rows(), din);
    scaled << y_, v_;
    scaled = scaled.array().rowwise() * weights_.transpose().array();
    if (y_.rows() >= kBruteForceLimit) tree_ = std::make_shared<const KdTree>(scaled);
    else scaled_ = std::move(scaled);
  }

  Eigen::Index size() const { return y_.rows(); }
  Eigen::Index dim_y() const { return y_.cols(); }
  Eigen::Index dim_v() const { return v_.cols(); }
  Eigen::Index dim_u() const { return u_.cols(); }
  Eigen::Index k() const { return k_; }
  const Mat& anchors_y() const { return y_; }
  const Mat& anchors_v() const { return v_; }
  const Mat& anchors_u() const { return u_; }
  const Vec& metric_weights() const { return weights_; }

  /// Distance-weighted average of the u-values of the k nearest anchors;
  /// an exact anchor hit returns that anchor's u (lowest index on ties).
  Vec evaluate(const Vec& y, const Vec& v) const {
    require(y.size() == y_.cols() && v.size() == v_.cols(),
            "PluginConditionalMap::evaluate: dimension mismatch");
    Vec q(y.size() + v.size());
    q << y, v;
    q = q.array() * weights_.array();

    std::vector<KdTree::Neighbor> nb;
    if (tree_) {
      nb = tree_->knn(q, k_);
    } else {
      nb.reserve(static_cast<std::size_t>(scaled_.rows()));
      for (Eigen::Index i = 0; i < scaled_.rows(); ++i)
        nb.push_back({(scaled_.row(i).transpose() - q).squaredNorm(), i});
      std::sort(nb.begin(), nb.end(), [](const auto& a, const auto& b) {
        return a.sq_dist != b.sq_dist ? a.sq_dist < b.sq_dist : a.index < b.index;
      });
      nb.resize(static_cast<std::size_t>(std::min(k_, static_cast<Eigen::Index>(nb.size()))));
    }

    if (nb.front().sq_dist == 0.0 || nb.size() == 1) return u_.row(nb.front().index);
    double total = 0.0;
    Vec out = Vec::Zero(u_.cols());
    for (const auto& x : nb) {
      const double w = 1.0 / std::sqrt(x.sq_dist);
      total += w;
      out += w * u_.row(x.index).transpose();
    }
    return out / total;
  }

  /// n conditional draws at fixed y: fresh reference samples pushed through
  /// the interpolant. Deterministic given the seed.
  Mat conditional_sample(const Vec& y, Eigen::Index n, const RefSampler& sampler,
                         std::uint64_t seed) const {
    require(n >= 1, "conditional_sample: n must be >= 1");
    Rng rng(derive_seed(seed, "plugin_conditional_sample"));
    Mat out(n, u_.cols());
    for (Eigen::Index s = 0; s < n; ++s) {
      const Vec v = sampler(rng);
      require(v.size() == v_.cols(), "conditional_sample: sampler dimension mismatch");
      out.row(s) = evaluate(y, v).transpose();
    }
    return out;
  }

 private:
  static constexpr Eigen::Index kBruteForceLimit = 512;

  Mat y_, v_, u_;
  Eigen::Index k_;
  Vec weights_;
  Mat scaled_;  // brute-force path
  std::shared_ptr<const KdTree> tree_;
};

struct PluginFitOptions {
  Eigen::Index dense_limit = 2048;  // largest instance routed to the dense solver
  Vec input_metric_weights;         // defaults to all ones
  GeometricAssignmentOptions geometric;
};

struct PluginFitResult {
  PluginConditionalMap map;
  double ot_cost = 0.0;
  bool certified_optimum = true;  // false only for uncertified large solves
};

/// Fits the conditional map from samples: builds the paired reference,
/// solves the perturbed empirical OT for a permutation sigma, and stores
/// the anchors (y_j, v_j, u_sigma(j)). Quadratic-exponent specs at large J
/// route through the certified sparse geometric solver in the embedding
/// (y, sqrt(eps) v) where c_eps is a plain squared distance.
inline PluginFitResult fit_plugin(const std::vector<PairedSample>& targets,
                                  const RefSampler& sampler, const PerturbedCostSpec& spec,
                                  Eigen::Index k, std::uint64_t seed,
                                  const PluginFitOptions& opt = {}) {
  validate(spec);
  require(!targets.empty(), "fit_plugin: no targets");
  const auto [ref, tgt] = pair_reference(targets, sampler, seed);
  const Eigen::Index n = ref.size();
  const Eigen::Index dy = targets.front().y.size();
  const Eigen::Index dv = ref.dim() - dy;
  const Eigen::Index du = tgt.dim() - dy;

  std::vector<Eigen::Index> sigma;
  double cost = 0.0;
  bool certified = true;
  if (n <= opt.dense_limit || spec.y_exponent != 2.0 || spec.u_exponent != 2.0) {
    auto [plan, c] = solve_perturbed(ref, tgt, dy, spec);
    sigma = std::move(plan.sigma);
    cost = c;
  } else {
    const double sq = std::sqrt(spec.epsilon);
    Mat a(n, dy + dv), b(n, dy + du);
    a << ref.points.leftCols(dy), sq * ref.points.rightCols(dv);
    b << tgt.points.leftCols(dy), sq * tgt.points.rightCols(du);
    const auto geo = solve_assignment_geometric(a, b, opt.geometric);
    sigma = geo.assignment.sigma;
    cost = geo.assignment.cost;
    certified = geo.certified;
  }

  Mat ay(n, dy), av(n, dv), au(n, du);
  for (Eigen::Index j = 0; j < n; ++j) {
    ay.row(j) = ref.points.row(j).head(dy);
    av.row(j) = ref.points.row(j).tail(dv);
    au.row(j) = tgt.points.row(sigma[static_cast<std::size_t>(j)]).tail(du);
  }
  return {PluginConditionalMap(std::move(ay), std::move(av), std::move(au), k,
                               opt.input_metric_weights),
          cost, certified};
}

}  // namespace condot
