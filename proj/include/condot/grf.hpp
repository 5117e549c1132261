#pragma once

#include "condot/common.hpp"
#include "condot/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <utility>
#include <vector>

namespace condot {

/// Uniform node grid on the unit square, row-major (x fastest).
struct Grid2D {
  Eigen::Index nx = 2, ny = 2;

  Eigen::Index nodes() const { return nx * ny; }
  double hx() const { return 1.0 / static_cast<double>(nx - 1); }
  double hy() const { return 1.0 / static_cast<double>(ny - 1); }

  Vec node(Eigen::Index k) const {
    Vec p(2);
    p << static_cast<double>(k % nx) * hx(), static_cast<double>(k / nx) * hy();
    return p;
  }
};

inline Grid2D make_grid(Eigen::Index nx, Eigen::Index ny) {
  require(nx >= 2 && ny >= 2, "make_grid: need at least 2 nodes per side");
  return Grid2D{nx, ny};
}

/// Matern covariance with smoothness 3/2:
/// C(x, y) = (1 + sqrt(3) r / l) exp(-sqrt(3) r / l), r = ||x - y||.
struct MaternKernel {
  double lengthscale = 0.5;
};

inline double matern32(const Vec& x, const Vec& y, double lengthscale) {
  require(lengthscale > 0.0, "matern32: lengthscale must be positive");
  require(x.size() == y.size(), "matern32: dimension mismatch");
  const double s = std::sqrt(3.0) * (x - y).norm() / lengthscale;
  return (1.0 + s) * std::exp(-s);
}

/// Dense covariance matrix of the kernel over the grid nodes.
inline Mat cov_matrix(const Grid2D& grid, const MaternKernel& kernel) {
  const Eigen::Index n = grid.nodes();
  Mat c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 1.0;
    const Vec xi = grid.node(i);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = matern32(xi, grid.node(j), kernel.lengthscale);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

/// Lower Cholesky factor of the covariance plus a fixed 1e-10 jitter.
class GrfSampler {
 public:
  explicit GrfSampler(const Mat& covariance, double jitter = 1e-10) {
    require(covariance.rows() == covariance.cols(), "GrfSampler: covariance must be square");
    Eigen::LLT<Mat> llt(covariance + jitter * Mat::Identity(covariance.rows(), covariance.cols()));
    if (llt.info() != Eigen::Success)
      throw numerical_error(
          "GrfSampler: Cholesky factorization failed; increase the jitter "
          "(covariance is too ill-conditioned at this grid)");
    l_ = llt.matrixL();
  }

  Eigen::Index dim() const { return l_.rows(); }
  const Mat& factor() const { return l_; }

  /// n field draws u = L xi with xi standard normal; rows are fields.
  Mat sample(Eigen::Index n, std::uint64_t seed) const {
    Rng rng(derive_seed(seed, "grf_sample"));
    Mat out(n, dim());
    for (Eigen::Index s = 0; s < n; ++s) out.row(s) = (l_ * rng.normal_vec(dim())).transpose();
    return out;
  }

  Vec sample_one(Rng& rng) const { return l_ * rng.normal_vec(dim()); }

 private:
  Mat l_;
};

/// Principal subspace of a sample set: mean field, orthonormal modes and the
/// singular values of the centered data matrix (non-increasing).
struct KlBasis {
  Vec mean;
  Mat modes;           // N x d, orthonormal rows
  Vec singular_values; // N, non-increasing

  Eigen::Index n_modes() const { return modes.rows(); }
  Eigen::Index field_dim() const { return modes.cols(); }

  /// Per-mode sample variances sigma_k^2 / (n_samples - 1); callers must
  /// supply the sample count the basis was fitted on.
  Vec mode_variances(Eigen::Index n_samples) const {
    require(n_samples >= 2, "mode_variances: need at least two samples");
    return singular_values.array().square() / static_cast<double>(n_samples - 1);
  }

  Vec project(const Vec& field) const {
    require(field.size() == field_dim(), "KlBasis::project: dimension mismatch");
    return modes * (field - mean);
  }

  Vec reconstruct(const Vec& coeffs) const {
    require(coeffs.size() == n_modes(), "KlBasis::reconstruct: coefficient count mismatch");
    return mean + modes.transpose() * coeffs;
  }

  Mat project_rows(const Mat& fields) const {
    return (fields.rowwise() - mean.transpose()) * modes.transpose();
  }

  Mat reconstruct_rows(const Mat& coeffs) const {
    return (coeffs * modes).rowwise() + mean.transpose();
  }
};

/// PCA of the sample rows, keeping the top n_modes directions; the
/// projection realizes the finite-dimensional approximation of the prior.
inline KlBasis pca_fit(const Mat& samples, Eigen::Index n_modes) {
  require(samples.rows() >= 2, "pca_fit: need at least two samples");
  require(n_modes >= 1 && n_modes <= std::min(samples.rows(), samples.cols()),
          "pca_fit: mode count out of range");
  KlBasis basis;
  basis.mean = samples.colwise().mean();
  const Mat centered = samples.rowwise() - basis.mean.transpose();
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinV);
  basis.modes = svd.matrixV().leftCols(n_modes).transpose();
  basis.singular_values = svd.singularValues().head(n_modes);
  return basis;
}

}  // namespace condot
