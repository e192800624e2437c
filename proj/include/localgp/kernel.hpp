#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace localgp {

/// Radially decreasing correlation kernel Phi(x, x') = phi(||Theta (x - x')||_2)
/// with the power-exponential profile phi(u) = exp(-u^p). For p = 2 this is the
/// separable Gaussian correlation with per-dimension lengthscales theta_j.
struct KernelSpec {
  int dims = 0;
  Eigen::VectorXd lengthscales;  // theta_j > 0
  double scale = 1.0;            // sigma^2
  double power = 2.0;            // p > 0

  KernelSpec() = default;
  KernelSpec(Eigen::VectorXd theta, double sigma2, double p = 2.0)
      : dims(static_cast<int>(theta.size())),
        lengthscales(std::move(theta)),
        scale(sigma2),
        power(p) {
    if (dims < 1) throw std::invalid_argument("KernelSpec: empty lengthscales");
    if ((lengthscales.array() <= 0.0).any())
      throw std::invalid_argument("KernelSpec: lengthscales must be positive");
    if (scale <= 0.0) throw std::invalid_argument("KernelSpec: scale must be positive");
    if (power <= 0.0) throw std::invalid_argument("KernelSpec: power must be positive");
  }

  static KernelSpec gaussian(Eigen::VectorXd theta, double sigma2) {
    return KernelSpec(std::move(theta), sigma2, 2.0);
  }

  static KernelSpec gaussian_isotropic(int d, double theta, double sigma2) {
    return KernelSpec(Eigen::VectorXd::Constant(d, theta), sigma2, 2.0);
  }

  /// Diagonal of the metric map Theta, theta_j^(-1/p), so that
  /// phi(||Theta (x - y)||_2) reproduces the separable form when p = 2.
  Eigen::VectorXd theta_diagonal() const {
    return lengthscales.array().pow(-1.0 / power).matrix();
  }

  /// Rows of `points` pre-multiplied by Theta; Euclidean distance between
  /// scaled rows equals the kernel metric.
  Eigen::MatrixXd scale_points(const Eigen::MatrixXd& points) const {
    if (points.cols() != dims)
      throw std::invalid_argument("scale_points: dimension mismatch");
    return points * theta_diagonal().asDiagonal();
  }

  /// 256-bit fingerprint of the kernel parameters (FNV-1a over the serialized
  /// fields with four different offset bases).
  std::array<std::uint64_t, 4> fingerprint() const;
};

/// phi(u) = exp(-u^p)
inline double profile(const KernelSpec& spec, double u) {
  return std::exp(-std::pow(u, spec.power));
}

/// phi^{-1}(v) = (-log v)^(1/p). v <= 0 means the threshold is degenerate and
/// the caller must treat the radius as infinite; that is signalled as +inf.
inline double profile_inverse(const KernelSpec& spec, double v) {
  if (v > 1.0) throw std::invalid_argument("profile_inverse: v > 1");
  if (v <= 0.0) return std::numeric_limits<double>::infinity();
  return std::pow(-std::log(v), 1.0 / spec.power);
}

/// ||Theta (x - y)||_2
inline double mahalanobis_distance(const KernelSpec& spec,
                                   const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != spec.dims || y.size() != spec.dims)
    throw std::invalid_argument("mahalanobis_distance: dimension mismatch");
  return ((x - y).cwiseProduct(spec.theta_diagonal())).norm();
}

/// Phi(x, y) = phi(||Theta (x - y)||_2), in (0, 1].
inline double correlation(const KernelSpec& spec,
                          const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& y) {
  return profile(spec, mahalanobis_distance(spec, x, y));
}

/// Correlation from a squared distance in the already Theta-scaled metric.
inline double correlation_from_scaled_sqdist(const KernelSpec& spec, double sqdist) {
  if (spec.power == 2.0) return std::exp(-sqdist);
  return std::exp(-std::pow(sqdist, 0.5 * spec.power));
}

/// Correlations Phi(rows of scaled_pts, scaled_q) for Theta-scaled inputs.
inline Eigen::VectorXd correlations_scaled(const KernelSpec& spec,
                                           const Eigen::Ref<const Eigen::MatrixXd>& scaled_pts,
                                           const Eigen::Ref<const Eigen::RowVectorXd>& scaled_q) {
  Eigen::VectorXd sq = (scaled_pts.rowwise() - scaled_q).rowwise().squaredNorm();
  if (spec.power == 2.0) return (-sq.array()).exp().matrix();
  return (-sq.array().pow(0.5 * spec.power)).exp().matrix();
}

}  // namespace localgp
