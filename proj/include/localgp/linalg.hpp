#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace localgp {

/// Inverse of a growing symmetric positive-definite correlation matrix,
/// maintained by bordered (partitioned) inverse updates at O(j^2) per step.
/// Points are only ever appended, never removed.
class GrowableSPDInverse {
 public:
  GrowableSPDInverse() = default;

  int order() const { return order_; }
  double log_det() const { return log_det_; }

  Eigen::Block<const Eigen::MatrixXd> inverse() const {
    return storage_.topLeftCorner(order_, order_);
  }

  /// Grow from order j to j+1 with the bordered matrix [[A, b], [b^T, c]].
  /// Returns false (state unchanged) when the Schur complement c - b^T A^-1 b
  /// is not positive, i.e. the augmentation is numerically singular.
  bool extend(const Eigen::Ref<const Eigen::VectorXd>& cross, double corner);

  /// Undo the most recent successful extend, restoring order j from j+1.
  void shrink();

  /// v^T A^-1 v
  double quad_form(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return v.dot(inverse().selfadjointView<Eigen::Lower>() * v);
  }

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return inverse().selfadjointView<Eigen::Lower>() * v;
  }

 private:
  Eigen::MatrixXd storage_;  // top-left order_ x order_ block is live
  int order_ = 0;
  double log_det_ = 0.0;
};

struct EigenEstimateParams {
  double tol = 1e-6;
  int max_iters = 200;
  double deflation = 1e-3;   // epsilon_eig, keeps the estimate below the truth
  std::uint64_t seed = 1234;
  // Dense eigen-solve below this order; power iteration can stall on
  // clustered spectra and overestimate, which would shrink the Theorem-1
  // radius, so the exact path covers every realistic sub-design size.
  int exact_below = 65;
};

/// Conservative estimate of the minimum eigenvalue of A, computed as
/// (1 - deflation) / lambda_max(A^-1) from the stored inverse. Small orders
/// use an exact dense symmetric eigen-solve; larger ones use seeded power
/// iteration stopped on the relative Rayleigh-quotient change.
double min_eigenvalue(const GrowableSPDInverse& state, const EigenEstimateParams& params);

}  // namespace localgp
