#include "localgp/linalg.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace localgp {

bool GrowableSPDInverse::extend(const Eigen::Ref<const Eigen::VectorXd>& cross, double corner) {
  if (cross.size() != order_)
    throw std::invalid_argument("GrowableSPDInverse::extend: cross vector has wrong length");

  if (order_ == 0) {
    if (corner <= 0.0) return false;
    if (storage_.rows() < 1) storage_.resize(8, 8);
    storage_(0, 0) = 1.0 / corner;
    order_ = 1;
    log_det_ = std::log(corner);
    return true;
  }

  const auto inv = storage_.topLeftCorner(order_, order_);
  Eigen::VectorXd w = inv.selfadjointView<Eigen::Lower>() * cross;
  const double schur = corner - cross.dot(w);
  if (schur <= 0.0) return false;

  if (storage_.rows() < order_ + 1) {
    Eigen::MatrixXd grown(2 * storage_.rows(), 2 * storage_.rows());
    grown.topLeftCorner(order_, order_) = storage_.topLeftCorner(order_, order_);
    storage_.swap(grown);
  }

  const double s_inv = 1.0 / schur;
  storage_.topLeftCorner(order_, order_).noalias() += (w * w.transpose()) * s_inv;
  storage_.block(0, order_, order_, 1) = -w * s_inv;
  storage_.block(order_, 0, 1, order_) = storage_.block(0, order_, order_, 1).transpose();
  storage_(order_, order_) = s_inv;
  order_ += 1;
  log_det_ += std::log(schur);
  return true;
}

void GrowableSPDInverse::shrink() {
  if (order_ == 0) throw std::invalid_argument("GrowableSPDInverse::shrink: empty state");
  if (order_ == 1) {
    order_ = 0;
    log_det_ = 0.0;
    return;
  }
  // The bordered blocks encode the last Schur complement s and solve vector w,
  // so the previous inverse is recoverable without any history.
  const int j = order_ - 1;
  const double s = 1.0 / storage_(j, j);
  const Eigen::VectorXd w = -storage_.block(0, j, j, 1) * s;
  storage_.topLeftCorner(j, j).noalias() -= (w * w.transpose()) / s;
  order_ = j;
  log_det_ -= std::log(s);
}

double min_eigenvalue(const GrowableSPDInverse& state, const EigenEstimateParams& params) {
  const int j = state.order();
  if (j == 0) throw std::invalid_argument("min_eigenvalue: empty state");

  const Eigen::MatrixXd inv = state.inverse();
  double lambda_max_inv;

  if (j < params.exact_below) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inv, Eigen::EigenvaluesOnly);
    lambda_max_inv = es.eigenvalues().maxCoeff();
  } else {
    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd v(j);
    for (int i = 0; i < j; ++i) v[i] = gauss(rng);
    v.normalize();

    double rayleigh = 0.0;
    for (int it = 0; it < params.max_iters; ++it) {
      Eigen::VectorXd w = inv.selfadjointView<Eigen::Lower>() * v;
      const double rq = v.dot(w);
      const double wnorm = w.norm();
      if (wnorm <= 0.0) break;
      v = w / wnorm;
      if (it > 0 && std::abs(rq - rayleigh) <= params.tol * std::abs(rq)) {
        rayleigh = rq;
        break;
      }
      rayleigh = rq;
    }
    lambda_max_inv = rayleigh;
  }

  if (lambda_max_inv <= 0.0) return 0.0;
  return (1.0 - params.deflation) / lambda_max_inv;
}

}  // namespace localgp
