#include "localgp/localgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace localgp {

namespace {
constexpr double kIneligibleDenominator = 1e-12;
constexpr double kVarianceSlack = 1e-10;
}  // namespace

Dataset::Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd responses)
    : inputs_(std::move(inputs)), responses_(std::move(responses)) {
  const int n = static_cast<int>(inputs_.rows());
  if (n < 1) throw std::invalid_argument("Dataset: empty design");
  if (responses_.size() != n)
    throw std::invalid_argument("Dataset: responses do not match design rows");
  if (!responses_.allFinite())
    throw std::invalid_argument("Dataset: non-finite response");

  // Duplicate-row rejection via lexicographic sort; the interpolating model
  // has no nugget, so repeated inputs would make the correlation matrix
  // singular.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int d = static_cast<int>(inputs_.cols());
  auto row_less = [this, d](int a, int b) {
    for (int c = 0; c < d; ++c) {
      if (inputs_(a, c) != inputs_(b, c)) return inputs_(a, c) < inputs_(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  for (int i = 1; i < n; ++i) {
    if (inputs_.row(order[i - 1]) == inputs_.row(order[i]))
      throw std::invalid_argument("Dataset: duplicate design row");
  }
}

LocalState make_local_state(const KernelSpec& spec, const Eigen::VectorXd& location) {
  if (location.size() != spec.dims)
    throw std::invalid_argument("make_local_state: location dimension mismatch");
  LocalState state;
  state.location = location;
  state.scaled_location = (location.cwiseProduct(spec.theta_diagonal())).transpose();
  state.variance = spec.scale;
  return state;
}

CandidateCorrelations candidate_correlations(const KernelSpec& spec,
                                             const LocalState& state,
                                             const Eigen::MatrixXd& scaled_design,
                                             int candidate) {
  CandidateCorrelations corr;
  const Eigen::RowVectorXd u = scaled_design.row(candidate);
  corr.to_location =
      correlation_from_scaled_sqdist(spec, (u - state.scaled_location).squaredNorm());
  const int j = state.stage();
  corr.to_subdesign.resize(j);
  for (int i = 0; i < j; ++i) {
    const double sq = (u - scaled_design.row(state.chosen[i])).squaredNorm();
    corr.to_subdesign[i] = correlation_from_scaled_sqdist(spec, sq);
  }
  return corr;
}

std::optional<double> variance_reduction(const LocalState& state,
                                         const CandidateCorrelations& corr) {
  if (state.stage() == 0) {
    return corr.to_location * corr.to_location;
  }
  const double denom = 1.0 - state.inv.quad_form(corr.to_subdesign);
  if (denom <= kIneligibleDenominator) return std::nullopt;
  const double numer = corr.to_location - corr.to_subdesign.dot(state.kweights);
  return numer * numer / denom;
}

double predictive_variance(const KernelSpec& spec, const LocalState& state) {
  if (state.stage() == 0) throw std::invalid_argument("predictive_variance: empty sub-design");
  const double raw = 1.0 - state.cross.dot(state.kweights);
  if (raw < -kVarianceSlack)
    throw NumericalBreakdown("predictive_variance: negative beyond rounding slack");
  return spec.scale * std::max(raw, 0.0);
}

double predictive_mean(const KernelSpec& spec, const LocalState& state,
                       const Dataset& data, const MeanFunction& mean) {
  const int j = state.stage();
  if (j == 0) throw std::invalid_argument("predictive_mean: empty sub-design");
  double acc = mean.value;
  for (int i = 0; i < j; ++i)
    acc += state.kweights[i] * (data.responses()[state.chosen[i]] - mean.value);
  return acc;
}

bool accept(const KernelSpec& spec, LocalState& state, int chosen_index,
            const CandidateCorrelations& corr, const EigenEstimateParams& eig_params) {
  if (!state.inv.extend(corr.to_subdesign, 1.0)) return false;
  state.chosen.push_back(chosen_index);
  const int j = state.stage();
  state.cross.conservativeResize(j);
  state.cross[j - 1] = corr.to_location;
  state.kweights = state.inv.apply(state.cross);
  state.variance = predictive_variance(spec, state);
  state.lambda_min = min_eigenvalue(state.inv, eig_params);
  return true;
}

namespace {

// Profile log-likelihood of a single multiplicative lengthscale inflation g,
// up to additive constants: -j/2 log(sigma2hat(g)) - 1/2 logdet(Phi_g).
double profile_loglik(const KernelSpec& spec, const Eigen::MatrixXd& sub_inputs,
                      const Eigen::VectorXd& residual, double g, double* sigma2_out) {
  const int j = static_cast<int>(sub_inputs.rows());
  KernelSpec inflated(spec.lengthscales * g, spec.scale, spec.power);
  Eigen::MatrixXd scaled = inflated.scale_points(sub_inputs);
  Eigen::MatrixXd corr(j, j);
  for (int a = 0; a < j; ++a) {
    corr(a, a) = 1.0;
    for (int b = a + 1; b < j; ++b) {
      const double sq = (scaled.row(a) - scaled.row(b)).squaredNorm();
      corr(a, b) = corr(b, a) = correlation_from_scaled_sqdist(inflated, sq);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(residual);
  const double quad = residual.dot(alpha);
  double log_det = 0.0;
  for (int a = 0; a < j; ++a) log_det += 2.0 * std::log(llt.matrixLLT()(a, a));
  const double sigma2 = std::max(quad / j, 0.0);
  if (sigma2_out) *sigma2_out = sigma2;
  if (sigma2 <= 0.0) return std::numeric_limits<double>::infinity();  // degenerate fit
  const double ll = -0.5 * (j * std::log(sigma2) + log_det);
  if (!std::isfinite(ll)) throw NumericalBreakdown("local_scale_mle: non-finite likelihood");
  return ll;
}

}  // namespace

LocalMle local_scale_mle(const KernelSpec& spec, const LocalState& state,
                         const Dataset& data, const MeanFunction& mean) {
  const int j = state.stage();
  if (j < 3) throw std::invalid_argument("local_scale_mle: needs at least 3 points");

  Eigen::MatrixXd sub(j, spec.dims);
  Eigen::VectorXd residual(j);
  for (int i = 0; i < j; ++i) {
    sub.row(i) = data.inputs().row(state.chosen[i]);
    residual[i] = data.responses()[state.chosen[i]] - mean.value;
  }

  // Constant response: sigma2hat is 0 and g is irrelevant.
  if (residual.isZero(0.0)) return {0.0, 1.0};

  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = 0.1, hi = 10.0;
  double a = hi - golden * (hi - lo);
  double b = lo + golden * (hi - lo);
  double fa = profile_loglik(spec, sub, residual, a, nullptr);
  double fb = profile_loglik(spec, sub, residual, b, nullptr);
  while (hi - lo > 1e-4) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + golden * (hi - lo);
      fb = profile_loglik(spec, sub, residual, b, nullptr);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - golden * (hi - lo);
      fa = profile_loglik(spec, sub, residual, a, nullptr);
    }
  }

  LocalMle out;
  out.lengthscale_multiplier = 0.5 * (lo + hi);
  profile_loglik(spec, sub, residual, out.lengthscale_multiplier, &out.sigma2);
  return out;
}

}  // namespace localgp
