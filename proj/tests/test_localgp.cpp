#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "localgp/kernel.hpp"
#include "localgp/localgp.hpp"

using namespace localgp;

namespace {

Eigen::MatrixXd uniform_design(std::mt19937_64& rng, int n, int d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(i, j) = u(rng);
  return pts;
}

double dense_variance(const KernelSpec& spec, const Eigen::MatrixXd& inputs,
                      const std::vector<int>& idx, const Eigen::VectorXd& x) {
  const int j = static_cast<int>(idx.size());
  Eigen::MatrixXd phi(j, j);
  Eigen::VectorXd cross(j);
  for (int a = 0; a < j; ++a) {
    cross[a] = correlation(spec, inputs.row(idx[a]).transpose(), x);
    for (int b = 0; b < j; ++b)
      phi(a, b) =
          correlation(spec, inputs.row(idx[a]).transpose(), inputs.row(idx[b]).transpose());
  }
  return spec.scale * (1.0 - cross.dot(phi.llt().solve(cross)));
}

// Grows a state over the given indices, asserting every acceptance.
LocalState grown_state(const KernelSpec& spec, const Eigen::MatrixXd& scaled,
                       const Eigen::VectorXd& x, const std::vector<int>& idx) {
  LocalState state = make_local_state(spec, x);
  for (int i : idx) {
    const CandidateCorrelations corr = candidate_correlations(spec, state, scaled, i);
    REQUIRE(accept(spec, state, i, corr, EigenEstimateParams{}));
  }
  return state;
}

}  // namespace

TEST_CASE("Dataset rejects malformed input") {
  Eigen::MatrixXd ok(2, 1);
  ok << 0.0, 1.0;
  CHECK_NOTHROW(Dataset(ok, Eigen::VectorXd::Zero(2)));
  CHECK_THROWS_AS(Dataset(Eigen::MatrixXd(0, 1), Eigen::VectorXd()), std::invalid_argument);
  CHECK_THROWS_AS(Dataset(ok, Eigen::VectorXd::Zero(3)), std::invalid_argument);

  Eigen::MatrixXd dup(3, 2);
  dup << 0.5, 0.5, 0.1, 0.9, 0.5, 0.5;
  CHECK_THROWS_AS(Dataset(dup, Eigen::VectorXd::Zero(3)), std::invalid_argument);

  Eigen::VectorXd bad(2);
  bad << 0.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Dataset(ok, bad), std::invalid_argument);
}

TEST_CASE("stage-0 reduction is the squared correlation to x") {
  const KernelSpec spec = KernelSpec::gaussian_isotropic(1, 0.5, 1.0);
  Eigen::MatrixXd inputs(3, 1);
  inputs << 0.0, 0.4, 1.0;
  const Eigen::MatrixXd scaled = spec.scale_points(inputs);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.4);

  LocalState state = make_local_state(spec, x);
  CHECK(state.variance == spec.scale);
  const CandidateCorrelations self = candidate_correlations(spec, state, scaled, 1);
  CHECK(*variance_reduction(state, self) == doctest::Approx(1.0).epsilon(1e-14));
  const CandidateCorrelations far = candidate_correlations(spec, state, scaled, 2);
  const double rho = correlation(spec, inputs.row(2).transpose(), x);
  CHECK(*variance_reduction(state, far) == doctest::Approx(rho * rho).epsilon(1e-13));
}

TEST_CASE("accepting x itself drives the variance to zero") {
  const KernelSpec spec = KernelSpec::gaussian_isotropic(2, 1.0, 2.5);
  Eigen::MatrixXd inputs(2, 2);
  inputs << 0.3, 0.7, 0.9, 0.1;
  const Eigen::MatrixXd scaled = spec.scale_points(inputs);
  const Eigen::VectorXd x = inputs.row(0).transpose();

  const LocalState state = grown_state(spec, scaled, x, {0});
  CHECK(predictive_variance(spec, state) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("duplicate candidates become ineligible, not infinite") {
  const KernelSpec spec = KernelSpec::gaussian_isotropic(1, 1.0, 1.0);
  Eigen::MatrixXd inputs(3, 1);
  inputs << 0.0, 0.5, 1.0;
  const Eigen::MatrixXd scaled = spec.scale_points(inputs);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.2);

  const LocalState state = grown_state(spec, scaled, x, {1});
  const CandidateCorrelations corr = candidate_correlations(spec, state, scaled, 1);
  CHECK_FALSE(variance_reduction(state, corr).has_value());
}

TEST_CASE("ten accepted stages match the one-shot dense variance") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 2);
    const Eigen::MatrixXd inputs = uniform_design(rng, 40, d);
    const KernelSpec spec = KernelSpec::gaussian_isotropic(d, 0.3, 1.5);
    const Eigen::MatrixXd scaled = spec.scale_points(inputs);
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) x[j] = 0.2 + 0.6 * (rng() % 100) / 100.0;

    std::vector<int> idx;
    while (idx.size() < 10) {
      const int i = static_cast<int>(rng() % 40);
      if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
    }
    const LocalState state = grown_state(spec, scaled, x, idx);
    CHECK(predictive_variance(spec, state) ==
          doctest::Approx(dense_variance(spec, inputs, idx, x)).epsilon(1e-8));
    CHECK((state.kweights - state.inv.apply(state.cross)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("accept maintains the Proposition-1 recurrence and monotonicity") {
  std::mt19937_64 rng(29);
  const Eigen::MatrixXd inputs = uniform_design(rng, 60, 2);
  const KernelSpec spec = KernelSpec::gaussian_isotropic(2, 0.5, 2.0);
  const Eigen::MatrixXd scaled = spec.scale_points(inputs);
  Eigen::VectorXd x(2);
  x << 0.41, 0.57;

  LocalState state = make_local_state(spec, x);
  double prev_variance = spec.scale;
  for (int stage = 0; stage < 12; ++stage) {
    // Greedy argmax, the search loop's acceptance order.
    int best = -1;
    double best_r = -1.0;
    CandidateCorrelations best_corr;
    for (int i = 0; i < 60; ++i) {
      if (std::find(state.chosen.begin(), state.chosen.end(), i) != state.chosen.end())
        continue;
      const CandidateCorrelations corr = candidate_correlations(spec, state, scaled, i);
      const auto r = variance_reduction(state, corr);
      if (r && *r > best_r) {
        best_r = *r;
        best = i;
        best_corr = corr;
      }
    }
    REQUIRE(best >= 0);
    REQUIRE(accept(spec, state, best, best_corr, EigenEstimateParams{}));
    if (stage > 0) {
      CHECK(state.variance ==
            doctest::Approx(prev_variance - spec.scale * best_r).epsilon(1e-9));
    }
    CHECK(state.variance <= prev_variance + 1e-12);
    CHECK(state.variance >= -1e-12);
    prev_variance = state.variance;
  }
}

TEST_CASE("predictive mean interpolates and matches a dense solve") {
  std::mt19937_64 rng(47);
  Eigen::MatrixXd inputs(5, 1);
  inputs << 0.05, 0.3, 0.55, 0.7, 0.95;
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) y[i] = std::sin(6.0 * inputs(i, 0));
  const Dataset data(inputs, y);
  const KernelSpec spec = KernelSpec::gaussian_isotropic(1, 0.2, 1.0);
  const Eigen::MatrixXd scaled = spec.scale_points(inputs);

  // Interpolation at every design point.
  for (int i = 0; i < 5; ++i) {
    const LocalState at = grown_state(spec, scaled, inputs.row(i).transpose(),
                                      {0, 1, 2, 3, 4});
    CHECK(predictive_mean(spec, at, data, MeanFunction::zero()) ==
          doctest::Approx(y[i]).epsilon(1e-8));
  }

  // Held-out location against an independent dense solve.
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.42);
  const LocalState state = grown_state(spec, scaled, x, {0, 1, 2, 3, 4});
  Eigen::MatrixXd phi(5, 5);
  Eigen::VectorXd cross(5);
  for (int a = 0; a < 5; ++a) {
    cross[a] = correlation(spec, inputs.row(a).transpose(), x);
    for (int b = 0; b < 5; ++b)
      phi(a, b) = correlation(spec, inputs.row(a).transpose(), inputs.row(b).transpose());
  }
  const double oracle = cross.dot(phi.llt().solve(y));
  CHECK(predictive_mean(spec, state, data, MeanFunction::zero()) ==
        doctest::Approx(oracle).epsilon(1e-9));

  // Constant-mean form shifts the residuals, not the interpolant.
  const double mu = 2.5;
  const double shifted = mu + cross.dot(phi.llt().solve((y.array() - mu).matrix()));
  CHECK(predictive_mean(spec, state, data, MeanFunction::constant(mu)) ==
        doctest::Approx(shifted).epsilon(1e-9));
  (void)rng;
}

TEST_CASE("variance is permutation invariant over the sub-design order") {
  std::mt19937_64 rng(61);
  const Eigen::MatrixXd inputs = uniform_design(rng, 30, 2);
  const KernelSpec spec = KernelSpec::gaussian_isotropic(2, 0.6, 1.0);
  const Eigen::MatrixXd scaled = spec.scale_points(inputs);
  Eigen::VectorXd x(2);
  x << 0.5, 0.5;

  std::vector<int> idx = {3, 11, 19, 7, 24, 15};
  const double base = predictive_variance(spec, grown_state(spec, scaled, x, idx));
  for (int shuffle = 0; shuffle < 5; ++shuffle) {
    std::shuffle(idx.begin(), idx.end(), rng);
    CHECK(predictive_variance(spec, grown_state(spec, scaled, x, idx)) ==
          doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("local_scale_mle recovers the closed-form sigma2 and the grid argmax") {
  Eigen::MatrixXd inputs(25, 1);
  for (int i = 0; i < 25; ++i) inputs(i, 0) = i / 24.0;
  const KernelSpec spec = KernelSpec::gaussian_isotropic(1, 0.3, 1.0);
  const Eigen::MatrixXd scaled = spec.scale_points(inputs);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) y[i] = std::sin(4.0 * inputs(i, 0)) + 0.3 * inputs(i, 0);
  const Dataset data(inputs, y);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.5);

  const LocalState state = grown_state(spec, scaled, x, {2, 6, 9, 13, 17, 21});
  CHECK_THROWS_AS(
      local_scale_mle(spec, grown_state(spec, scaled, x, {2, 6}), data, MeanFunction::zero()),
      std::invalid_argument);

  const LocalMle mle = local_scale_mle(spec, state, data, MeanFunction::zero());
  CHECK(mle.sigma2 > 0.0);

  // Grid-search oracle over g: profile likelihood recomputed densely.
  const int j = state.stage();
  Eigen::MatrixXd sub(j, 1);
  Eigen::VectorXd res(j);
  for (int i = 0; i < j; ++i) {
    sub.row(i) = inputs.row(state.chosen[i]);
    res[i] = y[state.chosen[i]];
  }
  double best_g = 0.0, best_ll = -std::numeric_limits<double>::infinity();
  for (int t = 0; t <= 2000; ++t) {
    const double g = 0.1 + (10.0 - 0.1) * t / 2000.0;
    const KernelSpec inflated(spec.lengthscales * g, spec.scale, spec.power);
    Eigen::MatrixXd phi(j, j);
    for (int a = 0; a < j; ++a)
      for (int b = 0; b < j; ++b)
        phi(a, b) = correlation(inflated, sub.row(a).transpose(), sub.row(b).transpose());
    const Eigen::LLT<Eigen::MatrixXd> llt(phi);
    if (llt.info() != Eigen::Success) continue;
    double log_det = 0.0;
    for (int a = 0; a < j; ++a) log_det += 2.0 * std::log(llt.matrixLLT()(a, a));
    const double s2 = res.dot(llt.solve(res)) / j;
    if (s2 <= 0.0) continue;
    const double ll = -0.5 * (j * std::log(s2) + log_det);
    if (ll > best_ll) {
      best_ll = ll;
      best_g = g;
    }
  }
  CHECK(std::abs(mle.lengthscale_multiplier - best_g) < 0.01);

  // Constant responses under a matching constant mean give sigma2 = 0.
  const Dataset flat(inputs, Eigen::VectorXd::Constant(25, 4.2));
  const LocalMle degenerate =
      local_scale_mle(spec, state, flat, MeanFunction::constant(4.2));
  CHECK(degenerate.sigma2 == 0.0);
  CHECK(degenerate.lengthscale_multiplier == 1.0);
}
