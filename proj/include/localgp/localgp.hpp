#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

#include "localgp/kernel.hpp"
#include "localgp/linalg.hpp"

namespace localgp {

/// Thrown when rounding drives a predictive quantity outside its admissible
/// range by more than the tolerated slack.
struct NumericalBreakdown : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Immutable full design: N input rows and their responses.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd responses);

  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& responses() const { return responses_; }
  int n_rows() const { return static_cast<int>(inputs_.rows()); }
  int dims() const { return static_cast<int>(inputs_.cols()); }

 private:
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd responses_;
};

struct MeanFunction {
  double value = 0.0;
  static MeanFunction zero() { return {}; }
  static MeanFunction constant(double mu) { return {mu}; }
};

/// Correlations of one candidate point against the prediction location and
/// the current sub-design, in sub-design order.
struct CandidateCorrelations {
  double to_location = 0.0;
  Eigen::VectorXd to_subdesign;
};

/// Mutable per-location search state: the growing sub-design X_j(x) with its
/// incrementally maintained inverse correlation matrix and cached vectors.
struct LocalState {
  Eigen::VectorXd location;        // x (unscaled)
  Eigen::RowVectorXd scaled_location;  // Theta x
  std::vector<int> chosen;         // indices into the Dataset, insertion order
  GrowableSPDInverse inv;          // Phi(X_j, X_j)^-1
  Eigen::VectorXd cross;           // Phi(X_j, x)
  Eigen::VectorXd kweights;        // inv * cross
  double variance = 0.0;           // V_j(x)
  double lambda_min = 0.0;

  int stage() const { return static_cast<int>(chosen.size()); }
};

LocalState make_local_state(const KernelSpec& spec, const Eigen::VectorXd& location);

/// Correlations of design row `candidate` (rows of `scaled_design` are
/// Theta-scaled inputs) against x and the current sub-design.
CandidateCorrelations candidate_correlations(const KernelSpec& spec,
                                             const LocalState& state,
                                             const Eigen::MatrixXd& scaled_design,
                                             int candidate);

/// Scaled variance reduction R(u) from adding the candidate (Proposition-1
/// numerator over the candidate's Schur complement). Empty sub-design uses the
/// j = 0 limit R = Phi(x, u)^2. Returns nullopt when the candidate numerically
/// duplicates the sub-design (denominator <= 1e-12), which marks it ineligible.
std::optional<double> variance_reduction(const LocalState& state,
                                         const CandidateCorrelations& corr);

/// sigma^2 (1 - cross^T kweights), clamped at zero for rounding within -1e-10.
double predictive_variance(const KernelSpec& spec, const LocalState& state);

double predictive_mean(const KernelSpec& spec, const LocalState& state,
                       const Dataset& data, const MeanFunction& mean);

/// Accept a candidate into the sub-design: extend the inverse, refresh cross,
/// kweights, variance and lambda_min. Returns false if the bordered extension
/// is numerically singular (state unchanged).
bool accept(const KernelSpec& spec, LocalState& state, int chosen_index,
            const CandidateCorrelations& corr, const EigenEstimateParams& eig_params);

struct LocalMle {
  double sigma2 = 0.0;
  double lengthscale_multiplier = 1.0;  // g, applied to every theta_j
};

/// Closed-form sigma^2 MLE plus a profile-likelihood scalar lengthscale
/// inflation over [0.1, 10] via golden-section search. Requires j >= 3.
LocalMle local_scale_mle(const KernelSpec& spec, const LocalState& state,
                         const Dataset& data, const MeanFunction& mean);

}  // namespace localgp
