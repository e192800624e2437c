#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "localgp/features.hpp"
#include "localgp/kernel.hpp"
#include "localgp/linalg.hpp"
#include "localgp/localgp.hpp"
#include "localgp/spatial.hpp"

namespace localgp {

enum class StrategyKind { Exhaustive, NearestNeighbor, MaxDistance, Feature };

std::string strategy_label(StrategyKind kind);

struct SearchConfig {
  int budget = 30;
  int k = 8;  // threshold neighborhood size
  StrategyKind strategy = StrategyKind::MaxDistance;
  bool use_tree = true;   // radius queries via the k-d tree (off: linear scan)
  bool use_lsh = false;
  bool lsh_trust = false;  // pure-LSH candidate set, no exact cone verification
  LshParams lsh;
  int feature_count = 200;  // D, Feature strategy only
  // Relative deflation of delta before the cone test, absorbing the
  // finite-precision disagreement between kernel-space and feature-space
  // reduction estimates; the Theorem-1 radius always uses the full delta.
  double cone_slack = 0.5;
  std::optional<double> stop_reduction;
  EigenEstimateParams eigen_params;
};

struct StageRecord {
  int stage = 0;         // sub-design size after this stage's acceptance
  int chosen_index = -1;
  double reduction = 0.0;       // R of the accepted point
  double variance = 0.0;        // V after acceptance
  long candidates_examined = 0;  // R evaluations this stage
  long candidate_set_size = 0;   // size of the stage's candidate pool
  long tset_size = 0;            // |T(X_j)| (or |T*(X_j)|); N - j for exhaustive
  double radius = 0.0;           // y, +inf when pruning was disabled
  double delta = 0.0;            // delta_{j+1}
  double lambda_min = 0.0;
  double seconds = 0.0;
};

struct SearchReport {
  std::vector<StageRecord> stages;  // stages[0] is the seed
  LocalState state;                 // final per-location state
  std::string strategy;
  bool complete = true;
};

/// Stage 1: the Theta-metric nearest neighbor of x, ties by lower index.
LocalState seed_stage(const Dataset& data, const KernelSpec& spec,
                      const Eigen::VectorXd& x, const SpatialIndex* spatial);

struct DeltaResult {
  double delta = 0.0;                 // max R over the neighborhood, 0 if none eligible
  std::vector<int> neighbors;         // the k nearest unchosen neighbors of x
  std::vector<std::optional<double>> reductions;  // per neighbor, nullopt = ineligible
  int best_neighbor = -1;
};

/// Evaluate R on the k nearest unchosen neighbors of x (all remaining when
/// fewer than k are left); exactly that many R-evaluations.
DeltaResult threshold_delta(const KernelSpec& spec, const LocalState& state,
                            const Eigen::MatrixXd& scaled_design,
                            const SpatialIndex& spatial, int k,
                            const std::vector<char>& chosen_mask);

/// Search radius from the distance bound: candidates farther than this from
/// both x and the sub-design cannot reduce the variance by more than delta.
/// delta = 0 or a lambda_min below 1e-12 disables pruning (infinite radius).
double maxdist_radius(const KernelSpec& spec, const LocalState& state, double delta);

SearchReport run_search(const Dataset& data, const KernelSpec& spec,
                        const Eigen::VectorXd& x, const SearchConfig& config,
                        const SpatialIndex* spatial, const FeatureMap* features);

}  // namespace localgp
