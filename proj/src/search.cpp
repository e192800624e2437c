#include "localgp/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace localgp {

namespace {

constexpr double kLambdaFloor = 1e-12;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

int nearest_index_linear(const Eigen::MatrixXd& scaled, const Eigen::RowVectorXd& query) {
  int best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  for (int i = 0; i < scaled.rows(); ++i) {
    const double sq = (scaled.row(i) - query).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  return best;
}

std::vector<int> radius_union_linear(const Eigen::MatrixXd& scaled,
                                     const Eigen::MatrixXd& centers, double radius,
                                     const std::vector<char>& excluded) {
  std::vector<int> out;
  if (std::isinf(radius)) {
    for (int i = 0; i < scaled.rows(); ++i)
      if (!excluded[i]) out.push_back(i);
    return out;
  }
  const double sq_radius = radius * radius;
  for (int i = 0; i < scaled.rows(); ++i) {
    if (excluded[i]) continue;
    for (int c = 0; c < centers.rows(); ++c) {
      if ((scaled.row(i) - centers.row(c)).squaredNorm() <= sq_radius) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

}  // namespace

std::string strategy_label(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Exhaustive: return "exhaustive";
    case StrategyKind::NearestNeighbor: return "nn";
    case StrategyKind::MaxDistance: return "maxdist";
    case StrategyKind::Feature: return "feature";
  }
  return "unknown";
}

LocalState seed_stage(const Dataset& data, const KernelSpec& spec,
                      const Eigen::VectorXd& x, const SpatialIndex* spatial) {
  LocalState state = make_local_state(spec, x);
  int seed_idx;
  if (spatial) {
    seed_idx = spatial->knn_excluding(state.scaled_location, 1, {})[0];
  } else {
    seed_idx = nearest_index_linear(spec.scale_points(data.inputs()), state.scaled_location);
  }
  const Eigen::MatrixXd scaled = spec.scale_points(data.inputs());
  const CandidateCorrelations corr = candidate_correlations(spec, state, scaled, seed_idx);
  accept(spec, state, seed_idx, corr, EigenEstimateParams{});
  return state;
}

DeltaResult threshold_delta(const KernelSpec& spec, const LocalState& state,
                            const Eigen::MatrixXd& scaled_design,
                            const SpatialIndex& spatial, int k,
                            const std::vector<char>& chosen_mask) {
  const int n = static_cast<int>(scaled_design.rows());
  const int remaining = n - state.stage();
  const int k_eff = std::min(k, remaining);
  DeltaResult result;
  if (k_eff <= 0) return result;
  result.neighbors = spatial.knn_excluding(state.scaled_location, k_eff, chosen_mask);
  result.reductions.resize(result.neighbors.size());
  for (std::size_t i = 0; i < result.neighbors.size(); ++i) {
    const CandidateCorrelations corr =
        candidate_correlations(spec, state, scaled_design, result.neighbors[i]);
    result.reductions[i] = variance_reduction(state, corr);
    if (result.reductions[i] &&
        (result.best_neighbor < 0 || *result.reductions[i] > result.delta)) {
      result.delta = *result.reductions[i];
      result.best_neighbor = result.neighbors[i];
    }
  }
  return result;
}

double maxdist_radius(const KernelSpec& spec, const LocalState& state, double delta) {
  if (delta <= 0.0) return std::numeric_limits<double>::infinity();
  if (state.lambda_min < kLambdaFloor) return std::numeric_limits<double>::infinity();
  const double j = static_cast<double>(state.stage());
  const double a = 1.0 + std::sqrt(j) * state.kweights.norm();
  const double v = delta / (a * a + j * delta / state.lambda_min);
  return profile_inverse(spec, std::min(std::sqrt(v), 1.0));
}

SearchReport run_search(const Dataset& data, const KernelSpec& spec,
                        const Eigen::VectorXd& x, const SearchConfig& config,
                        const SpatialIndex* spatial, const FeatureMap* features) {
  const int n = data.n_rows();
  if (config.budget < 1 || config.budget > n)
    throw std::invalid_argument("run_search: budget must be in [1, N]");
  const bool needs_tree = config.strategy != StrategyKind::Exhaustive;
  if (needs_tree && !spatial)
    throw std::invalid_argument("run_search: strategy requires a spatial index");
  if (config.strategy == StrategyKind::Feature && !features)
    throw std::invalid_argument("run_search: Feature strategy requires a feature map");

  const Eigen::MatrixXd scaled = spec.scale_points(data.inputs());
  const double inf = std::numeric_limits<double>::infinity();

  SearchReport report;
  report.strategy = strategy_label(config.strategy);

  // Stage 1: seed with the nearest neighbor of x.
  double t0 = now_seconds();
  LocalState state = make_local_state(spec, x);
  {
    const int seed_idx = spatial
                             ? spatial->knn_excluding(state.scaled_location, 1, {})[0]
                             : nearest_index_linear(scaled, state.scaled_location);
    const CandidateCorrelations corr = candidate_correlations(spec, state, scaled, seed_idx);
    accept(spec, state, seed_idx, corr, config.eigen_params);
    StageRecord rec;
    rec.stage = 1;
    rec.chosen_index = seed_idx;
    rec.reduction = corr.to_location * corr.to_location;
    rec.variance = state.variance;
    rec.radius = inf;
    rec.lambda_min = state.lambda_min;
    rec.seconds = now_seconds() - t0;
    report.stages.push_back(rec);
  }

  std::vector<char> chosen_mask(n, 0);
  chosen_mask[state.chosen[0]] = 1;
  std::vector<char> ineligible(n, 0);
  std::vector<char> visited_scratch;

  // Feature-strategy state.
  ResidualProjector projector(features ? features->feature_count : 0);
  Eigen::VectorXd x_features;
  std::optional<LshIndex> lsh;
  if (config.strategy == StrategyKind::Feature) {
    x_features = feature_at(*features, spec, data, x);
    projector.extend(features->features.col(state.chosen[0]));
    if (config.use_lsh) lsh.emplace(*features, projector, config.lsh);
  }

  while (state.stage() < config.budget) {
    t0 = now_seconds();
    const int j = state.stage();
    StageRecord rec;
    rec.radius = inf;

    int best_index = -1;
    double best_reduction = -1.0;
    CandidateCorrelations best_corr;
    long examined = 0;

    auto consider = [&](int idx, const std::optional<double>& known) {
      CandidateCorrelations corr = candidate_correlations(spec, state, scaled, idx);
      std::optional<double> r = known ? known : variance_reduction(state, corr);
      ++examined;
      if (!r) {
        ineligible[idx] = 1;
        return;
      }
      if (*r > best_reduction || (*r == best_reduction && idx < best_index)) {
        best_reduction = *r;
        best_index = idx;
        best_corr = std::move(corr);
      }
    };

    switch (config.strategy) {
      case StrategyKind::Exhaustive: {
        for (int idx = 0; idx < n; ++idx)
          if (!chosen_mask[idx]) consider(idx, std::nullopt);
        rec.tset_size = n - j;
        rec.candidate_set_size = n - j;
        break;
      }
      case StrategyKind::NearestNeighbor: {
        const int idx = spatial->knn_excluding(state.scaled_location, 1, chosen_mask)[0];
        consider(idx, std::nullopt);
        examined = 0;  // no search is performed
        break;
      }
      case StrategyKind::MaxDistance:
      case StrategyKind::Feature: {
        const DeltaResult dr =
            threshold_delta(spec, state, scaled, *spatial, config.k, chosen_mask);
        rec.delta = dr.delta;
        rec.radius = maxdist_radius(spec, state, dr.delta);

        Eigen::MatrixXd centers(j + 1, spec.dims);
        centers.row(0) = state.scaled_location;
        for (int i = 0; i < j; ++i) centers.row(i + 1) = scaled.row(state.chosen[i]);

        std::vector<int> tset;
        if (config.use_tree) {
          tset = spatial->within_radius_of_any(centers, rec.radius, chosen_mask,
                                               visited_scratch);
        } else {
          tset = radius_union_linear(scaled, centers, rec.radius, chosen_mask);
        }

        std::vector<int> pool;
        if (config.strategy == StrategyKind::MaxDistance) {
          rec.tset_size = static_cast<long>(tset.size());
          pool = tset;
        } else {
          // Cone restriction T*(X_j) inside the distance set.
          const Eigen::VectorXd cx = projector.residual(x_features);
          const double nx = cx.squaredNorm();
          const double delta_eff = dr.delta * (1.0 - config.cone_slack);
          if (delta_eff >= nx) {
            // Even perfect alignment cannot reach delta under the
            // approximation; the cone is uninformative, so keep the whole
            // distance set rather than over-pruning.
            pool = tset;
          } else {
            std::vector<int> base = tset;
            if (config.use_lsh) {
              const double cos_sq = nx > 0.0 ? std::min(1.0, delta_eff / nx) : 1.0;
              const double max_angle = std::acos(std::sqrt(cos_sq));
              std::vector<int> hashed = lsh->query(cx, max_angle);
              std::vector<char> in_hash(n, 0);
              for (int idx : hashed) in_hash[idx] = 1;
              std::vector<int> intersect;
              for (int idx : base)
                if (in_hash[idx]) intersect.push_back(idx);
              base.swap(intersect);
            }
            if (config.use_lsh && config.lsh_trust) {
              pool = base;
            } else {
              Eigen::MatrixXd residuals(features->feature_count,
                                        static_cast<int>(base.size()));
              for (std::size_t i = 0; i < base.size(); ++i)
                residuals.col(static_cast<int>(i)) =
                    projector.residual(features->features.col(base[i]));
              const ConeFilterResult cone = cone_filter(cx, residuals, delta_eff);
              pool.reserve(cone.survivors.size());
              for (int pos : cone.survivors) pool.push_back(base[pos]);
            }
          }
          rec.tset_size = static_cast<long>(pool.size());
          // Theorem 2 is an approximation: an emptied cone falls back to the
          // threshold neighborhood so the stage cannot stall.
        }

        // The delta-achieving neighbors are always part of the pool.
        std::vector<char> in_pool(n, 0);
        for (int idx : pool) in_pool[idx] = 1;
        for (std::size_t i = 0; i < dr.neighbors.size(); ++i) {
          consider(dr.neighbors[i], dr.reductions[i]);
          in_pool[dr.neighbors[i]] = 1;
        }
        long pool_size = 0;
        for (int idx = 0; idx < n; ++idx) pool_size += in_pool[idx];
        rec.candidate_set_size = pool_size;
        for (int idx : pool)
          if (!std::count(dr.neighbors.begin(), dr.neighbors.end(), idx))
            consider(idx, std::nullopt);
        break;
      }
    }

    rec.candidates_examined = examined;
    if (config.strategy == StrategyKind::Exhaustive ||
        config.strategy == StrategyKind::NearestNeighbor) {
      rec.candidate_set_size = std::max(rec.candidate_set_size, examined);
    }

    if (best_index < 0) {
      report.complete = false;
      break;
    }
    if (config.stop_reduction && best_reduction < *config.stop_reduction) break;

    bool accepted = false;
    try {
      accepted = accept(spec, state, best_index, best_corr, config.eigen_params);
    } catch (const NumericalBreakdown&) {
      // The variance reached the double-precision floor; roll the half-applied
      // acceptance back and return the partial report.
      state.inv.shrink();
      state.chosen.pop_back();
      state.cross.conservativeResize(j);
      state.kweights = state.inv.apply(state.cross);
      accepted = false;
    }
    if (!accepted) {
      report.complete = false;
      break;
    }
    chosen_mask[best_index] = 1;
    if (config.strategy == StrategyKind::Feature) {
      projector.extend(features->features.col(best_index));
      if (lsh) lsh->advance_stage(projector);
    }

    rec.stage = state.stage();
    rec.chosen_index = best_index;
    rec.reduction = best_reduction;
    rec.variance = state.variance;
    rec.lambda_min = state.lambda_min;
    rec.seconds = now_seconds() - t0;
    report.stages.push_back(rec);
  }

  report.state = std::move(state);
  return report;
}

}  // namespace localgp
