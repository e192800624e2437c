#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "localgp/kernel.hpp"
#include "localgp/localgp.hpp"
#include "localgp/search.hpp"

namespace localgp {

/// First N points of a Joe-Kuo direction-number Sobol sequence (index 0, the
/// origin, is skipped), scaled to per-dimension bounds. The seed only drives
/// the optional digital scramble.
Eigen::MatrixXd sobol_points(int n, int d,
                             const std::vector<std::pair<double, double>>& bounds,
                             std::uint64_t seed = 0, bool scramble = false);

/// Regular grid, row-major lexicographic order (last dimension fastest).
Eigen::MatrixXd grid_points(const std::vector<int>& counts,
                            const std::vector<std::pair<double, double>>& bounds);

struct GridSpec {
  std::vector<int> counts;
  std::vector<std::pair<double, double>> bounds;
};

struct SobolSpec {
  int n = 0;
  int d = 0;
  std::vector<std::pair<double, double>> bounds;
  std::uint64_t seed = 0;
  bool scramble = false;
};

struct FileSpec {
  std::string path;
};

struct PointListSpec {
  Eigen::MatrixXd points;
};

using DesignSource = std::variant<GridSpec, SobolSpec, FileSpec>;
using LocationSource = std::variant<SobolSpec, PointListSpec>;

enum class ResponseKind { Zero, Camel, FromFile };

struct FeatureBuildSpec {
  int feature_count = 200;  // D
  int landmarks = 0;        // m; 0 means min(N, ceil(1.2 D))
  std::uint64_t seed = 7;
  std::string sidecar;      // optional path to load/store the map
};

struct ExperimentPlan {
  DesignSource design;
  LocationSource locations;
  KernelSpec kernel;
  std::vector<SearchConfig> strategies;
  FeatureBuildSpec feature_build;
  ResponseKind response = ResponseKind::Zero;
  std::string output_path;
  int repetitions = 1;
  int workers = 0;  // 0: LOCALGP_WORKERS env var, else hardware concurrency
  std::vector<int> reporting_stages = {10, 15, 20, 25, 30};
};

StrategyKind parse_strategy_kind(const std::string& name);
ExperimentPlan parse_plan_json(const std::string& json_text);
ExperimentPlan load_plan(const std::string& path);

struct LocationResult {
  int location_index = -1;
  Eigen::VectorXd location;
  std::vector<SearchReport> reports;  // one per plan strategy
  double mean = 0.0;                  // prediction from the first strategy
  double variance = 0.0;
  std::string error;                  // nonempty when this location failed
};

struct EmulateOutput {
  std::vector<LocationResult> locations;
  double feature_precompute_seconds = 0.0;
};

/// Run every strategy at every prediction location, location-parallel over a
/// bounded worker pool; output ordered by location index.
EmulateOutput emulate(const ExperimentPlan& plan);

struct BenchmarkRow {
  std::string strategy;
  int stage = 0;
  double mean_seconds = 0.0;          // cumulative through the stage
  double mean_candidate_pct = 0.0;    // from counters, machine independent
  double mean_variance = 0.0;
  double relative_difference = 0.0;   // vs the MaxDistance baseline
  double speedup_vs_baseline = 1.0;   // timing ratio on this run
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;
  std::string raw_csv;  // per-location per-stage rows, timing-free
};

BenchmarkTable benchmark(const ExperimentPlan& plan);
std::string format_benchmark_table(const BenchmarkTable& table);

// CSV design files: header x1,...,xd[,y], '.' decimal, LF line endings.
struct DesignFile {
  Eigen::MatrixXd inputs;
  std::optional<Eigen::VectorXd> responses;
};

DesignFile read_design_csv(const std::string& path);
void write_design_csv(const std::string& path, const Eigen::MatrixXd& inputs,
                      const Eigen::VectorXd* responses = nullptr);

double camel_response(const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd synthesize_responses(const Eigen::MatrixXd& inputs, ResponseKind kind);

/// Materialize the plan's design into a Dataset.
Dataset realize_design(const ExperimentPlan& plan);
Eigen::MatrixXd realize_locations(const ExperimentPlan& plan, int dims);

}  // namespace localgp
