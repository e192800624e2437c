#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "localgp/kernel.hpp"
#include "localgp/localgp.hpp"

namespace localgp {

/// D-dimensional Nystrom eigen-features of the full design. Column t of
/// `features` is U(x_t) = (sqrt(lambda_1) phi_1(x_t), ...), so that
/// U(x)^T U(y) is the standard rank-D Nystrom approximation of Phi(x, y).
struct FeatureMap {
  int feature_count = 0;                  // D
  Eigen::VectorXd eigenvalues;            // operator eigenvalues, descending
  std::vector<int> landmarks;             // dataset indices, empty when loaded from file
  Eigen::MatrixXd landmark_basis;         // m x D, eigvec_i / sqrt(landmark eigenvalue_i)
  Eigen::MatrixXd features;               // D x N
  std::array<std::uint64_t, 4> kernel_hash{};
  double reconstruction_error = 0.0;      // max-abs over a sampled pair set

  // Out-of-sample fallback when landmarks are unavailable (sidecar load):
  // U(x) = (F F^T)^-1 F Phi(X_N, x), the least-squares feature extension.
  std::optional<Eigen::LDLT<Eigen::MatrixXd>> extension_solver;
};

/// Build a rank-D Nystrom feature map from m uniformly sampled landmarks
/// (without replacement, seeded). Throws when fewer than D landmark
/// eigenvalues are positive.
FeatureMap nystrom_build(const KernelSpec& spec, const Dataset& data, int D, int m,
                         std::uint64_t seed);

/// Same map truncated to the leading D features.
FeatureMap truncate_features(const FeatureMap& map, int D);

/// Features U(x) of an arbitrary point.
Eigen::VectorXd feature_at(const FeatureMap& map, const KernelSpec& spec,
                           const Dataset& data, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Orthonormal basis of span{U(x_1), ..., U(x_j)}, maintained by incremental
/// Gram-Schmidt. Its residual action is C_{X_j}(t) = U(t) - B (B^T U(t)).
class ResidualProjector {
 public:
  explicit ResidualProjector(int feature_count) : dim_(feature_count) {}

  int basis_size() const { return basis_cols_; }
  int feature_count() const { return dim_; }

  Eigen::VectorXd residual(const Eigen::Ref<const Eigen::VectorXd>& u) const;

  /// Gram-Schmidt step with the new sub-design point's features; a residual
  /// below 1e-10 in norm (feature-space duplicate) leaves the basis unchanged.
  void extend(const Eigen::Ref<const Eigen::VectorXd>& u);

 private:
  int dim_ = 0;
  int basis_cols_ = 0;
  Eigen::MatrixXd basis_;  // dim_ x basis_cols_ live block
};

/// (cx^T cu)^2 / ||cu||^2 = ||cx||^2 cos^2(theta). nullopt when the candidate
/// residual norm is below 1e-12 (ineligible).
std::optional<double> approx_reduction(const Eigen::Ref<const Eigen::VectorXd>& cx,
                                       const Eigen::Ref<const Eigen::VectorXd>& cu);

struct ConeFilterResult {
  std::vector<int> survivors;  // positions into the candidate list
  bool fallback = false;       // delta exceeds ||cx||^2: nothing can qualify
};

/// Keep candidates with cos^2(theta) >= delta / ||cx||^2. `candidate_residuals`
/// holds C(u) per candidate as columns.
ConeFilterResult cone_filter(const Eigen::Ref<const Eigen::VectorXd>& cx,
                             const Eigen::Ref<const Eigen::MatrixXd>& candidate_residuals,
                             double delta);

struct LshParams {
  int tables = 12;   // L
  int bits = 16;     // b, hyperplanes per table
  std::uint64_t seed = 99;
  int staleness_bound = 5;  // stages between lazy key refreshes
};

/// Random-hyperplane sign hashes of the projected features G_j U(y). Keys are
/// regenerated lazily: at most `staleness_bound` stages may elapse between the
/// projector state used for bucket keys and the current one.
class LshIndex {
 public:
  LshIndex(const FeatureMap& map, const ResidualProjector& proj, const LshParams& params);

  /// Bucket union across tables, matching the query key on at least
  /// b - ceil(b * max_angle / pi) bits per table (Hamming-relaxed multi-probe).
  std::vector<int> query(const Eigen::Ref<const Eigen::VectorXd>& projected_query,
                         double max_angle) const;

  /// Tell the index the projector advanced one stage; rebuilds bucket keys
  /// once the staleness bound is hit.
  void advance_stage(const ResidualProjector& proj);

  const std::array<std::uint64_t, 4>& kernel_hash() const { return kernel_hash_; }

 private:
  void rebuild(const ResidualProjector& proj);
  std::uint32_t key_of(const Eigen::Ref<const Eigen::VectorXd>& v, int table) const;

  LshParams params_;
  std::array<std::uint64_t, 4> kernel_hash_{};
  const Eigen::MatrixXd* features_ = nullptr;  // D x N, owned by the FeatureMap
  Eigen::MatrixXd hyperplanes_;                // D x (tables * bits)
  std::vector<std::unordered_map<std::uint32_t, std::vector<int>>> buckets_;
  int stale_stages_ = 0;
};

/// Binary sidecar persistence (little-endian; header LGPF, version, N, D, m,
/// kernel hash; then eigenvalues and the D x N feature matrix row-major).
void save_feature_map(const FeatureMap& map, const std::string& path);
FeatureMap load_feature_map(const std::string& path);

}  // namespace localgp
