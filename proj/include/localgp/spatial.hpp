#pragma once

#include <Eigen/Dense>

#include <vector>

namespace localgp {

/// k-d tree over Theta-scaled design points. Inputs are stored pre-multiplied
/// by Theta, so every query is plain Euclidean; a change of Theta requires a
/// rebuild. Immutable after construction, concurrent queries are safe as long
/// as each caller provides its own scratch.
class SpatialIndex {
 public:
  explicit SpatialIndex(Eigen::MatrixXd scaled_points, int leaf_size = 16);

  int size() const { return static_cast<int>(points_.rows()); }
  const Eigen::MatrixXd& points() const { return points_; }

  /// The k nearest non-excluded points, ascending distance, ties by lower
  /// index. `excluded` is either empty or a size-N mask.
  std::vector<int> knn_excluding(const Eigen::Ref<const Eigen::RowVectorXd>& query, int k,
                                 const std::vector<char>& excluded) const;

  /// Indices within the closed Euclidean ball of `radius` around any row of
  /// `centers`, minus excluded indices. Infinite radius returns everything
  /// not excluded. `visited` is caller scratch, resized internally.
  std::vector<int> within_radius_of_any(const Eigen::Ref<const Eigen::MatrixXd>& centers,
                                        double radius, const std::vector<char>& excluded,
                                        std::vector<char>& visited) const;

 private:
  struct Node {
    int left = -1;
    int right = -1;
    int split_dim = -1;
    double split_value = 0.0;
    int begin = 0;  // leaf range into order_
    int end = 0;
    bool is_leaf() const { return left < 0; }
  };

  int build_subtree(int begin, int end);

  Eigen::MatrixXd points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
  int leaf_size_ = 16;
};

}  // namespace localgp
