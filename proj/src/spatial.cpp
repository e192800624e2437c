#include "localgp/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace localgp {

SpatialIndex::SpatialIndex(Eigen::MatrixXd scaled_points, int leaf_size)
    : points_(std::move(scaled_points)), leaf_size_(leaf_size) {
  const int n = static_cast<int>(points_.rows());
  if (n < 1) throw std::invalid_argument("SpatialIndex: empty input");
  if (leaf_size_ < 1) throw std::invalid_argument("SpatialIndex: leaf_size < 1");
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * n / leaf_size_ + 2);
  root_ = build_subtree(0, n);
}

int SpatialIndex::build_subtree(int begin, int end) {
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();

  if (end - begin <= leaf_size_) {
    nodes_[node_id].begin = begin;
    nodes_[node_id].end = end;
    // Deterministic leaf order.
    std::sort(order_.begin() + begin, order_.begin() + end);
    return node_id;
  }

  // Median split on the widest-spread coordinate, ties by lower index.
  const int d = static_cast<int>(points_.cols());
  int split_dim = 0;
  double best_spread = -1.0;
  for (int c = 0; c < d; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int i = begin; i < end; ++i) {
      const double v = points_(order_[i], c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      split_dim = c;
    }
  }

  const int mid = begin + (end - begin) / 2;
  auto cmp = [this, split_dim](int a, int b) {
    const double va = points_(a, split_dim), vb = points_(b, split_dim);
    if (va != vb) return va < vb;
    return a < b;
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, cmp);

  nodes_[node_id].split_dim = split_dim;
  nodes_[node_id].split_value = points_(order_[mid], split_dim);
  const int left = build_subtree(begin, mid);
  const int right = build_subtree(mid, end);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

namespace {

struct HeapEntry {
  double sqdist;
  int index;
  // Max-heap ordering on (sqdist, index): the "worst" neighbor on top.
  bool operator<(const HeapEntry& other) const {
    if (sqdist != other.sqdist) return sqdist < other.sqdist;
    return index < other.index;
  }
};

}  // namespace

std::vector<int> SpatialIndex::knn_excluding(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                             int k, const std::vector<char>& excluded) const {
  const int n = size();
  if (!excluded.empty() && static_cast<int>(excluded.size()) != n)
    throw std::invalid_argument("knn_excluding: bad exclusion mask size");
  int available = n;
  if (!excluded.empty())
    available = n - static_cast<int>(std::count(excluded.begin(), excluded.end(), char(1)));
  if (k > available) throw std::invalid_argument("knn_excluding: k exceeds available points");

  std::priority_queue<HeapEntry> heap;

  // Iterative traversal, near child first, pruning against the current worst.
  std::vector<int> stack;
  stack.push_back(root_);
  while (!stack.empty()) {
    const int node_id = stack.back();
    stack.pop_back();
    const Node& node = nodes_[node_id];

    if (node.is_leaf()) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order_[i];
        if (!excluded.empty() && excluded[idx]) continue;
        const double sq = (points_.row(idx) - query).squaredNorm();
        HeapEntry cand{sq, idx};
        if (static_cast<int>(heap.size()) < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      continue;
    }

    const double diff = query[node.split_dim] - node.split_value;
    const int near_child = diff < 0.0 ? node.left : node.right;
    const int far_child = diff < 0.0 ? node.right : node.left;
    // Far side can be skipped only when the plane is strictly farther than the
    // current worst; equal distances must still be visited for tie handling.
    const bool need_far =
        static_cast<int>(heap.size()) < k || diff * diff <= heap.top().sqdist;
    if (need_far) stack.push_back(far_child);
    stack.push_back(near_child);  // popped first
  }

  std::vector<HeapEntry> entries;
  entries.reserve(heap.size());
  while (!heap.empty()) {
    entries.push_back(heap.top());
    heap.pop();
  }
  std::vector<int> result(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i)
    result[entries.size() - 1 - i] = entries[i].index;
  return result;
}

std::vector<int> SpatialIndex::within_radius_of_any(
    const Eigen::Ref<const Eigen::MatrixXd>& centers, double radius,
    const std::vector<char>& excluded, std::vector<char>& visited) const {
  const int n = size();
  if (!excluded.empty() && static_cast<int>(excluded.size()) != n)
    throw std::invalid_argument("within_radius_of_any: bad exclusion mask size");
  if (radius < 0.0) throw std::invalid_argument("within_radius_of_any: negative radius");

  std::vector<int> result;
  if (std::isinf(radius)) {
    result.reserve(n);
    for (int i = 0; i < n; ++i)
      if (excluded.empty() || !excluded[i]) result.push_back(i);
    return result;
  }

  visited.assign(n, 0);
  const double sq_radius = radius * radius;
  std::vector<int> stack;
  for (int c = 0; c < centers.rows(); ++c) {
    const Eigen::RowVectorXd center = centers.row(c);
    stack.clear();
    stack.push_back(root_);
    while (!stack.empty()) {
      const int node_id = stack.back();
      stack.pop_back();
      const Node& node = nodes_[node_id];
      if (node.is_leaf()) {
        for (int i = node.begin; i < node.end; ++i) {
          const int idx = order_[i];
          if (visited[idx]) continue;
          if (!excluded.empty() && excluded[idx]) continue;
          if ((points_.row(idx) - center).squaredNorm() <= sq_radius) {
            visited[idx] = 1;
            result.push_back(idx);
          }
        }
        continue;
      }
      const double diff = center[node.split_dim] - node.split_value;
      if (diff <= radius) stack.push_back(node.left);
      if (-diff <= radius) stack.push_back(node.right);
    }
  }
  std::sort(result.begin(), result.end());
  return result;
}

}  // namespace localgp
