#include "localgp/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace localgp {

namespace {

void check_kernel(const FeatureMap& map, const KernelSpec& spec) {
  if (map.kernel_hash != spec.fingerprint())
    throw std::invalid_argument("feature map was built for a different kernel");
}

Eigen::MatrixXd cross_correlation_block(const KernelSpec& spec,
                                        const Eigen::MatrixXd& scaled_rows,
                                        const Eigen::MatrixXd& scaled_cols) {
  const int m = static_cast<int>(scaled_rows.rows());
  const int n = static_cast<int>(scaled_cols.rows());
  Eigen::MatrixXd out(m, n);
  for (int c = 0; c < n; ++c)
    out.col(c) = correlations_scaled(spec, scaled_rows, scaled_cols.row(c));
  return out;
}

}  // namespace

FeatureMap nystrom_build(const KernelSpec& spec, const Dataset& data, int D, int m,
                         std::uint64_t seed) {
  const int n = data.n_rows();
  if (D < 1 || D > m || m > n)
    throw std::invalid_argument("nystrom_build: need 1 <= D <= m <= N");

  FeatureMap map;
  map.kernel_hash = spec.fingerprint();

  // Uniform landmark sample without replacement (partial Fisher-Yates).
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  map.landmarks.assign(pool.begin(), pool.begin() + m);
  std::sort(map.landmarks.begin(), map.landmarks.end());

  const Eigen::MatrixXd scaled = spec.scale_points(data.inputs());
  Eigen::MatrixXd scaled_landmarks(m, data.dims());
  for (int i = 0; i < m; ++i) scaled_landmarks.row(i) = scaled.row(map.landmarks[i]);

  Eigen::MatrixXd gram = cross_correlation_block(spec, scaled_landmarks, scaled_landmarks);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success) throw std::runtime_error("nystrom_build: eigen-solve failed");

  // Eigen returns ascending order; keep the top D, which must be positive.
  const Eigen::VectorXd& all = es.eigenvalues();
  if (all[m - D] <= 0.0)
    throw std::invalid_argument("nystrom_build: fewer than D positive landmark eigenvalues");

  map.feature_count = D;
  map.eigenvalues.resize(D);
  map.landmark_basis.resize(m, D);
  for (int i = 0; i < D; ++i) {
    const double lm_eig = all[m - 1 - i];
    map.eigenvalues[i] = lm_eig / m;
    map.landmark_basis.col(i) = es.eigenvectors().col(m - 1 - i) / std::sqrt(lm_eig);
  }

  // U(X_N) = basis^T Phi(landmarks, X_N), in column chunks to bound memory.
  map.features.resize(D, n);
  const int chunk = 4096;
  for (int start = 0; start < n; start += chunk) {
    const int len = std::min(chunk, n - start);
    Eigen::MatrixXd block =
        cross_correlation_block(spec, scaled_landmarks, scaled.middleRows(start, len));
    map.features.middleCols(start, len).noalias() = map.landmark_basis.transpose() * block;
  }

  // Reconstruction error over 1000 sampled pairs.
  std::uniform_int_distribution<int> any(0, n - 1);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int a = any(rng), b = any(rng);
    const double approx = map.features.col(a).dot(map.features.col(b));
    const double exact =
        correlation_from_scaled_sqdist(spec, (scaled.row(a) - scaled.row(b)).squaredNorm());
    worst = std::max(worst, std::abs(approx - exact));
  }
  map.reconstruction_error = worst;
  return map;
}

FeatureMap truncate_features(const FeatureMap& map, int D) {
  if (D < 1 || D > map.feature_count)
    throw std::invalid_argument("truncate_features: bad feature count");
  FeatureMap out;
  out.feature_count = D;
  out.eigenvalues = map.eigenvalues.head(D);
  out.landmarks = map.landmarks;
  if (map.landmark_basis.size() > 0) out.landmark_basis = map.landmark_basis.leftCols(D);
  out.features = map.features.topRows(D);
  out.kernel_hash = map.kernel_hash;
  out.reconstruction_error = map.reconstruction_error;
  return out;
}

Eigen::VectorXd feature_at(const FeatureMap& map, const KernelSpec& spec,
                           const Dataset& data, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_kernel(map, spec);
  const Eigen::MatrixXd scaled = spec.scale_points(data.inputs());
  const Eigen::RowVectorXd sx = (x.cwiseProduct(spec.theta_diagonal())).transpose();
  if (!map.landmarks.empty()) {
    Eigen::VectorXd corr(map.landmarks.size());
    for (std::size_t i = 0; i < map.landmarks.size(); ++i) {
      const double sq = (scaled.row(map.landmarks[i]) - sx).squaredNorm();
      corr[static_cast<int>(i)] = correlation_from_scaled_sqdist(spec, sq);
    }
    return map.landmark_basis.transpose() * corr;
  }
  if (!map.extension_solver)
    throw std::runtime_error("feature_at: map has neither landmarks nor extension solver");
  const Eigen::VectorXd corr = correlations_scaled(spec, scaled, sx);
  return map.extension_solver->solve(map.features * corr);
}

Eigen::VectorXd ResidualProjector::residual(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  if (basis_cols_ == 0) return u;
  const auto basis = basis_.leftCols(basis_cols_);
  return u - basis * (basis.transpose() * u);
}

void ResidualProjector::extend(const Eigen::Ref<const Eigen::VectorXd>& u) {
  Eigen::VectorXd r = residual(u);
  r = residual(r);  // one reorthogonalization pass
  const double norm = r.norm();
  if (norm <= 1e-10) return;  // feature-space duplicate
  if (basis_.cols() <= basis_cols_) {
    Eigen::MatrixXd grown(dim_, std::max(8l, 2 * basis_.cols()));
    if (basis_cols_ > 0) grown.leftCols(basis_cols_) = basis_.leftCols(basis_cols_);
    basis_.swap(grown);
  }
  basis_.col(basis_cols_) = r / norm;
  ++basis_cols_;
}

std::optional<double> approx_reduction(const Eigen::Ref<const Eigen::VectorXd>& cx,
                                       const Eigen::Ref<const Eigen::VectorXd>& cu) {
  const double nu = cu.squaredNorm();
  if (nu <= 1e-24) return std::nullopt;
  const double dot = cx.dot(cu);
  return dot * dot / nu;
}

ConeFilterResult cone_filter(const Eigen::Ref<const Eigen::VectorXd>& cx,
                             const Eigen::Ref<const Eigen::MatrixXd>& candidate_residuals,
                             double delta) {
  if (delta < 0.0) throw std::invalid_argument("cone_filter: negative delta");
  ConeFilterResult out;
  const double nx = cx.squaredNorm();
  if (delta > nx) {
    out.fallback = true;
    return out;
  }
  for (int c = 0; c < candidate_residuals.cols(); ++c) {
    const double nu = candidate_residuals.col(c).squaredNorm();
    if (nu <= 1e-24) continue;
    const double dot = cx.dot(candidate_residuals.col(c));
    if (dot * dot >= delta * nu) out.survivors.push_back(c);
  }
  return out;
}

LshIndex::LshIndex(const FeatureMap& map, const ResidualProjector& proj,
                   const LshParams& params)
    : params_(params), kernel_hash_(map.kernel_hash), features_(&map.features) {
  if (params_.bits < 1 || params_.bits > 32)
    throw std::invalid_argument("LshIndex: bits must be in [1, 32]");
  if (proj.feature_count() != map.feature_count)
    throw std::invalid_argument("LshIndex: projector dimension mismatch");
  const int D = map.feature_count;
  hyperplanes_.resize(D, params_.tables * params_.bits);
  std::mt19937_64 rng(params_.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int c = 0; c < hyperplanes_.cols(); ++c)
    for (int r = 0; r < D; ++r) hyperplanes_(r, c) = gauss(rng);
  rebuild(proj);
}

void LshIndex::rebuild(const ResidualProjector& proj) {
  // Project the hyperplanes instead of every stored vector: sign(r^T G y)
  // equals sign((G r)^T y) because the projector is symmetric.
  Eigen::MatrixXd projected(hyperplanes_.rows(), hyperplanes_.cols());
  for (int c = 0; c < hyperplanes_.cols(); ++c)
    projected.col(c) = proj.residual(hyperplanes_.col(c));

  const Eigen::MatrixXd scores = projected.transpose() * (*features_);  // (L*b) x N
  const int n = static_cast<int>(features_->cols());
  buckets_.assign(params_.tables, {});
  for (int t = 0; t < params_.tables; ++t) {
    auto& table = buckets_[t];
    for (int y = 0; y < n; ++y) {
      std::uint32_t key = 0;
      for (int bit = 0; bit < params_.bits; ++bit)
        if (scores(t * params_.bits + bit, y) >= 0.0) key |= (1u << bit);
      table[key].push_back(y);
    }
  }
  stale_stages_ = 0;
}

std::uint32_t LshIndex::key_of(const Eigen::Ref<const Eigen::VectorXd>& v, int table) const {
  std::uint32_t key = 0;
  for (int bit = 0; bit < params_.bits; ++bit) {
    const double s = hyperplanes_.col(table * params_.bits + bit).dot(v);
    if (s >= 0.0) key |= (1u << bit);
  }
  return key;
}

std::vector<int> LshIndex::query(const Eigen::Ref<const Eigen::VectorXd>& projected_query,
                                 double max_angle) const {
  const int allowed =
      static_cast<int>(std::ceil(params_.bits * max_angle / M_PI));
  const int n = static_cast<int>(features_->cols());
  std::vector<char> seen(n, 0);
  std::vector<int> out;
  for (int t = 0; t < params_.tables; ++t) {
    const std::uint32_t qkey = key_of(projected_query, t);
    for (const auto& [key, members] : buckets_[t]) {
      if (std::popcount(key ^ qkey) > allowed) continue;
      for (int idx : members) {
        if (!seen[idx]) {
          seen[idx] = 1;
          out.push_back(idx);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void LshIndex::advance_stage(const ResidualProjector& proj) {
  if (++stale_stages_ >= params_.staleness_bound) rebuild(proj);
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

void save_feature_map(const FeatureMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_feature_map: cannot open " + path);
  out.write("LGPF", 4);
  write_raw<std::uint32_t>(out, 1);  // version
  write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(map.features.cols()));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(map.feature_count));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(map.landmarks.size()));
  for (std::uint64_t word : map.kernel_hash) write_raw(out, word);
  for (int i = 0; i < map.feature_count; ++i) write_raw(out, map.eigenvalues[i]);
  for (int r = 0; r < map.feature_count; ++r)
    for (int c = 0; c < map.features.cols(); ++c) write_raw(out, map.features(r, c));
  if (!out) throw std::runtime_error("save_feature_map: write failed for " + path);
}

FeatureMap load_feature_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_feature_map: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "LGPF", 4) != 0)
    throw std::runtime_error("load_feature_map: bad magic in " + path);
  const auto version = read_raw<std::uint32_t>(in);
  if (version != 1) throw std::runtime_error("load_feature_map: unsupported version");
  const auto n = static_cast<int>(read_raw<std::uint64_t>(in));
  const auto D = static_cast<int>(read_raw<std::uint32_t>(in));
  read_raw<std::uint32_t>(in);  // m, informational only

  FeatureMap map;
  map.feature_count = D;
  for (auto& word : map.kernel_hash) word = read_raw<std::uint64_t>(in);
  map.eigenvalues.resize(D);
  for (int i = 0; i < D; ++i) map.eigenvalues[i] = read_raw<double>(in);
  map.features.resize(D, n);
  for (int r = 0; r < D; ++r)
    for (int c = 0; c < n; ++c) map.features(r, c) = read_raw<double>(in);
  if (!in) throw std::runtime_error("load_feature_map: truncated file " + path);

  // Without landmarks, out-of-sample features use the least-squares extension.
  map.extension_solver.emplace(
      Eigen::MatrixXd(map.features * map.features.transpose()));
  return map;
}

}  // namespace localgp
