#include "localgp/harness.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace localgp {

namespace {

// Joe-Kuo direction-number parameters for dimensions 2..21 (dimension 1 is
// the van der Corput sequence in base 2): degree s, coefficient bits a, and
// the initial m values.
struct SobolDim {
  int s;
  std::uint32_t a;
  std::array<std::uint32_t, 7> m;
};

constexpr SobolDim kSobolDims[20] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
};

constexpr int kSobolBits = 32;

std::vector<std::uint32_t> direction_numbers(int dim_index) {
  std::vector<std::uint32_t> v(kSobolBits + 1, 0);
  if (dim_index == 0) {
    for (int k = 1; k <= kSobolBits; ++k) v[k] = 1u << (kSobolBits - k);
    return v;
  }
  const SobolDim& p = kSobolDims[dim_index - 1];
  for (int k = 1; k <= p.s; ++k) v[k] = p.m[k - 1] << (kSobolBits - k);
  for (int k = p.s + 1; k <= kSobolBits; ++k) {
    v[k] = v[k - p.s] ^ (v[k - p.s] >> p.s);
    for (int i = 1; i < p.s; ++i)
      if ((p.a >> (p.s - 1 - i)) & 1u) v[k] ^= v[k - i];
  }
  return v;
}

int lowest_zero_bit(std::uint64_t value) {
  int c = 1;
  while (value & 1u) {
    value >>= 1;
    ++c;
  }
  return c;
}

}  // namespace

Eigen::MatrixXd sobol_points(int n, int d,
                             const std::vector<std::pair<double, double>>& bounds,
                             std::uint64_t seed, bool scramble) {
  if (d < 1 || d > 21)
    throw std::invalid_argument("sobol_points: dimension must be in [1, 21]");
  if (n < 1) throw std::invalid_argument("sobol_points: n must be positive");
  if (static_cast<int>(bounds.size()) != d)
    throw std::invalid_argument("sobol_points: bounds do not match dimension");
  for (const auto& [lo, hi] : bounds)
    if (!(lo < hi)) throw std::invalid_argument("sobol_points: bounds not well ordered");

  std::vector<std::vector<std::uint32_t>> v(d);
  for (int j = 0; j < d; ++j) v[j] = direction_numbers(j);

  std::vector<std::uint32_t> mask(d, 0);
  if (scramble) {
    std::mt19937_64 rng(seed);
    for (int j = 0; j < d; ++j) mask[j] = static_cast<std::uint32_t>(rng());
  }

  constexpr double kScale = 1.0 / 4294967296.0;  // 2^-32
  Eigen::MatrixXd out(n, d);
  std::vector<std::uint32_t> state(d, 0);
  // Gray-code stepping; the index-0 origin point is skipped.
  for (int i = 1; i <= n; ++i) {
    const int c = lowest_zero_bit(static_cast<std::uint64_t>(i - 1));
    for (int j = 0; j < d; ++j) {
      state[j] ^= v[j][c];
      const double u = (state[j] ^ mask[j]) * kScale;
      out(i - 1, j) = bounds[j].first + u * (bounds[j].second - bounds[j].first);
    }
  }
  return out;
}

Eigen::MatrixXd grid_points(const std::vector<int>& counts,
                            const std::vector<std::pair<double, double>>& bounds) {
  const int d = static_cast<int>(counts.size());
  if (d < 1 || bounds.size() != counts.size())
    throw std::invalid_argument("grid_points: counts/bounds mismatch");
  long total = 1;
  for (int c : counts) {
    if (c < 2) throw std::invalid_argument("grid_points: per-dimension count must be >= 2");
    total *= c;
  }
  for (const auto& [lo, hi] : bounds)
    if (!(lo < hi)) throw std::invalid_argument("grid_points: bounds not well ordered");

  Eigen::MatrixXd out(total, d);
  std::vector<int> idx(d, 0);
  for (long row = 0; row < total; ++row) {
    for (int j = 0; j < d; ++j) {
      const auto& [lo, hi] = bounds[j];
      out(row, j) = lo + idx[j] * (hi - lo) / (counts[j] - 1);
    }
    // Last dimension fastest.
    for (int j = d - 1; j >= 0; --j) {
      if (++idx[j] < counts[j]) break;
      idx[j] = 0;
    }
  }
  return out;
}

double camel_response(const Eigen::Ref<const Eigen::VectorXd>& x) {
  // Smooth six-hump-camel-style test function on the first two coordinates;
  // remaining coordinates contribute a mild quadratic bowl.
  const double a = x[0];
  const double b = x.size() > 1 ? x[1] : 0.0;
  double value = (4.0 - 2.1 * a * a + a * a * a * a / 3.0) * a * a + a * b +
                 (-4.0 + 4.0 * b * b) * b * b;
  for (int j = 2; j < x.size(); ++j) value += 0.5 * x[j] * x[j];
  return value;
}

Eigen::VectorXd synthesize_responses(const Eigen::MatrixXd& inputs, ResponseKind kind) {
  const int n = static_cast<int>(inputs.rows());
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  if (kind == ResponseKind::Camel)
    for (int i = 0; i < n; ++i) y[i] = camel_response(inputs.row(i).transpose());
  return y;
}

DesignFile read_design_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_design_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_design_csv: empty file " + path);

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const bool has_y = !header.empty() && header.back() == "y";
  const int d = static_cast<int>(header.size()) - (has_y ? 1 : 0);
  if (d < 1) throw std::runtime_error("read_design_csv: no input columns in " + path);

  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++cols;
    }
    if (cols != static_cast<int>(header.size()))
      throw std::runtime_error("read_design_csv: ragged row in " + path);
    ++rows;
  }

  DesignFile out;
  out.inputs.resize(rows, d);
  if (has_y) out.responses.emplace(rows);
  const int stride = static_cast<int>(header.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < d; ++c) out.inputs(r, c) = values[r * stride + c];
    if (has_y) (*out.responses)[r] = values[r * stride + d];
  }
  return out;
}

void write_design_csv(const std::string& path, const Eigen::MatrixXd& inputs,
                      const Eigen::VectorXd* responses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_design_csv: cannot open " + path);
  const int d = static_cast<int>(inputs.cols());
  for (int c = 0; c < d; ++c) out << "x" << (c + 1) << (c + 1 < d ? "," : "");
  if (responses) out << ",y";
  out << "\n";
  char buf[32];
  for (int r = 0; r < inputs.rows(); ++r) {
    for (int c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", inputs(r, c));
      out << buf << (c + 1 < d ? "," : "");
    }
    if (responses) {
      std::snprintf(buf, sizeof(buf), "%.17g", (*responses)[r]);
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_design_csv: write failed for " + path);
}

}  // namespace localgp
