#pragma once

// Helpers shared by the unit tests and the acceptance runner: scratch
// directories, random masks, brute-force metric oracles and a central
// finite-difference gradient checker.

#include "dfseg/image.hpp"
#include "dfseg/nn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

namespace testing {

namespace fs = std::filesystem;

/// Fresh empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path dir =
      fs::temp_directory_path() / ("dfseg_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Random blobs: a few filled rectangles, sometimes nothing at all.
inline dfseg::Mask random_mask(std::mt19937_64& rng, dfseg::Index rows, dfseg::Index cols) {
  dfseg::Mask m = dfseg::Mask::Zero(rows, cols);
  std::uniform_int_distribution<int> count(0, 3);
  std::uniform_int_distribution<dfseg::Index> r(0, rows - 1), c(0, cols - 1);
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    dfseg::Index r0 = r(rng), r1 = r(rng), c0 = c(rng), c1 = c(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    m.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setOnes();
  }
  // Sprinkle isolated pixels so surfaces are not only rectangle outlines.
  std::bernoulli_distribution speck(0.02);
  for (dfseg::Index i = 0; i < m.size(); ++i) {
    if (speck(rng)) m.data()[i] = 1;
  }
  return m;
}

using Point = std::pair<dfseg::Index, dfseg::Index>;

inline std::vector<Point> foreground(const dfseg::Mask& m) {
  std::vector<Point> out;
  for (dfseg::Index y = 0; y < m.rows(); ++y) {
    for (dfseg::Index x = 0; x < m.cols(); ++x) {
      if (m(y, x)) out.emplace_back(y, x);
    }
  }
  return out;
}

// ------------------------------------------------------------ naive oracles

inline double oracle_dsc(const dfseg::Mask& a, const dfseg::Mask& b) {
  const auto pa = foreground(a), pb = foreground(b);
  if (pa.empty() && pb.empty()) return 1.0;
  std::size_t both = 0;
  for (const auto& p : pa) both += std::count(pb.begin(), pb.end(), p);
  return 2.0 * static_cast<double>(both) / static_cast<double>(pa.size() + pb.size());
}

inline double oracle_jsc(const dfseg::Mask& a, const dfseg::Mask& b) {
  const auto pa = foreground(a), pb = foreground(b);
  if (pa.empty() && pb.empty()) return 1.0;
  std::size_t both = 0;
  for (const auto& p : pa) both += std::count(pb.begin(), pb.end(), p);
  return static_cast<double>(both) / static_cast<double>(pa.size() + pb.size() - both);
}

/// Foreground pixels touching background or the border, checked one
/// neighbour at a time.
inline std::vector<Point> oracle_surface(const dfseg::Mask& m) {
  std::vector<Point> out;
  auto bg = [&](dfseg::Index y, dfseg::Index x) {
    return y < 0 || x < 0 || y >= m.rows() || x >= m.cols() || m(y, x) == 0;
  };
  for (const auto& [y, x] : foreground(m)) {
    if (bg(y - 1, x) || bg(y + 1, x) || bg(y, x - 1) || bg(y, x + 1)) out.emplace_back(y, x);
  }
  return out;
}

inline double nearest(const Point& p, const std::vector<Point>& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : set) {
    const double dy = static_cast<double>(p.first - q.first);
    const double dx = static_cast<double>(p.second - q.second);
    best = std::min(best, std::sqrt(dy * dy + dx * dx));
  }
  return best;
}

/// Pixel-unit Hausdorff and mean distance by exhaustive search. Degenerate
/// pairs follow the same conventions as the library (0 / diagonal).
inline std::pair<double, double> oracle_surface_distances(const dfseg::Mask& a, const dfseg::Mask& b) {
  const auto sa = oracle_surface(a), sb = oracle_surface(b);
  if (sa.empty() && sb.empty()) return {0.0, 0.0};
  if (sa.empty() || sb.empty()) {
    const double diag = std::hypot(static_cast<double>(a.rows()), static_cast<double>(a.cols()));
    return {diag, diag};
  }
  double hd = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& p : sa) {
    const double d = nearest(p, sb);
    hd = std::max(hd, d);
    sum_a += d;
  }
  for (const auto& p : sb) {
    const double d = nearest(p, sa);
    hd = std::max(hd, d);
    sum_b += d;
  }
  const double mad = 0.5 * (sum_a / static_cast<double>(sa.size()) + sum_b / static_cast<double>(sb.size()));
  return {hd, mad};
}

// ------------------------------------------------------------ gradients

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over the entries
/// of `leaf` listed in `indices` (all entries when empty). `loss` must
/// rebuild the graph from the leaf's current value on every call.
inline double gradient_error(dfseg::nn::Var<double>& leaf,
                             const std::function<dfseg::nn::Var<double>()>& loss,
                             std::vector<dfseg::Index> indices = {}, double h = 1e-6) {
  if (indices.empty()) {
    for (dfseg::Index i = 0; i < leaf.value().data.size(); ++i) indices.push_back(i);
  }
  leaf.zero_grad();
  loss().backward();
  const Eigen::ArrayXd full = leaf.has_grad() ? Eigen::ArrayXd(leaf.grad())
                                              : Eigen::ArrayXd::Zero(leaf.value().data.size());
  Eigen::ArrayXd analytic(indices.size()), numeric(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    double& v = leaf.value().data[indices[k]];
    const double saved = v;
    v = saved + h;
    const double up = loss().item();
    v = saved - h;
    const double down = loss().item();
    v = saved;
    numeric[k] = (up - down) / (2.0 * h);
    analytic[k] = full[indices[k]];
  }
  const double scale = std::max({analytic.matrix().norm(), numeric.matrix().norm(), 1e-12});
  return (analytic - numeric).matrix().norm() / scale;
}

inline dfseg::nn::Tensor<double> random_tensor(std::mt19937_64& rng, const dfseg::nn::Shape& s,
                                               double lo = -1.0, double hi = 1.0) {
  dfseg::nn::Tensor<double> t(s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (dfseg::Index i = 0; i < t.data.size(); ++i) t.data[i] = u(rng);
  return t;
}

}  // namespace testing
