#include "dfseg/evalkit.hpp"

#include "dfseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfseg::evalkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shapes(const Mask& a, const Mask& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": mask shapes differ");
  }
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) restricted to the
// finite entries of f, so no arithmetic ever touches infinity.
void edt_1d(const double* f, Index n, Index stride, double* out, std::vector<Index>& v,
            std::vector<double>& z) {
  v.clear();
  z.clear();
  for (Index q = 0; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == kInf) continue;
    while (!v.empty()) {
      const Index p = v.back();
      const double s = ((fq + double(q) * q) - (f[p * stride] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z.back()) {
        v.pop_back();
        z.pop_back();
      } else {
        z.push_back(s);
        break;
      }
    }
    if (v.empty()) z.assign(1, -kInf);
    v.push_back(q);
  }
  if (v.empty()) {
    for (Index q = 0; q < n; ++q) out[q * stride] = kInf;
    return;
  }
  // z[i] is where parabola v[i] starts to win.
  std::size_t k = 0;
  for (Index q = 0; q < n; ++q) {
    while (k + 1 < v.size() && z[k + 1] < double(q)) ++k;
    const double d = double(q - v[k]);
    out[q * stride] = d * d + f[v[k] * stride];
  }
}

// Squared Euclidean distance from every pixel to the nearest seed.
Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> squared_edt(
    const std::vector<Pixel>& seeds, Index rows, Index cols) {
  Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f =
      Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(rows, cols, kInf);
  for (const auto& p : seeds) f(p.row, p.col) = 0.0;
  auto tmp = f;
  std::vector<Index> v;
  std::vector<double> z;
  for (Index c = 0; c < cols; ++c) edt_1d(f.data() + c, rows, cols, tmp.data() + c, v, z);
  for (Index r = 0; r < rows; ++r) edt_1d(tmp.data() + r * cols, cols, 1, f.data() + r * cols, v, z);
  return f;
}

struct Directed {
  double max = 0.0;
  double mean = 0.0;
};

Directed directed(const std::vector<Pixel>& from, const std::vector<Pixel>& to, Index rows,
                  Index cols) {
  const auto dist = squared_edt(to, rows, cols);
  Directed d;
  double sum = 0.0;
  for (const auto& p : from) {
    const double e = std::sqrt(dist(p.row, p.col));
    d.max = std::max(d.max, e);
    sum += e;
  }
  d.mean = sum / static_cast<double>(from.size());
  return d;
}

template <typename Combine>
SurfaceDistance surface_distance(const Mask& a, const Mask& b, Combine combine) {
  const double diag = image_diagonal(a.rows(), a.cols());
  const auto sa = surface_points(a);
  const auto sb = surface_points(b);
  SurfaceDistance out;
  if (sa.empty() && sb.empty()) {
    out.flag = Degenerate::both_empty;
    return out;
  }
  if (sa.empty() || sb.empty()) {
    out.flag = Degenerate::one_empty;
    out.px = diag;
    out.norm = 1.0;
    return out;
  }
  out.px = combine(directed(sa, sb, a.rows(), a.cols()), directed(sb, sa, a.rows(), a.cols()));
  out.norm = out.px / diag;
  return out;
}

}  // namespace

double image_diagonal(Index rows, Index cols) {
  return std::sqrt(double(rows) * rows + double(cols) * cols);
}

std::vector<Pixel> surface_points(const Mask& mask) {
  std::vector<Pixel> out;
  const Index rows = mask.rows(), cols = mask.cols();
  auto bg = [&](Index r, Index c) {
    return r < 0 || c < 0 || r >= rows || c >= cols || mask(r, c) == 0;
  };
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (mask(r, c) == 0) continue;
      if (bg(r - 1, c) || bg(r + 1, c) || bg(r, c - 1) || bg(r, c + 1)) out.push_back({r, c});
    }
  }
  return out;
}

SurfaceDistance hausdorff(const Mask& a, const Mask& b) {
  check_shapes(a, b, "hausdorff");
  return surface_distance(a, b, [](Directed ab, Directed ba) { return std::max(ab.max, ba.max); });
}

SurfaceDistance mad(const Mask& a, const Mask& b) {
  check_shapes(a, b, "mad");
  return surface_distance(a, b, [](Directed ab, Directed ba) { return 0.5 * (ab.mean + ba.mean); });
}

}  // namespace dfseg::evalkit
