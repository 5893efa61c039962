#include "dfseg/translator.hpp"

#include "dfseg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dfseg::translator {
namespace {

using ImageD = ImageT<double>;

// Separable "valid" filtering with a normalized 1D kernel.
ImageD filter_valid(const ImageD& src, const Eigen::ArrayXd& k) {
  const Index w = k.size();
  const Index rows = src.rows() - w + 1, cols = src.cols() - w + 1;
  ImageD horiz(src.rows(), cols);
  for (Index r = 0; r < src.rows(); ++r) {
    for (Index c = 0; c < cols; ++c) horiz(r, c) = (src.row(r).segment(c, w).transpose() * k).sum();
  }
  ImageD out(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) out(r, c) = (horiz.col(c).segment(r, w) * k).sum();
  }
  return out;
}

Eigen::ArrayXd gaussian_kernel(Index size, double sigma) {
  Eigen::ArrayXd k(size);
  const double mid = (size - 1) / 2.0;
  for (Index i = 0; i < size; ++i) k[i] = std::exp(-(i - mid) * (i - mid) / (2 * sigma * sigma));
  return k / k.sum();
}

void check(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError("fidelity_metrics: image shapes differ");
  }
  if (a.size() == 0) throw ValidationError("fidelity_metrics: empty image");
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  check(a, b);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  // 11x11 window; smaller images use the largest odd window that fits.
  Index size = std::min<Index>({11, a.rows(), a.cols()});
  if (size % 2 == 0) --size;
  const Eigen::ArrayXd k = gaussian_kernel(size, 1.5);
  const ImageD x = a.cast<double>(), y = b.cast<double>();
  const ImageD mx = filter_valid(x, k), my = filter_valid(y, k);
  const ImageD sxx = filter_valid(x * x, k) - mx * mx;
  const ImageD syy = filter_valid(y * y, k) - my * my;
  const ImageD sxy = filter_valid(x * y, k) - mx * my;
  const ImageD map = ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                     ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean();
}

datakit::Fidelity fidelity_metrics(const Image& real, const Image& fake) {
  check(real, fake);
  datakit::Fidelity f;
  f.mse = (real.cast<double>() - fake.cast<double>()).square().mean();
  f.ssim = ssim(real, fake);
  return f;
}

}  // namespace dfseg::translator
