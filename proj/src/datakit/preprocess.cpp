#include "dfseg/datakit.hpp"

#include "dfseg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dfseg::datakit {

Image resize_bilinear(const Image& src, Index rows, Index cols) {
  if (src.rows() == rows && src.cols() == cols) return src;
  Image out(rows, cols);
  const double sy = static_cast<double>(src.rows()) / rows;
  const double sx = static_cast<double>(src.cols()) / cols;
  const Index max_y = src.rows() - 1, max_x = src.cols() - 1;
  for (Index y = 0; y < rows; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(max_y));
    const Index y0 = static_cast<Index>(std::floor(fy));
    const Index y1 = std::min(y0 + 1, max_y);
    const double wy = fy - y0;
    for (Index x = 0; x < cols; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(max_x));
      const Index x0 = static_cast<Index>(std::floor(fx));
      const Index x1 = std::min(x0 + 1, max_x);
      const double wx = fx - x0;
      const double top = (1 - wx) * src(y0, x0) + wx * src(y0, x1);
      const double bottom = (1 - wx) * src(y1, x0) + wx * src(y1, x1);
      out(y, x) = static_cast<float>((1 - wy) * top + wy * bottom);
    }
  }
  return out;
}

Mask resize_nearest(const Mask& src, Index rows, Index cols) {
  Mask out(rows, cols);
  const double sy = static_cast<double>(src.rows()) / rows;
  const double sx = static_cast<double>(src.cols()) / cols;
  for (Index y = 0; y < rows; ++y) {
    const Index yy = std::min<Index>(static_cast<Index>(std::floor((y + 0.5) * sy)), src.rows() - 1);
    for (Index x = 0; x < cols; ++x) {
      const Index xx = std::min<Index>(static_cast<Index>(std::floor((x + 0.5) * sx)), src.cols() - 1);
      out(y, x) = src(yy, xx) ? 1 : 0;
    }
  }
  return out;
}

Image normalize_min_max(const Image& src) {
  const float lo = src.minCoeff();
  const float hi = src.maxCoeff();
  if (!(hi > lo)) return Image::Zero(src.rows(), src.cols());
  // Computed in double so the extremes land exactly on 0 and 1.
  return ((src.cast<double>() - lo) / (static_cast<double>(hi) - lo)).cast<float>();
}

Image preprocess_slice(const Image& raw, const PreprocessOptions& options) {
  if (raw.size() == 0) throw ValidationError("preprocess_slice: empty image");
  if (!options.resize) return normalize_min_max(raw);
  return normalize_min_max(resize_bilinear(raw, options.size, options.size));
}

Mask preprocess_mask(const Mask& raw, const PreprocessOptions& options) {
  if (!options.resize) return (raw != 0).cast<std::uint8_t>();
  return resize_nearest(raw, options.size, options.size);
}

SliceData load_slice(const SliceSample& sample, const PreprocessOptions& options) {
  SliceData d;
  d.id = sample.id;
  d.domain = sample.domain;
  const RawImage raw = read_grayscale(sample.image_path);
  d.image = preprocess_slice(raw.pixels, options);
  if (sample.mask_path) {
    const Mask m = read_mask(*sample.mask_path);
    if (m.rows() != raw.pixels.rows() || m.cols() != raw.pixels.cols()) {
      throw ValidationError("sample '" + sample.id + "': mask shape differs from image shape");
    }
    d.mask = preprocess_mask(m, options);
  }
  return d;
}

std::vector<SliceData> load_slices(const std::vector<const SliceSample*>& samples,
                                   const PreprocessOptions& options) {
  std::vector<SliceData> out;
  out.reserve(samples.size());
  for (const auto* s : samples) out.push_back(load_slice(*s, options));
  return out;
}

}  // namespace dfseg::datakit
