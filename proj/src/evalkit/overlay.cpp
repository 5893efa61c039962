#include "dfseg/evalkit.hpp"

#include "dfseg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dfseg::evalkit {

RgbImage overlay(const Mask& gt, const Mask& pred, const Image& image) {
  if (gt.rows() != pred.rows() || gt.cols() != pred.cols() || gt.rows() != image.rows() ||
      gt.cols() != image.cols()) {
    throw ValidationError("overlay: ground truth, prediction and image shapes differ");
  }
  RgbImage out(gt.rows(), gt.cols());
  for (Index r = 0; r < gt.rows(); ++r) {
    for (Index c = 0; c < gt.cols(); ++c) {
      const bool g = gt(r, c) != 0, p = pred(r, c) != 0;
      if (g && p) {
        out.at(r, c) = kTruePositive;
      } else if (g) {
        out.at(r, c) = kFalseNegative;
      } else if (p) {
        out.at(r, c) = kFalsePositive;
      } else {
        const auto v = static_cast<std::uint8_t>(
            std::lround(std::clamp(image(r, c), 0.0f, 1.0f) * 255.0f));
        out.at(r, c) = {v, v, v};
      }
    }
  }
  return out;
}

}  // namespace dfseg::evalkit
