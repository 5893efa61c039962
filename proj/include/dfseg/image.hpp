#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dfseg {

using Eigen::Index;

/// Row-major 2D intensity array; (row, col) = (y, x).
template <typename Scalar>
using ImageT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = ImageT<float>;

/// Binary mask, values in {0, 1}.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RgbImage {
  using Pixel = std::array<std::uint8_t, 3>;

  Index rows = 0;
  Index cols = 0;
  std::vector<Pixel> pixels;

  RgbImage() = default;
  RgbImage(Index r, Index c) : rows(r), cols(c), pixels(static_cast<std::size_t>(r * c)) {}
  Pixel& at(Index r, Index c) { return pixels[static_cast<std::size_t>(r * cols + c)]; }
  const Pixel& at(Index r, Index c) const { return pixels[static_cast<std::size_t>(r * cols + c)]; }
};

/// A decoded grayscale file with its native integer range.
struct RawImage {
  Image pixels;  // raw integer values stored as float
  int bit_depth = 8;
};

/// Reads an 8/16-bit PNG (color is converted to gray) or a binary/ASCII PGM.
RawImage read_grayscale(const std::filesystem::path& path);

/// Reads a mask file; a pixel is foreground when above half the range.
Mask read_mask(const std::filesystem::path& path);

/// Writes a [0,1] image as 8- or 16-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const Image& unit_image, int bit_depth = 8);
/// Writes a mask as an 8-bit PNG with {0, 255}.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
void write_png(const std::filesystem::path& path, const RgbImage& image);
/// Writes a binary PGM (P5) with the given maxval (<= 65535).
void write_pgm(const std::filesystem::path& path, const Image& raw, int maxval);

}  // namespace dfseg
