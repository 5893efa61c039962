#pragma once

#include "dfseg/image.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dfseg::evalkit {

struct Pixel {
  Index row = 0;
  Index col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

enum class Degenerate { none, both_empty, one_empty };
std::string to_string(Degenerate d);
Degenerate parse_degenerate(const std::string& s);

/// 2|A∩B| / (|A|+|B|); 1 when both masks are empty.
double dsc(const Mask& a, const Mask& b);
/// |A∩B| / |A∪B|; 1 when both masks are empty.
double jsc(const Mask& a, const Mask& b);

/// Foreground pixels with at least one 4-neighbour that is background or
/// outside the image, in row-major order.
std::vector<Pixel> surface_points(const Mask& mask);

struct SurfaceDistance {
  double px = 0.0;
  double norm = 0.0;  // px / image diagonal
  Degenerate flag = Degenerate::none;
};

// Both use Euclidean distances between pixel centres of the two surfaces.
// Both masks empty: 0 with flag both_empty. Exactly one empty: the image
// diagonal with flag one_empty.

/// Symmetric Hausdorff distance.
SurfaceDistance hausdorff(const Mask& a, const Mask& b);
/// Mean of the two directed mean nearest-surface distances.
SurfaceDistance mad(const Mask& a, const Mask& b);

double image_diagonal(Index rows, Index cols);

/// Confusion overlay: TP gray, FN green, FP red, TN the image.
RgbImage overlay(const Mask& gt, const Mask& pred, const Image& image);

inline constexpr RgbImage::Pixel kTruePositive{128, 128, 128};
inline constexpr RgbImage::Pixel kFalseNegative{0, 255, 0};
inline constexpr RgbImage::Pixel kFalsePositive{255, 0, 0};

struct MetricRecord {
  std::string sample_id;
  double dsc = 0.0;
  double jsc = 0.0;
  double mad_px = 0.0;
  double hd_px = 0.0;
  double mad_norm = 0.0;
  double hd_norm = 0.0;
  Degenerate flag = Degenerate::none;
};

/// All per-sample metrics for one (ground truth, prediction) pair.
MetricRecord evaluate_pair(const std::string& id, const Mask& gt, const Mask& pred);

struct AggregateRow {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // population form
  std::size_t n = 0;
  std::size_t excluded = 0;  // degenerate records left out of distance rows
  bool absent() const { return n == 0; }
};

/// Rows for dsc, jsc, mad_px, hd_px, mad_norm, hd_norm in that order.
/// Distance rows skip degenerate records.
std::vector<AggregateRow> aggregate(const std::vector<MetricRecord>& records);
const AggregateRow& find_row(const std::vector<AggregateRow>& rows, const std::string& metric);

/// Columns: sample_id,dsc,jsc,mad_px,hd_px,mad_norm,hd_norm,flag
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace dfseg::evalkit
