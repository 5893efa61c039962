#pragma once

#include "dfseg/image.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dfseg::datakit {

enum class Domain { MR, CT, FAKE };
enum class Split { train, val };

std::string to_string(Domain d);
std::string to_string(Split s);
Domain parse_domain(const std::string& s);
Split parse_split(const std::string& s);

struct Fidelity {
  double mse = 0.0;
  double ssim = 0.0;
};

/// Reference to one slice on disk. Paths are absolute once loaded.
struct SliceSample {
  std::string id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  Domain domain = Domain::MR;
  std::string source;
  std::optional<Split> split;
  // Provenance of translated samples: source id and direction. Their masks
  // are inherited from the source slice.
  std::optional<std::string> derived_from;
  std::optional<Fidelity> fidelity;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::vector<SliceSample> samples;

  /// Per-source sample tally.
  std::map<std::string, std::size_t> counts() const;
  std::vector<const SliceSample*> with_split(Split s) const;
  std::vector<const SliceSample*> with_domain(Domain d) const;
};

/// Parses and validates a manifest; every referenced file must exist.
/// Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Writes paths relative to the manifest's directory.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Throws ValidationError on duplicate ids.
void validate_unique_ids(const DatasetManifest& manifest);

// ---------------------------------------------------------------- preprocess

/// Pixels of one slice after preprocessing.
struct SliceData {
  std::string id;
  Image image;  // [0,1]
  Mask mask;    // empty (0x0) when the sample has no mask file
  Domain domain = Domain::MR;

  bool has_mask() const { return mask.size() > 0; }
};

/// Bilinear resize with half-pixel centers.
Image resize_bilinear(const Image& src, Index rows, Index cols);
/// Nearest-neighbour resize; output is binary.
Mask resize_nearest(const Mask& src, Index rows, Index cols);
/// (x - min) / (max - min); a constant image maps to zeros.
Image normalize_min_max(const Image& src);

struct PreprocessOptions {
  Index size = 256;
  bool resize = true;
};

/// Resize (bilinear) then per-slice min-max normalization.
Image preprocess_slice(const Image& raw, const PreprocessOptions& options = {});
Mask preprocess_mask(const Mask& raw, const PreprocessOptions& options = {});

/// Loads one sample's pixels and preprocesses them.
SliceData load_slice(const SliceSample& sample, const PreprocessOptions& options = {});
std::vector<SliceData> load_slices(const std::vector<const SliceSample*>& samples,
                                   const PreprocessOptions& options = {});

// ---------------------------------------------------------------- split / merge

/// Labels floor(ratio * N) samples train and the rest val after a seeded
/// uniform shuffle.
DatasetManifest split_dataset(const DatasetManifest& manifest, double ratio, std::uint64_t seed);

/// Appends `fake` to `real`; fakes are tagged FAKE and assigned to train.
DatasetManifest merge_with_deepfakes(const DatasetManifest& real, const DatasetManifest& fake);

// ---------------------------------------------------------------- phantoms

/// Piecewise-linear monotone intensity map on [0,1].
struct TransferCurve {
  std::vector<std::pair<double, double>> knots{{0.0, 0.0}, {1.0, 1.0}};

  double operator()(double v) const;
  bool is_monotone() const;
};

struct PhantomParams {
  Index canvas_size = 256;
  std::array<int, 2> lesion_count_range{1, 3};
  std::array<double, 2> lesion_axes_range{6.0, 28.0};  // semi-axes, pixels
  double lesion_intensity = 0.35;
  double background_texture_scale = 0.08;
  double noise_sigma = 0.02;
  double healthy_fraction = 0.1;
  double texture_ratio_b = 0.5;  // modality B texture amplitude relative to A
  TransferCurve curve_a;
  TransferCurve curve_b{{{0.0, 0.0}, {0.35, 0.6}, {0.7, 0.75}, {1.0, 1.0}}};

  /// Throws ValidationError.
  void validate() const;
};

struct PhantomScene {
  std::string id;
  Image modality_a;
  Image modality_b;
  Mask mask;  // exact union of the painted lesion ellipses
  int lesion_count = 0;
};

struct PhantomDataset {
  PhantomParams params;
  std::uint64_t seed = 0;
  std::vector<PhantomScene> scenes;
};

PhantomDataset generate_phantom_dataset(Index n, const PhantomParams& params, std::uint64_t seed);

/// Writes `<dir>/images/<id>_{MR,CT}.png`, `<dir>/masks/<id>.png` and
/// `<dir>/manifest.json` (modality A tagged MR, modality B tagged CT).
DatasetManifest write_phantom_dataset(const PhantomDataset& dataset,
                                      const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const TransferCurve& c);
void from_json(const nlohmann::json& j, TransferCurve& c);
void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);

}  // namespace dfseg::datakit
