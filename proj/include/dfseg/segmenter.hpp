#pragma once

#include "dfseg/datakit.hpp"
#include "dfseg/image.hpp"
#include "dfseg/nn/checkpoint.hpp"
#include "dfseg/nn/parameters.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

namespace dfseg::segmenter {

using nn::Index;

/// DenseNet-BC style encoder: each block stacks `blocks[i]` layers of
/// BN-ReLU-1x1(bottleneck_width*growth)-BN-ReLU-3x3(growth), concatenating
/// every layer's output onto its input.
struct EncoderLayout {
  std::vector<int> blocks{2, 2, 2, 2};
  int growth_rate = 12;
  int stem_channels = 16;
  int bottleneck_width = 4;
  double compression = 0.5;
};

struct UNetConfig {
  EncoderLayout encoder;
  std::optional<std::filesystem::path> pretrained_encoder;
  bool freeze_encoder = false;
  std::vector<int> decoder_channels{256, 128, 64, 32};
  Index input_size = 256;
  double out_threshold = 0.5;
  std::uint64_t seed = 0;

  /// Small profile that trains on a CPU.
  static UNetConfig desk();
  /// Block layout of DenseNet-169: [6, 12, 32, 32], growth 32, 64-channel stem.
  static UNetConfig densenet169();

  int stages() const { return static_cast<int>(encoder.blocks.size()); }
  /// Throws ValidationError.
  void validate() const;
};

struct TrainConfig {
  int epochs = 25;
  int batch = 32;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  double dice_epsilon = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// U-Net whose contracting path is a densely connected encoder. Skip
/// connections concatenate encoder features into the decoder at every
/// resolution; the head is a 1x1 convolution followed by a sigmoid.
template <typename Scalar>
class DenseUNet {
 public:
  DenseUNet() = default;
  DenseUNet(const UNetConfig& config, std::mt19937_64& rng);

  /// (N,1,H,W) -> (N,1,H,W) probabilities. Training mode uses batch
  /// statistics and updates the running ones.
  nn::Var<Scalar> forward(const nn::Var<Scalar>& x, bool training);
  /// Inference-mode forward; never touches the running statistics.
  nn::Var<Scalar> infer(const nn::Var<Scalar>& x) const;

  /// Encoder outputs from full resolution down to the bottleneck.
  std::vector<nn::Var<Scalar>> encoder_features(const nn::Var<Scalar>& x, bool training);

  nn::ParameterStore<Scalar>& parameters() { return store_; }
  const nn::ParameterStore<Scalar>& parameters() const { return store_; }

 private:
  struct DenseLayer {
    nn::BatchNorm2d norm1, norm2;
    nn::Conv2d conv1, conv2;
  };
  struct Transition {
    nn::BatchNorm2d norm;
    nn::Conv2d conv;
  };
  struct DecoderStage {
    nn::ConvTranspose2d up;
    nn::Conv2d conv1, conv2;
    nn::BatchNorm2d norm1, norm2;
  };

  nn::ParameterStore<Scalar> store_;
  nn::Conv2d stem_;
  nn::BatchNorm2d stem_norm_;
  std::vector<std::vector<DenseLayer>> blocks_;
  std::vector<Transition> transitions_;
  nn::BatchNorm2d final_norm_;
  std::vector<DecoderStage> decoder_;
  nn::Conv2d head_;
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dsc = 0.0;
};

struct SegModelBundle {
  DenseUNet<float> net;
  UNetConfig config;
  std::vector<EpochRecord> history;
  // Parameters of the epoch with the highest validation DSC.
  std::optional<nn::NamedTensors<float>> best_state;
  int best_epoch = 0;
  double best_val_dsc = 0.0;
};

/// Randomly initialized (seeded by config.seed), optionally with encoder
/// parameters from a checkpoint. A 3-channel pretrained stem is folded to a
/// single input channel by averaging.
SegModelBundle build_unet(const UNetConfig& config);

/// Soft Dice loss on plain arrays and its closed-form gradient.
double dice_loss(const Image& pred, const Mask& target, double epsilon = 1.0);
ImageT<double> dice_loss_gradient(const ImageT<double>& pred, const Mask& target,
                                  double epsilon = 1.0);

/// Sigmoid output for one [0,1] slice of size config.input_size.
Image predict_probabilities(const SegModelBundle& bundle, const Image& image);
/// probability >= threshold.
Mask predict_mask(const SegModelBundle& bundle, const Image& image, double threshold);

struct SegTraining {
  SegModelBundle bundle;
  std::vector<EpochRecord> history;
};

/// Adam on the soft Dice loss. Samples without a mask train against an
/// all-zero mask.
SegTraining train_segmenter(SegModelBundle bundle, const std::vector<datakit::SliceData>& train_set,
                            const std::vector<datakit::SliceData>& val_set, const TrainConfig& tc);

/// Writes `<stem>.params/.json` and, when available, `<stem>_best.params/.json`.
std::filesystem::path save_segmenter(const SegModelBundle& bundle, const std::filesystem::path& stem,
                                     std::uint64_t seed);
SegModelBundle load_segmenter(const std::filesystem::path& path);

/// Columns: epoch,train_loss,val_loss,val_dsc
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace dfseg::segmenter
