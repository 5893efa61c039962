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
#include <string>
#include <utility>
#include <vector>

namespace dfseg::translator {

using nn::Index;

enum class AdversarialVariant { least_squares, cross_entropy };
enum class LossSide { discriminator, generator };
/// A→B runs generator G, B→A runs generator F.
enum class Direction { a_to_b, b_to_a };

std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

struct TranslatorConfig {
  int base_channels = 32;
  int residual_blocks = 4;      // 9 for the full-size generator
  int downsamplings = 2;        // generator stride-2 stages
  int discriminator_depth = 3;  // stride-2 stages of the patch discriminator
  double lambda_cyc = 10.0;
  double lambda_identity = 0.0;  // identity-mapping term, off unless set
  AdversarialVariant adversarial_variant = AdversarialVariant::least_squares;
  double lr = 2e-4;
  double beta1 = 0.5;
  int epochs = 5;
  int batch = 1;
  Index image_size = 64;
  bool identity_init = false;  // zero the generator heads so G = F = identity
  std::uint64_t seed = 0;

  /// Throws ValidationError.
  void validate() const;
};

void to_json(nlohmann::json& j, const TranslatorConfig& c);
void from_json(const nlohmann::json& j, TranslatorConfig& c);

/// Residual encoder/decoder generator. Works on [-1,1] images and predicts a
/// bounded correction of its input: out = clamp(x + 2 tanh(head), -1, 1).
template <typename Scalar>
class ResnetGenerator {
 public:
  ResnetGenerator() = default;
  ResnetGenerator(const TranslatorConfig& config, std::mt19937_64& rng);

  nn::Var<Scalar> forward(const nn::Var<Scalar>& x) const;

  nn::ParameterStore<Scalar>& parameters() { return store_; }
  const nn::ParameterStore<Scalar>& parameters() const { return store_; }

 private:
  struct ResBlock {
    nn::Conv2d conv1, conv2;
    nn::InstanceNorm2d norm1, norm2;
  };
  nn::ParameterStore<Scalar> store_;
  nn::Conv2d stem_;
  nn::InstanceNorm2d stem_norm_;
  std::vector<nn::Conv2d> down_;
  std::vector<nn::InstanceNorm2d> down_norm_;
  std::vector<ResBlock> blocks_;
  std::vector<nn::ConvTranspose2d> up_;
  std::vector<nn::InstanceNorm2d> up_norm_;
  nn::Conv2d head_;
};

/// PatchGAN discriminator: one logit per receptive-field patch.
template <typename Scalar>
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(const TranslatorConfig& config, std::mt19937_64& rng);

  nn::Var<Scalar> forward(const nn::Var<Scalar>& x) const;

  nn::ParameterStore<Scalar>& parameters() { return store_; }
  const nn::ParameterStore<Scalar>& parameters() const { return store_; }

 private:
  nn::ParameterStore<Scalar> store_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::InstanceNorm2d> norms_;  // one fewer than convs_
  nn::Conv2d head_;
};

template <typename Scalar>
struct CycleGANBundle {
  ResnetGenerator<Scalar> G;  // A -> B
  ResnetGenerator<Scalar> F;  // B -> A
  PatchDiscriminator<Scalar> D_A;
  PatchDiscriminator<Scalar> D_B;
  TranslatorConfig config;
  int trained_epochs = 0;

  /// Parameters of all four networks, prefixed "G.", "F.", "D_A.", "D_B.".
  nn::NamedTensors<Scalar> state() const;
  void load_state(const nn::NamedTensors<Scalar>& state);
};

/// Random (seeded by config.seed) or pretrained parameters. A pretrained
/// checkpoint whose stem takes 3 channels is folded to 1 by averaging.
template <typename Scalar = float>
CycleGANBundle<Scalar> build_cyclegan(const TranslatorConfig& config,
                                      const std::optional<std::filesystem::path>& pretrained = {});

std::filesystem::path save_translator(const CycleGANBundle<float>& bundle,
                                      const std::filesystem::path& stem);
CycleGANBundle<float> load_translator(const std::filesystem::path& path);

// ---------------------------------------------------------------- losses

/// Least squares: discriminator mean((d_real-1)^2) + mean(d_fake^2),
/// generator mean((d_fake-1)^2). Cross entropy treats predictions as logits.
/// `d_real` is ignored on the generator side.
double adversarial_loss(const Eigen::ArrayXd& d_real, const Eigen::ArrayXd& d_fake, LossSide side,
                        AdversarialVariant variant = AdversarialVariant::least_squares);

/// mean|x_rec - x| + mean|y_rec - y|, unweighted.
double cycle_consistency_loss(const Image& x, const Image& x_rec, const Image& y,
                              const Image& y_rec);

/// Graph form of one adversarial term: predictions pushed toward "real" (1)
/// or "fake" (0).
template <typename Scalar>
nn::Var<Scalar> adversarial_term(const nn::Var<Scalar>& predictions, bool toward_real,
                                 AdversarialVariant variant);

template <typename Scalar>
struct GeneratorObjective {
  nn::Var<Scalar> adv_G;  // D_B on G(a)
  nn::Var<Scalar> adv_F;  // D_A on F(b)
  nn::Var<Scalar> cyc;    // unweighted L1 cycle term
  nn::Var<Scalar> total;  // adv_G + adv_F + lambda_cyc * cyc (+ identity term)
  nn::Var<Scalar> fake_a, fake_b;
};

/// Builds the full generator objective for a batch of real images in [-1,1].
template <typename Scalar>
GeneratorObjective<Scalar> generator_objective(const CycleGANBundle<Scalar>& bundle,
                                               const nn::Var<Scalar>& real_a,
                                               const nn::Var<Scalar>& real_b);

// ---------------------------------------------------------------- training

struct TranslatorEpoch {
  double adv_G = 0, adv_F = 0, adv_D_A = 0, adv_D_B = 0, cyc = 0;
};
void to_json(nlohmann::json& j, const TranslatorEpoch& e);

struct TranslatorTraining {
  CycleGANBundle<float> bundle;
  std::vector<TranslatorEpoch> history;
};

/// Alternating generator / discriminator Adam updates. Images must be
/// config.image_size square in [0,1]. Throws ValidationError on empty
/// domains and TrainingDiverged on a non-finite loss.
TranslatorTraining train_translator(CycleGANBundle<float> bundle,
                                    const std::vector<Image>& domain_a,
                                    const std::vector<Image>& domain_b,
                                    const TranslatorConfig& config);

/// Inference-mode translation of one [0,1] image.
Image translate(const CycleGANBundle<float>& bundle, const Image& image, Direction direction);

/// MSE and SSIM (11x11 Gaussian window, sigma 1.5, unit dynamic range).
datakit::Fidelity fidelity_metrics(const Image& real, const Image& fake);
double ssim(const Image& a, const Image& b);

struct DeepfakeOptions {
  Direction direction = Direction::b_to_a;
  std::optional<double> fidelity_floor;  // drop fakes with ssim-to-source below
  std::optional<std::size_t> max_count;
  std::string id_prefix = "FAKE_";
};

struct DeepfakeResult {
  datakit::DatasetManifest manifest;
  std::vector<std::pair<std::string, std::string>> failures;  // (sample id, reason)
  std::size_t dropped_by_floor = 0;
};

/// Translates every source sample, writes images, inherited masks, a
/// manifest and `fidelity.csv` (id,mse,ssim) under `out_dir`.
DeepfakeResult generate_deepfake_set(const CycleGANBundle<float>& bundle,
                                     const datakit::DatasetManifest& source,
                                     const std::filesystem::path& out_dir,
                                     const DeepfakeOptions& options = {});

}  // namespace dfseg::translator
