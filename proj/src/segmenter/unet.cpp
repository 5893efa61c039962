#include "dfseg/segmenter.hpp"

#include "dfseg/errors.hpp"

#include <cmath>

namespace dfseg::segmenter {

using nn::ConvSpec;
using nn::Init;
using nn::Var;

UNetConfig UNetConfig::desk() { return UNetConfig{}; }

UNetConfig UNetConfig::densenet169() {
  UNetConfig c;
  c.encoder.blocks = {6, 12, 32, 32};
  c.encoder.growth_rate = 32;
  c.encoder.stem_channels = 64;
  return c;
}

void UNetConfig::validate() const {
  if (encoder.blocks.empty()) throw ValidationError("unet.encoder.blocks must not be empty");
  for (int b : encoder.blocks) {
    if (b < 1) throw ValidationError("unet.encoder.blocks entries must be >= 1");
  }
  if (encoder.growth_rate < 1 || encoder.stem_channels < 1 || encoder.bottleneck_width < 1 ||
      !(encoder.compression > 0.0 && encoder.compression <= 1.0)) {
    throw ValidationError("unet.encoder: growth, stem, bottleneck must be positive, compression in (0,1]");
  }
  if (decoder_channels.size() != encoder.blocks.size()) {
    throw ValidationError("unet.decoder_channels must have one entry per encoder stage (" +
                          std::to_string(encoder.blocks.size()) + ")");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw ValidationError("unet.decoder_channels entries must be >= 1");
  }
  const Index stride = Index(1) << stages();
  if (input_size < stride || input_size % stride != 0) {
    throw ValidationError("unet.input_size must be a multiple of 2^" + std::to_string(stages()));
  }
  if (!(out_threshold >= 0.0)) throw ValidationError("unet.out_threshold must be >= 0");
}

void TrainConfig::validate() const {
  if (epochs < 0 || batch < 1 || !(lr > 0.0) || !(dice_epsilon > 0.0)) {
    throw ValidationError("train: batch, lr and dice_epsilon must be positive, epochs non-negative");
  }
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"encoder",
        {{"blocks", c.encoder.blocks},
         {"growth_rate", c.encoder.growth_rate},
         {"stem_channels", c.encoder.stem_channels},
         {"bottleneck_width", c.encoder.bottleneck_width},
         {"compression", c.encoder.compression}}},
       {"pretrained_encoder",
        c.pretrained_encoder ? nlohmann::json(c.pretrained_encoder->string()) : nlohmann::json(nullptr)},
       {"freeze_encoder", c.freeze_encoder},
       {"decoder_channels", c.decoder_channels},
       {"input_size", c.input_size},
       {"out_threshold", c.out_threshold},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
  UNetConfig d;
  if (j.value("profile", std::string("desk")) == "densenet169") d = UNetConfig::densenet169();
  c = d;
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    c.encoder.blocks = e.value("blocks", d.encoder.blocks);
    c.encoder.growth_rate = e.value("growth_rate", d.encoder.growth_rate);
    c.encoder.stem_channels = e.value("stem_channels", d.encoder.stem_channels);
    c.encoder.bottleneck_width = e.value("bottleneck_width", d.encoder.bottleneck_width);
    c.encoder.compression = e.value("compression", d.encoder.compression);
  }
  if (j.contains("pretrained_encoder") && j["pretrained_encoder"].is_string()) {
    c.pretrained_encoder = j["pretrained_encoder"].get<std::string>();
  }
  c.freeze_encoder = j.value("freeze_encoder", d.freeze_encoder);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.input_size = j.value("input_size", d.input_size);
  c.out_threshold = j.value("out_threshold", d.out_threshold);
  c.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch", c.batch},   {"lr", c.lr},
       {"seed", c.seed},     {"dice_epsilon", c.dice_epsilon}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch = j.value("batch", d.batch);
  c.lr = j.value("lr", d.lr);
  c.seed = j.value("seed", d.seed);
  c.dice_epsilon = j.value("dice_epsilon", d.dice_epsilon);
}

template <typename Scalar>
DenseUNet<Scalar>::DenseUNet(const UNetConfig& config, std::mt19937_64& rng) {
  config.validate();
  const auto& enc = config.encoder;
  const Init he = Init::kaiming_normal;
  Index ch = enc.stem_channels;
  stem_ = nn::Conv2d::make(store_, "encoder.stem.conv", 1, ch, 3, ConvSpec{1, 1}, he, rng, false);
  stem_norm_ = nn::BatchNorm2d::make(store_, "encoder.stem.norm", ch);

  std::vector<Index> skip_channels{ch};
  for (std::size_t i = 0; i < enc.blocks.size(); ++i) {
    const std::string block = "encoder.block" + std::to_string(i);
    std::vector<DenseLayer> layers;
    for (int l = 0; l < enc.blocks[i]; ++l) {
      const std::string name = block + ".layer" + std::to_string(l);
      const Index inner = Index(enc.bottleneck_width) * enc.growth_rate;
      DenseLayer layer;
      layer.norm1 = nn::BatchNorm2d::make(store_, name + ".norm1", ch);
      layer.conv1 = nn::Conv2d::make(store_, name + ".conv1", ch, inner, 1, ConvSpec{}, he, rng, false);
      layer.norm2 = nn::BatchNorm2d::make(store_, name + ".norm2", inner);
      layer.conv2 = nn::Conv2d::make(store_, name + ".conv2", inner, enc.growth_rate, 3,
                                     ConvSpec{1, 1}, he, rng, false);
      layers.push_back(layer);
      ch += enc.growth_rate;
    }
    blocks_.push_back(std::move(layers));
    if (i + 1 < enc.blocks.size()) {
      const std::string name = "encoder.transition" + std::to_string(i);
      const Index out = std::max<Index>(1, static_cast<Index>(std::floor(ch * enc.compression)));
      Transition t;
      t.norm = nn::BatchNorm2d::make(store_, name + ".norm", ch);
      t.conv = nn::Conv2d::make(store_, name + ".conv", ch, out, 1, ConvSpec{}, he, rng, false);
      transitions_.push_back(t);
      ch = out;
      skip_channels.push_back(ch);
    }
  }
  final_norm_ = nn::BatchNorm2d::make(store_, "encoder.final_norm", ch);

  for (std::size_t j = 0; j < config.decoder_channels.size(); ++j) {
    const std::string name = "decoder.stage" + std::to_string(j);
    const Index out = config.decoder_channels[j];
    const Index skip = skip_channels[skip_channels.size() - 1 - j];
    DecoderStage s;
    s.up = nn::ConvTranspose2d::make(store_, name + ".up", ch, out, 2, ConvSpec{2, 0}, he, rng);
    s.conv1 = nn::Conv2d::make(store_, name + ".conv1", out + skip, out, 3, ConvSpec{1, 1}, he, rng, false);
    s.norm1 = nn::BatchNorm2d::make(store_, name + ".norm1", out);
    s.conv2 = nn::Conv2d::make(store_, name + ".conv2", out, out, 3, ConvSpec{1, 1}, he, rng, false);
    s.norm2 = nn::BatchNorm2d::make(store_, name + ".norm2", out);
    decoder_.push_back(s);
    ch = out;
  }
  head_ = nn::Conv2d::make(store_, "head", ch, 1, 1, ConvSpec{}, he, rng);
}

template <typename Scalar>
std::vector<Var<Scalar>> DenseUNet<Scalar>::encoder_features(const Var<Scalar>& x, bool training) {
  std::vector<Var<Scalar>> features;
  Var<Scalar> h = nn::relu(stem_norm_(store_, stem_(store_, x), training));
  features.push_back(h);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = nn::max_pool2d(h);
    for (const auto& layer : blocks_[i]) {
      Var<Scalar> y = nn::relu(layer.norm1(store_, h, training));
      y = layer.conv1(store_, y);
      y = nn::relu(layer.norm2(store_, y, training));
      y = layer.conv2(store_, y);
      h = nn::concat_channels<Scalar>({h, y});
    }
    if (i < transitions_.size()) {
      h = transitions_[i].conv(store_, nn::relu(transitions_[i].norm(store_, h, training)));
    } else {
      h = nn::relu(final_norm_(store_, h, training));
    }
    features.push_back(h);
  }
  return features;
}

template <typename Scalar>
Var<Scalar> DenseUNet<Scalar>::forward(const Var<Scalar>& x, bool training) {
  const auto features = encoder_features(x, training);
  Var<Scalar> h = features.back();
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    const auto& s = decoder_[j];
    const auto& skip = features[features.size() - 2 - j];
    h = nn::concat_channels<Scalar>({s.up(store_, h), skip});
    h = nn::relu(s.norm1(store_, s.conv1(store_, h), training));
    h = nn::relu(s.norm2(store_, s.conv2(store_, h), training));
  }
  return nn::sigmoid(head_(store_, h));
}

template <typename Scalar>
Var<Scalar> DenseUNet<Scalar>::infer(const Var<Scalar>& x) const {
  nn::NoGradGuard no_grad;
  // Inference mode only reads the running statistics.
  return const_cast<DenseUNet*>(this)->forward(x, false);
}

template class DenseUNet<float>;
template class DenseUNet<double>;

SegModelBundle build_unet(const UNetConfig& config) {
  config.validate();
  SegModelBundle b;
  b.config = config;
  std::mt19937_64 rng(config.seed);
  b.net = DenseUNet<float>(config, rng);
  if (config.pretrained_encoder) {
    const auto ck = nn::load_checkpoint<float>(*config.pretrained_encoder);
    nn::load_with_channel_folding(b.net.parameters(), ck.tensors, "encoder.", "encoder.");
  }
  if (config.freeze_encoder) {
    for (const auto& e : b.net.parameters().entries()) {
      if (e.name.starts_with("encoder.")) e.var.node()->requires_grad = false;
    }
  }
  return b;
}

}  // namespace dfseg::segmenter
