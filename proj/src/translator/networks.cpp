#include "dfseg/translator.hpp"

#include "dfseg/errors.hpp"

namespace dfseg::translator {

using nn::ConvSpec;
using nn::Init;
using nn::Var;

std::string to_string(Direction d) { return d == Direction::a_to_b ? "A->B" : "B->A"; }

Direction parse_direction(const std::string& s) {
  if (s == "A->B" || s == "a2b" || s == "AtoB") return Direction::a_to_b;
  if (s == "B->A" || s == "b2a" || s == "BtoA") return Direction::b_to_a;
  throw ValidationError("unknown direction '" + s + "' (expected A->B or B->A)");
}

void TranslatorConfig::validate() const {
  if (base_channels < 1 || residual_blocks < 0 || downsamplings < 0 || discriminator_depth < 1) {
    throw ValidationError("translator: architecture sizes must be positive");
  }
  if (!(lambda_cyc > 0.0)) throw ValidationError("translator.lambda_cyc must be > 0");
  if (lambda_identity < 0.0) throw ValidationError("translator.lambda_identity must be >= 0");
  if (!(lr > 0.0) || epochs < 0 || batch < 1) {
    throw ValidationError("translator: lr and batch must be positive, epochs non-negative");
  }
  const Index stride = Index(1) << std::max(discriminator_depth, downsamplings);
  if (image_size < 1 || image_size % stride != 0) {
    throw ValidationError("translator.image_size must be divisible by 2^" +
                          std::to_string(std::max(discriminator_depth, downsamplings)));
  }
}

void to_json(nlohmann::json& j, const TranslatorConfig& c) {
  j = {{"base_channels", c.base_channels},
       {"residual_blocks", c.residual_blocks},
       {"downsamplings", c.downsamplings},
       {"discriminator_depth", c.discriminator_depth},
       {"lambda_cyc", c.lambda_cyc},
       {"lambda_identity", c.lambda_identity},
       {"adversarial_variant", c.adversarial_variant == AdversarialVariant::least_squares
                                   ? "least_squares"
                                   : "cross_entropy"},
       {"lr", c.lr},
       {"beta1", c.beta1},
       {"epochs", c.epochs},
       {"batch", c.batch},
       {"image_size", c.image_size},
       {"identity_init", c.identity_init},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TranslatorConfig& c) {
  const TranslatorConfig d;
  c.base_channels = j.value("base_channels", d.base_channels);
  c.residual_blocks = j.value("residual_blocks", d.residual_blocks);
  c.downsamplings = j.value("downsamplings", d.downsamplings);
  c.discriminator_depth = j.value("discriminator_depth", d.discriminator_depth);
  c.lambda_cyc = j.value("lambda_cyc", d.lambda_cyc);
  c.lambda_identity = j.value("lambda_identity", d.lambda_identity);
  const std::string variant = j.value("adversarial_variant", std::string("least_squares"));
  if (variant == "least_squares") {
    c.adversarial_variant = AdversarialVariant::least_squares;
  } else if (variant == "cross_entropy") {
    c.adversarial_variant = AdversarialVariant::cross_entropy;
  } else {
    throw ValidationError("translator.adversarial_variant: unknown value '" + variant + "'");
  }
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.epochs = j.value("epochs", d.epochs);
  c.batch = j.value("batch", d.batch);
  c.image_size = j.value("image_size", d.image_size);
  c.identity_init = j.value("identity_init", d.identity_init);
  c.seed = j.value("seed", d.seed);
}

template <typename Scalar>
ResnetGenerator<Scalar>::ResnetGenerator(const TranslatorConfig& config, std::mt19937_64& rng) {
  const Index base = config.base_channels;
  stem_ = nn::Conv2d::make(store_, "stem", 1, base, 7, ConvSpec{1, 3}, Init::gan_normal, rng);
  stem_norm_ = nn::InstanceNorm2d::make(store_, "stem_norm", base);
  Index ch = base;
  for (int i = 0; i < config.downsamplings; ++i) {
    const std::string name = "down" + std::to_string(i);
    down_.push_back(nn::Conv2d::make(store_, name, ch, 2 * ch, 3, ConvSpec{2, 1}, Init::gan_normal, rng));
    down_norm_.push_back(nn::InstanceNorm2d::make(store_, name + "_norm", 2 * ch));
    ch *= 2;
  }
  for (int i = 0; i < config.residual_blocks; ++i) {
    const std::string name = "res" + std::to_string(i);
    ResBlock b;
    b.conv1 = nn::Conv2d::make(store_, name + ".conv1", ch, ch, 3, ConvSpec{1, 1}, Init::gan_normal, rng);
    b.norm1 = nn::InstanceNorm2d::make(store_, name + ".norm1", ch);
    b.conv2 = nn::Conv2d::make(store_, name + ".conv2", ch, ch, 3, ConvSpec{1, 1}, Init::gan_normal, rng);
    b.norm2 = nn::InstanceNorm2d::make(store_, name + ".norm2", ch);
    blocks_.push_back(b);
  }
  for (int i = 0; i < config.downsamplings; ++i) {
    const std::string name = "up" + std::to_string(i);
    up_.push_back(nn::ConvTranspose2d::make(store_, name, ch, ch / 2, 4, ConvSpec{2, 1}, Init::gan_normal, rng));
    up_norm_.push_back(nn::InstanceNorm2d::make(store_, name + "_norm", ch / 2));
    ch /= 2;
  }
  head_ = nn::Conv2d::make(store_, "head", ch, 1, 7, ConvSpec{1, 3},
                           config.identity_init ? Init::zeros : Init::gan_normal, rng);
}

template <typename Scalar>
Var<Scalar> ResnetGenerator<Scalar>::forward(const Var<Scalar>& x) const {
  Var<Scalar> h = nn::relu(stem_norm_(store_, stem_(store_, x)));
  for (std::size_t i = 0; i < down_.size(); ++i) {
    h = nn::relu(down_norm_[i](store_, down_[i](store_, h)));
  }
  for (const auto& b : blocks_) {
    Var<Scalar> r = nn::relu(b.norm1(store_, b.conv1(store_, h)));
    r = b.norm2(store_, b.conv2(store_, r));
    h = nn::add(h, r);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    h = nn::relu(up_norm_[i](store_, up_[i](store_, h)));
  }
  const Var<Scalar> correction = nn::scale(nn::tanh(head_(store_, h)), Scalar(2));
  return nn::clamp(nn::add(x, correction), Scalar(-1), Scalar(1));
}

template <typename Scalar>
PatchDiscriminator<Scalar>::PatchDiscriminator(const TranslatorConfig& config, std::mt19937_64& rng) {
  Index ch = 1;
  Index out = config.base_channels;
  for (int i = 0; i < config.discriminator_depth; ++i) {
    const std::string name = "conv" + std::to_string(i);
    convs_.push_back(nn::Conv2d::make(store_, name, ch, out, 4, ConvSpec{2, 1}, Init::gan_normal, rng));
    if (i > 0) norms_.push_back(nn::InstanceNorm2d::make(store_, name + "_norm", out));
    ch = out;
    out *= 2;
  }
  head_ = nn::Conv2d::make(store_, "head", ch, 1, 3, ConvSpec{1, 1}, Init::gan_normal, rng);
}

template <typename Scalar>
Var<Scalar> PatchDiscriminator<Scalar>::forward(const Var<Scalar>& x) const {
  const Scalar slope(0.2);
  Var<Scalar> h = nn::leaky_relu(convs_.front()(store_, x), slope);
  for (std::size_t i = 1; i < convs_.size(); ++i) {
    h = nn::leaky_relu(norms_[i - 1](store_, convs_[i](store_, h)), slope);
  }
  return head_(store_, h);
}

namespace {

const char* const kNetworkNames[] = {"G.", "F.", "D_A.", "D_B."};

template <typename Scalar>
std::array<nn::ParameterStore<Scalar>*, 4> stores(CycleGANBundle<Scalar>& b) {
  return {&b.G.parameters(), &b.F.parameters(), &b.D_A.parameters(), &b.D_B.parameters()};
}

template <typename Scalar>
nn::NamedTensors<Scalar> strip_prefix(const nn::NamedTensors<Scalar>& all, const std::string& prefix) {
  nn::NamedTensors<Scalar> out;
  for (const auto& [name, t] : all) {
    if (name.starts_with(prefix)) out.emplace_back(name.substr(prefix.size()), t);
  }
  return out;
}

}  // namespace

template <typename Scalar>
nn::NamedTensors<Scalar> CycleGANBundle<Scalar>::state() const {
  nn::NamedTensors<Scalar> out;
  const nn::ParameterStore<Scalar>* s[] = {&G.parameters(), &F.parameters(), &D_A.parameters(),
                                           &D_B.parameters()};
  for (int i = 0; i < 4; ++i) {
    for (auto& [name, t] : s[i]->state()) out.emplace_back(kNetworkNames[i] + name, std::move(t));
  }
  return out;
}

template <typename Scalar>
void CycleGANBundle<Scalar>::load_state(const nn::NamedTensors<Scalar>& state) {
  auto s = stores(*this);
  for (int i = 0; i < 4; ++i) {
    try {
      s[i]->load_state(strip_prefix(state, kNetworkNames[i]));
    } catch (const CheckpointIncompatible& e) {
      throw CheckpointIncompatible(std::string(kNetworkNames[i]) + " " + e.what());
    }
  }
}

template <typename Scalar>
CycleGANBundle<Scalar> build_cyclegan(const TranslatorConfig& config,
                                      const std::optional<std::filesystem::path>& pretrained) {
  config.validate();
  CycleGANBundle<Scalar> b;
  b.config = config;
  std::mt19937_64 rng(config.seed);
  b.G = ResnetGenerator<Scalar>(config, rng);
  b.F = ResnetGenerator<Scalar>(config, rng);
  b.D_A = PatchDiscriminator<Scalar>(config, rng);
  b.D_B = PatchDiscriminator<Scalar>(config, rng);
  if (pretrained) {
    const auto ck = nn::load_checkpoint<Scalar>(*pretrained);
    auto s = stores(b);
    for (int i = 0; i < 4; ++i) nn::load_with_channel_folding(*s[i], ck.tensors, "", kNetworkNames[i]);
  }
  return b;
}

std::filesystem::path save_translator(const CycleGANBundle<float>& bundle,
                                      const std::filesystem::path& stem) {
  nlohmann::json sidecar = {{"kind", "cyclegan"},
                            {"config", bundle.config},
                            {"seed", bundle.config.seed},
                            {"trained_epochs", bundle.trained_epochs}};
  return nn::save_checkpoint(stem, bundle.state(), sidecar);
}

CycleGANBundle<float> load_translator(const std::filesystem::path& path) {
  const auto ck = nn::load_checkpoint<float>(path);
  if (ck.sidecar.value("kind", "") != "cyclegan") {
    throw ValidationError("checkpoint " + path.string() + " is not a translator checkpoint");
  }
  const TranslatorConfig config = ck.sidecar.at("config").get<TranslatorConfig>();
  auto bundle = build_cyclegan<float>(config);
  bundle.load_state(ck.tensors);
  bundle.trained_epochs = ck.sidecar.value("trained_epochs", 0);
  return bundle;
}

template class ResnetGenerator<float>;
template class ResnetGenerator<double>;
template class PatchDiscriminator<float>;
template class PatchDiscriminator<double>;
template struct CycleGANBundle<float>;
template struct CycleGANBundle<double>;
template CycleGANBundle<float> build_cyclegan(const TranslatorConfig&,
                                              const std::optional<std::filesystem::path>&);
template CycleGANBundle<double> build_cyclegan(const TranslatorConfig&,
                                               const std::optional<std::filesystem::path>&);

}  // namespace dfseg::translator
