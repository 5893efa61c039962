#include "dfseg/translator.hpp"

#include "dfseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dfseg::translator {

using nn::Shape;
using nn::Tensor;
using nn::Var;

void to_json(nlohmann::json& j, const TranslatorEpoch& e) {
  j = {{"adv_G", e.adv_G}, {"adv_F", e.adv_F}, {"adv_D_A", e.adv_D_A}, {"adv_D_B", e.adv_D_B},
       {"cyc", e.cyc}};
}

namespace {

// [0,1] images -> [-1,1] NCHW batch.
Tensor<float> to_batch(const std::vector<const Image*>& images) {
  const Index h = images.front()->rows(), w = images.front()->cols();
  Tensor<float> t(Shape{static_cast<Index>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    t.data.segment(static_cast<Index>(i) * h * w, h * w) =
        Eigen::Map<const Eigen::ArrayXf>(images[i]->data(), h * w) * 2.0f - 1.0f;
  }
  return t;
}

void check_images(const std::vector<Image>& images, Index size, const char* which) {
  if (images.empty()) throw ValidationError(std::string("train_translator: domain ") + which + " is empty");
  for (const auto& im : images) {
    if (im.rows() != size || im.cols() != size) {
      throw ValidationError(std::string("train_translator: domain ") + which +
                            " image is not " + std::to_string(size) + "x" + std::to_string(size));
    }
  }
}

}  // namespace

TranslatorTraining train_translator(CycleGANBundle<float> bundle,
                                    const std::vector<Image>& domain_a,
                                    const std::vector<Image>& domain_b,
                                    const TranslatorConfig& config) {
  config.validate();
  TranslatorTraining result;
  if (config.epochs == 0) {
    result.bundle = std::move(bundle);
    return result;
  }
  const Index size = bundle.config.image_size;
  check_images(domain_a, size, "A");
  check_images(domain_b, size, "B");

  typename nn::Adam<float>::Options opt;
  opt.lr = static_cast<float>(config.lr);
  opt.beta1 = static_cast<float>(config.beta1);
  auto gen_params = bundle.G.parameters().trainable();
  for (auto& p : bundle.F.parameters().trainable()) gen_params.push_back(p);
  auto disc_params = bundle.D_A.parameters().trainable();
  for (auto& p : bundle.D_B.parameters().trainable()) disc_params.push_back(p);
  nn::Adam<float> gen_opt(gen_params, opt);
  nn::Adam<float> disc_opt(disc_params, opt);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order_a(domain_a.size()), order_b(domain_b.size());
  const auto batch = static_cast<std::size_t>(config.batch);
  const std::size_t steps = (std::max(domain_a.size(), domain_b.size()) + batch - 1) / batch;
  const auto variant = bundle.config.adversarial_variant;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order_a.begin(), order_a.end(), std::size_t{0});
    std::iota(order_b.begin(), order_b.end(), std::size_t{0});
    std::shuffle(order_a.begin(), order_a.end(), rng);
    std::shuffle(order_b.begin(), order_b.end(), rng);

    TranslatorEpoch sums;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<const Image*> ba, bb;
      for (std::size_t i = 0; i < batch; ++i) {
        ba.push_back(&domain_a[order_a[(step * batch + i) % order_a.size()]]);
        bb.push_back(&domain_b[order_b[(step * batch + i) % order_b.size()]]);
      }
      const Var<float> real_a(to_batch(ba)), real_b(to_batch(bb));

      // Generators.
      auto obj = generator_objective(bundle, real_a, real_b);
      obj.total.backward();
      gen_opt.step();

      // Discriminators, on detached fakes; gradients left over from the
      // generator pass are discarded first.
      bundle.D_A.parameters().zero_grad();
      bundle.D_B.parameters().zero_grad();
      const auto d_a = nn::add(
          adversarial_term(bundle.D_A.forward(real_a), true, variant),
          adversarial_term(bundle.D_A.forward(obj.fake_a.detach()), false, variant));
      const auto d_b = nn::add(
          adversarial_term(bundle.D_B.forward(real_b), true, variant),
          adversarial_term(bundle.D_B.forward(obj.fake_b.detach()), false, variant));
      nn::add(d_a, d_b).backward();
      disc_opt.step();
      bundle.G.parameters().zero_grad();
      bundle.F.parameters().zero_grad();

      sums.adv_G += obj.adv_G.item();
      sums.adv_F += obj.adv_F.item();
      sums.cyc += obj.cyc.item();
      sums.adv_D_A += d_a.item();
      sums.adv_D_B += d_b.item();
    }
    const double n = static_cast<double>(steps);
    TranslatorEpoch e{sums.adv_G / n, sums.adv_F / n, sums.adv_D_A / n, sums.adv_D_B / n,
                      sums.cyc / n};
    for (double v : {e.adv_G, e.adv_F, e.adv_D_A, e.adv_D_B, e.cyc}) {
      if (!std::isfinite(v)) {
        throw TrainingDiverged("translator training diverged at epoch " + std::to_string(epoch) +
                               ": non-finite loss");
      }
    }
    result.history.push_back(e);
    ++bundle.trained_epochs;
  }
  result.bundle = std::move(bundle);
  return result;
}

Image translate(const CycleGANBundle<float>& bundle, const Image& image, Direction direction) {
  const Index size = bundle.config.image_size;
  if (image.rows() != size || image.cols() != size) {
    throw ValidationError("translate: expected a " + std::to_string(size) + "x" +
                          std::to_string(size) + " image, got " + std::to_string(image.rows()) +
                          "x" + std::to_string(image.cols()));
  }
  nn::NoGradGuard no_grad;
  const Var<float> x(to_batch({&image}));
  const auto y = direction == Direction::a_to_b ? bundle.G.forward(x) : bundle.F.forward(x);
  Image out(size, size);
  Eigen::Map<Eigen::ArrayXf>(out.data(), size * size) =
      ((y.value().data + 1.0f) * 0.5f).cwiseMax(0.0f).cwiseMin(1.0f);
  return out;
}

}  // namespace dfseg::translator
