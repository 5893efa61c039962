#include "doctest.h"

#include "dfseg/errors.hpp"
#include "dfseg/translator.hpp"
#include "support.hpp"

#include <cmath>

using namespace dfseg;
using namespace dfseg::translator;
namespace fs = std::filesystem;

namespace {

TranslatorConfig tiny_config(Index size = 16) {
  TranslatorConfig c;
  c.base_channels = 4;
  c.residual_blocks = 1;
  c.downsamplings = 2;
  c.discriminator_depth = 2;
  c.image_size = size;
  c.epochs = 1;
  c.seed = 21;
  return c;
}

Image random_image(std::mt19937_64& rng, Index size) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image im(size, size);
  for (Index i = 0; i < im.size(); ++i) im.data()[i] = u(rng);
  return im;
}

}  // namespace

TEST_CASE("network shapes") {
  const auto c = tiny_config(32);
  auto b = build_cyclegan<float>(c);
  std::mt19937_64 rng(1);
  const nn::Var<float> x(nn::Tensor<float>(nn::Shape{2, 1, 32, 32}, 0.1f));
  const auto y = b.G.forward(x);
  CHECK(y.value().shape == nn::Shape{2, 1, 32, 32});
  CHECK(y.value().data.minCoeff() >= -1.0f);
  CHECK(y.value().data.maxCoeff() <= 1.0f);
  // Two stride-2 stages, then a stride-1 head.
  CHECK(b.D_A.forward(x).value().shape == nn::Shape{2, 1, 8, 8});
}

TEST_CASE("identity initialization returns the input") {
  auto c = tiny_config();
  c.identity_init = true;
  const auto b = build_cyclegan<float>(c);
  std::mt19937_64 rng(2);
  const Image im = random_image(rng, 16);
  CHECK((translate(b, im, Direction::a_to_b) - im).abs().maxCoeff() < 1e-5f);
  CHECK((translate(b, im, Direction::b_to_a) - im).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("adversarial loss examples") {
  using Eigen::ArrayXd;
  const ArrayXd ones = ArrayXd::Ones(5), zeros = ArrayXd::Zero(5), halves = ArrayXd::Constant(5, 0.5);
  CHECK(adversarial_loss(ones, zeros, LossSide::discriminator) == 0.0);
  CHECK(adversarial_loss(zeros, ones, LossSide::generator) == 0.0);
  CHECK(adversarial_loss(halves, halves, LossSide::discriminator) == doctest::Approx(0.5));
  CHECK(adversarial_loss(zeros, halves, LossSide::generator) == doctest::Approx(0.25));
  // Cross-entropy on logits: a zero logit is log 2 on either side.
  CHECK(adversarial_loss(zeros, zeros, LossSide::discriminator, AdversarialVariant::cross_entropy) ==
        doctest::Approx(2.0 * std::log(2.0)));
}

TEST_CASE("cycle loss examples and properties") {
  Image x = Image::Zero(4, 4), y = Image::Zero(4, 4);
  CHECK(cycle_consistency_loss(x, x, y, y) == 0.0);
  CHECK(cycle_consistency_loss(x, Image::Constant(4, 4, 0.5f), y, y) == doctest::Approx(0.5));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Image a = random_image(rng, 6), ar = random_image(rng, 6);
    const Image b = random_image(rng, 6), br = random_image(rng, 6);
    const double l = cycle_consistency_loss(a, ar, b, br);
    CHECK(l >= 0.0);
    // swapping the two domains changes nothing
    CHECK(cycle_consistency_loss(b, br, a, ar) == doctest::Approx(l).epsilon(1e-12));
    // scaling both residuals scales the loss
    const Image ar2 = a + 2.0f * (ar - a), br2 = b + 2.0f * (br - b);
    CHECK(cycle_consistency_loss(a, ar2, b, br2) == doctest::Approx(2.0 * l).epsilon(1e-5));
    // pixel permutation invariance: reverse every array
    auto rev = [](const Image& im) {
      Image r(im.rows(), im.cols());
      for (Index i = 0; i < im.size(); ++i) r.data()[i] = im.data()[im.size() - 1 - i];
      return r;
    };
    CHECK(cycle_consistency_loss(rev(a), rev(ar), rev(b), rev(br)) == doctest::Approx(l).epsilon(1e-6));
  }
}

TEST_CASE("generator objective gradient matches finite differences") {
  TranslatorConfig c;
  c.base_channels = 2;
  c.residual_blocks = 1;
  c.downsamplings = 1;
  c.discriminator_depth = 1;
  c.image_size = 4;
  c.seed = 5;
  auto b = build_cyclegan<double>(c);
  std::mt19937_64 rng(6);
  const nn::Var<double> a(testing::random_tensor(rng, nn::Shape{1, 1, 4, 4}, -0.8, 0.8));
  const nn::Var<double> bb(testing::random_tensor(rng, nn::Shape{1, 1, 4, 4}, -0.8, 0.8));
  auto loss = [&] { return generator_objective(b, a, bb).total; };

  for (const char* name : {"stem.weight", "head.weight", "head.bias"}) {
    auto idx = b.G.parameters().find(name);
    REQUIRE(idx);
    auto leaf = b.G.parameters()[*idx];
    CHECK(testing::gradient_error(leaf, loss) < 1e-3);
  }
  auto idx = b.F.parameters().find("stem.weight");
  REQUIRE(idx);
  auto leaf = b.F.parameters()[*idx];
  CHECK(testing::gradient_error(leaf, loss) < 1e-3);
}

TEST_CASE("translate contracts") {
  const auto b = build_cyclegan<float>(tiny_config());
  std::mt19937_64 rng(7);
  const Image im = random_image(rng, 16);
  const Image out = translate(b, im, Direction::a_to_b);
  CHECK(out.rows() == 16);
  CHECK(out.cols() == 16);
  CHECK(out.minCoeff() >= 0.0f);
  CHECK(out.maxCoeff() <= 1.0f);
  CHECK((translate(b, im, Direction::a_to_b) == out).all());
  CHECK_FALSE((translate(b, im, Direction::b_to_a) == out).all());
  CHECK_THROWS_AS(translate(b, Image::Zero(8, 8), Direction::a_to_b), ValidationError);
  CHECK(parse_direction(to_string(Direction::b_to_a)) == Direction::b_to_a);
}

TEST_CASE("checkpoints") {
  const auto dir = testing::scratch_dir("translator_ck");
  auto b = build_cyclegan<float>(tiny_config());
  b.trained_epochs = 3;
  const auto path = save_translator(b, dir / "t");
  const auto back = load_translator(path);
  CHECK(back.trained_epochs == 3);
  std::mt19937_64 rng(8);
  const Image im = random_image(rng, 16);
  CHECK((translate(back, im, Direction::a_to_b) == translate(b, im, Direction::a_to_b)).all());
  CHECK((translate(back, im, Direction::b_to_a) == translate(b, im, Direction::b_to_a)).all());

  SUBCASE("pretrained weights seed a fresh build") {
    auto other = tiny_config();
    other.seed = 99;
    const auto pre = build_cyclegan<float>(other, path);
    CHECK((translate(pre, im, Direction::a_to_b) == translate(b, im, Direction::a_to_b)).all());
  }
  SUBCASE("3-channel stems fold to one channel") {
    auto state = b.state();
    for (auto& [name, t] : state) {
      if (!name.ends_with("stem.weight")) continue;
      nn::Tensor<float> wide(nn::Shape{t.shape.n, 3, t.shape.h, t.shape.w});
      const Index k = t.shape.h * t.shape.w;
      for (Index o = 0; o < t.shape.n; ++o) {
        for (Index ch = 0; ch < 3; ++ch) {
          // channels 0..2 hold w-1, w, w+1 so the mean is w
          wide.data.segment((o * 3 + ch) * k, k) = t.data.segment(o * k, k) + static_cast<float>(ch - 1);
        }
      }
      t = wide;
    }
    nn::save_checkpoint(dir / "wide", state, nlohmann::json{{"kind", "cyclegan"}});
    const auto folded = build_cyclegan<float>(tiny_config(), dir / "wide");
    CHECK((translate(folded, im, Direction::a_to_b) - translate(b, im, Direction::a_to_b))
              .abs()
              .maxCoeff() < 1e-5f);
  }
  SUBCASE("segmenter checkpoints are rejected") {
    nn::save_checkpoint(dir / "other", b.state(), nlohmann::json{{"kind", "unet"}});
    CHECK_THROWS_AS(load_translator(dir / "other"), ValidationError);
  }
}

TEST_CASE("training") {
  auto c = tiny_config();
  std::mt19937_64 rng(9);
  std::vector<Image> a, bdom;
  for (int i = 0; i < 3; ++i) {
    a.push_back(random_image(rng, 16));
    bdom.push_back(random_image(rng, 16));
  }
  SUBCASE("zero epochs leave the weights alone") {
    c.epochs = 0;
    const auto start = build_cyclegan<float>(c);
    const auto r = train_translator(start, a, bdom, c);
    CHECK(r.history.empty());
    CHECK((translate(r.bundle, a[0], Direction::a_to_b) == translate(start, a[0], Direction::a_to_b)).all());
  }
  SUBCASE("one epoch records every loss and is seeded") {
    const auto r1 = train_translator(build_cyclegan<float>(c), a, bdom, c);
    const auto r2 = train_translator(build_cyclegan<float>(c), a, bdom, c);
    REQUIRE(r1.history.size() == 1);
    nlohmann::json j = r1.history[0];
    for (const char* key : {"adv_G", "adv_F", "adv_D_A", "adv_D_B", "cyc"}) {
      CHECK(j.contains(key));
      CHECK(std::isfinite(j[key].get<double>()));
    }
    CHECK(r1.history[0].cyc == r2.history[0].cyc);
    CHECK(r1.bundle.trained_epochs == 1);
  }
  SUBCASE("empty domain") {
    CHECK_THROWS_AS(train_translator(build_cyclegan<float>(c), {}, bdom, c), ValidationError);
  }
  SUBCASE("bad config") {
    auto bad = c;
    bad.image_size = 18;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.lambda_cyc = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    nlohmann::json j = c;
    CHECK(j.get<TranslatorConfig>().base_channels == c.base_channels);
  }
}

TEST_CASE("fidelity metrics") {
  std::mt19937_64 rng(10);
  const Image a = random_image(rng, 24) * 0.9f;
  const Image b = random_image(rng, 24);
  const auto same = fidelity_metrics(a, a);
  CHECK(same.mse == 0.0);
  CHECK(same.ssim == doctest::Approx(1.0));
  CHECK(fidelity_metrics(a, a + 0.1f).mse == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-9));
  CHECK(ssim(a, b) < 0.5);
  CHECK(ssim(a, a + 0.1f) < 1.0);
}

TEST_CASE("deepfake set") {
  const auto dir = testing::scratch_dir("deepfakes");
  datakit::PhantomParams p;
  p.canvas_size = 16;
  p.lesion_axes_range = {2.0, 4.0};
  p.healthy_fraction = 0.0;
  const auto source = datakit::write_phantom_dataset(datakit::generate_phantom_dataset(5, p, 1), dir / "src");
  auto c = tiny_config();
  c.identity_init = true;
  const auto b = build_cyclegan<float>(c);

  SUBCASE("every source becomes a fake with its mask") {
    const auto r = generate_deepfake_set(b, source, dir / "out");
    CHECK(r.failures.empty());
    REQUIRE(r.manifest.samples.size() == source.samples.size());
    for (std::size_t i = 0; i < source.samples.size(); ++i) {
      const auto& f = r.manifest.samples[i];
      CHECK(f.id == "FAKE_" + source.samples[i].id);
      CHECK(f.domain == datakit::Domain::FAKE);
      REQUIRE(f.mask_path);
      CHECK((read_mask(*f.mask_path) == read_mask(*source.samples[i].mask_path)).all());
      REQUIRE(f.fidelity);
      CHECK(f.fidelity->ssim > 0.99);
    }
    const auto back = datakit::load_manifest(dir / "out/manifest.json");
    CHECK(back.samples.size() == r.manifest.samples.size());
    CHECK(fs::exists(dir / "out/fidelity.csv"));
  }
  SUBCASE("a floor above one drops everything") {
    DeepfakeOptions o;
    o.fidelity_floor = 1.0 + 1e-9;
    const auto r = generate_deepfake_set(b, source, dir / "out_floor", o);
    CHECK(r.manifest.samples.empty());
    CHECK(r.dropped_by_floor == source.samples.size());
  }
  SUBCASE("max count") {
    DeepfakeOptions o;
    o.max_count = 3;
    CHECK(generate_deepfake_set(b, source, dir / "out_max", o).manifest.samples.size() == 3);
  }
}
