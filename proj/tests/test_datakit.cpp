#include "doctest.h"

#include "dfseg/datakit.hpp"
#include "dfseg/errors.hpp"
#include "support.hpp"

#include <fstream>
#include <set>

using namespace dfseg;
using namespace dfseg::datakit;
namespace fs = std::filesystem;

namespace {

DatasetManifest synthetic_manifest(std::size_t n, const std::string& source, const std::string& prefix = "s") {
  DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) {
    SliceSample s;
    s.id = prefix + std::to_string(i);
    s.image_path = "/nonexistent/" + s.id + ".png";
    s.source = source;
    m.samples.push_back(s);
  }
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("PNG and PGM round trips") {
  const auto dir = testing::scratch_dir("image_io");
  Image img(3, 4);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(i) / 11.0f;

  write_png(dir / "a8.png", img, 8);
  const auto r8 = read_grayscale(dir / "a8.png");
  CHECK(r8.bit_depth == 8);
  CHECK(r8.pixels.rows() == 3);
  CHECK(r8.pixels.cols() == 4);
  CHECK(r8.pixels(0, 0) == 0.0f);
  CHECK(r8.pixels(2, 3) == 255.0f);
  CHECK(r8.pixels(1, 0) == std::round(4.0f / 11.0f * 255.0f));

  write_png(dir / "a16.png", img, 16);
  const auto r16 = read_grayscale(dir / "a16.png");
  CHECK(r16.bit_depth == 16);
  CHECK(r16.pixels(2, 3) == 65535.0f);
  CHECK(r16.pixels(0, 1) == std::round(1.0f / 11.0f * 65535.0f));

  Image raw(2, 2);
  raw << 10, 20, 30, 1000;
  write_pgm(dir / "a.pgm", raw, 1000);
  const auto rp = read_grayscale(dir / "a.pgm");
  CHECK(rp.bit_depth == 16);
  CHECK((rp.pixels == raw).all());

  Mask m(2, 3);
  m << 0, 1, 0, 1, 1, 0;
  write_mask_png(dir / "m.png", m);
  CHECK((read_mask(dir / "m.png") == m).all());
  CHECK_THROWS_AS(read_grayscale(dir / "missing.png"), LoadError);
}

TEST_CASE("preprocess examples") {
  SUBCASE("2x2 min-max without resize") {
    Image raw(2, 2);
    raw << 10, 20, 30, 40;
    const Image out = preprocess_slice(raw, {0, false});
    CHECK(out(0, 0) == 0.0f);
    CHECK(out(0, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(out(1, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(out(1, 1) == 1.0f);
  }
  SUBCASE("512x512 spanning 0..255 becomes 256x256 in [0,1]") {
    Image raw(512, 512);
    for (Index y = 0; y < 512; ++y)
      for (Index x = 0; x < 512; ++x) raw(y, x) = static_cast<float>((x + y) % 256);
    const Image out = preprocess_slice(raw);
    CHECK(out.rows() == 256);
    CHECK(out.cols() == 256);
    CHECK(out.minCoeff() == 0.0f);
    CHECK(out.maxCoeff() == 1.0f);
  }
  SUBCASE("constant input maps to zeros") {
    const Image out = preprocess_slice(Image::Constant(7, 5, 42.0f));
    CHECK(out.rows() == 256);
    CHECK((out == 0.0f).all());
  }
  SUBCASE("bilinear resize keeps a linear ramp linear") {
    Image ramp(4, 4);
    for (Index y = 0; y < 4; ++y)
      for (Index x = 0; x < 4; ++x) ramp(y, x) = static_cast<float>(x);
    const Image up = resize_bilinear(ramp, 4, 8);
    // Half-pixel centres: output x maps to (x + 0.5) / 2 - 0.5, clamped.
    CHECK(up(0, 0) == doctest::Approx(0.0));
    CHECK(up(0, 1) == doctest::Approx(0.25));
    CHECK(up(0, 2) == doctest::Approx(0.75));
    CHECK(up(0, 7) == doctest::Approx(3.0));
  }
  SUBCASE("masks resize by nearest neighbour and stay binary") {
    Mask m(2, 2);
    m << 1, 0, 0, 1;
    const Mask up = preprocess_mask(m, {4, true});
    Mask expect(4, 4);
    expect << 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1;
    CHECK((up == expect).all());
  }
}

TEST_CASE("manifest load/save") {
  const auto dir = testing::scratch_dir("manifest");
  fs::create_directories(dir / "img");
  write_png(dir / "img/a.png", Image::Constant(4, 4, 0.5f));
  write_png(dir / "img/b.png", Image::Constant(4, 4, 0.25f));
  write_mask_png(dir / "img/a_mask.png", Mask::Ones(4, 4));

  SUBCASE("round trip keeps order and ids") {
    DatasetManifest m;
    SliceSample b;
    b.id = "b";
    b.image_path = dir / "img/b.png";
    b.source = "x";
    b.split = Split::val;
    SliceSample a;
    a.id = "a";
    a.image_path = dir / "img/a.png";
    a.mask_path = dir / "img/a_mask.png";
    a.source = "y";
    a.domain = Domain::CT;
    m.samples = {b, a};
    save_manifest(m, dir / "m.json");
    CHECK(slurp(dir / "m.json").find("img/b.png") != std::string::npos);
    const auto back = load_manifest(dir / "m.json");
    REQUIRE(back.samples.size() == 2);
    CHECK(back.samples[0].id == "b");
    CHECK(back.samples[1].id == "a");
    CHECK(back.samples[0].split == Split::val);
    CHECK_FALSE(back.samples[1].split.has_value());
    CHECK(back.samples[1].domain == Domain::CT);
    CHECK(back.samples[1].mask_path == fs::absolute(dir / "img/a_mask.png"));
    CHECK(back.counts() == std::map<std::string, std::size_t>{{"x", 1}, {"y", 1}});
  }
  SUBCASE("empty manifest") {
    std::ofstream(dir / "empty.json") << R"({"version": 1, "samples": []})";
    const auto m = load_manifest(dir / "empty.json");
    CHECK(m.samples.empty());
    CHECK(m.counts().empty());
  }
  SUBCASE("missing image names the path") {
    std::ofstream(dir / "bad.json")
        << R"({"version": 1, "samples": [{"id": "z", "image_path": "img/nope.png", "mask_path": null, "domain": "MR", "source": "s", "split": null}]})";
    try {
      load_manifest(dir / "bad.json");
      FAIL("expected a load error");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("nope.png") != std::string::npos);
    }
  }
  SUBCASE("schema errors carry the field path") {
    std::ofstream(dir / "bad2.json")
        << R"({"version": 1, "samples": [{"id": "a", "image_path": "img/a.png", "domain": "XR", "source": "s"}]})";
    try {
      load_manifest(dir / "bad2.json");
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("samples[0]") != std::string::npos);
    }
  }
  SUBCASE("duplicate ids") {
    std::ofstream(dir / "dup.json")
        << R"({"version": 1, "samples": [{"id": "a", "image_path": "img/a.png", "domain": "MR", "source": "s"},
                                         {"id": "a", "image_path": "img/b.png", "domain": "MR", "source": "s"}]})";
    CHECK_THROWS_AS(load_manifest(dir / "dup.json"), ValidationError);
  }
  SUBCASE("tallies must agree") {
    std::ofstream(dir / "tally.json")
        << R"({"version": 1, "counts": {"s": 2}, "samples": [{"id": "a", "image_path": "img/a.png", "domain": "MR", "source": "s"}]})";
    CHECK_THROWS_AS(load_manifest(dir / "tally.json"), ValidationError);
  }
  CHECK_THROWS_AS(load_manifest(dir / "absent.json"), LoadError);
}

TEST_CASE("split counts") {
  const auto big = split_dataset(synthetic_manifest(5290, "real"), 0.8, 11);
  CHECK(big.with_split(Split::train).size() == 4232);
  CHECK(big.with_split(Split::val).size() == 1058);
  const auto small = split_dataset(synthetic_manifest(10, "real"), 0.8, 3);
  CHECK(small.with_split(Split::train).size() == 8);
  CHECK(small.with_split(Split::val).size() == 2);
  CHECK_THROWS_AS(split_dataset(DatasetManifest{}, 0.8, 0), ValidationError);
  CHECK_THROWS_AS(split_dataset(synthetic_manifest(3, "r"), 1.0, 0), ValidationError);
}

TEST_CASE("split property: partition, floor count, determinism") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const double ratio = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const std::uint64_t seed = rng();
    const auto m = synthetic_manifest(n, "r");
    const auto a = split_dataset(m, ratio, seed);
    const auto b = split_dataset(m, ratio, seed);
    const auto train = a.with_split(Split::train);
    const auto val = a.with_split(Split::val);
    CHECK(train.size() + val.size() == n);
    CHECK(train.size() == static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9)));
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(a.samples[i].id == m.samples[i].id);
      CHECK(a.samples[i].split == b.samples[i].split);
    }
  }
}

TEST_CASE("merge with deepfakes") {
  const auto real = split_dataset(synthetic_manifest(5290, "real"), 0.8, 1);
  const auto fakes = synthetic_manifest(174, "deepfake", "FAKE_");
  const auto merged = merge_with_deepfakes(real, fakes);
  CHECK(merged.samples.size() == 5464);
  for (std::size_t i = 0; i < real.samples.size(); ++i) CHECK(merged.samples[i].id == real.samples[i].id);
  for (const auto* s : merged.with_split(Split::val)) CHECK(s->domain != Domain::FAKE);
  CHECK(merged.with_domain(Domain::FAKE).size() == 174);
  CHECK(merged.with_split(Split::train).size() == 4232 + 174);

  const auto same = merge_with_deepfakes(real, DatasetManifest{});
  REQUIRE(same.samples.size() == real.samples.size());
  CHECK(same.samples.back().id == real.samples.back().id);

  CHECK_THROWS_AS(merge_with_deepfakes(real, synthetic_manifest(1, "deepfake")), ValidationError);
}

TEST_CASE("phantom generation") {
  PhantomParams p;
  p.canvas_size = 64;
  p.lesion_axes_range = {3.0, 9.0};

  SUBCASE("deterministic and sized") {
    const auto a = generate_phantom_dataset(100, p, 5);
    const auto b = generate_phantom_dataset(100, p, 5);
    REQUIRE(a.scenes.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) {
      CHECK((a.scenes[i].modality_a == b.scenes[i].modality_a).all());
      CHECK((a.scenes[i].modality_b == b.scenes[i].modality_b).all());
      CHECK((a.scenes[i].mask == b.scenes[i].mask).all());
    }
    const auto c = generate_phantom_dataset(3, p, 6);
    CHECK_FALSE((c.scenes[0].modality_a == a.scenes[0].modality_a).all());
  }
  SUBCASE("healthy fraction bounds") {
    p.healthy_fraction = 1.0;
    for (const auto& s : generate_phantom_dataset(30, p, 1).scenes) CHECK(s.mask.count() == 0);
    p.healthy_fraction = 0.0;
    for (const auto& s : generate_phantom_dataset(30, p, 1).scenes) {
      CHECK(s.mask.count() > 0);
      CHECK(s.lesion_count >= p.lesion_count_range[0]);
      CHECK(s.lesion_count <= p.lesion_count_range[1]);
    }
  }
  SUBCASE("mask is exactly where lesion intensity was painted") {
    // Same seed with zero lesion contrast renders the identical scene
    // without lesions, so the difference image marks the painted pixels.
    p.noise_sigma = 0.0;
    p.healthy_fraction = 0.0;
    PhantomParams flat = p;
    flat.lesion_intensity = 0.0;
    const auto with = generate_phantom_dataset(20, p, 8);
    const auto without = generate_phantom_dataset(20, flat, 8);
    for (std::size_t i = 0; i < 20; ++i) {
      const Mask painted = ((with.scenes[i].modality_a - without.scenes[i].modality_a).abs() > 1e-6f)
                               .cast<std::uint8_t>();
      CHECK((painted == with.scenes[i].mask).all());
      CHECK((without.scenes[i].mask == with.scenes[i].mask).all());
    }
  }
  SUBCASE("values in [0,1] and the two modalities differ") {
    for (const auto& s : generate_phantom_dataset(10, p, 2).scenes) {
      CHECK(s.modality_a.minCoeff() >= 0.0f);
      CHECK(s.modality_a.maxCoeff() <= 1.0f);
      CHECK(s.modality_b.minCoeff() >= 0.0f);
      CHECK(s.modality_b.maxCoeff() <= 1.0f);
      CHECK((s.modality_a - s.modality_b).abs().maxCoeff() > 0.05f);
    }
  }
  SUBCASE("invalid parameters") {
    PhantomParams bad = p;
    bad.lesion_count_range = {3, 1};
    CHECK_THROWS_AS(generate_phantom_dataset(1, bad, 0), ValidationError);
    bad = p;
    bad.lesion_axes_range = {3.0, 40.0};
    CHECK_THROWS_AS(generate_phantom_dataset(1, bad, 0), ValidationError);
    bad = p;
    bad.curve_b.knots = {{0.0, 0.5}, {1.0, 0.2}};
    CHECK_THROWS_AS(generate_phantom_dataset(1, bad, 0), ValidationError);
  }
  SUBCASE("written dataset loads back") {
    const auto dir = testing::scratch_dir("phantom_write");
    const auto written = write_phantom_dataset(generate_phantom_dataset(4, p, 3), dir);
    const auto m = load_manifest(dir / "manifest.json");
    CHECK(m.samples.size() == 8);
    CHECK(m.with_domain(Domain::MR).size() == 4);
    CHECK(m.with_domain(Domain::CT).size() == 4);
    const auto slice = load_slice(m.samples[0], {64, true});
    CHECK(slice.has_mask());
    CHECK(slice.image.rows() == 64);
  }
}

TEST_CASE("transfer curves interpolate between knots") {
  const TransferCurve c{{{0.0, 0.0}, {0.5, 0.8}, {1.0, 1.0}}};
  CHECK(c(0.25) == doctest::Approx(0.4));
  CHECK(c(0.75) == doctest::Approx(0.9));
  CHECK(c.is_monotone());
  nlohmann::json j = c;
  CHECK(j.get<TransferCurve>().knots == c.knots);
}
