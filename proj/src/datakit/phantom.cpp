#include "dfseg/datakit.hpp"

#include "dfseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace dfseg::datakit {

namespace fs = std::filesystem;

double TransferCurve::operator()(double v) const {
  if (v <= knots.front().first) return knots.front().second;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const auto [x0, y0] = knots[i - 1];
    const auto [x1, y1] = knots[i];
    if (v <= x1) {
      const double t = x1 > x0 ? (v - x0) / (x1 - x0) : 1.0;
      return y0 + t * (y1 - y0);
    }
  }
  return knots.back().second;
}

bool TransferCurve::is_monotone() const {
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (knots[i].first < knots[i - 1].first || knots[i].second < knots[i - 1].second) return false;
  }
  return true;
}

void PhantomParams::validate() const {
  if (canvas_size < 8) throw ValidationError("phantom.canvas_size must be at least 8");
  if (lesion_count_range[0] < 1 || lesion_count_range[1] < lesion_count_range[0]) {
    throw ValidationError("phantom.lesion_count_range must be a non-empty range with min >= 1");
  }
  if (!(lesion_axes_range[0] > 0.0) || lesion_axes_range[1] < lesion_axes_range[0]) {
    throw ValidationError("phantom.lesion_axes_range must be a non-empty positive range");
  }
  if (!(lesion_axes_range[1] < static_cast<double>(canvas_size) / 2.0)) {
    throw ValidationError("phantom.lesion_axes_range must stay below canvas_size / 2");
  }
  if (!(healthy_fraction >= 0.0 && healthy_fraction <= 1.0)) {
    throw ValidationError("phantom.healthy_fraction must lie in [0, 1]");
  }
  if (noise_sigma < 0.0 || background_texture_scale < 0.0 || texture_ratio_b < 0.0) {
    throw ValidationError("phantom noise and texture scales must be non-negative");
  }
  for (const auto* c : {&curve_a, &curve_b}) {
    if (c->knots.size() < 2 || !c->is_monotone()) {
      throw ValidationError("phantom modality curves need >= 2 monotone knots");
    }
  }
}

namespace {

struct Ellipse {
  double cx, cy, a, b, angle;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / a;
    const double v = (-s * dx + c * dy) / b;
    return u * u + v * v <= 1.0;
  }
};

struct Wave {
  double fx, fy, phase, amp;
};

PhantomScene render_scene(Index index, const PhantomParams& p, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x9e3779b9u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double size = static_cast<double>(p.canvas_size);
  const double pi = std::numbers::pi;

  const Ellipse head{size / 2 + uniform(-0.03, 0.03) * size, size / 2 + uniform(-0.03, 0.03) * size,
                     uniform(0.36, 0.42) * size, uniform(0.40, 0.46) * size,
                     uniform(-0.15, 0.15)};
  const double skull = std::max(1.0, size / 40.0);
  const Ellipse brain{head.cx, head.cy, head.a - skull, head.b - skull, head.angle};
  const Ellipse ventricle{head.cx + uniform(-0.02, 0.02) * size, head.cy,
                          uniform(0.05, 0.09) * size, uniform(0.10, 0.15) * size, head.angle};

  std::vector<Wave> waves(5);
  for (auto& w : waves) {
    w = {uniform(-4.0, 4.0) / size, uniform(-4.0, 4.0) / size, uniform(0.0, 2 * pi),
         uniform(0.5, 1.0)};
  }

  const bool healthy = unit(rng) < p.healthy_fraction;
  std::vector<Ellipse> lesions;
  if (!healthy) {
    std::uniform_int_distribution<int> count(p.lesion_count_range[0], p.lesion_count_range[1]);
    const int k = count(rng);
    const double max_axis = p.lesion_axes_range[1];
    const double room_a = std::max(0.0, brain.a - max_axis - 1.0);
    const double room_b = std::max(0.0, brain.b - max_axis - 1.0);
    for (int i = 0; i < k; ++i) {
      // Uniform point in the shrunken brain ellipse, snapped to a pixel centre
      // so the lesion always covers at least that pixel.
      const double r = std::sqrt(unit(rng)), t = uniform(0.0, 2 * pi);
      const double ox = r * room_a * std::cos(t), oy = r * room_b * std::sin(t);
      const double c = std::cos(brain.angle), s = std::sin(brain.angle);
      const double cx = std::floor(brain.cx + c * ox - s * oy) + 0.5;
      const double cy = std::floor(brain.cy + s * ox + c * oy) + 0.5;
      lesions.push_back({std::clamp(cx, 0.5, size - 0.5), std::clamp(cy, 0.5, size - 0.5),
                         uniform(p.lesion_axes_range[0], p.lesion_axes_range[1]),
                         uniform(p.lesion_axes_range[0], p.lesion_axes_range[1]),
                         uniform(0.0, pi)});
    }
  }

  PhantomScene scene;
  char id[32];
  std::snprintf(id, sizeof(id), "phantom_%05ld", static_cast<long>(index));
  scene.id = id;
  scene.lesion_count = static_cast<int>(lesions.size());
  scene.mask = Mask::Zero(p.canvas_size, p.canvas_size);
  scene.modality_a.resize(p.canvas_size, p.canvas_size);
  scene.modality_b.resize(p.canvas_size, p.canvas_size);

  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index y = 0; y < p.canvas_size; ++y) {
    for (Index x = 0; x < p.canvas_size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double base = 0.0, texture = 0.0;
      if (brain.contains(px, py)) {
        base = ventricle.contains(px, py) ? 0.25 : 0.45;
        for (const auto& w : waves) texture += w.amp * std::sin(2 * pi * (w.fx * px + w.fy * py) + w.phase);
        texture *= p.background_texture_scale / static_cast<double>(waves.size()) * 2.0;
        for (const auto& l : lesions) {
          if (l.contains(px, py)) {
            scene.mask(y, x) = 1;
            base += p.lesion_intensity;
            break;
          }
        }
      } else if (head.contains(px, py)) {
        base = 0.9;
      }
      const double na = p.noise_sigma * noise(rng);
      const double nb = p.noise_sigma * noise(rng);
      const double va = std::clamp(base + texture + na, 0.0, 1.0);
      const double vb = std::clamp(base + p.texture_ratio_b * texture + nb, 0.0, 1.0);
      scene.modality_a(y, x) = static_cast<float>(p.curve_a(va));
      scene.modality_b(y, x) = static_cast<float>(p.curve_b(vb));
    }
  }
  return scene;
}

}  // namespace

PhantomDataset generate_phantom_dataset(Index n, const PhantomParams& params, std::uint64_t seed) {
  if (n < 0) throw ValidationError("phantom count must be non-negative");
  params.validate();
  PhantomDataset ds;
  ds.params = params;
  ds.seed = seed;
  ds.scenes.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ds.scenes.push_back(render_scene(i, params, seed));
  return ds;
}

DatasetManifest write_phantom_dataset(const PhantomDataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  DatasetManifest m;
  for (const auto& scene : dataset.scenes) {
    const fs::path mask = fs::absolute(dir / "masks" / (scene.id + ".png")).lexically_normal();
    write_mask_png(mask, scene.mask);
    for (const auto& [domain, image] :
         {std::pair{Domain::MR, &scene.modality_a}, std::pair{Domain::CT, &scene.modality_b}}) {
      SliceSample s;
      s.id = scene.id + "_" + to_string(domain);
      s.image_path = fs::absolute(dir / "images" / (s.id + ".png")).lexically_normal();
      write_png(s.image_path, *image);
      s.mask_path = mask;
      s.domain = domain;
      s.source = "phantom";
      m.samples.push_back(std::move(s));
    }
  }
  save_manifest(m, dir / "manifest.json");
  return m;
}

void to_json(nlohmann::json& j, const TransferCurve& c) {
  j = nlohmann::json::array();
  for (const auto& [x, y] : c.knots) j.push_back({x, y});
}

void from_json(const nlohmann::json& j, TransferCurve& c) {
  c.knots.clear();
  for (const auto& k : j) c.knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
}

void to_json(nlohmann::json& j, const PhantomParams& p) {
  j = {{"canvas_size", p.canvas_size},
       {"lesion_count_range", p.lesion_count_range},
       {"lesion_axes_range", p.lesion_axes_range},
       {"lesion_intensity", p.lesion_intensity},
       {"background_texture_scale", p.background_texture_scale},
       {"noise_sigma", p.noise_sigma},
       {"healthy_fraction", p.healthy_fraction},
       {"texture_ratio_b", p.texture_ratio_b},
       {"curve_a", p.curve_a},
       {"curve_b", p.curve_b}};
}

void from_json(const nlohmann::json& j, PhantomParams& p) {
  PhantomParams d;
  p.canvas_size = j.value("canvas_size", d.canvas_size);
  p.lesion_count_range = j.value("lesion_count_range", d.lesion_count_range);
  p.lesion_axes_range = j.value("lesion_axes_range", d.lesion_axes_range);
  p.lesion_intensity = j.value("lesion_intensity", d.lesion_intensity);
  p.background_texture_scale = j.value("background_texture_scale", d.background_texture_scale);
  p.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  p.healthy_fraction = j.value("healthy_fraction", d.healthy_fraction);
  p.texture_ratio_b = j.value("texture_ratio_b", d.texture_ratio_b);
  p.curve_a = j.value("curve_a", d.curve_a);
  p.curve_b = j.value("curve_b", d.curve_b);
}

}  // namespace dfseg::datakit
