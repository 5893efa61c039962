#include "dfseg/harness.hpp"

#include "dfseg/errors.hpp"

#include <fstream>
#include <set>

namespace dfseg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kKeys{"real_manifest", "fake_manifest",  "phantom",    "translation_source",
                                  "translator",    "translator_checkpoint", "unet", "train",
                                  "split",         "fidelity_floor", "max_fakes",  "overlays",
                                  "output_dir"};

json optional_path(const std::optional<fs::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

std::optional<fs::path> read_path(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw ValidationError(std::string("config.") + key + " must be a string");
  return fs::path(j[key].get<std::string>());
}

void require_exists(const std::optional<fs::path>& p, const char* field) {
  if (p && !fs::exists(*p)) {
    throw ValidationError(std::string("config.") + field + ": " + p->string() + " does not exist");
  }
}

}  // namespace

void to_json(json& j, const ExperimentConfig& c) {
  j = json::object();
  j["real_manifest"] = optional_path(c.real_manifest);
  j["fake_manifest"] = optional_path(c.fake_manifest);
  if (c.phantom) {
    j["phantom"] = {{"n_real", c.phantom->n_real},
                    {"n_translate", c.phantom->n_translate},
                    {"params", c.phantom->params},
                    {"seed", c.phantom->seed}};
  } else {
    j["phantom"] = nullptr;
  }
  j["translation_source"] = optional_path(c.translation_source);
  j["translator"] = c.translator ? json(*c.translator) : json(nullptr);
  j["translator_checkpoint"] = optional_path(c.translator_checkpoint);
  j["unet"] = c.unet;
  j["train"] = c.train;
  j["split"] = {{"ratio", c.split_ratio}, {"seed", c.split_seed}};
  j["fidelity_floor"] = c.fidelity_floor ? json(*c.fidelity_floor) : json(nullptr);
  j["max_fakes"] = c.max_fakes ? json(*c.max_fakes) : json(nullptr);
  j["overlays"] = {{"ids", c.overlay_ids}, {"count", c.overlay_count}};
  j["output_dir"] = c.output_dir.string();
}

void from_json(const json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) throw ValidationError("config." + key + ": unknown key");
  }
  c = ExperimentConfig{};
  try {
    c.real_manifest = read_path(j, "real_manifest");
    c.fake_manifest = read_path(j, "fake_manifest");
    c.translation_source = read_path(j, "translation_source");
    c.translator_checkpoint = read_path(j, "translator_checkpoint");
    if (j.contains("phantom") && !j["phantom"].is_null()) {
      const auto& p = j["phantom"];
      PhantomSource ps;
      ps.n_real = p.value("n_real", ps.n_real);
      ps.n_translate = p.value("n_translate", ps.n_translate);
      if (p.contains("params")) ps.params = p["params"].get<datakit::PhantomParams>();
      ps.seed = p.value("seed", ps.seed);
      c.phantom = ps;
    }
    if (j.contains("translator") && !j["translator"].is_null()) {
      c.translator = j["translator"].get<translator::TranslatorConfig>();
    }
    if (j.contains("unet")) c.unet = j["unet"].get<segmenter::UNetConfig>();
    if (j.contains("train")) c.train = j["train"].get<segmenter::TrainConfig>();
    if (j.contains("split")) {
      c.split_ratio = j["split"].value("ratio", c.split_ratio);
      c.split_seed = j["split"].value("seed", c.split_seed);
    }
    if (j.contains("fidelity_floor") && !j["fidelity_floor"].is_null()) {
      c.fidelity_floor = j["fidelity_floor"].get<double>();
    }
    if (j.contains("max_fakes") && !j["max_fakes"].is_null()) {
      c.max_fakes = j["max_fakes"].get<std::size_t>();
    }
    if (j.contains("overlays")) {
      c.overlay_ids = j["overlays"].value("ids", c.overlay_ids);
      c.overlay_count = j["overlays"].value("count", c.overlay_count);
    }
    if (auto out = read_path(j, "output_dir")) c.output_dir = *out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

void ExperimentConfig::validate() const {
  if (real_manifest.has_value() == phantom.has_value()) {
    throw ValidationError("config: exactly one of real_manifest and phantom must be given");
  }
  require_exists(real_manifest, "real_manifest");
  require_exists(fake_manifest, "fake_manifest");
  require_exists(translation_source, "translation_source");
  require_exists(translator_checkpoint, "translator_checkpoint");
  if (phantom) {
    phantom->params.validate();
    if (phantom->n_real < 2) throw ValidationError("config.phantom.n_real must be >= 2");
    if (phantom->n_translate < 0) throw ValidationError("config.phantom.n_translate must be >= 0");
  }
  if (translator) {
    translator->validate();
    if (!phantom && !translation_source && !fake_manifest) {
      throw ValidationError("config.translator needs a translation_source");
    }
  }
  unet.validate();
  train.validate();
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ValidationError("config.split.ratio must be in (0,1)");
  }
  if (fidelity_floor && !(*fidelity_floor >= -1.0 && *fidelity_floor <= 1.0)) {
    throw ValidationError("config.fidelity_floor must be in [-1,1]");
  }
  if (output_dir.empty()) throw ValidationError("config.output_dir must not be empty");
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = j.get<ExperimentConfig>();
  const fs::path base = fs::absolute(path).parent_path();
  auto resolve = [&](std::optional<fs::path>& p) {
    if (p && p->is_relative()) p = (base / *p).lexically_normal();
  };
  resolve(c.real_manifest);
  resolve(c.fake_manifest);
  resolve(c.translation_source);
  resolve(c.translator_checkpoint);
  resolve(c.unet.pretrained_encoder);
  if (c.output_dir.is_relative()) c.output_dir = (base / c.output_dir).lexically_normal();
  c.validate();
  return c;
}

}  // namespace dfseg::harness
