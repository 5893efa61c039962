#include "dfseg/harness.hpp"

#include "dfseg/errors.hpp"
#include "dfseg/nn/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <ostream>
#include <set>
#include <thread>
#include <unistd.h>

namespace dfseg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exclusive claim on an output directory for the lifetime of a run.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      throw ValidationError("output directory " + dir.string() +
                            " is in use by another run (remove " + path_.string() + " if stale)");
    }
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

// Runs one pipeline stage, prefixing any failure with the stage name while
// keeping its category.
template <typename F>
auto stage(const char* name, std::ostream* log, F&& f) -> decltype(f()) {
  if (log) *log << "[" << name << "]" << std::endl;
  const std::string prefix = std::string("stage '") + name + "': ";
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const LoadError& e) {
    throw LoadError(prefix + e.what());
  } catch (const TrainingDiverged& e) {
    throw TrainingDiverged(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

std::vector<datakit::SliceData> load(const std::vector<const datakit::SliceSample*>& samples,
                                     Index size) {
  return datakit::load_slices(samples, datakit::PreprocessOptions{size, true});
}

std::vector<Image> images_of(const std::vector<datakit::SliceData>& slices) {
  std::vector<Image> out;
  out.reserve(slices.size());
  for (const auto& s : slices) out.push_back(s.image);
  return out;
}

std::string hash_json(const json& j) { return "sha256:" + nn::sha256_hex(j.dump()); }

std::map<std::string, std::size_t> tallies(const datakit::DatasetManifest& m,
                                           const std::vector<const datakit::SliceSample*>& train,
                                           const std::vector<const datakit::SliceSample*>& val) {
  auto t = m.counts();
  t["train"] = train.size();
  t["val"] = val.size();
  t["total"] = train.size() + val.size();
  return t;
}

RunBlock run_arm(const std::string& name, const ExperimentConfig& config,
                 const datakit::DatasetManifest& manifest,
                 const std::vector<datakit::SliceData>& val, const std::vector<std::string>& overlay_ids,
                 std::ostream* log) {
  const fs::path out = config.output_dir;
  const auto train_refs = manifest.with_split(datakit::Split::train);
  const auto val_refs = manifest.with_split(datakit::Split::val);

  RunBlock block;
  block.name = name;
  block.tallies = tallies(manifest, train_refs, val_refs);
  for (const auto& s : val) block.val_ids.push_back(s.id);
  std::vector<std::string> train_ids;
  for (const auto* s : train_refs) train_ids.push_back(s->id);
  std::sort(train_ids.begin(), train_ids.end());
  block.train_manifest_hash = hash_json(train_ids);
  block.config_hash = hash_json({{"unet", config.unet},
                                 {"train", config.train},
                                 {"split", {{"ratio", config.split_ratio}, {"seed", config.split_seed}}},
                                 {"val_ids", block.val_ids}});

  const auto train = stage(("load " + name).c_str(), log,
                           [&] { return load(train_refs, config.unet.input_size); });
  auto trained = stage(("train " + name).c_str(), log, [&] {
    return segmenter::train_segmenter(segmenter::build_unet(config.unet), train, val, config.train);
  });
  block.history = trained.history;

  stage(("evaluate " + name).c_str(), log, [&] {
    fs::create_directories(out / "checkpoints");
    block.checkpoint = segmenter::save_segmenter(trained.bundle, out / "checkpoints" / ("segmenter_" + name),
                                                 config.unet.seed);
    segmenter::write_history_csv(out / ("history_" + name + ".csv"), trained.history);
    const std::string file_tag = name == "T" ? "T" : "TDF";
    const auto records = evaluate_segmenter(trained.bundle, val, overlay_ids, out / "overlays" / name,
                                            &block.overlays);
    block.metrics_csv = out / ("metrics_" + file_tag + ".csv");
    evalkit::write_metrics_csv(block.metrics_csv, records);
    block.rows = evalkit::aggregate(records);
  });
  return block;
}

}  // namespace

std::vector<evalkit::MetricRecord> evaluate_segmenter(const segmenter::SegModelBundle& bundle,
                                                      const std::vector<datakit::SliceData>& slices,
                                                      const std::vector<std::string>& overlay_ids,
                                                      const fs::path& overlay_dir,
                                                      std::vector<fs::path>* overlays_written) {
  const Index size = bundle.config.input_size;
  for (const auto& s : slices) {
    if (s.image.rows() != size || s.image.cols() != size) {
      throw ValidationError("size mismatch: slice " + s.id + " is " + std::to_string(s.image.rows()) +
                            "x" + std::to_string(s.image.cols()) + ", checkpoint expects " +
                            std::to_string(size) + "x" + std::to_string(size));
    }
  }
  const std::set<std::string> wanted(overlay_ids.begin(), overlay_ids.end());
  if (!wanted.empty()) fs::create_directories(overlay_dir);

  std::vector<evalkit::MetricRecord> records(slices.size());
  std::vector<std::exception_ptr> errors(slices.size());
  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(std::thread::hardware_concurrency(), slices.size()));
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < slices.size(); i += workers) {
      try {
        const auto& s = slices[i];
        const Mask gt = s.has_mask() ? s.mask : Mask(Mask::Zero(size, size));
        const Mask pred = segmenter::predict_mask(bundle, s.image, bundle.config.out_threshold);
        records[i] = evalkit::evaluate_pair(s.id, gt, pred);
        if (wanted.count(s.id)) write_png(overlay_dir / (s.id + ".png"), evalkit::overlay(gt, pred, s.image));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work, t);
  work(0);
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (overlays_written) {
    for (const auto& s : slices) {
      if (wanted.count(s.id)) overlays_written->push_back(overlay_dir / (s.id + ".png"));
    }
  }
  return records;
}

ExperimentReport run_comparison(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const fs::path out = config.output_dir;
  DirectoryLock lock(out);
  fs::create_directories(out / "manifests");
  {
    std::ofstream cfg(out / "config.json", std::ios::trunc);
    cfg << json(config).dump(2) << '\n';
  }

  ExperimentReport report;
  report.seed = config.train.seed;
  report.config_hash = hash_json(config);
  report.output_dir = out;

  // Real data and, in phantom mode, the slices to be translated.
  datakit::DatasetManifest real, source;
  bool have_source = false;
  stage("data", log, [&] {
    if (config.phantom) {
      const auto& p = *config.phantom;
      const auto ds = datakit::generate_phantom_dataset(p.n_real + p.n_translate, p.params, p.seed);
      const auto all = datakit::write_phantom_dataset(ds, out / "data" / "phantom");
      std::set<std::string> real_scenes;
      for (Index i = 0; i < p.n_real; ++i) real_scenes.insert(ds.scenes[i].id);
      for (const auto& s : all.samples) {
        const std::string scene = s.id.substr(0, s.id.rfind('_'));
        const bool is_real = real_scenes.count(scene) > 0;
        if (is_real && s.domain == datakit::Domain::MR) real.samples.push_back(s);
        if (!is_real && s.domain == datakit::Domain::CT) source.samples.push_back(s);
      }
      have_source = !source.samples.empty();
    } else {
      real = datakit::load_manifest(*config.real_manifest);
      if (config.translation_source) {
        source = datakit::load_manifest(*config.translation_source);
        have_source = true;
      }
    }
    if (have_source) datakit::save_manifest(source, out / "manifests" / "translation_source.json");
  });

  const auto split = stage("split", log, [&] {
    auto m = datakit::split_dataset(real, config.split_ratio, config.split_seed);
    datakit::save_manifest(m, out / "manifests" / "real.json");
    return m;
  });

  std::optional<datakit::DatasetManifest> fakes;
  if (config.fake_manifest) {
    fakes = stage("deepfakes", log, [&] { return datakit::load_manifest(*config.fake_manifest); });
  } else if (config.translator && have_source) {
    fakes = stage("translate", log, [&] {
      const auto& tc = *config.translator;
      auto bundle = translator::build_cyclegan<float>(tc, config.translator_checkpoint);
      const auto domain_a = images_of(load(split.with_split(datakit::Split::train), tc.image_size));
      std::vector<const datakit::SliceSample*> src_refs;
      for (const auto& s : source.samples) src_refs.push_back(&s);
      const auto domain_b = images_of(load(src_refs, tc.image_size));
      auto trained = translator::train_translator(std::move(bundle), domain_a, domain_b, tc);
      fs::create_directories(out / "checkpoints");
      translator::save_translator(trained.bundle, out / "checkpoints" / "translator");
      {
        std::ofstream h(out / "history_translator.json", std::ios::trunc);
        h << json(trained.history).dump(2) << '\n';
      }
      translator::DeepfakeOptions opt;
      opt.fidelity_floor = config.fidelity_floor;
      opt.max_count = config.max_fakes;
      auto result = translator::generate_deepfake_set(trained.bundle, source, out / "deepfakes", opt);
      if (log) {
        for (const auto& [id, why] : result.failures) *log << "  skipped " << id << ": " << why << '\n';
      }
      report.fakes_dropped = result.dropped_by_floor;
      return result.manifest;
    });
  }
  if (fakes) report.fakes_generated = fakes->samples.size();

  const auto val = stage("load val", log, [&] {
    return load(split.with_split(datakit::Split::val), config.unet.input_size);
  });
  std::vector<std::string> overlay_ids = config.overlay_ids;
  if (overlay_ids.empty()) {
    for (std::size_t i = 0; i < std::min(config.overlay_count, val.size()); ++i) {
      overlay_ids.push_back(val[i].id);
    }
  }

  report.t = run_arm("T", config, split, val, overlay_ids, log);
  if (fakes && !fakes->samples.empty()) {
    const auto merged = stage("merge", log, [&] {
      auto m = datakit::merge_with_deepfakes(split, *fakes);
      datakit::save_manifest(*fakes, out / "manifests" / "deepfakes.json");
      datakit::save_manifest(m, out / "manifests" / "merged.json");
      return m;
    });
    report.t_df = run_arm("T_DF", config, merged, val, overlay_ids, log);
  }
  stage("report", log, [&] { write_report(report); });
  return report;
}

}  // namespace dfseg::harness
