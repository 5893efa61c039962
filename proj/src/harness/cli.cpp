#include "dfseg/harness.hpp"

#include "dfseg/errors.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <ostream>

namespace dfseg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

template <typename T>
T from_file(const fs::path& path, const char* key) {
  const json j = read_json(path);
  try {
    return (j.contains(key) ? j[key] : j).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<const datakit::SliceSample*> all_of(const datakit::DatasetManifest& m) {
  std::vector<const datakit::SliceSample*> out;
  for (const auto& s : m.samples) out.push_back(&s);
  return out;
}

// Train split when the manifest is labelled, everything otherwise.
std::vector<const datakit::SliceSample*> train_part(const datakit::DatasetManifest& m) {
  auto train = m.with_split(datakit::Split::train);
  return train.empty() ? all_of(m) : train;
}

struct PhantomArgs {
  Index n = 0;
  std::uint64_t seed = 0;
  fs::path out;
  std::optional<Index> size;
  std::optional<fs::path> params;
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  datakit::PhantomParams params;
  if (a.params) params = from_file<datakit::PhantomParams>(*a.params, "params");
  if (a.size) {
    // Default lesion sizes are for a 256 canvas; keep their proportion.
    if (!a.params) {
      const double f = static_cast<double>(*a.size) / static_cast<double>(params.canvas_size);
      for (auto& v : params.lesion_axes_range) v *= f;
    }
    params.canvas_size = *a.size;
  }
  const auto ds = datakit::generate_phantom_dataset(a.n, params, a.seed);
  const auto m = datakit::write_phantom_dataset(ds, a.out);
  out << "wrote " << m.samples.size() << " slices to " << (a.out / "manifest.json").string() << '\n';
  return 0;
}

struct TranslateArgs {
  fs::path real, source, out;
  std::optional<fs::path> config, checkpoint;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<Index> image_size;
  std::optional<double> fidelity_floor;
  std::optional<std::size_t> max_count;
};

int cmd_translate(const TranslateArgs& a, std::ostream& out) {
  translator::TranslatorConfig tc;
  if (a.config) tc = from_file<translator::TranslatorConfig>(*a.config, "translator");
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.seed) tc.seed = *a.seed;
  if (a.image_size) tc.image_size = *a.image_size;
  tc.validate();
  const auto real = datakit::load_manifest(a.real);
  const auto source = datakit::load_manifest(a.source);
  const datakit::PreprocessOptions prep{tc.image_size, true};
  std::vector<Image> domain_a, domain_b;
  for (auto& s : datakit::load_slices(train_part(real), prep)) domain_a.push_back(std::move(s.image));
  for (auto& s : datakit::load_slices(all_of(source), prep)) domain_b.push_back(std::move(s.image));

  auto trained = translator::train_translator(translator::build_cyclegan<float>(tc, a.checkpoint),
                                              domain_a, domain_b, tc);
  fs::create_directories(a.out);
  translator::save_translator(trained.bundle, a.out / "translator");
  {
    std::ofstream h(a.out / "history_translator.json", std::ios::trunc);
    h << json(trained.history).dump(2) << '\n';
  }
  translator::DeepfakeOptions opt;
  opt.fidelity_floor = a.fidelity_floor;
  opt.max_count = a.max_count;
  const auto result = translator::generate_deepfake_set(trained.bundle, source, a.out, opt);
  for (const auto& [id, why] : result.failures) out << "skipped " << id << ": " << why << '\n';
  out << "wrote " << result.manifest.samples.size() << " deepfakes to "
      << (a.out / "manifest.json").string() << " (" << result.dropped_by_floor
      << " below the fidelity floor)\n";
  return 0;
}

struct TrainArgs {
  fs::path manifest, out;
  std::optional<fs::path> config;
  std::optional<int> epochs, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<Index> input_size;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  segmenter::UNetConfig uc;
  segmenter::TrainConfig tc;
  if (a.config) {
    uc = from_file<segmenter::UNetConfig>(*a.config, "unet");
    tc = from_file<segmenter::TrainConfig>(*a.config, "train");
  }
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch) tc.batch = *a.batch;
  if (a.lr) tc.lr = *a.lr;
  if (a.seed) tc.seed = uc.seed = *a.seed;
  if (a.input_size) uc.input_size = *a.input_size;
  uc.validate();
  tc.validate();

  auto manifest = datakit::load_manifest(a.manifest);
  const bool labelled = std::all_of(manifest.samples.begin(), manifest.samples.end(),
                                    [](const auto& s) { return s.split.has_value(); });
  if (!labelled) manifest = datakit::split_dataset(manifest, a.split_ratio, a.split_seed);
  fs::create_directories(a.out);
  datakit::save_manifest(manifest, a.out / "manifest.json");

  const datakit::PreprocessOptions prep{uc.input_size, true};
  const auto train = datakit::load_slices(manifest.with_split(datakit::Split::train), prep);
  const auto val = datakit::load_slices(manifest.with_split(datakit::Split::val), prep);
  auto result = segmenter::train_segmenter(segmenter::build_unet(uc), train, val, tc);
  const auto ck = segmenter::save_segmenter(result.bundle, a.out / "segmenter", uc.seed);
  segmenter::write_history_csv(a.out / "history.csv", result.history);
  out << "trained " << result.history.size() << " epochs on " << train.size() << " slices";
  if (!result.history.empty()) out << ", final val DSC " << result.history.back().val_dsc;
  out << "\ncheckpoint: " << ck.string() << '\n';
  return 0;
}

struct EvaluateArgs {
  fs::path checkpoint, manifest, out;
  std::string split = "auto";
  std::size_t overlays = 0;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto bundle = segmenter::load_segmenter(a.checkpoint);
  const auto manifest = datakit::load_manifest(a.manifest);
  std::vector<const datakit::SliceSample*> refs;
  if (a.split == "all") {
    refs = all_of(manifest);
  } else if (a.split == "auto") {
    refs = manifest.with_split(datakit::Split::val);
    if (refs.empty()) refs = all_of(manifest);
  } else {
    refs = manifest.with_split(datakit::parse_split(a.split));
  }
  if (refs.empty()) throw ValidationError("evaluate: no samples selected");
  // Native size: a checkpoint only scores slices of the size it was trained on.
  const auto slices = datakit::load_slices(refs, datakit::PreprocessOptions{0, false});
  std::vector<std::string> overlay_ids;
  for (std::size_t i = 0; i < std::min(a.overlays, slices.size()); ++i) overlay_ids.push_back(slices[i].id);

  const auto records = evaluate_segmenter(bundle, slices, overlay_ids, a.out / "overlays");
  fs::create_directories(a.out);
  evalkit::write_metrics_csv(a.out / "metrics.csv", records);
  const auto rows = evalkit::aggregate(records);
  out << "| Run | DSC | JSC | MAD | HD |\n|---|---|---|---|---|\n"
      << format_table_row(a.checkpoint.stem().string(), rows) << '\n';
  return 0;
}

int cmd_compare(const fs::path& config_path, const std::optional<fs::path>& out_dir,
                std::ostream& out) {
  auto config = load_experiment_config(config_path);
  if (out_dir) config.output_dir = fs::absolute(*out_dir);
  const auto report = run_comparison(config, &out);
  out << "| Run | DSC | JSC | MAD | HD |\n|---|---|---|---|---|\n"
      << format_table_row(report.t.name, report.t.rows) << '\n';
  if (report.t_df) out << format_table_row(report.t_df->name, report.t_df->rows) << '\n';
  out << "report: " << (report.output_dir / "report.md").string() << '\n';
  return 0;
}

int cmd_report(const fs::path& run, const std::optional<std::string>& format, std::ostream& out) {
  const fs::path json_path = fs::is_directory(run) ? run / "report.json" : run;
  const auto report = read_report(json_path);
  write_report(report);
  if (format) {
    out << render_report(report, *format == "csv" ? ReportFormat::csv : ReportFormat::markdown);
  } else {
    out << "rendered " << (report.output_dir / "report.md").string() << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deepfake-augmented tumor segmentation toolkit", "dfseg"};
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "Synthesize a two-modality phantom dataset");
  phantom->add_option("--n", pa.n, "Number of scenes")->required()->check(CLI::PositiveNumber);
  phantom->add_option("--seed", pa.seed, "Generator seed");
  phantom->add_option("--out", pa.out, "Output directory")->required();
  phantom->add_option("--size", pa.size, "Canvas size in pixels");
  phantom->add_option("--params", pa.params, "JSON file with phantom parameters");

  TranslateArgs ta;
  auto* translate = app.add_subcommand("translate", "Fine-tune the translator and generate deepfakes");
  translate->add_option("--real", ta.real, "Manifest of target-domain slices")->required();
  translate->add_option("--source", ta.source, "Manifest of slices to translate")->required();
  translate->add_option("--out", ta.out, "Output directory")->required();
  translate->add_option("--config", ta.config, "Translator config JSON");
  translate->add_option("--checkpoint", ta.checkpoint, "Pretrained translator checkpoint");
  translate->add_option("--epochs", ta.epochs);
  translate->add_option("--seed", ta.seed);
  translate->add_option("--image-size", ta.image_size);
  translate->add_option("--fidelity-floor", ta.fidelity_floor, "Drop fakes whose SSIM to the source is lower");
  translate->add_option("--max-count", ta.max_count);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the segmenter on a manifest");
  train->add_option("--manifest", tr.manifest)->required();
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--config", tr.config, "JSON with \"unet\" and \"train\" sections");
  train->add_option("--epochs", tr.epochs);
  train->add_option("--batch", tr.batch);
  train->add_option("--lr", tr.lr);
  train->add_option("--seed", tr.seed);
  train->add_option("--input-size", tr.input_size);
  train->add_option("--split-ratio", tr.split_ratio, "Used when the manifest has no split labels");
  train->add_option("--split-seed", tr.split_seed);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a segmenter checkpoint against a manifest");
  evaluate->add_option("--checkpoint", ev.checkpoint)->required();
  evaluate->add_option("--manifest", ev.manifest)->required();
  evaluate->add_option("--out", ev.out, "Output directory")->required();
  evaluate->add_option("--split", ev.split, "val, train, all or auto")
      ->check(CLI::IsMember({"val", "train", "all", "auto"}));
  evaluate->add_option("--overlays", ev.overlays, "Render overlays for the first N samples");

  fs::path config_path;
  std::optional<fs::path> compare_out;
  auto* compare = app.add_subcommand("compare", "Run the T vs T_DF comparison");
  compare->add_option("--config", config_path, "Experiment config JSON")->required();
  compare->add_option("--out", compare_out, "Override the output directory");

  fs::path run_dir;
  std::optional<std::string> format;
  auto* report = app.add_subcommand("report", "Re-render the report of a finished run");
  report->add_option("--run", run_dir, "Run directory or report.json")->required();
  report->add_option("--format", format, "Also print markdown or csv")
      ->check(CLI::IsMember({"markdown", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*phantom) return cmd_phantom(pa, out);
    if (*translate) return cmd_translate(ta, out);
    if (*train) return cmd_train(tr, out);
    if (*evaluate) return cmd_evaluate(ev, out);
    if (*compare) return cmd_compare(config_path, compare_out, out);
    if (*report) return cmd_report(run_dir, format, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace dfseg::harness
