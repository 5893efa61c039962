#pragma once

#include "dfseg/datakit.hpp"
#include "dfseg/evalkit.hpp"
#include "dfseg/segmenter.hpp"
#include "dfseg/translator.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dfseg::harness {

/// Synthesizes the real set and the translation source instead of reading
/// manifests: the first `n_real` scenes are rendered in modality A (MR) and
/// serve as real data, the next `n_translate` are rendered in modality B (CT)
/// and are translated into deepfakes.
struct PhantomSource {
  Index n_real = 200;
  Index n_translate = 40;
  datakit::PhantomParams params;
  std::uint64_t seed = 0;
};

/// One JSON document describes one reproducible experiment. Relative paths
/// resolve against the config file's directory.
struct ExperimentConfig {
  std::optional<std::filesystem::path> real_manifest;
  std::optional<std::filesystem::path> fake_manifest;
  std::optional<PhantomSource> phantom;
  // Slices translated into deepfakes when `translator` is set and no fake
  // manifest is given. Phantom mode supplies its own.
  std::optional<std::filesystem::path> translation_source;
  std::optional<translator::TranslatorConfig> translator;
  std::optional<std::filesystem::path> translator_checkpoint;
  segmenter::UNetConfig unet;
  segmenter::TrainConfig train;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;
  std::optional<double> fidelity_floor;
  std::optional<std::size_t> max_fakes;
  // Overlays are rendered for these validation ids, or for the first
  // `overlay_count` validation samples when the list is empty.
  std::vector<std::string> overlay_ids;
  std::size_t overlay_count = 8;
  std::filesystem::path output_dir = "run";

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Paths are taken as-is; load_experiment_config resolves them.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct RunBlock {
  std::string name;  // "T" or "T_DF"
  // Per-source sample counts plus "train", "val" and "total".
  std::map<std::string, std::size_t> tallies;
  std::vector<segmenter::EpochRecord> history;
  std::vector<evalkit::AggregateRow> rows;
  std::vector<std::string> val_ids;
  std::filesystem::path metrics_csv;
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> overlays;
  // Hash of everything that must match across arms (model, optimizer, seeds,
  // validation ids) and, separately, of the training-set composition.
  std::string config_hash;
  std::string train_manifest_hash;
};

struct ExperimentReport {
  RunBlock t;
  std::optional<RunBlock> t_df;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::filesystem::path output_dir;
  std::size_t fakes_generated = 0;
  std::size_t fakes_dropped = 0;
};

void to_json(nlohmann::json& j, const RunBlock& b);
void from_json(const nlohmann::json& j, RunBlock& b);
void to_json(nlohmann::json& j, const ExperimentReport& r);
void from_json(const nlohmann::json& j, ExperimentReport& r);

/// Predicts every slice (in parallel), scores it against its mask (missing
/// masks count as empty) and renders overlays for `overlay_ids` into
/// `overlay_dir`. Slices must already have the checkpoint's input size.
std::vector<evalkit::MetricRecord> evaluate_segmenter(
    const segmenter::SegModelBundle& bundle, const std::vector<datakit::SliceData>& slices,
    const std::vector<std::string>& overlay_ids = {}, const std::filesystem::path& overlay_dir = {},
    std::vector<std::filesystem::path>* overlays_written = nullptr);

/// Runs the full T vs T_DF pipeline and writes every artifact under
/// config.output_dir. A lock file keeps a second run out of the same
/// directory. Failures name the stage they happened in.
ExperimentReport run_comparison(const ExperimentConfig& config, std::ostream* log = nullptr);

enum class ReportFormat { markdown, csv };

/// "| T | 0.53 ± 0.28 | 0.41 ± 0.26 | 0.084 ± 0.088 | 0.27 ± 0.08 |", with
/// MAD and HD taken from the diagonal-normalized rows.
std::string format_table_row(const std::string& label, const std::vector<evalkit::AggregateRow>& rows);
std::string render_report(const ExperimentReport& report, ReportFormat format);
/// Writes report.md, report.csv and report.json into report.output_dir.
void write_report(const ExperimentReport& report);
ExperimentReport read_report(const std::filesystem::path& report_json);

struct ReportCsvRow {
  std::string run;
  std::size_t n = 0;
  double dsc_mean = 0, dsc_std = 0, jsc_mean = 0, jsc_std = 0;
  double mad_mean = 0, mad_std = 0, hd_mean = 0, hd_std = 0;
};
std::vector<ReportCsvRow> parse_report_csv(const std::string& text);

/// Exit codes: 0 success, 1 invalid input, 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dfseg::harness
