#include "dfseg/harness.hpp"

#include "dfseg/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace dfseg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reference rows published for the clinical dataset. Shown next to a run,
// never compared against it.
constexpr const char* kPublishedT = "| T | 0.53 ± 0.28 | 0.41 ± 0.26 | 0.084 ± 0.088 | 0.27 ± 0.08 |";
constexpr const char* kPublishedTDF = "| T_DF | 0.59 ± 0.26 | 0.46 ± 0.25 | 0.061 ± 0.056 | 0.25 ± 0.05 |";

std::string cell(const evalkit::AggregateRow& row, int digits) {
  if (row.absent()) return "n/a";
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, row.mean, digits, row.stddev);
  return buf;
}

std::string number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rel_path(const fs::path& p, const fs::path& base) {
  const auto rel = p.lexically_relative(base);
  return rel.empty() ? p.string() : rel.string();
}

std::vector<const RunBlock*> blocks(const ExperimentReport& r) {
  std::vector<const RunBlock*> out{&r.t};
  if (r.t_df) out.push_back(&*r.t_df);
  return out;
}

std::string render_markdown(const ExperimentReport& r) {
  std::ostringstream md;
  md << "# Tumor segmentation with and without deepfake augmentation\n\n";
  md << "- output: `" << r.output_dir.string() << "`\n";
  md << "- seed: " << r.seed << "\n";
  md << "- config: `" << r.config_hash << "`\n";
  if (r.fakes_generated || r.fakes_dropped) {
    md << "- deepfakes: " << r.fakes_generated << " kept, " << r.fakes_dropped
       << " dropped by the fidelity floor\n";
  }

  std::set<std::string> keys;
  for (const auto* b : blocks(r)) {
    for (const auto& [k, _] : b->tallies) keys.insert(k);
  }
  md << "\n## Images\n\n| Run |";
  for (const auto& k : keys) md << ' ' << k << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < keys.size(); ++i) md << "---|";
  md << '\n';
  for (const auto* b : blocks(r)) {
    md << "| " << b->name << " |";
    for (const auto& k : keys) {
      const auto it = b->tallies.find(k);
      md << ' ' << (it == b->tallies.end() ? 0 : it->second) << " |";
    }
    md << '\n';
  }

  md << "\n## Validation results\n\n"
     << "Mean ± std over all validation samples. MAD and HD are divided by the image diagonal.\n\n"
     << "| Run | DSC | JSC | MAD | HD |\n|---|---|---|---|---|\n";
  for (const auto* b : blocks(r)) md << format_table_row(b->name, b->rows) << '\n';
  if (!r.t_df) md << "\nT_DF: absent (no deepfake images for this experiment).\n";

  md << '\n';
  for (const auto* b : blocks(r)) {
    md << "- " << b->name << ": per-sample metrics [" << rel_path(b->metrics_csv, r.output_dir) << "]("
       << rel_path(b->metrics_csv, r.output_dir) << "), checkpoint `"
       << rel_path(b->checkpoint, r.output_dir) << "`";
    if (!b->history.empty()) {
      const auto& last = b->history.back();
      char buf[160];
      std::snprintf(buf, sizeof buf, ", %zu epochs, final train loss %.4f, val DSC %.4f",
                    b->history.size(), last.train_loss, last.val_dsc);
      md << buf;
    }
    const auto& dist = evalkit::find_row(b->rows, "hd_norm");
    if (dist.excluded) md << ", " << dist.excluded << " degenerate samples left out of MAD/HD";
    md << '\n';
  }

  bool any_overlay = false;
  for (const auto* b : blocks(r)) any_overlay |= !b->overlays.empty();
  if (any_overlay) {
    md << "\n## Overlays\n\nGray: true positive. Green: false negative. Red: false positive.\n\n";
    for (const auto* b : blocks(r)) {
      for (const auto& p : b->overlays) {
        const std::string rel = rel_path(p, r.output_dir);
        md << "![" << b->name << ' ' << p.stem().string() << "](" << rel << ")\n";
      }
    }
  }

  md << "\n## Published reference\n\n"
     << "Values reported for the clinical dataset, listed for side-by-side reading. "
        "They are not expected outputs of this run.\n\n"
     << "| Run | DSC | JSC | MAD | HD |\n|---|---|---|---|---|\n"
     << kPublishedT << '\n'
     << kPublishedTDF << '\n';
  return md.str();
}

std::string render_csv(const ExperimentReport& r) {
  std::ostringstream csv;
  csv << "run,n,dsc_mean,dsc_std,jsc_mean,jsc_std,mad_mean,mad_std,hd_mean,hd_std\n";
  for (const auto* b : blocks(r)) {
    const auto& d = evalkit::find_row(b->rows, "dsc");
    csv << b->name << ',' << d.n;
    for (const char* m : {"dsc", "jsc", "mad_norm", "hd_norm"}) {
      const auto& row = evalkit::find_row(b->rows, m);
      csv << ',' << (row.absent() ? "" : number(row.mean)) << ','
          << (row.absent() ? "" : number(row.stddev));
    }
    csv << '\n';
  }
  return csv.str();
}

double parse_cell(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("report csv: not a number: '" + s + "'");
  }
}

}  // namespace

std::string format_table_row(const std::string& label, const std::vector<evalkit::AggregateRow>& rows) {
  return "| " + label + " | " + cell(evalkit::find_row(rows, "dsc"), 2) + " | " +
         cell(evalkit::find_row(rows, "jsc"), 2) + " | " + cell(evalkit::find_row(rows, "mad_norm"), 3) +
         " | " + cell(evalkit::find_row(rows, "hd_norm"), 2) + " |";
}

std::string render_report(const ExperimentReport& report, ReportFormat format) {
  return format == ReportFormat::markdown ? render_markdown(report) : render_csv(report);
}

void write_report(const ExperimentReport& report) {
  fs::create_directories(report.output_dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(report.output_dir / name, std::ios::trunc);
    if (!out) throw LoadError("cannot write " + (report.output_dir / name).string());
    out << text;
  };
  write("report.md", render_report(report, ReportFormat::markdown));
  write("report.csv", render_report(report, ReportFormat::csv));
  write("report.json", json(report).dump(2) + "\n");
}

ExperimentReport read_report(const fs::path& report_json) {
  std::ifstream in(report_json);
  if (!in) throw LoadError("cannot read " + report_json.string());
  try {
    ExperimentReport r = json::parse(in).get<ExperimentReport>();
    r.output_dir = fs::absolute(report_json).parent_path();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(report_json.string() + ": " + e.what());
  }
}

std::vector<ReportCsvRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "run,n,dsc_mean,dsc_std,jsc_mean,jsc_std,mad_mean,mad_std,hd_mean,hd_std") {
    throw ValidationError("report csv: unexpected header");
  }
  std::vector<ReportCsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 10) throw ValidationError("report csv: expected 10 columns in '" + line + "'");
    ReportCsvRow r;
    r.run = f[0];
    r.n = static_cast<std::size_t>(parse_cell(f[1]));
    r.dsc_mean = parse_cell(f[2]);
    r.dsc_std = parse_cell(f[3]);
    r.jsc_mean = parse_cell(f[4]);
    r.jsc_std = parse_cell(f[5]);
    r.mad_mean = parse_cell(f[6]);
    r.mad_std = parse_cell(f[7]);
    r.hd_mean = parse_cell(f[8]);
    r.hd_std = parse_cell(f[9]);
    rows.push_back(r);
  }
  return rows;
}

void to_json(json& j, const RunBlock& b) {
  auto rows = json::array();
  for (const auto& r : b.rows) {
    rows.push_back({{"metric", r.metric}, {"mean", r.mean}, {"stddev", r.stddev}, {"n", r.n},
                    {"excluded", r.excluded}});
  }
  auto history = json::array();
  for (const auto& e : b.history) {
    history.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_dsc", e.val_dsc}});
  }
  std::vector<std::string> overlays;
  for (const auto& p : b.overlays) overlays.push_back(p.string());
  j = {{"name", b.name},
       {"tallies", b.tallies},
       {"history", history},
       {"rows", rows},
       {"val_ids", b.val_ids},
       {"metrics_csv", b.metrics_csv.string()},
       {"checkpoint", b.checkpoint.string()},
       {"overlays", overlays},
       {"config_hash", b.config_hash},
       {"train_manifest_hash", b.train_manifest_hash}};
}

void from_json(const json& j, RunBlock& b) {
  b = RunBlock{};
  b.name = j.at("name").get<std::string>();
  b.tallies = j.at("tallies").get<std::map<std::string, std::size_t>>();
  for (const auto& e : j.at("history")) {
    b.history.push_back({e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                         e.at("val_dsc").get<double>()});
  }
  for (const auto& r : j.at("rows")) {
    evalkit::AggregateRow row;
    row.metric = r.at("metric").get<std::string>();
    row.mean = r.at("mean").get<double>();
    row.stddev = r.at("stddev").get<double>();
    row.n = r.at("n").get<std::size_t>();
    row.excluded = r.at("excluded").get<std::size_t>();
    b.rows.push_back(row);
  }
  b.val_ids = j.at("val_ids").get<std::vector<std::string>>();
  b.metrics_csv = j.at("metrics_csv").get<std::string>();
  b.checkpoint = j.at("checkpoint").get<std::string>();
  for (const auto& p : j.at("overlays")) b.overlays.emplace_back(p.get<std::string>());
  b.config_hash = j.at("config_hash").get<std::string>();
  b.train_manifest_hash = j.at("train_manifest_hash").get<std::string>();
}

void to_json(json& j, const ExperimentReport& r) {
  j = {{"T", r.t},
       {"T_DF", r.t_df ? json(*r.t_df) : json(nullptr)},
       {"seed", r.seed},
       {"config_hash", r.config_hash},
       {"output_dir", r.output_dir.string()},
       {"fakes_generated", r.fakes_generated},
       {"fakes_dropped", r.fakes_dropped}};
}

void from_json(const json& j, ExperimentReport& r) {
  r = ExperimentReport{};
  r.t = j.at("T").get<RunBlock>();
  if (!j.at("T_DF").is_null()) r.t_df = j.at("T_DF").get<RunBlock>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.output_dir = j.at("output_dir").get<std::string>();
  r.fakes_generated = j.value("fakes_generated", std::size_t{0});
  r.fakes_dropped = j.value("fakes_dropped", std::size_t{0});
}

}  // namespace dfseg::harness
