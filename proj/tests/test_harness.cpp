#include "doctest.h"

#include "dfseg/errors.hpp"
#include "dfseg/harness.hpp"
#include "support.hpp"

#include <fstream>
#include <sstream>

using namespace dfseg;
using namespace dfseg::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<evalkit::AggregateRow> rows(double dsc, double dsc_s, double jsc, double jsc_s, double mad,
                                        double mad_s, double hd, double hd_s) {
  return {{"dsc", dsc, dsc_s, 10, 0},     {"jsc", jsc, jsc_s, 10, 0},     {"mad_px", 1, 0, 10, 0},
          {"hd_px", 1, 0, 10, 0},         {"mad_norm", mad, mad_s, 10, 0}, {"hd_norm", hd, hd_s, 10, 0}};
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "dfseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

// Small phantom experiment that finishes in seconds.
json tiny_experiment(bool with_translator) {
  datakit::PhantomParams p;
  p.canvas_size = 16;
  p.lesion_axes_range = {2.0, 5.0};
  segmenter::UNetConfig u;
  u.encoder.blocks = {1, 1};
  u.encoder.growth_rate = 4;
  u.encoder.stem_channels = 4;
  u.encoder.bottleneck_width = 2;
  u.decoder_channels = {8, 4};
  u.input_size = 16;
  segmenter::TrainConfig t;
  t.epochs = 1;
  t.batch = 4;
  t.lr = 1e-3;
  json j = {{"phantom", {{"n_real", 10}, {"n_translate", 4}, {"params", p}, {"seed", 3}}},
            {"unet", u},
            {"train", t},
            {"split", {{"ratio", 0.8}, {"seed", 1}}},
            {"overlays", {{"ids", json::array()}, {"count", 2}}},
            {"output_dir", "run"}};
  if (with_translator) {
    translator::TranslatorConfig tc;
    tc.base_channels = 4;
    tc.residual_blocks = 1;
    tc.downsamplings = 1;
    tc.discriminator_depth = 2;
    tc.image_size = 16;
    tc.epochs = 1;
    j["translator"] = tc;
  }
  return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << j.dump(2);
  return dir / "config.json";
}

}  // namespace

TEST_CASE("table row formatting") {
  CHECK(format_table_row("T", rows(0.53, 0.28, 0.41, 0.26, 0.084, 0.088, 0.27, 0.08)) ==
        "| T | 0.53 ± 0.28 | 0.41 ± 0.26 | 0.084 ± 0.088 | 0.27 ± 0.08 |");
  auto r = rows(0.5, 0.1, 0.4, 0.1, 0, 0, 0, 0);
  r[4].n = 0;
  r[5].n = 0;
  const auto text = format_table_row("T_DF", r);
  CHECK(text.find("n/a") != std::string::npos);
}

TEST_CASE("report CSV round trip and T-only rendering") {
  ExperimentReport rep;
  rep.output_dir = testing::scratch_dir("report_csv");
  rep.t.name = "T";
  rep.t.rows = rows(0.5312, 0.2, 0.41, 0.26, 0.084, 0.088, 0.27, 0.08);
  rep.t.metrics_csv = rep.output_dir / "metrics_T.csv";
  rep.t.checkpoint = rep.output_dir / "checkpoints/segmenter_T.json";
  SUBCASE("T only") {
    const auto csv = parse_report_csv(render_report(rep, ReportFormat::csv));
    REQUIRE(csv.size() == 1);
    CHECK(csv[0].run == "T");
    CHECK(csv[0].dsc_mean == 0.5312);
    CHECK(csv[0].hd_std == 0.08);
    const auto md = render_report(rep, ReportFormat::markdown);
    CHECK(md.find("T_DF: absent") != std::string::npos);
  }
  SUBCASE("both runs, written and read back") {
    rep.t_df = rep.t;
    rep.t_df->name = "T_DF";
    rep.t_df->rows = rows(0.6, 0.2, 0.45, 0.2, 0.05, 0.05, 0.2, 0.05);
    write_report(rep);
    const auto csv = parse_report_csv(slurp(rep.output_dir / "report.csv"));
    REQUIRE(csv.size() == 2);
    CHECK(csv[1].run == "T_DF");
    CHECK(csv[1].mad_mean == 0.05);
    const auto back = read_report(rep.output_dir / "report.json");
    REQUIRE(back.t_df);
    CHECK(evalkit::find_row(back.t_df->rows, "dsc").mean == 0.6);
    const auto md = slurp(rep.output_dir / "report.md");
    CHECK(md.find("| T_DF | 0.60 ± 0.20 |") != std::string::npos);
  }
}

TEST_CASE("experiment config validation") {
  const auto dir = testing::scratch_dir("config");
  SUBCASE("unknown key") {
    auto j = tiny_experiment(false);
    j["learning_rate"] = 1;
    CHECK_THROWS_AS(load_experiment_config(write_config(dir / "a", j)), ValidationError);
  }
  SUBCASE("neither source") {
    auto j = tiny_experiment(false);
    j.erase("phantom");
    CHECK_THROWS_AS(load_experiment_config(write_config(dir / "b", j)), ValidationError);
  }
  SUBCASE("both sources") {
    auto j = tiny_experiment(false);
    std::ofstream(dir / "m.json") << R"({"version": 1, "samples": []})";
    j["real_manifest"] = (dir / "m.json").string();
    CHECK_THROWS_AS(load_experiment_config(write_config(dir / "c", j)), ValidationError);
  }
  SUBCASE("missing manifest file") {
    auto j = tiny_experiment(false);
    j.erase("phantom");
    j["real_manifest"] = "nowhere.json";
    CHECK_THROWS_AS(load_experiment_config(write_config(dir / "d", j)), ValidationError);
  }
  SUBCASE("relative paths resolve against the file") {
    const auto c = load_experiment_config(write_config(dir / "e", tiny_experiment(false)));
    CHECK(c.output_dir == (dir / "e" / "run").lexically_normal());
    json back = c;
    CHECK(back["split"]["ratio"] == 0.8);
  }
}

TEST_CASE("CLI error handling") {
  const auto dir = testing::scratch_dir("cli");
  std::string out, err;
  CHECK(cli({"phantom", "--bogus"}, &out, &err) == 1);
  CHECK_FALSE(err.empty());
  CHECK(cli({"nosuchcommand"}) == 1);
  CHECK(cli({"compare", "--config", (dir / "missing.json").string()}) == 1);
  CHECK(cli({"--help"}) == 0);
}

TEST_CASE("CLI phantom output is reproducible") {
  const auto dir = testing::scratch_dir("cli_phantom");
  for (const char* sub : {"a", "b"}) {
    CHECK(cli({"phantom", "--n", "5", "--seed", "4", "--size", "32", "--out", (dir / sub).string()}) == 0);
  }
  CHECK(slurp(dir / "a/manifest.json") == slurp(dir / "b/manifest.json"));
  const auto m = datakit::load_manifest(dir / "a/manifest.json");
  REQUIRE(m.samples.size() == 10);
  CHECK(slurp(m.samples[0].image_path) ==
        slurp(dir / "b" / fs::relative(m.samples[0].image_path, dir / "a")));
}

TEST_CASE("CLI train then evaluate, with a size mismatch") {
  const auto dir = testing::scratch_dir("cli_train");
  REQUIRE(cli({"phantom", "--n", "8", "--seed", "1", "--size", "16", "--out", (dir / "p16").string()}) == 0);
  REQUIRE(cli({"phantom", "--n", "2", "--seed", "2", "--size", "32", "--out", (dir / "p32").string()}) == 0);
  const auto exp = tiny_experiment(false);
  std::ofstream(dir / "seg.json") << json{{"unet", exp["unet"]}, {"train", exp["train"]}}.dump();
  std::string out, err;
  REQUIRE(cli({"train", "--manifest", (dir / "p16/manifest.json").string(), "--out", (dir / "model").string(),
               "--config", (dir / "seg.json").string()},
              &out, &err) == 0);
  const auto ck = dir / "model/segmenter.json";
  REQUIRE(fs::exists(ck));
  CHECK(cli({"evaluate", "--checkpoint", ck.string(), "--manifest", (dir / "p16/manifest.json").string(),
             "--out", (dir / "eval").string(), "--split", "all", "--overlays", "1"},
            &out) == 0);
  CHECK(out.find("| segmenter |") != std::string::npos);
  CHECK(evalkit::read_metrics_csv(dir / "eval/metrics.csv").size() == 16);

  CHECK(cli({"evaluate", "--checkpoint", ck.string(), "--manifest", (dir / "p32/manifest.json").string(),
             "--out", (dir / "eval32").string()},
            &out, &err) == 1);
  CHECK(err.find("checkpoint expects 16x16") != std::string::npos);
}

TEST_CASE("comparison run: T only") {
  const auto dir = testing::scratch_dir("compare_t");
  const auto config = load_experiment_config(write_config(dir, tiny_experiment(false)));
  const auto rep = run_comparison(config);
  CHECK_FALSE(rep.t_df.has_value());
  CHECK(rep.t.val_ids.size() == 2);
  CHECK(fs::exists(config.output_dir / "report.md"));
  CHECK(fs::exists(config.output_dir / "history_T.csv"));
  CHECK(rep.t.overlays.size() == 2);
  CHECK(slurp(config.output_dir / "report.md").find("T_DF: absent") != std::string::npos);
  CHECK(parse_report_csv(slurp(config.output_dir / "report.csv")).size() == 1);
  CHECK_FALSE(fs::exists(config.output_dir / ".lock"));

  SUBCASE("a held lock refuses a second run") {
    std::ofstream(config.output_dir / ".lock") << "busy";
    CHECK_THROWS_AS(run_comparison(config), ValidationError);
  }
}

TEST_CASE("comparison run: both arms share the validation set and rerun identically") {
  const auto dir = testing::scratch_dir("compare_both");
  auto config = load_experiment_config(write_config(dir, tiny_experiment(true)));
  const auto a = run_comparison(config);
  REQUIRE(a.t_df.has_value());
  CHECK(a.t.val_ids == a.t_df->val_ids);
  CHECK(a.t.config_hash == a.t_df->config_hash);
  CHECK(a.t.train_manifest_hash != a.t_df->train_manifest_hash);
  CHECK(a.fakes_generated == 4);
  CHECK(a.t_df->tallies.at("train") == a.t.tallies.at("train") + 4);
  const auto first_csv = slurp(config.output_dir / "report.csv");

  config.output_dir = dir / "rerun";
  const auto b = run_comparison(config);
  CHECK(slurp(config.output_dir / "report.csv") == first_csv);
  CHECK(slurp(config.output_dir / "metrics_TDF.csv") == slurp(dir / "run/metrics_TDF.csv"));
  CHECK(b.t.val_ids == a.t.val_ids);
}
