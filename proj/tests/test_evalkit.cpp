#include "doctest.h"

#include "dfseg/errors.hpp"
#include "dfseg/evalkit.hpp"
#include "support.hpp"

#include <cmath>

using namespace dfseg;
using namespace dfseg::evalkit;

namespace {

Mask from_points(Index rows, Index cols, std::initializer_list<std::pair<Index, Index>> pts) {
  Mask m = Mask::Zero(rows, cols);
  for (const auto& [r, c] : pts) m(r, c) = 1;
  return m;
}

}  // namespace

TEST_CASE("overlap metrics match brute force on random masks") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Mask a = testing::random_mask(rng, 24, 20);
    const Mask b = testing::random_mask(rng, 24, 20);
    CHECK(dsc(a, b) == doctest::Approx(testing::oracle_dsc(a, b)).epsilon(1e-12));
    CHECK(jsc(a, b) == doctest::Approx(testing::oracle_jsc(a, b)).epsilon(1e-12));
    const double d = dsc(a, b);
    CHECK(std::abs(jsc(a, b) - d / (2.0 - d)) < 1e-9);
  }
}

TEST_CASE("surface distances match brute force on random masks") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 150; ++trial) {
    const Mask a = testing::random_mask(rng, 20, 26);
    const Mask b = testing::random_mask(rng, 20, 26);
    const auto [hd_o, mad_o] = testing::oracle_surface_distances(a, b);
    const auto hd = hausdorff(a, b);
    const auto md = mad(a, b);
    CHECK(std::abs(hd.px - hd_o) < 1e-6);
    CHECK(std::abs(md.px - mad_o) < 1e-6);
    CHECK(hd.norm == doctest::Approx(hd.px / image_diagonal(20, 26)));
    // symmetry and ordering
    CHECK(std::abs(hausdorff(b, a).px - hd.px) < 1e-9);
    CHECK(std::abs(mad(b, a).px - md.px) < 1e-9);
    CHECK(md.px <= hd.px + 1e-12);
  }
}

TEST_CASE("surface points match the neighbour oracle") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Mask m = testing::random_mask(rng, 15, 17);
    const auto got = surface_points(m);
    const auto want = testing::oracle_surface(m);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].row == want[i].first);
      CHECK(got[i].col == want[i].second);
    }
  }
}

TEST_CASE("hand fixtures") {
  SUBCASE("overlap of two 4-pixel masks sharing 2") {
    const Mask a = from_points(4, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const Mask b = from_points(4, 4, {{1, 0}, {1, 1}, {2, 0}, {2, 1}});
    CHECK(dsc(a, b) == doctest::Approx(0.5));
    CHECK(jsc(a, b) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("3x3 square has 8 surface points") {
    Mask m = Mask::Zero(5, 5);
    m.block(1, 1, 3, 3).setOnes();
    const auto pts = surface_points(m);
    CHECK(pts.size() == 8);
    for (const auto& p : pts) CHECK_FALSE((p.row == 2 && p.col == 2));
  }
  SUBCASE("single pixel and empty mask") {
    CHECK(surface_points(from_points(3, 3, {{1, 1}})).size() == 1);
    CHECK(surface_points(Mask::Zero(3, 3)).empty());
    CHECK(surface_points(Mask::Ones(1, 1)).size() == 1);
  }
  SUBCASE("single points 3-4-5 apart") {
    const Mask a = from_points(8, 8, {{0, 0}});
    const Mask b = from_points(8, 8, {{3, 4}});
    CHECK(hausdorff(a, b).px == doctest::Approx(5.0));
    CHECK(mad(a, b).px == doctest::Approx(5.0));
  }
  SUBCASE("two points against one") {
    const Mask a = from_points(6, 6, {{0, 0}, {0, 3}});
    const Mask b = from_points(6, 6, {{0, 0}});
    CHECK(hausdorff(a, b).px == doctest::Approx(3.0));
    // directed A->B: (0 + 3) / 2, B->A: 0
    CHECK(mad(a, b).px == doctest::Approx(0.75));
  }
  SUBCASE("identical masks") {
    Mask m = Mask::Zero(6, 6);
    m.block(2, 1, 3, 4).setOnes();
    CHECK(dsc(m, m) == 1.0);
    CHECK(hausdorff(m, m).px == 0.0);
    CHECK(mad(m, m).px == 0.0);
  }
}

TEST_CASE("degenerate pairs") {
  const Mask empty = Mask::Zero(30, 40);
  const Mask some = from_points(30, 40, {{3, 3}});
  CHECK(dsc(empty, empty) == 1.0);
  CHECK(jsc(empty, empty) == 1.0);
  CHECK(dsc(empty, some) == 0.0);
  const auto both = hausdorff(empty, empty);
  CHECK(both.flag == Degenerate::both_empty);
  CHECK(both.px == 0.0);
  const auto one = hausdorff(empty, some);
  CHECK(one.flag == Degenerate::one_empty);
  CHECK(one.px == doctest::Approx(50.0));
  CHECK(one.norm == doctest::Approx(1.0));
  CHECK(mad(some, empty).flag == Degenerate::one_empty);
  CHECK(evaluate_pair("x", empty, empty).flag == Degenerate::both_empty);
  CHECK_THROWS_AS(dsc(Mask::Zero(2, 2), Mask::Zero(2, 3)), ValidationError);
}

TEST_CASE("overlay 2x2 fixture") {
  Mask gt(2, 2), pred(2, 2);
  gt << 1, 1, 0, 0;
  pred << 1, 0, 1, 0;
  Image img(2, 2);
  img << 0.0f, 0.0f, 0.0f, 0.5f;
  const auto rgb = overlay(gt, pred, img);
  CHECK(rgb.at(0, 0) == kTruePositive);
  CHECK(rgb.at(0, 1) == kFalseNegative);
  CHECK(rgb.at(1, 0) == kFalsePositive);
  CHECK(rgb.at(1, 1) == RgbImage::Pixel{128, 128, 128});
  CHECK_THROWS_AS(overlay(gt, pred, Image::Zero(3, 2)), ValidationError);
}

TEST_CASE("aggregate") {
  MetricRecord a, b;
  a.dsc = 0.5;
  b.dsc = 0.7;
  a.hd_norm = 0.2;
  b.hd_norm = 0.4;
  const auto rows = aggregate({a, b});
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].metric == "dsc");
  CHECK(find_row(rows, "dsc").mean == doctest::Approx(0.6));
  CHECK(find_row(rows, "dsc").stddev == doctest::Approx(0.1));
  CHECK(find_row(rows, "hd_norm").mean == doctest::Approx(0.3));

  const auto single = aggregate({a});
  CHECK(find_row(single, "dsc").stddev == 0.0);

  MetricRecord e;
  e.flag = Degenerate::both_empty;
  e.dsc = e.jsc = 1.0;
  const auto degenerate = aggregate({e, e});
  CHECK(find_row(degenerate, "dsc").mean == 1.0);
  CHECK(find_row(degenerate, "hd_norm").absent());
  CHECK(find_row(degenerate, "hd_norm").excluded == 2);

  const auto mixed = aggregate({a, e});
  CHECK(find_row(mixed, "hd_norm").n == 1);
  CHECK(find_row(mixed, "dsc").n == 2);

  CHECK_THROWS_AS(aggregate({}), ValidationError);
  CHECK_THROWS_AS(find_row(rows, "nope"), ValidationError);
}

TEST_CASE("metrics CSV round trip") {
  std::mt19937_64 rng(3);
  std::vector<MetricRecord> recs;
  for (int i = 0; i < 20; ++i) {
    recs.push_back(evaluate_pair("s" + std::to_string(i), testing::random_mask(rng, 16, 16),
                                 testing::random_mask(rng, 16, 16)));
  }
  const auto path = testing::scratch_dir("metrics_csv") / "m.csv";
  write_metrics_csv(path, recs);
  const auto back = read_metrics_csv(path);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].sample_id == recs[i].sample_id);
    CHECK(back[i].dsc == recs[i].dsc);
    CHECK(back[i].hd_px == recs[i].hd_px);
    CHECK(back[i].mad_norm == recs[i].mad_norm);
    CHECK(back[i].flag == recs[i].flag);
  }
}
