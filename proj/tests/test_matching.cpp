#include <sstream>

#include "doctest.h"
#include "prosteval/error.hpp"
#include "prosteval/matching.hpp"
#include "support/oracles.hpp"

using namespace prosteval;

namespace {

const Dims kDims{40, 40, 4};

LesionCluster blob(VoxelList v, std::optional<Grade> g, double score = 1.0) {
  std::sort(v.begin(), v.end());
  LesionCluster c;
  c.voxels = std::move(v);
  c.grade = g;
  c.score = score;
  c.volume_mm3 = static_cast<double>(c.voxels.size()) * 3.0;
  return c;
}

VoxelList run(std::size_t start, std::size_t n) {
  VoxelList v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(start + i);
  return v;
}

LesionMap map_of(std::vector<LesionCluster> clusters) {
  LesionMap m;
  m.clusters = std::move(clusters);
  m.dims = kDims;
  m.spacing = {1, 1, 3};
  return m;
}

}  // namespace

TEST_CASE("ten percent rule is inclusive and exact") {
  const LesionMap gt = map_of({blob(run(0, 20), Grade::gs3_4)});
  // 10 predicted voxels, 1 inside the lesion: exactly 10%.
  const LesionMap hit = map_of({blob(run(19, 10), Grade::gs3_4)});
  const MatchResult r = match_detections(hit, gt, {});
  CHECK(r.tp.size() == 1);
  CHECK(r.fp.empty());
  CHECK(r.tp[0].overlap_frac == 0.1);
  // 11 predicted voxels, 1 inside: 9.09%.
  const LesionMap miss = map_of({blob(run(19, 11), Grade::gs3_4)});
  const MatchResult m = match_detections(miss, gt, {});
  CHECK(m.tp.empty());
  CHECK(m.fp == std::vector<std::size_t>{0});
  CHECK(m.fn == std::vector<std::size_t>{0});
  CHECK(MatchOptions{}.overlap_frac == 0.10);
}

TEST_CASE("overlap denominators") {
  const LesionMap gt = map_of({blob(run(0, 100), Grade::gs4_3)});
  const LesionMap pred = map_of({blob(run(95, 10), Grade::gs4_3)});  // 5 voxels overlap
  MatchOptions o;
  o.denominator = OverlapDenominator::predicted;
  CHECK(match_detections(pred, gt, o).tp.size() == 1);  // 5/10
  o.denominator = OverlapDenominator::ground_truth;
  CHECK(match_detections(pred, gt, o).tp.empty());  // 5/100
  o.denominator = OverlapDenominator::union_of_both;
  o.overlap_frac = 0.05;
  CHECK(match_detections(pred, gt, o).tp.empty());  // 5/105
  CHECK(parse_overlap_denominator("union") == OverlapDenominator::union_of_both);
  CHECK(overlap_denominator_name(OverlapDenominator::ground_truth) == "gt");
  CHECK_THROWS_AS(parse_overlap_denominator("both"), Error);
}

TEST_CASE("credit goes to the largest intersection") {
  const LesionMap gt = map_of({blob(run(0, 10), Grade::gs3_4), blob(run(20, 10), Grade::gs8_plus)});
  const LesionMap pred = map_of({blob(run(8, 16), Grade::gs3_4)});  // 2 voxels of lesion 0, 4 of lesion 1
  const auto credits = credit_predictions(pred, gt, {});
  REQUIRE(credits.size() == 1);
  CHECK(credits[0].gt == std::optional<std::size_t>(1));
  CHECK(credits[0].intersection == 4);
  const MatchResult r = match_detections(pred, gt, {});
  CHECK(r.fn == std::vector<std::size_t>{0});
}

TEST_CASE("duplicates and the strict mode") {
  const LesionMap gt = map_of({blob(run(0, 20), Grade::gs3_4)});
  const LesionMap pred = map_of({blob(run(0, 10), Grade::gs3_4, 0.9), blob(run(10, 4), Grade::gs3_4, 0.8)});
  const MatchResult loose = match_detections(pred, gt, {});
  CHECK(loose.tp.size() == 2);
  CHECK(loose.fp.empty());
  CHECK(loose.detected_lesions() == 1);
  MatchOptions strict;
  strict.strict = true;
  const MatchResult s = match_detections(pred, gt, strict);
  REQUIRE(s.tp.size() == 1);
  CHECK(s.tp[0].pred == 0);  // Dice 20/30 beats 8/24
  CHECK(s.fp == std::vector<std::size_t>{1});
}

TEST_CASE("score threshold removes predictions from both TP and FP") {
  const LesionMap gt = map_of({blob(run(0, 20), Grade::gs3_4)});
  const LesionMap pred = map_of({blob(run(0, 10), Grade::gs3_4, 0.4), blob(run(200, 10), Grade::gs3_4, 0.7)});
  MatchOptions o;
  o.score_threshold = 0.5;
  const MatchResult r = match_detections(pred, gt, o);
  CHECK(r.n_predictions == 1);
  CHECK(r.tp.empty());
  CHECK(r.fp == std::vector<std::size_t>{1});
  CHECK(r.fn.size() == 1);
}

TEST_CASE("bookkeeping invariants on random maps") {
  oracle::Gen gen(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<LesionCluster> g, p;
    const int ng = gen.integer(0, 5), np = gen.integer(0, 8);
    for (int k = 0; k < ng; ++k) g.push_back(blob(run(static_cast<std::size_t>(k * 60), static_cast<std::size_t>(gen.integer(1, 50))), Grade::gs3_4));
    for (int k = 0; k < np; ++k)
      p.push_back(blob(run(static_cast<std::size_t>(gen.integer(0, 400)), static_cast<std::size_t>(gen.integer(1, 40))),
                       Grade::gs3_4, gen.real(0, 1)));
    MatchOptions o;
    o.score_threshold = gen.real(0, 0.5);
    o.strict = gen.coin();
    const MatchResult r = match_detections(map_of(p), map_of(g), o);
    CHECK(r.tp.size() + r.fp.size() == r.n_predictions);
    CHECK(r.detected_lesions() <= r.n_gt);
    CHECK(r.detected_lesions() + r.fn.size() == r.n_gt);
    if (o.strict) CHECK(r.tp.size() == r.detected_lesions());
  }
}

TEST_CASE("best Dice assignment and its tie rules") {
  const LesionCluster gt = blob(run(0, 10), Grade::gs3_4);
  const LesionCluster a = blob(run(0, 5), Grade::gs4_3);   // Dice 10/15
  const LesionCluster b = blob(run(5, 5), Grade::gs3_4);   // Dice 10/15, same intersection
  const LesionCluster c = blob(run(0, 10), Grade::gs8_plus);
  std::vector<const LesionCluster*> ab{&a, &b};
  CHECK(best_dice_assignment(gt, ab) == 1);  // lower grade wins the tie
  std::vector<const LesionCluster*> abc{&a, &b, &c};
  CHECK(best_dice_assignment(gt, abc) == 2);
  CHECK_THROWS_AS(best_dice_assignment(gt, std::vector<const LesionCluster*>{}), Error);
}

TEST_CASE("point protocol grades by the modal grade of the covering CS cluster") {
  const Dims d{6, 1, 1};
  // labels: GS3+4 GS4+3 GS4+3 | prostate | GS3+4 GS4+3
  const Volume labels(d, {1, 1, 3}, VolumeKind::label, {3, 4, 4, 1, 3, 4});
  const LesionMap cs = cs_lesion_maps(labels, Connectivity::six);
  REQUIRE(cs.size() == 2);
  CHECK(point_in_cluster_grade({0, 0, 0}, cs, labels) == Grade::gs4_3);
  CHECK(point_in_cluster_grade({4, 0, 0}, cs, labels) == Grade::gs4_3);  // tie goes to the higher grade
  CHECK(point_in_cluster_grade({3, 0, 0}, cs, labels) == Grade::gs6);    // uncovered
  CHECK_THROWS_AS(point_in_cluster_grade({6, 0, 0}, cs, labels), Error);
}

TEST_CASE("grading records") {
  const LesionMap gt = map_of({blob(run(0, 20), Grade::gs3_4), blob(run(100, 20), Grade::gs8_plus),
                               blob(run(200, 20), Grade::gs6)});
  const LesionMap pred = map_of({blob(run(0, 20), Grade::gs4_3, 0.8), blob(run(200, 20), Grade::gs6, 0.6),
                                 blob(run(300, 20), Grade::gs3_4, 0.9)});
  const auto records = grade_records(pred, gt, {}, "p1", 2);
  REQUIRE(records.size() == 3);
  CHECK(records[0].gt_grade == Grade::gs3_4);
  CHECK(records[0].pred_grade == Grade::gs4_3);
  CHECK(records[0].score == 0.8);
  CHECK(records[0].dice == 1.0);
  CHECK(!records[1].pred_grade.has_value());
  CHECK(records[2].pred_grade == Grade::gs6);
  CHECK(records[2].patient_id == "p1");
  CHECK(records[2].fold == 2);

  MatchOptions high;
  high.score_threshold = 0.7;
  const auto filtered = grade_records(pred, gt, high, "p1", 2);
  CHECK(!filtered[2].pred_grade.has_value());

  std::stringstream csv;
  write_records_csv(csv, records);
  CHECK(csv.str().rfind("patient_id,fold,zone,gt_grade,pred_grade,score,dice,overlap_frac\n", 0) == 0);
  CHECK(csv.str().find("MISSED") != std::string::npos);
  CHECK(read_records_csv(csv) == records);
}

TEST_CASE("malformed records CSV") {
  std::istringstream bad("patient_id,fold,zone,gt_grade,pred_grade,score,dice,overlap_frac\np,0,PZ,GS7,GS6,1,1,1\n");
  CHECK_THROWS_AS(read_records_csv(bad), Error);
  std::istringstream short_row("p,0,PZ\n");
  CHECK_THROWS_AS(read_records_csv(short_row), Error);
}
