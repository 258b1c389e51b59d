#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "prosteval/cluster.hpp"
#include "prosteval/error.hpp"
#include "prosteval/json_io.hpp"
#include "prosteval/netmath.hpp"
#include "prosteval/phantom.hpp"
#include "support/tmpdir.hpp"

using namespace prosteval;

namespace {

PhantomConfig small_config(std::uint64_t seed) {
  PhantomConfig c;
  c.seed = seed;
  c.n_patients = 4;
  c.n_folds = 2;
  c.dims = {64, 64, 16};
  c.fp_per_patient = 2;
  return c;
}

int chebyshev_gap(const VoxelList& a, const VoxelList& b, const Dims& d) {
  int best = 1 << 30;
  for (std::size_t u : a)
    for (std::size_t v : b) {
      const auto nx = static_cast<std::size_t>(d.nx), ny = static_cast<std::size_t>(d.ny);
      const auto gap = [](std::size_t a, std::size_t b) { return static_cast<int>(a > b ? a - b : b - a); };
      best = std::min(best, std::max({gap(u % nx, v % nx), gap(u / nx % ny, v / nx % ny), gap(u / (nx * ny), v / (nx * ny))}));
    }
  return best;
}

}  // namespace

TEST_CASE("phantom generation is a function of the seed") {
  const auto a = ledger_to_json(generate_cohort(small_config(3)).ledger);
  const auto b = ledger_to_json(generate_cohort(small_config(3)).ledger);
  const auto c = ledger_to_json(generate_cohort(small_config(4)).ledger);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("blobs are separated and stay isolated clusters") {
  const PhantomConfig cfg = small_config(11);
  const PhantomCohort cohort = generate_cohort(cfg);
  REQUIRE(cohort.patients.size() == 4);
  for (std::size_t p = 0; p < cohort.patients.size(); ++p) {
    const PhantomPatient& patient = cohort.patients[p];
    const PatientLedger& entry = cohort.ledger.patients[p];
    CHECK(patient.id == entry.id);
    CHECK(entry.fold == static_cast<int>(p) % cfg.n_folds);
    CHECK(entry.lesions.size() == 4);
    CHECK(entry.false_positives.size() == 2);
    std::vector<const VoxelList*> blobs;
    for (const auto& l : entry.lesions) blobs.push_back(&l.voxels);
    for (const auto& f : entry.false_positives) blobs.push_back(&f.voxels);
    for (std::size_t i = 0; i < blobs.size(); ++i)
      for (std::size_t j = i + 1; j < blobs.size(); ++j) CHECK(chebyshev_gap(*blobs[i], *blobs[j], cfg.dims) >= 3);

    // Every lesion is one 26-connected GS cluster with exactly its voxels and its zone.
    const LesionMap gs = gs_lesion_maps(patient.labels, Connectivity::twenty_six);
    CHECK(gs.size() == entry.lesions.size());
    for (const auto& l : entry.lesions) {
      CHECK(!l.voxels.empty());
      CHECK(std::is_sorted(l.voxels.begin(), l.voxels.end()));
      CHECK(l.zone == patient.zones.majority_zone(l.voxels));
      CHECK(l.zone != Zone::unknown);
      const bool found = std::any_of(gs.clusters.begin(), gs.clusters.end(), [&](const LesionCluster& c) {
        return c.voxels == l.voxels && c.grade == l.grade;
      });
      CHECK(found);
    }
  }
}

TEST_CASE("degraded predictions realize the detection script") {
  PhantomConfig cfg = small_config(21);
  cfg.miss_fraction = 0.3;
  cfg.misgrade[1] = {0.0, 0.5, 0.5, 0.0};
  const PhantomCohort cohort = generate_cohort(cfg);
  for (std::size_t p = 0; p < cohort.patients.size(); ++p) {
    const PatientLedger& entry = cohort.ledger.patients[p];
    const ProbStack probs = degrade_prediction(cohort.patients[p], entry);
    const Volume pred = label_from_probs(probs);
    for (const auto& l : entry.lesions) {
      if (l.detected) {
        CHECK(l.score >= cfg.score_min);
        CHECK(l.score <= cfg.score_max);
        CHECK(static_cast<double>(static_cast<float>(l.score)) == l.score);
      } else {
        CHECK(l.score == 0.0);
      }
      const float want = l.detected ? static_cast<float>(label_of(l.pred_grade)) : static_cast<float>(label::prostate);
      for (std::size_t v : l.voxels) {
        CHECK(pred[v] == want);
        if (l.detected) CHECK(probs.prob(label_of(l.pred_grade), v) == static_cast<float>(l.score));
      }
    }
    for (const auto& f : entry.false_positives) {
      CHECK(f.score == static_cast<double>(static_cast<float>(cfg.fp_score)));
      CHECK(f.grade != Grade::gs6);  // default weights exclude GS6
      for (std::size_t v : f.voxels) CHECK(pred[v] == static_cast<float>(label_of(f.grade)));
    }
  }
}

TEST_CASE("scripted extremes") {
  PhantomConfig cfg = small_config(5);
  cfg.miss_fraction = 1.0;
  for (const auto& p : generate_cohort(cfg).ledger.patients)
    for (const auto& l : p.lesions) CHECK(!l.detected);

  cfg.miss_fraction = 0.0;
  for (auto& row : cfg.misgrade) row = {0.0, 0.0, 0.0, 1.0};
  for (const auto& p : generate_cohort(cfg).ledger.patients)
    for (const auto& l : p.lesions) {
      CHECK(l.detected);
      CHECK(l.pred_grade == Grade::gs8_plus);
    }
}

TEST_CASE("phantom config validation") {
  PhantomConfig cfg = small_config(1);
  cfg.score_min = 0.5;
  CHECK_THROWS_AS(generate_cohort(cfg), Error);
  cfg = small_config(1);
  cfg.misgrade[0] = {0.5, 0.4, 0.0, 0.0};
  CHECK_THROWS_AS(generate_cohort(cfg), Error);
  cfg = small_config(1);
  cfg.dims = {4, 4, 2};
  CHECK_THROWS_AS(generate_cohort(cfg), Error);
  cfg = small_config(1);
  cfg.lesions_per_grade = {60, 60, 60, 60};
  cfg.max_placement_attempts = 20;
  CHECK_THROWS_AS(generate_cohort(cfg), Error);
}

TEST_CASE("ledger and config JSON round trip") {
  PhantomConfig cfg = small_config(8);
  cfg.miss_fraction = 0.25;
  const PhantomLedger ledger = generate_cohort(cfg).ledger;
  const json j = ledger_to_json(ledger);
  CHECK(ledger_to_json(ledger_from_json(j)) == j);
  CHECK(phantom_config_to_json(phantom_config_from_json(phantom_config_to_json(cfg))) == phantom_config_to_json(cfg));
  CHECK(phantom_config_from_json(json::object()).n_patients == PhantomConfig{}.n_patients);
  CHECK_THROWS_AS(ledger_from_json(json{{"patients", 3}}), Error);
}

TEST_CASE("write_cohort lays out ground truth, predictions and manifest") {
  testing_support::TempDir dir("phantom_layout");
  const PhantomCohort cohort = generate_cohort(small_config(2));
  write_cohort(cohort, dir.path());
  const json manifest = read_json_file(dir / "cohort.json");
  CHECK(manifest.at("n_folds") == 2);
  REQUIRE(manifest.at("patients").size() == 4);
  CHECK(manifest["patients"][3]["id"] == "p003");
  CHECK(manifest["patients"][3]["fold"] == 1);
  CHECK(read_json_file(dir / "ledger.json") == ledger_to_json(cohort.ledger));
  for (const PhantomPatient& p : cohort.patients) {
    const Volume labels = read_volume(dir / "gt" / (p.id + "_labels"));
    CHECK(std::ranges::equal(labels.values(), p.labels.values()));
    CHECK(std::ranges::equal(read_volume(dir / "gt" / (p.id + "_pz")).values(), p.zones.pz().values()));
    CHECK(std::ranges::equal(read_volume(dir / "gt" / (p.id + "_tz")).values(), p.zones.tz().values()));
    const ProbStack probs = read_prob_stack(dir / "pred" / (p.id + "_prob"));
    CHECK(probs.dims() == p.labels.dims());
  }
}
