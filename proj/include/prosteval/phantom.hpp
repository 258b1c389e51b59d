#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prosteval/cluster.hpp"
#include "prosteval/volume.hpp"

namespace prosteval {

/// Synthetic cohort recipe. Every random decision is drawn from a
/// CounterRng substream of `seed`, one per patient.
struct PhantomConfig {
  std::uint64_t seed = 0;
  int n_patients = 10;
  int n_folds = 5;
  Dims dims{96, 96, 24};
  Spacing spacing{1.0, 1.0, 3.0};

  std::array<int, kNumGrades> lesions_per_grade{1, 1, 1, 1};  // per patient
  double radius_min_mm = 3.0;
  double radius_max_mm = 6.0;

  /// Gland semi-axes as fractions of the grid extent; the TZ is the inner
  /// ellipsoid scaled by tz_scale, the PZ the remaining shell.
  std::array<double, 3> gland_fraction{0.36, 0.32, 0.38};
  double tz_scale = 0.55;

  double miss_fraction = 0.0;
  /// Row g: probability that a detected grade-g lesion is predicted as each grade.
  std::array<std::array<double, kNumGrades>, kNumGrades> misgrade{{
      {1.0, 0.0, 0.0, 0.0},
      {0.0, 1.0, 0.0, 0.0},
      {0.0, 0.0, 1.0, 0.0},
      {0.0, 0.0, 0.0, 1.0},
  }};
  double score_min = 0.55;  // detected-lesion scores, uniform in [min, max]
  double score_max = 0.95;

  int fp_per_patient = 0;
  double fp_score = 0.9;
  std::array<double, kNumGrades> fp_grade_weights{0.0, 1.0, 1.0, 1.0};

  int max_placement_attempts = 2000;

  void validate() const;
};

struct PhantomLesion {
  Grade grade = Grade::gs6;
  Zone zone = Zone::unknown;
  VoxelList voxels;
  bool detected = false;
  Grade pred_grade = Grade::gs6;  // meaningful when detected
  double score = 0.0;             // float-representable, so it survives f32 storage exactly
};

struct PhantomFalsePositive {
  Grade grade = Grade::gs6;
  Zone zone = Zone::unknown;
  VoxelList voxels;
  double score = 0.0;
};

struct PatientLedger {
  std::string id;
  int fold = 0;
  std::vector<PhantomLesion> lesions;
  std::vector<PhantomFalsePositive> false_positives;
};

struct PhantomLedger {
  PhantomConfig config;
  std::vector<PatientLedger> patients;
};

struct PhantomPatient {
  std::string id;
  int fold = 0;
  Volume labels;
  ZoneMask zones;
};

struct PhantomCohort {
  std::vector<PhantomPatient> patients;
  PhantomLedger ledger;
};

/// Ellipsoidal gland with PZ/TZ shells, non-overlapping ellipsoid lesions kept
/// at Chebyshev distance >= 3 from each other and from injected false
/// positives (so 26-connectivity never merges them), and the full detection
/// script. Fails when placement does not succeed within the attempt budget.
PhantomCohort generate_cohort(const PhantomConfig& config);

/// Realizes the script as softmax output: detected lesions and false positives
/// carry their score on the predicted grade channel and the remainder on the
/// prostate channel; missed lesions and the gland are prostate; outside is
/// background.
ProbStack degrade_prediction(const PhantomPatient& patient, const PatientLedger& ledger);

/// Writes `<dir>/gt/<id>_labels|_pz|_tz`, `<dir>/pred/<id>_prob_c*`,
/// `<dir>/ledger.json` and the fold manifest `<dir>/cohort.json`.
void write_cohort(const PhantomCohort& cohort, const std::filesystem::path& dir);

}  // namespace prosteval
