#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "prosteval/matching.hpp"

namespace prosteval {

// ---------------------------------------------------------------------------
// FROC

struct FrocPoint {
  double threshold = 0.0;
  double mean_fp = 0.0;
  double sensitivity = 0.0;

  friend bool operator==(const FrocPoint&, const FrocPoint&) = default;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // strictly increasing threshold
  std::size_t n_patients = 0;
  std::size_t n_gt_lesions = 0;
};

/// Scored predictions of one patient with their threshold-free credit.
struct PatientDetections {
  struct Prediction {
    double score = 0.0;
    std::optional<std::size_t> gt;
  };
  std::vector<Prediction> predictions;
  std::size_t n_gt = 0;
};

PatientDetections patient_detections(const LesionMap& pred, const LesionMap& gt, const MatchOptions& options);

/// Threshold sweep at every distinct score plus the sentinels 0 and just above 1.
/// Sensitivity is detected lesions over all lesions, mean_fp is FPs over patients.
FrocCurve froc_curve(std::span<const PatientDetections> patients, bool strict = false);

/// Per-grade sweep on GS lesion maps: only predictions and lesions of grade g
/// take part, so a misgraded detection is an FN for its true grade and an FP
/// for the predicted one.
struct MapPair {
  const LesionMap* pred = nullptr;
  const LesionMap* gt = nullptr;
};
FrocCurve froc_by_grade(std::span<const MapPair> patients, Grade g, const MatchOptions& options);

/// Largest sensitivity among points with mean_fp <= fp_rate (step readout), 0 if none.
double sensitivity_at_fp(const FrocCurve& curve, double fp_rate);

/// Aggregate of per-fold curves on an fp grid: mean +/- 2 population std.
struct AggregatePoint {
  double fp = 0.0;
  double mean = 0.0;
  double std = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
std::vector<AggregatePoint> aggregate_folds(std::span<const FrocCurve> curves, std::span<const double> fp_grid);

/// threshold,mean_fp_per_patient,sensitivity
void write_froc_csv(std::ostream& out, const FrocCurve& curve);
/// fp,sens_mean,sens_lo,sens_hi
void write_aggregate_csv(std::ostream& out, std::span<const AggregatePoint> points);

// ---------------------------------------------------------------------------
// Grading agreement

struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumGrades>, kNumGrades> counts{};  // [gt][pred]
  bool include_fn_as_gs6 = false;

  std::int64_t total() const;
  std::int64_t row_sum(int i) const;
  std::int64_t col_sum(int j) const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// TP-only matrix counts detected lesions by (gt, pred). With
/// include_fn_as_gs6, missed lesions are added in the GS6 column.
ConfusionMatrix confusion_matrix(std::span<const DetectionRecord> records, bool include_fn_as_gs6);

struct KappaResult {
  double kappa = 0.0;
  bool degenerate = false;  // expected disagreement was zero
  std::optional<double> bootstrap_mean;
  std::optional<double> bootstrap_std;
  int n_iterations = 0;
};

/// Quadratic weights (i-j)^2/(K-1)^2, expected counts from the marginals.
/// Zero expected disagreement gives 1 when observed disagreement is also zero, else 0.
KappaResult quadratic_weighted_kappa(const ConfusionMatrix& cm);

enum class BootstrapUnit : std::uint8_t { lesion, patient };

/// Kappa of each resample, resampling records (or whole patients) with
/// replacement. Iteration k draws from substream k of `seed`. Resamples whose
/// matrix is empty are skipped.
std::vector<double> bootstrap_kappa_samples(std::span<const DetectionRecord> records, bool include_fn_as_gs6,
                                            int n_iter, std::uint64_t seed,
                                            BootstrapUnit unit = BootstrapUnit::lesion);

/// Kappa of the full matrix plus bootstrap mean and population std.
KappaResult bootstrap_kappa(std::span<const DetectionRecord> records, bool include_fn_as_gs6, int n_iter,
                            std::uint64_t seed, BootstrapUnit unit = BootstrapUnit::lesion);

// ---------------------------------------------------------------------------

/// 2|A∩B| / (|A|+|B|) over nonzero voxels; 1 when both are empty.
double dice_coefficient(const Volume& a, const Volume& b);
double dice_coefficient(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct WilcoxonResult {
  double p_value = 1.0;
  double statistic = 0.0;  // W+, sum of ranks of positive differences
  std::size_t n = 0;       // pairs left after dropping zero differences
  bool exact = true;
};

inline constexpr std::size_t kWilcoxonExactLimit = 20;

/// One-sided signed-rank test of x > y. Exact null distribution (average ranks
/// for ties) for n <= 20, normal approximation with tie correction beyond.
WilcoxonResult wilcoxon_one_sided(std::span<const double> x, std::span<const double> y);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};
MeanStd mean_std(std::span<const double> values);

}  // namespace prosteval
