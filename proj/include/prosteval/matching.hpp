#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prosteval/cluster.hpp"

namespace prosteval {

/// Whose volume the overlap fraction is measured against.
enum class OverlapDenominator : std::uint8_t { predicted, ground_truth, union_of_both };

OverlapDenominator parse_overlap_denominator(std::string_view text);
std::string_view overlap_denominator_name(OverlapDenominator d);

struct MatchOptions {
  double overlap_frac = 0.10;
  double score_threshold = 0.0;  // predictions qualify when score >= threshold
  OverlapDenominator denominator = OverlapDenominator::predicted;
  /// When several qualifying predictions credit the same lesion, count all but
  /// the best-Dice one as false positives.
  bool strict = false;

  void validate() const;
};

/// Threshold-independent outcome for one predicted cluster: the ground-truth
/// lesion it would be credited to, if its overlap passes the rule.
struct PredictionCredit {
  double score = 0.0;
  std::optional<std::size_t> gt;  // credited lesion, if any
  std::size_t intersection = 0;    // with the largest-intersection lesion
  double overlap_frac = 0.0;       // intersection / denominator for that lesion
  double dice = 0.0;               // Dice with that lesion
};

std::vector<PredictionCredit> credit_predictions(const LesionMap& pred, const LesionMap& gt,
                                                 const MatchOptions& options);

struct TruePositive {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double overlap_frac = 0.0;
  double dice = 0.0;
};

struct MatchResult {
  std::vector<TruePositive> tp;  // (prediction, lesion) pairs
  std::vector<std::size_t> fp;   // predicted cluster indices
  std::vector<std::size_t> fn;   // ground-truth lesion indices
  std::size_t n_predictions = 0;  // qualifying (score >= threshold)
  std::size_t n_gt = 0;

  /// Distinct ground-truth lesions with at least one true positive.
  std::size_t detected_lesions() const { return n_gt - fn.size(); }
};

/// Detection bookkeeping at one score threshold. A qualifying prediction is a
/// TP when its overlap with its largest-intersection lesion reaches
/// overlap_frac, otherwise an FP. Lesions credited by no qualifying
/// prediction are FN.
MatchResult match_detections(const LesionMap& pred, const LesionMap& gt, const MatchOptions& options);

/// Candidate maximizing Dice with `gt`; ties go to the larger intersection and
/// then the lower grade. Returns an index into `candidates`.
std::size_t best_dice_assignment(const LesionCluster& gt, std::span<const LesionCluster* const> candidates);

/// Grade reported for a reference point: the modal GS grade (ties to the
/// higher grade) of the CS cluster containing it, else GS6.
Grade point_in_cluster_grade(const Index3& point, const LesionMap& cs_map, const Volume& gs_labels);

/// One row per ground-truth lesion.
struct DetectionRecord {
  std::string patient_id;
  int fold = 0;
  Zone zone = Zone::unknown;
  Grade gt_grade = Grade::gs6;
  std::optional<Grade> pred_grade;  // empty means missed
  double score = 0.0;
  double dice = 0.0;
  double overlap_frac = 0.0;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

/// Grading records from GS lesion maps. A lesion is detected when a qualifying
/// prediction (of any grade) is credited to it; the reported grade is the
/// grade of the best-Dice qualifying prediction intersecting it.
std::vector<DetectionRecord> grade_records(const LesionMap& pred_gs, const LesionMap& gt_gs,
                                           const MatchOptions& options, const std::string& patient_id, int fold);

/// Header: patient_id,fold,zone,gt_grade,pred_grade,score,dice,overlap_frac
void write_records_csv(std::ostream& out, std::span<const DetectionRecord> records);
std::vector<DetectionRecord> read_records_csv(std::istream& in);

}  // namespace prosteval
