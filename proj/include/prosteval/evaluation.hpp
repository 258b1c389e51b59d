#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prosteval/json_io.hpp"
#include "prosteval/metrics.hpp"

namespace prosteval {

enum class ZoneFilter : std::uint8_t { none, pz, tz };

ZoneFilter parse_zone_filter(std::string_view text);
std::string_view zone_filter_name(ZoneFilter z);

/// Cohort layout:
///   <gt_dir>/<id>_labels.vol.json    label volume (required)
///   <gt_dir>/<id>_pz.vol.json, _tz   zone masks (required for zone filtering)
///   <pred_dir>/<id>_prob_c0..c5      softmax channels
///   <pred_dir>/<id>_prostate         optional prostate-branch probability
///   manifest                         {"patients":[{"id":..,"fold":..},..]}
struct EvaluationConfig {
  std::filesystem::path gt_dir;
  std::filesystem::path pred_dir;
  std::filesystem::path output_dir;
  std::filesystem::path manifest;

  int connectivity = 26;
  double min_volume_mm3 = 45.0;  // applied to predicted and ground-truth maps
  double overlap_frac = 0.10;
  OverlapDenominator denominator = OverlapDenominator::predicted;
  bool strict_duplicates = false;
  double grading_score_threshold = 0.0;  // qualifying predictions for the confusion matrices
  ZoneFilter zone = ZoneFilter::none;

  int bootstrap_iterations = 1000;
  BootstrapUnit bootstrap_unit = BootstrapUnit::lesion;
  std::uint64_t seed = 0;
  int threads = 1;

  std::vector<double> fp_grid;         // empty selects 0, 0.25, ..., 5
  std::vector<double> readout_fp{1.0, 1.5};
  bool write_intermediates = true;
  std::optional<std::filesystem::path> points_file;

  void validate() const;
  MatchOptions match_options() const;
};

/// Missing keys keep their defaults; relative paths resolve against `base`.
EvaluationConfig evaluation_config_from_json(const json& j, const std::filesystem::path& base = {});
json evaluation_config_to_json(const EvaluationConfig& config);

struct ManifestEntry {
  std::string id;
  int fold = 0;
};
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct EvaluationReport {
  json report;                       // contents of report.json
  std::vector<std::string> warnings;  // degenerate statistics encountered
};

/// Labels -> lesion maps -> volume filter -> zone filter -> matching sweep ->
/// FROC / confusion matrices / kappa / Dice. Writes report.json and the CSV
/// bundle into output_dir. Patients are processed in parallel and aggregated in
/// manifest order, so the bundle is byte-identical across runs.
EvaluationReport run_full_evaluation(const EvaluationConfig& config);

/// FROC only: pooled CS curve (grade empty) or the per-grade curve.
FrocCurve cohort_froc(const EvaluationConfig& config, std::optional<Grade> grade);

/// Point-based grading: each point row `patient_id,x_vox,y_vox,z_vox,zone,gs_label`
/// gets the modal GS grade of the CS cluster it falls in, else GS6. Returns
/// the confusion matrix with kappa and bootstrap statistics as JSON.
json point_protocol(const EvaluationConfig& config, const std::filesystem::path& points_csv);

}  // namespace prosteval
