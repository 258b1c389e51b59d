#include "prosteval/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "format.hpp"
#include "parallel.hpp"
#include "prosteval/error.hpp"
#include "prosteval/netmath.hpp"

namespace prosteval {

namespace fs = std::filesystem;

ZoneFilter parse_zone_filter(std::string_view text) {
  if (text == "none" || text.empty()) return ZoneFilter::none;
  if (text == "pz" || text == "PZ") return ZoneFilter::pz;
  if (text == "tz" || text == "TZ") return ZoneFilter::tz;
  fail(ErrorKind::config, "zone filter must be none, pz or tz, got '" + std::string(text) + "'");
}

std::string_view zone_filter_name(ZoneFilter z) {
  switch (z) {
    case ZoneFilter::none: return "none";
    case ZoneFilter::pz: return "pz";
    case ZoneFilter::tz: return "tz";
  }
  return "none";
}

void EvaluationConfig::validate() const {
  connectivity_from_int(connectivity);
  require(min_volume_mm3 >= 0.0, ErrorKind::config, "min_volume_mm3 must be nonnegative");
  match_options().validate();
  require(bootstrap_iterations >= 0, ErrorKind::config, "bootstrap_iterations must be nonnegative");
  require(threads >= 1, ErrorKind::config, "threads must be >= 1");
  for (double fp : fp_grid) require(fp >= 0.0, ErrorKind::config, "fp grid values must be nonnegative");
  for (double fp : readout_fp) require(fp >= 0.0, ErrorKind::config, "readout FP rates must be nonnegative");
}

MatchOptions EvaluationConfig::match_options() const {
  MatchOptions o;
  o.overlap_frac = overlap_frac;
  o.denominator = denominator;
  o.strict = strict_duplicates;
  return o;
}

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::vector<double> default_fp_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k) grid.push_back(0.25 * k);
  return grid;
}

}  // namespace

EvaluationConfig evaluation_config_from_json(const json& j, const fs::path& base) {
  EvaluationConfig c;
  try {
    if (j.contains("gt_dir")) c.gt_dir = resolve(j.at("gt_dir").get<std::string>(), base);
    if (j.contains("pred_dir")) c.pred_dir = resolve(j.at("pred_dir").get<std::string>(), base);
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>(), base);
    if (j.contains("manifest")) c.manifest = resolve(j.at("manifest").get<std::string>(), base);
    c.connectivity = j.value("connectivity", c.connectivity);
    c.min_volume_mm3 = j.value("min_volume_mm3", c.min_volume_mm3);
    c.overlap_frac = j.value("overlap_frac", c.overlap_frac);
    if (j.contains("overlap_denominator"))
      c.denominator = parse_overlap_denominator(j.at("overlap_denominator").get<std::string>());
    c.strict_duplicates = j.value("strict_duplicates", c.strict_duplicates);
    c.grading_score_threshold = j.value("grading_score_threshold", c.grading_score_threshold);
    if (j.contains("zone")) c.zone = parse_zone_filter(j.at("zone").get<std::string>());
    c.bootstrap_iterations = j.value("bootstrap_iterations", c.bootstrap_iterations);
    if (j.contains("bootstrap_unit")) {
      const auto unit = j.at("bootstrap_unit").get<std::string>();
      require(unit == "lesion" || unit == "patient", ErrorKind::config, "bootstrap_unit must be lesion or patient");
      c.bootstrap_unit = unit == "lesion" ? BootstrapUnit::lesion : BootstrapUnit::patient;
    }
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.fp_grid = j.value("fp_grid", c.fp_grid);
    c.readout_fp = j.value("readout_fp", c.readout_fp);
    c.write_intermediates = j.value("write_intermediates", c.write_intermediates);
    if (j.contains("points") && !j.at("points").is_null()) c.points_file = resolve(j.at("points").get<std::string>(), base);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("invalid evaluation config: ") + e.what());
  }
  c.validate();
  return c;
}

json evaluation_config_to_json(const EvaluationConfig& c) {
  return {{"connectivity", c.connectivity},
          {"min_volume_mm3", c.min_volume_mm3},
          {"overlap_frac", c.overlap_frac},
          {"overlap_denominator", overlap_denominator_name(c.denominator)},
          {"strict_duplicates", c.strict_duplicates},
          {"grading_score_threshold", c.grading_score_threshold},
          {"zone", zone_filter_name(c.zone)},
          {"bootstrap_iterations", c.bootstrap_iterations},
          {"bootstrap_unit", c.bootstrap_unit == BootstrapUnit::lesion ? "lesion" : "patient"},
          {"seed", c.seed},
          {"fp_grid", c.fp_grid.empty() ? default_fp_grid() : c.fp_grid},
          {"readout_fp", c.readout_fp}};
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const json j = read_json_file(path);
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  try {
    for (const json& p : j.at("patients")) {
      ManifestEntry e{p.at("id").get<std::string>(), p.at("fold").get<int>()};
      require(!e.id.empty(), ErrorKind::config, "manifest contains an empty patient id");
      require(seen.insert(e.id).second, ErrorKind::config, "patient '" + e.id + "' listed twice in the manifest");
      entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "invalid fold manifest " + path.string() + ": " + e.what());
  }
  require(!entries.empty(), ErrorKind::config, "fold manifest lists no patients");
  return entries;
}

namespace {

struct PatientResult {
  std::string id;
  int fold = 0;
  double prostate_dice = 0.0;
  bool dice_both_empty = false;
  PatientDetections cs;
  std::array<PatientDetections, kNumGrades> by_grade;
  std::vector<DetectionRecord> records;
  json clusters;
};

Zone zone_of(ZoneFilter z) { return z == ZoneFilter::pz ? Zone::pz : Zone::tz; }

LesionMap postprocess(LesionMap map, const EvaluationConfig& cfg, const std::optional<ZoneMask>& zones) {
  map = filter_by_volume(std::move(map), cfg.min_volume_mm3);
  if (zones) assign_zones(map, *zones);
  if (cfg.zone != ZoneFilter::none) map = filter_by_zone(std::move(map), zone_of(cfg.zone));
  return map;
}

std::optional<ZoneMask> load_zones(const EvaluationConfig& cfg, const std::string& id) {
  const fs::path pz = cfg.gt_dir / (id + "_pz");
  const fs::path tz = cfg.gt_dir / (id + "_tz");
  if (!fs::exists(volume_header_path(pz)) || !fs::exists(volume_header_path(tz))) {
    require(cfg.zone == ZoneFilter::none, ErrorKind::data, "zone filtering requested but patient '" + id +
                                                                "' has no PZ/TZ masks");
    return std::nullopt;
  }
  return ZoneMask(read_volume(pz), read_volume(tz));
}

ProbStack load_predictions(const EvaluationConfig& cfg, const std::string& id) {
  const fs::path prefix = cfg.pred_dir / (id + "_prob");
  require(fs::exists(volume_header_path(prob_channel_path(prefix, 0))), ErrorKind::data,
          "no prediction found for patient '" + id + "' in " + cfg.pred_dir.string());
  return read_prob_stack(prefix);
}

PatientResult evaluate_patient(const EvaluationConfig& cfg, const ManifestEntry& entry) {
  const Connectivity conn = connectivity_from_int(cfg.connectivity);
  const fs::path labels_path = cfg.gt_dir / (entry.id + "_labels");
  require(fs::exists(volume_header_path(labels_path)), ErrorKind::data,
          "no ground truth found for patient '" + entry.id + "' in " + cfg.gt_dir.string());
  const Volume gt_labels = read_volume(labels_path);
  require(gt_labels.kind() == VolumeKind::label, ErrorKind::data, "ground truth of '" + entry.id + "' is not a label volume");
  const ProbStack probs = load_predictions(cfg, entry.id);
  require(probs.dims() == gt_labels.dims() && probs.spacing() == gt_labels.spacing(), ErrorKind::data,
          "prediction and ground-truth grids differ for patient '" + entry.id + "'");
  const std::optional<ZoneMask> zones = load_zones(cfg, entry.id);
  if (zones) require(zones->pz().same_grid(gt_labels), ErrorKind::data, "zone masks of '" + entry.id + "' are off-grid");
  const Volume pred_labels = label_from_probs(probs);

  PatientResult r;
  r.id = entry.id;
  r.fold = entry.fold;

  std::vector<std::uint8_t> gt_gland(gt_labels.size());
  std::vector<std::uint8_t> pred_gland(gt_labels.size());
  for (std::size_t i = 0; i < gt_labels.size(); ++i) gt_gland[i] = gt_labels[i] != label::background;
  const fs::path prostate_path = cfg.pred_dir / (entry.id + "_prostate");
  if (fs::exists(volume_header_path(prostate_path))) {
    const Volume prostate = read_volume(prostate_path);
    require(prostate.same_grid(gt_labels), ErrorKind::data, "prostate prediction of '" + entry.id + "' is off-grid");
    for (std::size_t i = 0; i < prostate.size(); ++i) pred_gland[i] = prostate[i] >= 0.5f;
  } else {
    for (std::size_t i = 0; i < pred_labels.size(); ++i) pred_gland[i] = pred_labels[i] != label::background;
  }
  r.prostate_dice = dice_coefficient(gt_gland, pred_gland);
  r.dice_both_empty = std::none_of(gt_gland.begin(), gt_gland.end(), [](auto v) { return v != 0; }) &&
                      std::none_of(pred_gland.begin(), pred_gland.end(), [](auto v) { return v != 0; });

  const LesionMap gt_gs = postprocess(gs_lesion_maps(gt_labels, conn), cfg, zones);
  const LesionMap gt_cs = postprocess(cs_lesion_maps(gt_labels, conn), cfg, zones);
  const LesionMap pred_gs = postprocess(gs_lesion_maps(pred_labels, probs, conn), cfg, zones);
  const LesionMap pred_cs = postprocess(cs_lesion_maps(pred_labels, probs, conn), cfg, zones);

  const MatchOptions options = cfg.match_options();
  r.cs = patient_detections(pred_cs, gt_cs, options);
  for (Grade g : kAllGrades) {
    r.by_grade[static_cast<std::size_t>(grade_index(g))] =
        patient_detections(filter_by_grade(pred_gs, g), filter_by_grade(gt_gs, g), options);
  }
  MatchOptions grading = options;
  grading.score_threshold = cfg.grading_score_threshold;
  r.records = grade_records(pred_gs, gt_gs, grading, entry.id, entry.fold);
  if (cfg.write_intermediates) {
    r.clusters = {{"patient_id", entry.id},
                  {"fold", entry.fold},
                  {"gt_gs", lesion_map_to_json(gt_gs)},
                  {"gt_cs", lesion_map_to_json(gt_cs)},
                  {"pred_gs", lesion_map_to_json(pred_gs)},
                  {"pred_cs", lesion_map_to_json(pred_cs)}};
  }
  return r;
}

std::vector<PatientResult> evaluate_patients(const EvaluationConfig& cfg, const std::vector<ManifestEntry>& manifest) {
  std::vector<std::optional<PatientResult>> slots(manifest.size());
  parallel_for(manifest.size(), cfg.threads, [&](std::size_t i) { slots[i] = evaluate_patient(cfg, manifest[i]); });
  std::vector<PatientResult> results;
  results.reserve(slots.size());
  for (auto& s : slots) results.push_back(std::move(*s));
  return results;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  require(out.good(), ErrorKind::data, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorKind::data, "short write for " + path.string());
}

template <class Writer>
void write_csv(const fs::path& path, Writer&& writer) {
  std::ostringstream os;
  writer(os);
  write_text(path, os.str());
}

std::string fold_key(int fold) { return std::to_string(fold); }

struct StratumOutput {
  json j;
};

// Pooled + per-fold + aggregate FROC for one stratum, with FP-rate readouts.
json froc_section(const std::string& name, const std::vector<const PatientDetections*>& detections,
                  const std::vector<int>& patient_folds, const std::vector<int>& folds, const EvaluationConfig& cfg,
                  const std::vector<double>& grid, std::vector<std::string>& warnings, const fs::path* out_dir,
                  bool required) {
  json section;
  std::vector<PatientDetections> all;
  for (const auto* d : detections) all.push_back(*d);

  std::optional<FrocCurve> pooled;
  std::size_t total_gt = 0;
  for (const auto& d : all) total_gt += d.n_gt;
  if (total_gt == 0) {
    require(!required, ErrorKind::data, "no ground-truth lesions in the requested stratum (" + name + ")");
    warnings.push_back(name + ": no ground-truth lesions; FROC undefined");
    section["pooled"] = nullptr;
  } else {
    pooled = froc_curve(all, cfg.strict_duplicates);
    section["pooled"] = froc_to_json(*pooled);
    if (out_dir) write_csv(*out_dir / ("froc_" + name + ".csv"), [&](std::ostream& os) { write_froc_csv(os, *pooled); });
  }

  json per_fold = json::object();
  std::vector<FrocCurve> fold_curves;
  for (int fold : folds) {
    std::vector<PatientDetections> subset;
    std::size_t n_gt = 0;
    for (std::size_t p = 0; p < all.size(); ++p) {
      if (patient_folds[p] != fold) continue;
      subset.push_back(all[p]);
      n_gt += all[p].n_gt;
    }
    if (n_gt == 0) {
      warnings.push_back(name + ": fold " + fold_key(fold) + " has no ground-truth lesions");
      per_fold[fold_key(fold)] = nullptr;
      continue;
    }
    FrocCurve curve = froc_curve(subset, cfg.strict_duplicates);
    per_fold[fold_key(fold)] = froc_to_json(curve);
    if (out_dir) {
      write_csv(*out_dir / ("froc_" + name + "_fold" + fold_key(fold) + ".csv"),
                [&](std::ostream& os) { write_froc_csv(os, curve); });
    }
    fold_curves.push_back(std::move(curve));
  }
  section["per_fold"] = per_fold;

  if (fold_curves.size() >= 2) {
    const auto agg = aggregate_folds(fold_curves, grid);
    json a = json::array();
    for (const auto& p : agg) {
      a.push_back({{"fp", p.fp}, {"sens_mean", p.mean}, {"sens_std", p.std}, {"sens_lo", p.lo}, {"sens_hi", p.hi}});
    }
    section["aggregate"] = a;
    if (out_dir) {
      write_csv(*out_dir / ("froc_" + name + "_aggregate.csv"), [&](std::ostream& os) { write_aggregate_csv(os, agg); });
    }
  } else {
    section["aggregate"] = nullptr;
  }

  json readouts = json::object();
  for (double fp : cfg.readout_fp) {
    json r;
    r["pooled"] = pooled ? json(sensitivity_at_fp(*pooled, fp)) : json(nullptr);
    if (!fold_curves.empty()) {
      std::vector<double> s;
      for (const auto& c : fold_curves) s.push_back(sensitivity_at_fp(c, fp));
      const MeanStd ms = mean_std(s);
      r["fold_values"] = s;
      r["fold_mean"] = ms.mean;
      r["fold_std"] = ms.std;
    }
    readouts[format_double(fp)] = r;
  }
  section["sensitivity_at_fp"] = readouts;
  return section;
}

json confusion_section(const std::string& name, const std::vector<DetectionRecord>& records, bool include_fn,
                       const std::vector<int>& folds, const EvaluationConfig& cfg,
                       std::vector<std::string>& warnings) {
  json section;
  const ConfusionMatrix pooled = confusion_matrix(records, include_fn);
  if (pooled.total() == 0) {
    warnings.push_back(name + ": confusion matrix is empty; kappa undefined");
    section["pooled"] = nullptr;
  } else {
    KappaResult k = cfg.bootstrap_iterations > 0
                        ? bootstrap_kappa(records, include_fn, cfg.bootstrap_iterations, cfg.seed, cfg.bootstrap_unit)
                        : quadratic_weighted_kappa(pooled);
    if (k.degenerate) warnings.push_back(name + ": pooled kappa is degenerate (zero expected disagreement)");
    section["pooled"] = confusion_to_json(pooled, k);
  }

  json per_fold = json::object();
  std::vector<double> kappas;
  for (int fold : folds) {
    std::vector<DetectionRecord> subset;
    for (const auto& r : records) {
      if (r.fold == fold) subset.push_back(r);
    }
    const ConfusionMatrix cm = confusion_matrix(subset, include_fn);
    if (cm.total() == 0) {
      warnings.push_back(name + ": fold " + fold_key(fold) + " confusion matrix is empty");
      per_fold[fold_key(fold)] = nullptr;
      continue;
    }
    const KappaResult k = quadratic_weighted_kappa(cm);
    if (k.degenerate) warnings.push_back(name + ": fold " + fold_key(fold) + " kappa is degenerate");
    per_fold[fold_key(fold)] = confusion_to_json(cm, k);
    kappas.push_back(k.kappa);
  }
  section["per_fold"] = per_fold;
  if (!kappas.empty()) {
    const MeanStd ms = mean_std(kappas);
    section["fold_kappa_mean"] = ms.mean;
    section["fold_kappa_std"] = ms.std;
  } else {
    section["fold_kappa_mean"] = nullptr;
    section["fold_kappa_std"] = nullptr;
  }
  return section;
}

}  // namespace

EvaluationReport run_full_evaluation(const EvaluationConfig& cfg) {
  cfg.validate();
  require(!cfg.output_dir.empty(), ErrorKind::config, "output_dir is not set");
  const std::vector<ManifestEntry> manifest = read_manifest(cfg.manifest);
  const std::vector<PatientResult> patients = evaluate_patients(cfg, manifest);

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  require(fs::is_directory(cfg.output_dir), ErrorKind::data, "cannot create output directory " + cfg.output_dir.string());

  EvaluationReport out;
  std::vector<std::string>& warnings = out.warnings;
  const std::vector<double> grid = cfg.fp_grid.empty() ? default_fp_grid() : cfg.fp_grid;

  std::vector<int> patient_folds;
  std::set<int> fold_set;
  for (const auto& p : patients) {
    patient_folds.push_back(p.fold);
    fold_set.insert(p.fold);
  }
  const std::vector<int> folds(fold_set.begin(), fold_set.end());

  json report;
  report["config"] = evaluation_config_to_json(cfg);
  report["n_patients"] = patients.size();
  report["folds"] = folds;

  // Prostate segmentation.
  {
    json per_patient = json::array();
    std::vector<double> values;
    for (const auto& p : patients) {
      per_patient.push_back({{"patient_id", p.id}, {"fold", p.fold}, {"dice", p.prostate_dice}});
      values.push_back(p.prostate_dice);
      if (p.dice_both_empty) warnings.push_back("prostate Dice of '" + p.id + "': both masks empty, reported as 1");
    }
    const MeanStd ms = mean_std(values);
    report["prostate_dice"] = {{"per_patient", per_patient}, {"mean", ms.mean}, {"std", ms.std}};
    write_csv(cfg.output_dir / "dice.csv", [&](std::ostream& os) {
      os << "patient_id,fold,dice\n";
      for (const auto& p : patients) os << p.id << ',' << p.fold << ',' << format_double(p.prostate_dice) << '\n';
    });
  }

  // Detection.
  {
    std::vector<const PatientDetections*> cs;
    for (const auto& p : patients) cs.push_back(&p.cs);
    report["froc_cs"] = froc_section("cs", cs, patient_folds, folds, cfg, grid, warnings, &cfg.output_dir, true);
    json by_grade = json::object();
    for (Grade g : kAllGrades) {
      std::vector<const PatientDetections*> d;
      for (const auto& p : patients) d.push_back(&p.by_grade[static_cast<std::size_t>(grade_index(g))]);
      by_grade[std::string(grade_name(g))] =
          froc_section(std::string(grade_slug(g)), d, patient_folds, folds, cfg, grid, warnings, &cfg.output_dir, false);
    }
    report["froc_by_grade"] = by_grade;
  }

  // Grading.
  {
    std::vector<DetectionRecord> records;
    for (const auto& p : patients) records.insert(records.end(), p.records.begin(), p.records.end());
    report["confusion"] = {{"tp_only", confusion_section("tp_only", records, false, folds, cfg, warnings)},
                           {"fn_as_gs6", confusion_section("fn_as_gs6", records, true, folds, cfg, warnings)}};
    std::size_t missed = 0;
    for (const auto& r : records) missed += !r.pred_grade;
    report["n_gt_lesions_graded"] = records.size();
    report["n_gt_lesions_missed"] = missed;
    if (cfg.write_intermediates) {
      write_csv(cfg.output_dir / "detections.csv", [&](std::ostream& os) { write_records_csv(os, records); });
    }
  }

  if (cfg.points_file) report["points"] = point_protocol(cfg, *cfg.points_file);

  if (cfg.write_intermediates) {
    const fs::path cluster_dir = cfg.output_dir / "clusters";
    fs::create_directories(cluster_dir, ec);
    for (const auto& p : patients) write_json_file(p.clusters, cluster_dir / (p.id + ".json"));
  }

  report["warnings"] = warnings;
  write_json_file(report, cfg.output_dir / "report.json");
  out.report = std::move(report);
  return out;
}

FrocCurve cohort_froc(const EvaluationConfig& base, std::optional<Grade> grade) {
  EvaluationConfig cfg = base;
  cfg.write_intermediates = false;
  cfg.validate();
  const std::vector<PatientResult> patients = evaluate_patients(cfg, read_manifest(cfg.manifest));
  std::vector<PatientDetections> d;
  for (const auto& p : patients) d.push_back(grade ? p.by_grade[static_cast<std::size_t>(grade_index(*grade))] : p.cs);
  return froc_curve(d, cfg.strict_duplicates);
}

json point_protocol(const EvaluationConfig& cfg, const fs::path& points_csv) {
  cfg.validate();
  std::ifstream in(points_csv);
  require(in.good(), ErrorKind::data, "cannot open points file " + points_csv.string());

  struct Point {
    std::string patient;
    Index3 p;
    Zone zone;
    Grade gt;
  };
  std::vector<Point> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (line_no == 1 && f[0] == "patient_id") continue;
    require(f.size() == 6, ErrorKind::data, "points line " + std::to_string(line_no) + " needs 6 fields");
    const auto zone = parse_zone(f[4]);
    const auto gt = parse_grade(f[5]);
    require(zone.has_value(), ErrorKind::data, "unknown zone '" + f[4] + "' in points file");
    require(gt.has_value(), ErrorKind::data, "unknown grade '" + f[5] + "' in points file");
    points.push_back({f[0],
                      {static_cast<int>(parse_number(f[1], "x_vox")), static_cast<int>(parse_number(f[2], "y_vox")),
                       static_cast<int>(parse_number(f[3], "z_vox"))},
                      *zone,
                      *gt});
  }
  require(!points.empty(), ErrorKind::data, "points file holds no points");

  // Predictions are loaded once per patient, in first-appearance order.
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> slot;
  for (const auto& p : points) {
    if (slot.try_emplace(p.patient, ids.size()).second) ids.push_back(p.patient);
  }
  struct Prediction {
    Volume labels;
    LesionMap cs;
  };
  std::vector<std::optional<Prediction>> preds(ids.size());
  const Connectivity conn = connectivity_from_int(cfg.connectivity);
  parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
    const ProbStack probs = load_predictions(cfg, ids[i]);
    Volume labels = label_from_probs(probs);
    LesionMap cs = filter_by_volume(cs_lesion_maps(labels, probs, conn), cfg.min_volume_mm3);
    preds[i] = Prediction{std::move(labels), std::move(cs)};
  });

  std::vector<DetectionRecord> records;
  json assignments = json::array();
  for (const auto& p : points) {
    const Prediction& pred = *preds[slot.at(p.patient)];
    const Grade g = point_in_cluster_grade(p.p, pred.cs, pred.labels);
    DetectionRecord r;
    r.patient_id = p.patient;
    r.zone = p.zone;
    r.gt_grade = p.gt;
    r.pred_grade = g;
    records.push_back(r);
    assignments.push_back({{"patient_id", p.patient},
                           {"voxel", {p.p.x, p.p.y, p.p.z}},
                           {"gt_grade", grade_name(p.gt)},
                           {"pred_grade", grade_name(g)}});
  }
  const ConfusionMatrix cm = confusion_matrix(records, false);
  const KappaResult k = cfg.bootstrap_iterations > 0
                            ? bootstrap_kappa(records, false, cfg.bootstrap_iterations, cfg.seed, cfg.bootstrap_unit)
                            : quadratic_weighted_kappa(cm);
  json j = confusion_to_json(cm, k);
  j["n_points"] = points.size();
  j["assignments"] = assignments;
  return j;
}

}  // namespace prosteval
