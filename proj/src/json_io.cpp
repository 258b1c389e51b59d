#include "prosteval/json_io.hpp"

#include <fstream>

#include "prosteval/error.hpp"

namespace prosteval {

namespace {

json index_json(const Index3& p) { return json::array({p.x, p.y, p.z}); }

std::string grade_or_cs(const LesionCluster& c) { return c.grade ? std::string(grade_name(*c.grade)) : "CS"; }

Grade grade_field(const json& j, const char* key) {
  const auto g = parse_grade(j.at(key).get<std::string>());
  require(g.has_value(), ErrorKind::data, std::string("invalid grade in field '") + key + "'");
  return *g;
}

Zone zone_field(const json& j) {
  const auto z = parse_zone(j.at("zone").get<std::string>());
  require(z.has_value(), ErrorKind::data, "invalid zone");
  return *z;
}

}  // namespace

json lesion_map_to_json(const LesionMap& map) {
  json clusters = json::array();
  for (const LesionCluster& c : map.clusters) {
    clusters.push_back({{"grade", grade_or_cs(c)},
                        {"voxel_count", c.voxels.size()},
                        {"volume_mm3", c.volume_mm3},
                        {"score", c.score},
                        {"zone", zone_name(c.zone)},
                        {"bbox", {{"min", index_json(c.bbox.min)}, {"max", index_json(c.bbox.max)}}}});
  }
  return clusters;
}

json froc_to_json(const FrocCurve& curve) {
  json points = json::array();
  for (const FrocPoint& p : curve.points) {
    points.push_back({{"threshold", p.threshold}, {"mean_fp", p.mean_fp}, {"sensitivity", p.sensitivity}});
  }
  return {{"n_patients", curve.n_patients}, {"n_gt_lesions", curve.n_gt_lesions}, {"points", points}};
}

json confusion_to_json(const ConfusionMatrix& cm, const KappaResult& kappa) {
  json order = json::array();
  for (Grade g : kAllGrades) order.push_back(grade_name(g));
  json j = {{"grade_order", order},
            {"counts", cm.counts},
            {"include_fn_as_gs6", cm.include_fn_as_gs6},
            {"total", cm.total()},
            {"kappa", kappa.kappa},
            {"degenerate", kappa.degenerate}};
  if (kappa.n_iterations > 0) {
    j["bootstrap"] = {{"iterations", kappa.n_iterations},
                      {"mean", kappa.bootstrap_mean ? json(*kappa.bootstrap_mean) : json(nullptr)},
                      {"std", kappa.bootstrap_std ? json(*kappa.bootstrap_std) : json(nullptr)}};
  }
  return j;
}

json phantom_config_to_json(const PhantomConfig& c) {
  return {{"seed", c.seed},
          {"n_patients", c.n_patients},
          {"n_folds", c.n_folds},
          {"dims", {c.dims.nx, c.dims.ny, c.dims.nz}},
          {"spacing_mm", {c.spacing.sx, c.spacing.sy, c.spacing.sz}},
          {"lesions_per_grade", c.lesions_per_grade},
          {"radius_min_mm", c.radius_min_mm},
          {"radius_max_mm", c.radius_max_mm},
          {"gland_fraction", c.gland_fraction},
          {"tz_scale", c.tz_scale},
          {"miss_fraction", c.miss_fraction},
          {"misgrade", c.misgrade},
          {"score_min", c.score_min},
          {"score_max", c.score_max},
          {"fp_per_patient", c.fp_per_patient},
          {"fp_score", c.fp_score},
          {"fp_grade_weights", c.fp_grade_weights},
          {"max_placement_attempts", c.max_placement_attempts}};
}

PhantomConfig phantom_config_from_json(const json& j) {
  PhantomConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.n_patients = j.value("n_patients", c.n_patients);
    c.n_folds = j.value("n_folds", c.n_folds);
    if (j.contains("dims")) {
      const auto d = j.at("dims").get<std::array<int, 3>>();
      c.dims = {d[0], d[1], d[2]};
    }
    if (j.contains("spacing_mm")) {
      const auto s = j.at("spacing_mm").get<std::array<double, 3>>();
      c.spacing = {s[0], s[1], s[2]};
    }
    c.lesions_per_grade = j.value("lesions_per_grade", c.lesions_per_grade);
    c.radius_min_mm = j.value("radius_min_mm", c.radius_min_mm);
    c.radius_max_mm = j.value("radius_max_mm", c.radius_max_mm);
    c.gland_fraction = j.value("gland_fraction", c.gland_fraction);
    c.tz_scale = j.value("tz_scale", c.tz_scale);
    c.miss_fraction = j.value("miss_fraction", c.miss_fraction);
    c.misgrade = j.value("misgrade", c.misgrade);
    c.score_min = j.value("score_min", c.score_min);
    c.score_max = j.value("score_max", c.score_max);
    c.fp_per_patient = j.value("fp_per_patient", c.fp_per_patient);
    c.fp_score = j.value("fp_score", c.fp_score);
    c.fp_grade_weights = j.value("fp_grade_weights", c.fp_grade_weights);
    c.max_placement_attempts = j.value("max_placement_attempts", c.max_placement_attempts);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("invalid phantom config: ") + e.what());
  }
  c.validate();
  return c;
}

json ledger_to_json(const PhantomLedger& ledger) {
  json patients = json::array();
  for (const PatientLedger& p : ledger.patients) {
    json lesions = json::array();
    for (const PhantomLesion& l : p.lesions) {
      lesions.push_back({{"grade", grade_name(l.grade)},
                         {"zone", zone_name(l.zone)},
                         {"voxel_count", l.voxels.size()},
                         {"voxels", l.voxels},
                         {"detected", l.detected},
                         {"pred_grade", l.detected ? json(grade_name(l.pred_grade)) : json(nullptr)},
                         {"score", l.score}});
    }
    json fps = json::array();
    for (const PhantomFalsePositive& f : p.false_positives) {
      fps.push_back({{"grade", grade_name(f.grade)},
                     {"zone", zone_name(f.zone)},
                     {"voxel_count", f.voxels.size()},
                     {"voxels", f.voxels},
                     {"score", f.score}});
    }
    patients.push_back({{"id", p.id}, {"fold", p.fold}, {"lesions", lesions}, {"false_positives", fps}});
  }
  return {{"config", phantom_config_to_json(ledger.config)}, {"patients", patients}};
}

PhantomLedger ledger_from_json(const json& j) {
  PhantomLedger ledger;
  try {
    ledger.config = phantom_config_from_json(j.at("config"));
    for (const json& p : j.at("patients")) {
      PatientLedger entry;
      entry.id = p.at("id").get<std::string>();
      entry.fold = p.at("fold").get<int>();
      for (const json& l : p.at("lesions")) {
        PhantomLesion lesion;
        lesion.grade = grade_field(l, "grade");
        lesion.zone = zone_field(l);
        lesion.voxels = l.at("voxels").get<VoxelList>();
        lesion.detected = l.at("detected").get<bool>();
        if (lesion.detected) lesion.pred_grade = grade_field(l, "pred_grade");
        lesion.score = l.at("score").get<double>();
        entry.lesions.push_back(std::move(lesion));
      }
      for (const json& f : p.at("false_positives")) {
        PhantomFalsePositive fp;
        fp.grade = grade_field(f, "grade");
        fp.zone = zone_field(f);
        fp.voxels = f.at("voxels").get<VoxelList>();
        fp.score = f.at("score").get<double>();
        entry.false_positives.push_back(std::move(fp));
      }
      ledger.patients.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("invalid ledger: ") + e.what());
  }
  return ledger;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::data, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::data, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(out.good(), ErrorKind::data, "short write for " + path.string());
}

}  // namespace prosteval
