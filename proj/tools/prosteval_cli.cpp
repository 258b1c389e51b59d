// prosteval command line front end. Everything goes through the C API.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prosteval/prosteval.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool strict = false;
};

struct Failure {
  int code;
};

void check(pe_status s) {
  if (s == PE_OK) return;
  std::cerr << "prosteval: " << pe_last_error() << "\n";
  throw Failure{static_cast<int>(s)};
}

[[noreturn]] void usage_error(const std::string& msg) {
  std::cerr << "prosteval: " << msg << "\n";
  throw Failure{PE_ERR_CONFIG};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pe_free_string(s);
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "prosteval: cannot open " << path << "\n";
    throw Failure{PE_ERR_DATA};
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "prosteval: cannot write " << out_path << "\n";
    throw Failure{PE_ERR_DATA};
  }
  out << text;
}

// Config file contents (or {}) and the directory its relative paths refer to.
std::pair<json, std::string> load_config(const Globals& g) {
  if (g.config.empty()) return {json::object(), ""};
  json j;
  try {
    j = json::parse(read_text(g.config));
  } catch (const json::exception& e) {
    usage_error("malformed config " + g.config + ": " + e.what());
  }
  if (!j.is_object()) usage_error("config " + g.config + " must hold a JSON object");
  return {j, fs::absolute(g.config).parent_path().string()};
}

std::string abs_path(const std::string& p) { return fs::absolute(p).string(); }

struct Volume {
  pe_volume* h = nullptr;
  Volume() = default;
  explicit Volume(const std::string& path) { check(pe_volume_read(path.c_str(), &h)); }
  Volume(const Volume&) = delete;
  Volume& operator=(const Volume&) = delete;
  ~Volume() { pe_volume_free(h); }
};

struct Probs {
  pe_probstack* h = nullptr;
  explicit Probs(const std::string& prefix) { check(pe_probstack_read(prefix.c_str(), &h)); }
  Probs(const Probs&) = delete;
  Probs& operator=(const Probs&) = delete;
  ~Probs() { pe_probstack_free(h); }
};

// Options shared by the cohort-level commands; unset flags leave the config untouched.
struct CohortFlags {
  std::string gt_dir, pred_dir, manifest, out_dir, zone, denominator, points, unit;
  std::optional<int> connectivity, bootstrap;
  std::optional<double> min_volume, overlap, grading_threshold;
  bool strict_duplicates = false;
  bool no_intermediates = false;

  void add(CLI::App* app, bool output, bool evaluation) {
    app->add_option("--gt-dir", gt_dir, "Ground-truth directory (<id>_labels, <id>_pz, <id>_tz)");
    app->add_option("--pred-dir", pred_dir, "Prediction directory (<id>_prob_c0..c5)");
    app->add_option("--manifest", manifest, "Fold manifest JSON {\"patients\":[{\"id\",\"fold\"}]}");
    app->add_option("--connectivity", connectivity, "Voxel connectivity")->check(CLI::IsMember({6, 18, 26}));
    app->add_option("--min-volume-mm3", min_volume, "Drop clusters below this volume (default 45)");
    app->add_option("--overlap", overlap, "Overlap fraction of the detection rule (default 0.10)");
    app->add_option("--denominator", denominator, "Overlap denominator")->check(CLI::IsMember({"pred", "gt", "union"}));
    app->add_flag("--strict-duplicates", strict_duplicates, "Count extra hits on one lesion as false positives");
    app->add_option("--zone", zone, "Zonal filter")->check(CLI::IsMember({"none", "pz", "tz"}));
    if (output) app->add_option("-o,--out", out_dir, "Output directory");
    if (evaluation) {
      app->add_option("--grading-threshold", grading_threshold, "Score threshold for the confusion matrices");
      app->add_option("--bootstrap", bootstrap, "Bootstrap iterations for kappa");
      app->add_option("--bootstrap-unit", unit, "Resampling unit")->check(CLI::IsMember({"lesion", "patient"}));
      app->add_option("--points", points, "Points CSV for the point-based grading protocol");
      app->add_flag("--no-intermediates", no_intermediates, "Skip cluster JSON and detection CSV");
    }
  }

  void apply(json& j, const Globals& g) const {
    if (!gt_dir.empty()) j["gt_dir"] = abs_path(gt_dir);
    if (!pred_dir.empty()) j["pred_dir"] = abs_path(pred_dir);
    if (!manifest.empty()) j["manifest"] = abs_path(manifest);
    if (!out_dir.empty()) j["output_dir"] = abs_path(out_dir);
    if (!points.empty()) j["points"] = abs_path(points);
    if (!zone.empty()) j["zone"] = zone;
    if (!denominator.empty()) j["overlap_denominator"] = denominator;
    if (!unit.empty()) j["bootstrap_unit"] = unit;
    if (connectivity) j["connectivity"] = *connectivity;
    if (bootstrap) j["bootstrap_iterations"] = *bootstrap;
    if (min_volume) j["min_volume_mm3"] = *min_volume;
    if (overlap) j["overlap_frac"] = *overlap;
    if (grading_threshold) j["grading_score_threshold"] = *grading_threshold;
    if (strict_duplicates) j["strict_duplicates"] = true;
    if (no_intermediates) j["write_intermediates"] = false;
    if (g.seed) j["seed"] = *g.seed;
    if (g.threads) j["threads"] = *g.threads;
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  return out;
}

json wilcoxon_json(const std::vector<double>& x, const std::vector<double>& y) {
  double p = 1.0, w = 0.0;
  size_t n = 0;
  int exact = 0;
  check(pe_wilcoxon_one_sided(x.data(), y.data(), x.size(), &p, &w, &n, &exact));
  return {{"p_value", p}, {"statistic", w}, {"n", n}, {"n_pairs", x.size()}, {"exact", exact != 0}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prostate lesion segmentation evaluation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pe_version()));
  Globals g;
  app.add_option("--config", g.config, "JSON config for the subcommand")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--strict", g.strict, "Exit with code 4 on degenerate statistics");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Resample in plane, center crop and normalize a volume");
  std::string pre_in, pre_out;
  std::vector<double> pre_spacing{1.0, 1.0};
  std::vector<int> pre_crop{96, 96};
  bool pre_slice = false;
  pre->add_option("-i,--input", pre_in, "Input volume stem")->required();
  pre->add_option("-o,--output", pre_out, "Output volume stem")->required();
  pre->add_option("--spacing", pre_spacing, "Target in-plane spacing in mm")->expected(2);
  pre->add_option("--crop", pre_crop, "Crop width and height in voxels")->expected(2);
  pre->add_flag("--per-slice", pre_slice, "Normalize each slice separately");

  // phantom
  auto* ph = app.add_subcommand("phantom", "Generate a synthetic cohort with its ledger");
  std::string ph_out;
  std::optional<int> ph_patients, ph_folds, ph_fp;
  std::optional<double> ph_miss;
  ph->add_option("-o,--out", ph_out, "Cohort directory")->required();
  ph->add_option("--patients", ph_patients, "Number of patients");
  ph->add_option("--folds", ph_folds, "Number of folds");
  ph->add_option("--miss-fraction", ph_miss, "Fraction of lesions left undetected");
  ph->add_option("--fp-per-patient", ph_fp, "False-positive blobs per patient");

  // cluster
  auto* cl = app.add_subcommand("cluster", "Lesion clusters of a label volume as JSON");
  std::string cl_labels, cl_probs, cl_map = "gs", cl_out;
  int cl_conn = 26;
  double cl_min = 45.0;
  cl->add_option("--labels", cl_labels, "Label volume stem")->required();
  cl->add_option("--probs", cl_probs, "Probability prefix (<prefix>_c0..c5); scores are 1 without it");
  cl->add_option("--connectivity", cl_conn, "Voxel connectivity")->check(CLI::IsMember({6, 18, 26}));
  cl->add_option("--min-volume-mm3", cl_min, "Drop clusters below this volume");
  cl->add_option("--map", cl_map, "Map kind")->check(CLI::IsMember({"gs", "cs"}));
  cl->add_option("-o,--out", cl_out, "Output file (default stdout)");

  // match
  auto* ma = app.add_subcommand("match", "Detection records CSV for one patient");
  std::string ma_gt, ma_probs, ma_id, ma_out, ma_den;
  int ma_fold = 0;
  std::optional<int> ma_conn;
  std::optional<double> ma_min, ma_overlap, ma_thr;
  bool ma_strict_dup = false;
  ma->add_option("--gt", ma_gt, "Ground-truth label volume stem")->required();
  ma->add_option("--probs", ma_probs, "Prediction probability prefix")->required();
  ma->add_option("--patient-id", ma_id, "Patient id written to the records");
  ma->add_option("--fold", ma_fold, "Fold written to the records");
  ma->add_option("--connectivity", ma_conn, "Voxel connectivity")->check(CLI::IsMember({6, 18, 26}));
  ma->add_option("--min-volume-mm3", ma_min, "Drop clusters below this volume");
  ma->add_option("--overlap", ma_overlap, "Overlap fraction of the detection rule");
  ma->add_option("--denominator", ma_den, "Overlap denominator")->check(CLI::IsMember({"pred", "gt", "union"}));
  ma->add_option("--grading-threshold", ma_thr, "Score threshold for qualifying predictions");
  ma->add_flag("--strict-duplicates", ma_strict_dup, "Strict duplicate handling");
  ma->add_option("-o,--out", ma_out, "Output CSV (default stdout)");

  // froc
  auto* fr = app.add_subcommand("froc", "Pooled FROC curve of a cohort as CSV");
  CohortFlags fr_flags;
  std::string fr_grade, fr_out;
  fr_flags.add(fr, false, false);
  fr->add_option("--grade", fr_grade, "Per-grade curve (GS6, GS3+4, GS4+3, GS>=8); CS curve otherwise");
  fr->add_option("-o,--out", fr_out, "Output CSV (default stdout)");

  // kappa
  auto* ka = app.add_subcommand("kappa", "Confusion matrix and quadratic weighted kappa from detection records");
  std::string ka_records, ka_unit = "lesion", ka_out;
  bool ka_fn = false;
  int ka_boot = 1000;
  ka->add_option("--records", ka_records, "Detection records CSV")->required();
  ka->add_flag("--fn-as-gs6", ka_fn, "Count missed lesions as predicted GS6");
  ka->add_option("--bootstrap", ka_boot, "Bootstrap iterations (0 disables)");
  ka->add_option("--unit", ka_unit, "Resampling unit")->check(CLI::IsMember({"lesion", "patient"}));
  ka->add_option("-o,--out", ka_out, "Output JSON (default stdout)");

  // dice
  auto* di = app.add_subcommand("dice", "Dice coefficient of the nonzero voxels of two volumes");
  std::string di_a, di_b;
  di->add_option("a", di_a, "First volume stem")->required();
  di->add_option("b", di_b, "Second volume stem")->required();

  // wilcoxon
  auto* wi = app.add_subcommand("wilcoxon", "One-sided Wilcoxon signed-rank test of column x > column y");
  std::string wi_csv, wi_x, wi_y, wi_group;
  wi->add_option("--csv", wi_csv, "CSV file with a header row")->required();
  wi->add_option("-x", wi_x, "Column of the first sample")->required();
  wi->add_option("-y", wi_y, "Column of the second sample")->required();
  wi->add_option("--group-col", wi_group,
                 "Also test each group separately (e.g. grade); the pooled test uses every row");

  // px2
  auto* px = app.add_subcommand("px2", "Point-based grading against predicted CS clusters");
  CohortFlags px_flags;
  std::string px_out;
  px_flags.add(px, false, true);
  px->add_option("-o,--out", px_out, "Output JSON (default stdout)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Full evaluation protocol; writes report.json and the CSV bundle");
  CohortFlags ev_flags;
  ev_flags.add(ev, true, true);

  // losscheck
  auto* lc = app.add_subcommand("losscheck", "Finite-difference check of the loss and attention gradients");
  int lc_instances = 10;
  lc->add_option("--instances", lc_instances, "Random instances")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : PE_ERR_CONFIG;
  }

  try {
    if (*pre) {
      Volume in(pre_in);
      int dims[3];
      double spacing[3];
      check(pe_volume_info(in.h, dims, spacing, nullptr));
      const double target[3] = {pre_spacing[0], pre_spacing[1], spacing[2]};
      Volume out;
      check(pe_preprocess(in.h, target, pre_crop[0], pre_crop[1], pre_slice ? 1 : 0, &out.h));
      check(pe_volume_write(out.h, pre_out.c_str()));
    } else if (*ph) {
      json cfg = load_config(g).first;
      if (g.seed) cfg["seed"] = *g.seed;
      if (ph_patients) cfg["n_patients"] = *ph_patients;
      if (ph_folds) cfg["n_folds"] = *ph_folds;
      if (ph_miss) cfg["miss_fraction"] = *ph_miss;
      if (ph_fp) cfg["fp_per_patient"] = *ph_fp;
      char* ledger = nullptr;
      check(pe_phantom_generate(cfg.dump().c_str(), ph_out.c_str(), &ledger));
      const json l = json::parse(take(ledger));
      std::size_t lesions = 0, fps = 0;
      for (const auto& p : l.at("patients")) {
        lesions += p.at("lesions").size();
        fps += p.at("false_positives").size();
      }
      std::cout << "wrote " << l.at("patients").size() << " patients, " << lesions << " lesions, " << fps
                << " false positives to " << ph_out << "\n";
    } else if (*cl) {
      Volume labels(cl_labels);
      std::optional<Probs> probs;
      if (!cl_probs.empty()) probs.emplace(cl_probs);
      char* out = nullptr;
      check(pe_cluster_json(labels.h, probs ? probs->h : nullptr, cl_conn, cl_min, cl_map == "gs" ? PE_MAP_GS : PE_MAP_CS,
                            &out));
      emit(take(out), cl_out);
    } else if (*ma) {
      json cfg = load_config(g).first;
      if (ma_conn) cfg["connectivity"] = *ma_conn;
      if (ma_min) cfg["min_volume_mm3"] = *ma_min;
      if (ma_overlap) cfg["overlap_frac"] = *ma_overlap;
      if (!ma_den.empty()) cfg["overlap_denominator"] = ma_den;
      if (ma_thr) cfg["grading_score_threshold"] = *ma_thr;
      if (ma_strict_dup) cfg["strict_duplicates"] = true;
      Volume gt(ma_gt);
      Probs probs(ma_probs);
      char* out = nullptr;
      check(pe_match_csv(gt.h, probs.h, cfg.dump().c_str(), ma_id.c_str(), ma_fold, &out));
      emit(take(out), ma_out);
    } else if (*fr) {
      auto [cfg, base] = load_config(g);
      fr_flags.apply(cfg, g);
      char* out = nullptr;
      check(pe_froc_csv(cfg.dump().c_str(), base.c_str(), fr_grade.empty() ? nullptr : fr_grade.c_str(), &out));
      emit(take(out), fr_out);
    } else if (*ka) {
      const std::string csv = read_text(ka_records);
      const std::uint64_t seed = g.seed.value_or(0);
      char* out = nullptr;
      check(pe_kappa_json(csv.c_str(), ka_fn ? 1 : 0, ka_boot, seed, ka_unit == "patient" ? 1 : 0, &out));
      const std::string text = take(out);
      emit(text, ka_out);
      if (g.strict && json::parse(text).value("degenerate", false)) {
        std::cerr << "prosteval: kappa is degenerate\n";
        return PE_ERR_DEGENERATE;
      }
    } else if (*di) {
      Volume a(di_a), b(di_b);
      double d = 0.0;
      check(pe_dice(a.h, b.h, &d));
      std::cout << json{{"dice", d}}.dump() << "\n";
    } else if (*wi) {
      std::istringstream in(read_text(wi_csv));
      std::string line;
      if (!std::getline(in, line)) usage_error("empty CSV " + wi_csv);
      const auto header = split(line);
      auto column = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
          if (header[i] == name) return i;
        usage_error("column '" + name + "' not found in " + wi_csv);
      };
      const std::size_t cx = column(wi_x), cy = column(wi_y);
      const std::optional<std::size_t> cg = wi_group.empty() ? std::nullopt : std::optional(column(wi_group));
      std::vector<double> x, y;
      std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
      while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        if (f.size() < header.size()) usage_error("short row in " + wi_csv);
        double vx = 0.0, vy = 0.0;
        try {
          vx = std::stod(f[cx]);
          vy = std::stod(f[cy]);
        } catch (const std::exception&) {
          std::cerr << "prosteval: non-numeric value in " << wi_csv << "\n";
          return PE_ERR_DATA;
        }
        x.push_back(vx);
        y.push_back(vy);
        if (cg) {
          groups[f[*cg]].first.push_back(vx);
          groups[f[*cg]].second.push_back(vy);
        }
      }
      json result = {{"pooled", wilcoxon_json(x, y)}};
      if (cg) {
        json per = json::object();
        for (const auto& [name, xy] : groups) per[name] = wilcoxon_json(xy.first, xy.second);
        result["by_group"] = per;
      }
      std::cout << result.dump(2) << "\n";
    } else if (*px) {
      auto [cfg, base] = load_config(g);
      px_flags.apply(cfg, g);
      if (!cfg.contains("points")) usage_error("px2 needs --points");
      const std::string points = cfg.at("points").get<std::string>();
      const std::string points_path = fs::path(points).is_absolute() || base.empty() ? points : (fs::path(base) / points).string();
      char* out = nullptr;
      check(pe_px2(cfg.dump().c_str(), base.c_str(), points_path.c_str(), &out));
      const std::string text = take(out);
      emit(text, px_out);
      if (g.strict && json::parse(text).value("degenerate", false)) {
        std::cerr << "prosteval: kappa is degenerate\n";
        return PE_ERR_DEGENERATE;
      }
    } else if (*ev) {
      auto [cfg, base] = load_config(g);
      ev_flags.apply(cfg, g);
      char* out = nullptr;
      check(pe_evaluate(cfg.dump().c_str(), base.c_str(), &out));
      const json report = json::parse(take(out));
      const json& sens = report.at("froc_cs").at("sensitivity_at_fp");
      std::cout << "patients: " << report.at("n_patients").get<int>() << "\n";
      std::cout << "prostate dice: " << report.at("prostate_dice").at("mean").dump() << " +/- "
                << report.at("prostate_dice").at("std").dump() << "\n";
      for (const auto& [fp, r] : sens.items()) std::cout << "CS sensitivity @ " << fp << " FP: " << r.at("pooled").dump() << "\n";
      const json& pooled = report.at("confusion").at("tp_only").at("pooled");
      if (!pooled.is_null()) std::cout << "kappa (pooled, TP only): " << pooled.at("kappa").dump() << "\n";
      const auto& warnings = report.at("warnings");
      for (const auto& w : warnings) std::cerr << "warning: " << w.get<std::string>() << "\n";
      if (g.strict && !warnings.empty()) return PE_ERR_DEGENERATE;
    } else if (*lc) {
      char* out = nullptr;
      check(pe_losscheck(g.seed.value_or(0), lc_instances, &out));
      std::cout << take(out);
    }
  } catch (const Failure& f) {
    return f.code;
  } catch (const json::exception& e) {
    std::cerr << "prosteval: " << e.what() << "\n";
    return PE_ERR_INTERNAL;
  }
  return 0;
}
