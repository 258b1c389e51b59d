#include "prosteval/prosteval.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "prosteval/error.hpp"
#include "prosteval/evaluation.hpp"
#include "prosteval/netmath.hpp"
#include "prosteval/phantom.hpp"

using namespace prosteval;

struct pe_volume {
  Volume v;
};

struct pe_probstack {
  ProbStack s;
};

namespace {

thread_local std::string g_last_error;

pe_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return PE_ERR_CONFIG;
    case ErrorKind::data: return PE_ERR_DATA;
    case ErrorKind::degenerate: return PE_ERR_DEGENERATE;
  }
  return PE_ERR_INTERNAL;
}

template <class Fn>
pe_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return PE_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return PE_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorKind::config, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_json_arg(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("malformed ") + what + ": " + e.what());
  }
}

EvaluationConfig config_arg(const char* config_json, const char* base_dir) {
  return evaluation_config_from_json(parse_json_arg(config_json, "config JSON"),
                                     base_dir ? std::filesystem::path(base_dir) : std::filesystem::path());
}

}  // namespace

extern "C" {

const char* pe_version(void) { return "1.0.0"; }

const char* pe_last_error(void) { return g_last_error.c_str(); }

void pe_free_string(char* s) { std::free(s); }

pe_status pe_volume_read(const char* path, pe_volume** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pe_volume{read_volume(path)};
  });
}

pe_status pe_volume_write(const pe_volume* v, const char* path) {
  return guarded([&] {
    need(v, "volume");
    need(path, "path");
    write_volume(v->v, path);
  });
}

pe_status pe_volume_create(const int dims[3], const double spacing_mm[3], pe_volume_kind kind, const float* values,
                           pe_volume** out) {
  return guarded([&] {
    need(dims, "dims");
    need(spacing_mm, "spacing_mm");
    need(out, "out");
    require(kind >= PE_KIND_INTENSITY && kind <= PE_KIND_PROBABILITY, ErrorKind::config, "unknown volume kind");
    const Dims d{dims[0], dims[1], dims[2]};
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorKind::config, "dimensions must be positive");
    std::vector<float> data(d.count(), 0.0f);
    if (values) std::memcpy(data.data(), values, data.size() * sizeof(float));
    *out = new pe_volume{Volume(d, {spacing_mm[0], spacing_mm[1], spacing_mm[2]}, static_cast<VolumeKind>(kind),
                                std::move(data))};
  });
}

pe_status pe_volume_info(const pe_volume* v, int dims[3], double spacing_mm[3], pe_volume_kind* kind) {
  return guarded([&] {
    need(v, "volume");
    if (dims) {
      dims[0] = v->v.dims().nx;
      dims[1] = v->v.dims().ny;
      dims[2] = v->v.dims().nz;
    }
    if (spacing_mm) {
      spacing_mm[0] = v->v.spacing().sx;
      spacing_mm[1] = v->v.spacing().sy;
      spacing_mm[2] = v->v.spacing().sz;
    }
    if (kind) *kind = static_cast<pe_volume_kind>(v->v.kind());
  });
}

const float* pe_volume_data(const pe_volume* v, size_t* count) {
  if (!v) return nullptr;
  if (count) *count = v->v.size();
  return v->v.values().data();
}

void pe_volume_free(pe_volume* v) { delete v; }

pe_status pe_probstack_read(const char* prefix, pe_probstack** out) {
  return guarded([&] {
    need(prefix, "prefix");
    need(out, "out");
    *out = new pe_probstack{read_prob_stack(prefix)};
  });
}

pe_status pe_probstack_create(const pe_volume* const channels[6], pe_probstack** out) {
  return guarded([&] {
    need(channels, "channels");
    need(out, "out");
    std::vector<Volume> vs;
    for (int c = 0; c < kNumClasses; ++c) {
      need(channels[c], "channel");
      vs.push_back(channels[c]->v);
    }
    *out = new pe_probstack{ProbStack(std::move(vs))};
  });
}

void pe_probstack_free(pe_probstack* s) { delete s; }

pe_status pe_preprocess(const pe_volume* in, const double target_spacing_mm[3], int crop_w, int crop_h,
                        int slice_scope, pe_volume** out) {
  return guarded([&] {
    need(in, "volume");
    need(target_spacing_mm, "target spacing");
    need(out, "out");
    const Spacing target{target_spacing_mm[0], target_spacing_mm[1], target_spacing_mm[2]};
    Volume result = in->v.kind() == VolumeKind::label
                        ? preprocess_labels(in->v, target, crop_w, crop_h)
                        : preprocess(in->v, target, crop_w, crop_h,
                                     slice_scope ? NormalizationScope::slice : NormalizationScope::volume);
    *out = new pe_volume{std::move(result)};
  });
}

pe_status pe_label_from_probs(const pe_probstack* probs, pe_volume** out) {
  return guarded([&] {
    need(probs, "probabilities");
    need(out, "out");
    *out = new pe_volume{label_from_probs(probs->s)};
  });
}

pe_status pe_cluster_json(const pe_volume* labels, const pe_probstack* probs, int connectivity, double min_volume_mm3,
                          pe_map_kind map, char** json_out) {
  return guarded([&] {
    need(labels, "labels");
    need(json_out, "json_out");
    require(map == PE_MAP_GS || map == PE_MAP_CS, ErrorKind::config, "unknown map kind");
    require(min_volume_mm3 >= 0.0, ErrorKind::config, "min_volume_mm3 must be nonnegative");
    const Connectivity conn = connectivity_from_int(connectivity);
    LesionMap m = map == PE_MAP_GS ? (probs ? gs_lesion_maps(labels->v, probs->s, conn) : gs_lesion_maps(labels->v, conn))
                                   : (probs ? cs_lesion_maps(labels->v, probs->s, conn) : cs_lesion_maps(labels->v, conn));
    m = filter_by_volume(std::move(m), min_volume_mm3);
    *json_out = dup_string(lesion_map_to_json(m).dump(2) + "\n");
  });
}

pe_status pe_match_csv(const pe_volume* gt_labels, const pe_probstack* probs, const char* options_json,
                       const char* patient_id, int fold, char** csv_out) {
  return guarded([&] {
    need(gt_labels, "ground-truth labels");
    need(probs, "probabilities");
    need(csv_out, "csv_out");
    const EvaluationConfig cfg = config_arg(options_json, nullptr);
    require(probs->s.dims() == gt_labels->v.dims(), ErrorKind::data, "prediction and ground-truth grids differ");
    const Connectivity conn = connectivity_from_int(cfg.connectivity);
    const Volume pred_labels = label_from_probs(probs->s);
    const LesionMap gt = filter_by_volume(gs_lesion_maps(gt_labels->v, conn), cfg.min_volume_mm3);
    const LesionMap pred = filter_by_volume(gs_lesion_maps(pred_labels, probs->s, conn), cfg.min_volume_mm3);
    MatchOptions options = cfg.match_options();
    options.score_threshold = cfg.grading_score_threshold;
    const auto records = grade_records(pred, gt, options, patient_id ? patient_id : "", fold);
    std::ostringstream os;
    write_records_csv(os, records);
    *csv_out = dup_string(os.str());
  });
}

pe_status pe_kappa_json(const char* records_csv, int include_fn_as_gs6, int bootstrap_iterations, uint64_t seed,
                        int unit, char** json_out) {
  return guarded([&] {
    need(records_csv, "records_csv");
    need(json_out, "json_out");
    require(bootstrap_iterations >= 0, ErrorKind::config, "bootstrap iterations must be nonnegative");
    require(unit == 0 || unit == 1, ErrorKind::config, "bootstrap unit must be 0 (lesion) or 1 (patient)");
    std::istringstream in(records_csv);
    const auto records = read_records_csv(in);
    const bool fn = include_fn_as_gs6 != 0;
    const ConfusionMatrix cm = confusion_matrix(records, fn);
    require(cm.total() > 0, ErrorKind::degenerate, "confusion matrix is empty");
    const KappaResult k =
        bootstrap_iterations > 0
            ? bootstrap_kappa(records, fn, bootstrap_iterations, seed, unit ? BootstrapUnit::patient : BootstrapUnit::lesion)
            : quadratic_weighted_kappa(cm);
    *json_out = dup_string(confusion_to_json(cm, k).dump(2) + "\n");
  });
}

pe_status pe_dice(const pe_volume* a, const pe_volume* b, double* out) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = dice_coefficient(a->v, b->v);
  });
}

pe_status pe_wilcoxon_one_sided(const double* x, const double* y, size_t n, double* p_value, double* statistic,
                                size_t* n_used, int* exact) {
  return guarded([&] {
    require(n == 0 || (x && y), ErrorKind::config, "x and y must not be NULL");
    const WilcoxonResult r = wilcoxon_one_sided(std::span<const double>(x, n), std::span<const double>(y, n));
    if (p_value) *p_value = r.p_value;
    if (statistic) *statistic = r.statistic;
    if (n_used) *n_used = r.n;
    if (exact) *exact = r.exact ? 1 : 0;
  });
}

pe_status pe_evaluate(const char* config_json, const char* base_dir, char** report_json) {
  return guarded([&] {
    const EvaluationReport report = run_full_evaluation(config_arg(config_json, base_dir));
    if (report_json) *report_json = dup_string(report.report.dump(2) + "\n");
  });
}

pe_status pe_froc_csv(const char* config_json, const char* base_dir, const char* grade, char** csv_out) {
  return guarded([&] {
    need(csv_out, "csv_out");
    std::optional<Grade> g;
    if (grade) {
      g = parse_grade(grade);
      require(g.has_value(), ErrorKind::config, std::string("unknown grade '") + grade + "'");
    }
    const FrocCurve curve = cohort_froc(config_arg(config_json, base_dir), g);
    std::ostringstream os;
    write_froc_csv(os, curve);
    *csv_out = dup_string(os.str());
  });
}

pe_status pe_px2(const char* config_json, const char* base_dir, const char* points_csv_path, char** json_out) {
  return guarded([&] {
    need(points_csv_path, "points_csv_path");
    need(json_out, "json_out");
    *json_out = dup_string(point_protocol(config_arg(config_json, base_dir), points_csv_path).dump(2) + "\n");
  });
}

pe_status pe_phantom_generate(const char* config_json, const char* out_dir, char** ledger_json) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const PhantomConfig cfg = phantom_config_from_json(parse_json_arg(config_json, "phantom config JSON"));
    const PhantomCohort cohort = generate_cohort(cfg);
    write_cohort(cohort, out_dir);
    if (ledger_json) *ledger_json = dup_string(ledger_to_json(cohort.ledger).dump() + "\n");
  });
}

pe_status pe_losscheck(uint64_t seed, int instances, char** json_out) {
  return guarded([&] {
    need(json_out, "json_out");
    const GradientCheckReport r = check_gradients(seed, instances);
    const json j = {{"instances", r.instances},
                    {"step", r.step},
                    {"weighted_dice", r.dice_max_rel},
                    {"weighted_ce", r.ce_max_rel},
                    {"branch_loss", r.branch_max_rel},
                    {"attention_features", r.attention_features_max_rel},
                    {"attention_map", r.attention_map_max_rel},
                    {"max_rel_error", r.max_rel()}};
    *json_out = dup_string(j.dump(2) + "\n");
  });
}

}  // extern "C"
