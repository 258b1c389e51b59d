#include "prosteval/matching.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "prosteval/error.hpp"
#include "format.hpp"

namespace prosteval {

OverlapDenominator parse_overlap_denominator(std::string_view text) {
  if (text == "pred" || text == "predicted") return OverlapDenominator::predicted;
  if (text == "gt" || text == "ground_truth") return OverlapDenominator::ground_truth;
  if (text == "union") return OverlapDenominator::union_of_both;
  fail(ErrorKind::config, "overlap denominator must be pred, gt or union, got '" + std::string(text) + "'");
}

std::string_view overlap_denominator_name(OverlapDenominator d) {
  switch (d) {
    case OverlapDenominator::predicted: return "pred";
    case OverlapDenominator::ground_truth: return "gt";
    case OverlapDenominator::union_of_both: return "union";
  }
  return "pred";
}

void MatchOptions::validate() const {
  require(overlap_frac > 0.0 && overlap_frac <= 1.0, ErrorKind::config, "overlap fraction must lie in (0, 1]");
  require(std::isfinite(score_threshold), ErrorKind::config, "score threshold must be finite");
}

namespace {

struct Hit {
  std::size_t gt;
  std::size_t count;
};

// For each predicted cluster, the ground-truth lesions it intersects (ascending lesion index).
std::vector<std::vector<Hit>> intersections(const LesionMap& pred, const LesionMap& gt) {
  require(pred.dims == gt.dims, ErrorKind::data, "predicted and ground-truth maps are on different grids");
  std::vector<std::int64_t> owner(pred.dims.count(), -1);
  for (std::size_t g = 0; g < gt.clusters.size(); ++g) {
    for (std::size_t v : gt.clusters[g].voxels) owner[v] = static_cast<std::int64_t>(g);
  }
  std::vector<std::vector<Hit>> hits(pred.clusters.size());
  for (std::size_t p = 0; p < pred.clusters.size(); ++p) {
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t v : pred.clusters[p].voxels) {
      if (owner[v] >= 0) ++counts[static_cast<std::size_t>(owner[v])];
    }
    for (const auto& [g, n] : counts) hits[p].push_back({g, n});
  }
  return hits;
}

double overlap_fraction(std::size_t inter, std::size_t pred_size, std::size_t gt_size, OverlapDenominator d) {
  std::size_t denom = pred_size;
  if (d == OverlapDenominator::ground_truth) denom = gt_size;
  if (d == OverlapDenominator::union_of_both) denom = pred_size + gt_size - inter;
  return static_cast<double>(inter) / static_cast<double>(denom);
}

double dice_of(std::size_t inter, std::size_t a, std::size_t b) {
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

int grade_rank(const LesionCluster& c) { return c.grade ? grade_index(*c.grade) : kNumGrades; }

// True when candidate (dice_a, inter_a, a) beats (dice_b, inter_b, b).
bool better(double dice_a, std::size_t inter_a, const LesionCluster& a, double dice_b, std::size_t inter_b,
            const LesionCluster& b) {
  if (dice_a != dice_b) return dice_a > dice_b;
  if (inter_a != inter_b) return inter_a > inter_b;
  return grade_rank(a) < grade_rank(b);
}

}  // namespace

std::vector<PredictionCredit> credit_predictions(const LesionMap& pred, const LesionMap& gt,
                                                 const MatchOptions& options) {
  options.validate();
  const auto hits = intersections(pred, gt);
  std::vector<PredictionCredit> credits(pred.clusters.size());
  for (std::size_t p = 0; p < pred.clusters.size(); ++p) {
    const LesionCluster& pc = pred.clusters[p];
    PredictionCredit& c = credits[p];
    c.score = pc.score;
    if (hits[p].empty()) continue;
    // Largest intersection; hits are in ascending lesion order so ties keep the lowest index.
    const Hit* best = &hits[p].front();
    for (const Hit& h : hits[p]) {
      if (h.count > best->count) best = &h;
    }
    const std::size_t gt_size = gt.clusters[best->gt].voxels.size();
    c.intersection = best->count;
    c.overlap_frac = overlap_fraction(best->count, pc.voxels.size(), gt_size, options.denominator);
    c.dice = dice_of(best->count, pc.voxels.size(), gt_size);
    if (c.overlap_frac >= options.overlap_frac) c.gt = best->gt;
  }
  return credits;
}

MatchResult match_detections(const LesionMap& pred, const LesionMap& gt, const MatchOptions& options) {
  const std::vector<PredictionCredit> credits = credit_predictions(pred, gt, options);
  MatchResult r;
  r.n_gt = gt.clusters.size();

  std::vector<std::vector<std::size_t>> by_lesion(gt.clusters.size());
  for (std::size_t p = 0; p < credits.size(); ++p) {
    if (credits[p].score < options.score_threshold) continue;
    ++r.n_predictions;
    if (credits[p].gt) {
      by_lesion[*credits[p].gt].push_back(p);
    } else {
      r.fp.push_back(p);
    }
  }

  for (std::size_t g = 0; g < by_lesion.size(); ++g) {
    const auto& preds = by_lesion[g];
    if (preds.empty()) {
      r.fn.push_back(g);
      continue;
    }
    std::size_t keep = preds.front();
    for (std::size_t p : preds) {
      if (better(credits[p].dice, credits[p].intersection, pred.clusters[p], credits[keep].dice,
                 credits[keep].intersection, pred.clusters[keep]))
        keep = p;
    }
    for (std::size_t p : preds) {
      if (options.strict && p != keep) {
        r.fp.push_back(p);
      } else {
        r.tp.push_back({p, g, credits[p].overlap_frac, credits[p].dice});
      }
    }
  }
  std::sort(r.fp.begin(), r.fp.end());
  std::sort(r.tp.begin(), r.tp.end(), [](const TruePositive& a, const TruePositive& b) { return a.pred < b.pred; });
  return r;
}

std::size_t best_dice_assignment(const LesionCluster& gt, std::span<const LesionCluster* const> candidates) {
  require(!candidates.empty(), ErrorKind::config, "no candidate predictions to assign");
  std::size_t best = 0;
  std::size_t best_inter = intersection_size(gt.voxels, candidates[0]->voxels);
  double best_dice = dice_of(best_inter, gt.voxels.size(), candidates[0]->voxels.size());
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const std::size_t inter = intersection_size(gt.voxels, candidates[k]->voxels);
    const double d = dice_of(inter, gt.voxels.size(), candidates[k]->voxels.size());
    if (better(d, inter, *candidates[k], best_dice, best_inter, *candidates[best])) {
      best = k;
      best_inter = inter;
      best_dice = d;
    }
  }
  return best;
}

Grade point_in_cluster_grade(const Index3& point, const LesionMap& cs_map, const Volume& gs_labels) {
  require(gs_labels.contains(point), ErrorKind::data,
          "point (" + std::to_string(point.x) + "," + std::to_string(point.y) + "," + std::to_string(point.z) +
              ") lies outside the grid");
  require(gs_labels.dims() == cs_map.dims, ErrorKind::data, "label volume and CS map differ in grid");
  const std::size_t v = gs_labels.index(point.x, point.y, point.z);
  for (const LesionCluster& c : cs_map.clusters) {
    if (!std::binary_search(c.voxels.begin(), c.voxels.end(), v)) continue;
    std::array<std::size_t, kNumGrades> counts{};
    for (std::size_t u : c.voxels) {
      if (auto g = grade_of_label(static_cast<int>(gs_labels[u]))) ++counts[static_cast<std::size_t>(grade_index(*g))];
    }
    int best = 0;
    for (int g = 1; g < kNumGrades; ++g) {
      if (counts[static_cast<std::size_t>(g)] >= counts[static_cast<std::size_t>(best)]) best = g;
    }
    return counts[static_cast<std::size_t>(best)] > 0 ? grade_from_index(best) : Grade::gs6;
  }
  return Grade::gs6;
}

std::vector<DetectionRecord> grade_records(const LesionMap& pred_gs, const LesionMap& gt_gs,
                                           const MatchOptions& options, const std::string& patient_id, int fold) {
  const std::vector<PredictionCredit> credits = credit_predictions(pred_gs, gt_gs, options);
  const auto hits = intersections(pred_gs, gt_gs);

  std::vector<bool> detected(gt_gs.clusters.size(), false);
  std::vector<std::vector<std::size_t>> candidates(gt_gs.clusters.size());
  for (std::size_t p = 0; p < credits.size(); ++p) {
    if (credits[p].score < options.score_threshold) continue;
    if (credits[p].gt) detected[*credits[p].gt] = true;
    for (const Hit& h : hits[p]) candidates[h.gt].push_back(p);
  }

  std::vector<DetectionRecord> records;
  records.reserve(gt_gs.clusters.size());
  for (std::size_t g = 0; g < gt_gs.clusters.size(); ++g) {
    const LesionCluster& lesion = gt_gs.clusters[g];
    DetectionRecord r;
    r.patient_id = patient_id;
    r.fold = fold;
    r.zone = lesion.zone;
    r.gt_grade = lesion.grade.value_or(Grade::gs6);
    if (detected[g]) {
      std::vector<const LesionCluster*> cands;
      for (std::size_t p : candidates[g]) cands.push_back(&pred_gs.clusters[p]);
      const LesionCluster& chosen = *cands[best_dice_assignment(lesion, cands)];
      const std::size_t inter = intersection_size(lesion.voxels, chosen.voxels);
      r.pred_grade = chosen.grade.value_or(Grade::gs6);
      r.score = chosen.score;
      r.dice = dice_of(inter, lesion.voxels.size(), chosen.voxels.size());
      r.overlap_frac = overlap_fraction(inter, chosen.voxels.size(), lesion.voxels.size(), options.denominator);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_records_csv(std::ostream& out, std::span<const DetectionRecord> records) {
  out << "patient_id,fold,zone,gt_grade,pred_grade,score,dice,overlap_frac\n";
  for (const DetectionRecord& r : records) {
    out << r.patient_id << ',' << r.fold << ',' << zone_name(r.zone) << ',' << grade_name(r.gt_grade) << ','
        << (r.pred_grade ? grade_name(*r.pred_grade) : std::string_view("MISSED")) << ',' << format_double(r.score)
        << ',' << format_double(r.dice) << ',' << format_double(r.overlap_frac) << '\n';
  }
}

std::vector<DetectionRecord> read_records_csv(std::istream& in) {
  std::vector<DetectionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (line_no == 1 && !f.empty() && f[0] == "patient_id") continue;
    require(f.size() == 8, ErrorKind::data, "detection CSV line " + std::to_string(line_no) + " needs 8 fields");
    DetectionRecord r;
    r.patient_id = f[0];
    r.fold = static_cast<int>(parse_number(f[1], "fold"));
    const auto zone = parse_zone(f[2]);
    require(zone.has_value(), ErrorKind::data, "unknown zone '" + f[2] + "' on line " + std::to_string(line_no));
    r.zone = *zone;
    const auto gt = parse_grade(f[3]);
    require(gt.has_value(), ErrorKind::data, "unknown grade '" + f[3] + "' on line " + std::to_string(line_no));
    r.gt_grade = *gt;
    if (f[4] != "MISSED") {
      const auto pg = parse_grade(f[4]);
      require(pg.has_value(), ErrorKind::data, "unknown grade '" + f[4] + "' on line " + std::to_string(line_no));
      r.pred_grade = *pg;
    }
    r.score = parse_number(f[5], "score");
    r.dice = parse_number(f[6], "dice");
    r.overlap_frac = parse_number(f[7], "overlap_frac");
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace prosteval
