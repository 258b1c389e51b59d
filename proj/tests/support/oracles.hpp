// Independent reference implementations used by the unit and acceptance tests.
// Nothing here calls into the library's algorithms.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace oracle {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Connected components by breadth-first search over explicit neighbour offsets.

inline std::vector<std::array<int, 3>> offsets(int connectivity) {
  std::vector<std::array<int, 3>> out;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
        if (nonzero == 0) continue;
        if (connectivity == 6 && nonzero > 1) continue;
        if (connectivity == 18 && nonzero > 2) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

/// Components as sorted voxel lists, listed by smallest voxel.
inline std::vector<std::vector<std::size_t>> bfs_components(const std::vector<std::uint8_t>& mask, int nx, int ny,
                                                            int nz, int connectivity) {
  const auto offs = offsets(connectivity);
  std::vector<int> seen(mask.size(), 0);
  std::vector<std::vector<std::size_t>> comps;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || seen[start]) continue;
    std::vector<std::size_t> comp;
    std::deque<std::size_t> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      comp.push_back(v);
      const int x = static_cast<int>(v % nx), y = static_cast<int>((v / nx) % ny), z = static_cast<int>(v / (nx * ny));
      for (const auto& o : offs) {
        const int qx = x + o[0], qy = y + o[1], qz = z + o[2];
        if (qx < 0 || qy < 0 || qz < 0 || qx >= nx || qy >= ny || qz >= nz) continue;
        const std::size_t q = static_cast<std::size_t>(qx + nx * (qy + ny * qz));
        if (mask[q] && !seen[q]) {
          seen[q] = 1;
          queue.push_back(q);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

// ---------------------------------------------------------------------------
// Quadratic weighted kappa in the agreement-proportion form
// (p_o - p_e) / (1 - p_e) with agreement weights 1 - (i-j)^2 / (K-1)^2.

using Matrix4 = std::array<std::array<std::int64_t, 4>, 4>;

inline std::optional<double> kappa_direct(const Matrix4& m) {
  double n = 0.0;
  std::array<double, 4> rows{}, cols{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      n += static_cast<double>(m[i][j]);
      rows[i] += static_cast<double>(m[i][j]);
      cols[j] += static_cast<double>(m[i][j]);
    }
  if (n == 0.0) return std::nullopt;
  double po = 0.0, pe = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double agree = 1.0 - static_cast<double>((i - j) * (i - j)) / 9.0;
      po += agree * static_cast<double>(m[i][j]) / n;
      pe += agree * (rows[i] / n) * (cols[j] / n);
    }
  if (pe == 1.0) return std::nullopt;  // no expected disagreement
  return (po - pe) / (1.0 - pe);
}

// ---------------------------------------------------------------------------
// One-sided signed-rank p-value P(W+ >= observed) by enumerating all 2^n sign
// patterns of the nonzero differences.

struct SignedRankExact {
  double p_value;
  double w_plus;
  std::size_t n;
};

inline SignedRankExact wilcoxon_enumerate(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] - y[i] != 0.0) d.push_back(x[i] - y[i]);
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) w += rank[i];
  std::uint64_t hits = 0;
  for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << n); ++pattern) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (pattern >> i & 1) s += rank[i];
    if (s >= w - 1e-9) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(std::uint64_t{1} << n), w, n};
}

// ---------------------------------------------------------------------------
// Evaluation outcome derived from a phantom ledger alone.
//
// Every injected lesion and false-positive blob is a single isolated cluster.
// A detected lesion is predicted as exactly its own voxels with its predicted
// grade and score; a missed lesion leaves no prediction. Hence at threshold t:
//   * a lesion counts as found in a stratum when it is detected, its predicted
//     grade falls in the same stratum and its score >= t;
//   * every other prediction in the stratum with score >= t is a false positive.

inline const std::array<std::string, 4> kGradeNames{"GS6", "GS3+4", "GS4+3", "GS>=8"};

inline int grade_idx(const std::string& name) {
  for (int i = 0; i < 4; ++i)
    if (kGradeNames[i] == name) return i;
  throw std::runtime_error("unknown grade " + name);
}

struct OraclePoint {
  double threshold;
  double mean_fp;
  double sensitivity;
};

struct OracleCurve {
  std::size_t n_gt = 0;
  std::vector<OraclePoint> points;
};

struct LedgerOracle {
  std::size_t n_patients = 0;
  std::optional<OracleCurve> cs;
  std::map<int, std::optional<OracleCurve>> cs_fold;
  std::array<std::optional<OracleCurve>, 4> by_grade;
  Matrix4 tp_only{};
  Matrix4 fn_as_gs6{};
  std::map<int, Matrix4> tp_only_fold, fn_as_gs6_fold;
};

struct Blob {
  int patient;
  int fold;
  int gt_grade;    // -1 for an injected false positive
  int pred_grade;  // -1 for a missed lesion
  double score;
  std::string zone;
};

inline std::optional<OracleCurve> sweep(const std::vector<Blob>& blobs, std::size_t n_patients,
                                        bool (*in_stratum)(int, int), int g) {
  OracleCurve c;
  std::vector<double> thresholds{0.0, std::nextafter(1.0, 2.0)};
  for (const Blob& b : blobs) {
    if (b.gt_grade >= 0 && in_stratum(b.gt_grade, g)) ++c.n_gt;
    if (b.pred_grade >= 0 && in_stratum(b.pred_grade, g)) thresholds.push_back(b.score);
  }
  if (c.n_gt == 0) return std::nullopt;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  for (double t : thresholds) {
    std::size_t found = 0, fp = 0;
    for (const Blob& b : blobs) {
      if (b.pred_grade < 0 || !in_stratum(b.pred_grade, g) || b.score < t) continue;
      if (b.gt_grade >= 0 && in_stratum(b.gt_grade, g))
        ++found;
      else
        ++fp;
    }
    c.points.push_back({t, static_cast<double>(fp) / static_cast<double>(n_patients),
                        static_cast<double>(found) / static_cast<double>(c.n_gt)});
  }
  return c;
}

inline bool cs_stratum(int grade, int) { return grade >= 1; }
inline bool grade_stratum(int grade, int g) { return grade == g; }

/// `voxel_mm3` and `min_volume_mm3` reproduce the cluster volume filter;
/// `zone` ("" for none, else "PZ"/"TZ") the zonal filter.
inline LedgerOracle ledger_oracle(const json& ledger, double min_volume_mm3 = 45.0, const std::string& zone = "") {
  const auto& sp = ledger.at("config").at("spacing_mm");
  const double voxel_mm3 = sp[0].get<double>() * sp[1].get<double>() * sp[2].get<double>();
  std::vector<Blob> blobs;
  std::map<int, std::size_t> patients_per_fold;
  int index = 0;
  for (const json& p : ledger.at("patients")) {
    const int fold = p.at("fold").get<int>();
    ++patients_per_fold[fold];
    auto keep = [&](const json& b) {
      if (static_cast<double>(b.at("voxel_count").get<std::size_t>()) * voxel_mm3 < min_volume_mm3) return false;
      return zone.empty() || b.at("zone").get<std::string>() == zone;
    };
    for (const json& l : p.at("lesions")) {
      if (!keep(l)) continue;
      const bool detected = l.at("detected").get<bool>();
      blobs.push_back({index, fold, grade_idx(l.at("grade")), detected ? grade_idx(l.at("pred_grade")) : -1,
                       l.at("score").get<double>(), l.at("zone")});
    }
    for (const json& f : p.at("false_positives")) {
      if (!keep(f)) continue;
      blobs.push_back({index, fold, -1, grade_idx(f.at("grade")), f.at("score").get<double>(), f.at("zone")});
    }
    ++index;
  }

  LedgerOracle o;
  o.n_patients = static_cast<std::size_t>(index);
  o.cs = sweep(blobs, o.n_patients, cs_stratum, 0);
  for (const auto& [fold, n] : patients_per_fold) {
    std::vector<Blob> subset;
    for (const Blob& b : blobs)
      if (b.fold == fold) subset.push_back(b);
    o.cs_fold[fold] = sweep(subset, n, cs_stratum, 0);
    o.tp_only_fold[fold] = Matrix4{};
    o.fn_as_gs6_fold[fold] = Matrix4{};
  }
  for (int g = 0; g < 4; ++g) o.by_grade[static_cast<std::size_t>(g)] = sweep(blobs, o.n_patients, grade_stratum, g);
  for (const Blob& b : blobs) {
    if (b.gt_grade < 0) continue;
    if (b.pred_grade >= 0) {
      ++o.tp_only[b.gt_grade][b.pred_grade];
      ++o.tp_only_fold[b.fold][b.gt_grade][b.pred_grade];
    }
    const int col = b.pred_grade >= 0 ? b.pred_grade : 0;
    ++o.fn_as_gs6[b.gt_grade][col];
    ++o.fn_as_gs6_fold[b.fold][b.gt_grade][col];
  }
  return o;
}

// ---------------------------------------------------------------------------
// Hand-rolled random generators.

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace oracle
