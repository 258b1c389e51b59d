// Compares an evaluation report against the outcome derived from a phantom
// ledger. Returns one line per disagreement; empty means they agree.
#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace oracle {

namespace detail {

inline void compare_curve(const json& got, const std::optional<OracleCurve>& want, const std::string& where,
                          double tol, std::vector<std::string>& out) {
  if (!want) {
    if (!got.is_null()) out.push_back(where + ": expected no curve");
    return;
  }
  if (got.is_null()) {
    out.push_back(where + ": curve missing");
    return;
  }
  if (got.at("n_gt_lesions").get<std::size_t>() != want->n_gt) out.push_back(where + ": lesion count differs");
  const json& pts = got.at("points");
  if (pts.size() != want->points.size()) {
    out.push_back(where + ": " + std::to_string(pts.size()) + " points, expected " +
                  std::to_string(want->points.size()));
    return;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const OraclePoint& w = want->points[i];
    const double t = pts[i].at("threshold").get<double>();
    const double fp = pts[i].at("mean_fp").get<double>();
    const double s = pts[i].at("sensitivity").get<double>();
    if (t != w.threshold || std::abs(fp - w.mean_fp) > tol || std::abs(s - w.sensitivity) > tol) {
      std::ostringstream msg;
      msg.precision(17);
      msg << where << " point " << i << ": (" << t << ", " << fp << ", " << s << ") expected (" << w.threshold << ", "
          << w.mean_fp << ", " << w.sensitivity << ")";
      out.push_back(msg.str());
    }
  }
}

// Kappa with the convention that zero expected disagreement gives 1.
inline std::optional<double> expected_kappa(const Matrix4& m) {
  std::int64_t n = 0;
  for (const auto& row : m)
    for (auto v : row) n += v;
  if (n == 0) return std::nullopt;
  const auto k = kappa_direct(m);
  return k ? *k : 1.0;
}

inline void compare_matrix(const json& got, const Matrix4& want, const std::string& where, double tol,
                           std::vector<std::string>& out) {
  const auto k = expected_kappa(want);
  if (!k) {
    if (!got.is_null()) out.push_back(where + ": expected an empty matrix");
    return;
  }
  if (got.is_null()) {
    out.push_back(where + ": matrix missing");
    return;
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (got.at("counts")[i][j].get<std::int64_t>() != want[i][j])
        out.push_back(where + ": count [" + std::to_string(i) + "][" + std::to_string(j) + "] differs");
  if (std::abs(got.at("kappa").get<double>() - *k) > tol) out.push_back(where + ": kappa differs");
}

}  // namespace detail

inline std::vector<std::string> compare_report(const json& report, const LedgerOracle& o, double tol) {
  std::vector<std::string> out;
  if (report.at("n_patients").get<std::size_t>() != o.n_patients) out.push_back("patient count differs");

  const json& cs = report.at("froc_cs");
  detail::compare_curve(cs.at("pooled"), o.cs, "CS pooled", tol, out);
  for (const auto& [fold, curve] : o.cs_fold)
    detail::compare_curve(cs.at("per_fold").at(std::to_string(fold)), curve, "CS fold " + std::to_string(fold), tol,
                          out);
  for (int g = 0; g < 4; ++g)
    detail::compare_curve(report.at("froc_by_grade").at(kGradeNames[g]).at("pooled"), o.by_grade[g],
                          kGradeNames[g] + " pooled", tol, out);

  const json& conf = report.at("confusion");
  const std::pair<const char*, const Matrix4*> pooled[] = {{"tp_only", &o.tp_only}, {"fn_as_gs6", &o.fn_as_gs6}};
  for (const auto& [name, m] : pooled) detail::compare_matrix(conf.at(name).at("pooled"), *m, name, tol, out);
  const std::pair<const char*, const std::map<int, Matrix4>*> folds[] = {{"tp_only", &o.tp_only_fold},
                                                                          {"fn_as_gs6", &o.fn_as_gs6_fold}};
  for (const auto& [name, per_fold] : folds) {
    std::vector<double> kappas;
    for (const auto& [fold, m] : *per_fold) {
      detail::compare_matrix(conf.at(name).at("per_fold").at(std::to_string(fold)), m,
                             std::string(name) + " fold " + std::to_string(fold), tol, out);
      if (const auto k = detail::expected_kappa(m)) kappas.push_back(*k);
    }
    const json& mean = conf.at(name).at("fold_kappa_mean");
    if (kappas.empty()) {
      if (!mean.is_null()) out.push_back(std::string(name) + ": expected no fold kappa");
      continue;
    }
    double mu = 0.0;
    for (double k : kappas) mu += k;
    mu /= static_cast<double>(kappas.size());
    if (mean.is_null() || std::abs(mean.get<double>() - mu) > tol) out.push_back(std::string(name) + ": fold kappa mean differs");
  }
  return out;
}

}  // namespace oracle
