#include "prosteval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "format.hpp"
#include "prosteval/error.hpp"
#include "prosteval/rng.hpp"

namespace prosteval {

PatientDetections patient_detections(const LesionMap& pred, const LesionMap& gt, const MatchOptions& options) {
  PatientDetections d;
  d.n_gt = gt.clusters.size();
  for (const PredictionCredit& c : credit_predictions(pred, gt, options)) d.predictions.push_back({c.score, c.gt});
  return d;
}

namespace {

// Number of entries >= t in a descending-sorted vector.
std::size_t count_at_least(const std::vector<double>& descending, double t) {
  return static_cast<std::size_t>(
      std::partition_point(descending.begin(), descending.end(), [t](double s) { return s >= t; }) -
      descending.begin());
}

}  // namespace

FrocCurve froc_curve(std::span<const PatientDetections> patients, bool strict) {
  require(!patients.empty(), ErrorKind::config, "FROC needs at least one patient");
  FrocCurve curve;
  curve.n_patients = patients.size();

  std::vector<double> fp_scores;
  std::vector<std::vector<double>> lesion_scores;  // crediting prediction scores per lesion
  std::vector<double> thresholds{0.0, std::nextafter(1.0, 2.0)};
  for (const PatientDetections& p : patients) {
    const std::size_t base = lesion_scores.size();
    lesion_scores.resize(base + p.n_gt);
    for (const auto& pred : p.predictions) {
      require(std::isfinite(pred.score), ErrorKind::data, "non-finite lesion score");
      thresholds.push_back(pred.score);
      if (pred.gt) {
        require(*pred.gt < p.n_gt, ErrorKind::config, "prediction credited to a nonexistent lesion");
        lesion_scores[base + *pred.gt].push_back(pred.score);
      } else {
        fp_scores.push_back(pred.score);
      }
    }
  }
  curve.n_gt_lesions = lesion_scores.size();
  require(curve.n_gt_lesions > 0, ErrorKind::degenerate, "sensitivity is undefined without ground-truth lesions");

  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::sort(fp_scores.begin(), fp_scores.end(), std::greater<>());
  for (auto& s : lesion_scores) std::sort(s.begin(), s.end(), std::greater<>());

  const auto n_patients = static_cast<double>(curve.n_patients);
  const auto n_gt = static_cast<double>(curve.n_gt_lesions);
  for (double t : thresholds) {
    std::size_t tp = 0;
    std::size_t fp = count_at_least(fp_scores, t);
    for (const auto& s : lesion_scores) {
      const std::size_t k = count_at_least(s, t);
      if (k > 0) {
        ++tp;
        if (strict) fp += k - 1;
      }
    }
    curve.points.push_back({t, static_cast<double>(fp) / n_patients, static_cast<double>(tp) / n_gt});
  }
  return curve;
}

FrocCurve froc_by_grade(std::span<const MapPair> patients, Grade g, const MatchOptions& options) {
  std::vector<PatientDetections> detections;
  detections.reserve(patients.size());
  for (const MapPair& p : patients) {
    require(p.pred && p.gt, ErrorKind::config, "missing lesion map");
    require(p.pred->kind == MapKind::gs && p.gt->kind == MapKind::gs, ErrorKind::config,
            "per-grade FROC needs GS lesion maps");
    detections.push_back(patient_detections(filter_by_grade(*p.pred, g), filter_by_grade(*p.gt, g), options));
  }
  return froc_curve(detections, options.strict);
}

double sensitivity_at_fp(const FrocCurve& curve, double fp_rate) {
  require(fp_rate >= 0.0, ErrorKind::config, "FP rate must be nonnegative");
  double best = 0.0;
  for (const FrocPoint& p : curve.points) {
    if (p.mean_fp <= fp_rate) best = std::max(best, p.sensitivity);
  }
  return best;
}

MeanStd mean_std(std::span<const double> values) {
  require(!values.empty(), ErrorKind::degenerate, "mean of an empty sample");
  const auto n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

std::vector<AggregatePoint> aggregate_folds(std::span<const FrocCurve> curves, std::span<const double> fp_grid) {
  require(curves.size() >= 2, ErrorKind::config, "fold aggregation needs at least two folds");
  require(!fp_grid.empty(), ErrorKind::config, "fp grid is empty");
  std::vector<AggregatePoint> out;
  std::vector<double> sens(curves.size());
  for (double fp : fp_grid) {
    for (std::size_t k = 0; k < curves.size(); ++k) sens[k] = sensitivity_at_fp(curves[k], fp);
    const MeanStd ms = mean_std(sens);
    out.push_back({fp, ms.mean, ms.std, ms.mean - 2.0 * ms.std, ms.mean + 2.0 * ms.std});
  }
  return out;
}

void write_froc_csv(std::ostream& out, const FrocCurve& curve) {
  out << "threshold,mean_fp_per_patient,sensitivity\n";
  for (const FrocPoint& p : curve.points) {
    out << format_double(p.threshold) << ',' << format_double(p.mean_fp) << ',' << format_double(p.sensitivity)
        << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, std::span<const AggregatePoint> points) {
  out << "fp,sens_mean,sens_lo,sens_hi\n";
  for (const AggregatePoint& p : points) {
    out << format_double(p.fp) << ',' << format_double(p.mean) << ',' << format_double(p.lo) << ','
        << format_double(p.hi) << '\n';
  }
}

// ---------------------------------------------------------------------------

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts)
    for (std::int64_t c : row) t += c;
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int i) const {
  const auto& row = counts[static_cast<std::size_t>(i)];
  return std::accumulate(row.begin(), row.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::col_sum(int j) const {
  std::int64_t s = 0;
  for (const auto& row : counts) s += row[static_cast<std::size_t>(j)];
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts.size(); ++j) counts[i][j] += other.counts[i][j];
  return *this;
}

ConfusionMatrix confusion_matrix(std::span<const DetectionRecord> records, bool include_fn_as_gs6) {
  ConfusionMatrix cm;
  cm.include_fn_as_gs6 = include_fn_as_gs6;
  for (const DetectionRecord& r : records) {
    const auto i = static_cast<std::size_t>(grade_index(r.gt_grade));
    if (r.pred_grade) {
      ++cm.counts[i][static_cast<std::size_t>(grade_index(*r.pred_grade))];
    } else if (include_fn_as_gs6) {
      ++cm.counts[i][static_cast<std::size_t>(grade_index(Grade::gs6))];
    }
  }
  return cm;
}

KappaResult quadratic_weighted_kappa(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  require(total > 0, ErrorKind::degenerate, "kappa of an empty confusion matrix");
  constexpr int K = kNumGrades;
  std::array<double, K> rows{};
  std::array<double, K> cols{};
  for (int i = 0; i < K; ++i) {
    rows[static_cast<std::size_t>(i)] = static_cast<double>(cm.row_sum(i));
    cols[static_cast<std::size_t>(i)] = static_cast<double>(cm.col_sum(i));
  }
  const auto n = static_cast<double>(total);
  double observed = 0.0;
  double expected = 0.0;
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / static_cast<double>((K - 1) * (K - 1));
      observed += w * static_cast<double>(cm.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
      expected += w * rows[static_cast<std::size_t>(i)] * cols[static_cast<std::size_t>(j)] / n;
    }
  }
  KappaResult r;
  if (expected == 0.0) {
    r.degenerate = true;
    r.kappa = observed == 0.0 ? 1.0 : 0.0;
  } else {
    r.kappa = 1.0 - observed / expected;
  }
  return r;
}

std::vector<double> bootstrap_kappa_samples(std::span<const DetectionRecord> records, bool include_fn_as_gs6,
                                            int n_iter, std::uint64_t seed, BootstrapUnit unit) {
  require(n_iter >= 1, ErrorKind::config, "bootstrap needs at least one iteration");
  require(!records.empty(), ErrorKind::degenerate, "bootstrap of an empty record set");

  // Resampling units: single records, or all records of one patient.
  std::vector<std::vector<std::size_t>> groups;
  if (unit == BootstrapUnit::lesion) {
    for (std::size_t i = 0; i < records.size(); ++i) groups.push_back({i});
  } else {
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto [it, inserted] = slot.try_emplace(records[i].patient_id, groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  }

  const CounterRng master(seed);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(n_iter));
  std::vector<DetectionRecord> resample;
  for (int k = 0; k < n_iter; ++k) {
    CounterRng rng = master.substream(static_cast<std::uint64_t>(k));
    resample.clear();
    for (std::size_t d = 0; d < groups.size(); ++d) {
      for (std::size_t i : groups[rng.below(groups.size())]) resample.push_back(records[i]);
    }
    const ConfusionMatrix cm = confusion_matrix(resample, include_fn_as_gs6);
    if (cm.total() == 0) continue;
    samples.push_back(quadratic_weighted_kappa(cm).kappa);
  }
  return samples;
}

KappaResult bootstrap_kappa(std::span<const DetectionRecord> records, bool include_fn_as_gs6, int n_iter,
                            std::uint64_t seed, BootstrapUnit unit) {
  KappaResult r = quadratic_weighted_kappa(confusion_matrix(records, include_fn_as_gs6));
  const std::vector<double> samples = bootstrap_kappa_samples(records, include_fn_as_gs6, n_iter, seed, unit);
  r.n_iterations = n_iter;
  if (!samples.empty()) {
    const MeanStd ms = mean_std(samples);
    r.bootstrap_mean = ms.mean;
    r.bootstrap_std = ms.std;
  }
  return r;
}

// ---------------------------------------------------------------------------

double dice_coefficient(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  require(a.size() == b.size(), ErrorKind::data, "Dice masks differ in size");
  std::size_t na = 0;
  std::size_t nb = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    both += (a[i] != 0) && (b[i] != 0);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double dice_coefficient(const Volume& a, const Volume& b) {
  require(a.dims() == b.dims(), ErrorKind::data, "Dice volumes are on different grids");
  return dice_coefficient(foreground_mask(a), foreground_mask(b));
}

WilcoxonResult wilcoxon_one_sided(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::config, "paired samples differ in length");
  require(!x.empty(), ErrorKind::config, "paired samples are empty");

  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(std::isfinite(x[i]) && std::isfinite(y[i]), ErrorKind::data, "non-finite sample value");
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  }
  require(!d.empty(), ErrorKind::degenerate, "all paired differences are zero");
  const std::size_t n = d.size();

  // Average ranks of |d|, stored doubled so they stay integral.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<std::size_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const std::size_t doubled = (i + 1) + (j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  std::size_t w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) w2 += rank2[i];
  }

  WilcoxonResult r;
  r.n = n;
  r.statistic = static_cast<double>(w2) / 2.0;
  if (n <= kWilcoxonExactLimit) {
    // Null distribution of the doubled statistic over all 2^n sign patterns.
    const std::size_t max_sum = std::accumulate(rank2.begin(), rank2.end(), std::size_t{0});
    std::vector<std::uint64_t> counts(max_sum + 1, 0);
    counts[0] = 1;
    std::size_t reach = 0;
    for (std::size_t r2 : rank2) {
      for (std::size_t s = reach + 1; s-- > 0;) {
        if (counts[s]) counts[s + r2] += counts[s];
      }
      reach += r2;
    }
    std::uint64_t tail = 0;
    for (std::size_t s = w2; s <= max_sum; ++s) tail += counts[s];
    r.p_value = static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(n));
    r.exact = true;
    return r;
  }

  const auto nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  require(var > 0.0, ErrorKind::degenerate, "signed-rank variance is zero");
  const double z = (r.statistic - mean) / std::sqrt(var);
  r.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
  r.exact = false;
  return r;
}

}  // namespace prosteval
