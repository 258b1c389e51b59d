#include "prosteval/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "prosteval/error.hpp"
#include "prosteval/json_io.hpp"
#include "prosteval/rng.hpp"

namespace prosteval {

void PhantomConfig::validate() const {
  require(n_patients >= 1, ErrorKind::config, "phantom needs at least one patient");
  require(n_folds >= 1, ErrorKind::config, "phantom needs at least one fold");
  require(dims.nx >= 8 && dims.ny >= 8 && dims.nz >= 3, ErrorKind::config, "phantom grid is too small");
  require(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0, ErrorKind::config, "phantom spacing must be positive");
  for (int n : lesions_per_grade) require(n >= 0, ErrorKind::config, "lesion counts must be nonnegative");
  require(radius_min_mm > 0 && radius_max_mm >= radius_min_mm, ErrorKind::config, "invalid lesion radius range");
  for (double f : gland_fraction) require(f > 0 && f < 0.5, ErrorKind::config, "gland fractions must lie in (0, 0.5)");
  require(tz_scale > 0 && tz_scale < 1, ErrorKind::config, "tz_scale must lie in (0, 1)");
  require(miss_fraction >= 0 && miss_fraction <= 1, ErrorKind::config, "miss fraction must lie in [0, 1]");
  for (const auto& row : misgrade) {
    double sum = 0.0;
    for (double p : row) {
      require(p >= 0.0, ErrorKind::config, "misgrade probabilities must be nonnegative");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::config, "misgrade table rows must sum to 1");
  }
  // Scores above 0.5 keep the scripted channel the argmax.
  require(score_min > 0.5 && score_max <= 1.0 && score_min <= score_max, ErrorKind::config,
          "detected-lesion scores must lie in (0.5, 1]");
  require(fp_per_patient >= 0, ErrorKind::config, "false-positive count must be nonnegative");
  require(fp_score > 0.5 && fp_score <= 1.0, ErrorKind::config, "false-positive score must lie in (0.5, 1]");
  double wsum = 0.0;
  for (double w : fp_grade_weights) {
    require(w >= 0.0, ErrorKind::config, "false-positive grade weights must be nonnegative");
    wsum += w;
  }
  require(fp_per_patient == 0 || wsum > 0.0, ErrorKind::config, "false-positive grade weights are all zero");
  require(max_placement_attempts >= 1, ErrorKind::config, "placement attempts must be positive");
}

namespace {

template <std::size_t N>
int sample_index(CounterRng& rng, const std::array<double, N>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  int last = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (weights[i] <= 0.0) continue;
    last = static_cast<int>(i);
    if (u < weights[i]) return last;
    u -= weights[i];
  }
  return last;
}

double float_score(double s) { return static_cast<double>(static_cast<float>(s)); }

class PatientBuilder {
 public:
  PatientBuilder(const PhantomConfig& cfg, CounterRng& rng)
      : cfg_(cfg), rng_(rng), zone_(cfg.dims.count(), Zone::unknown), blocked_(cfg.dims.count(), 0) {
    const Dims& d = cfg.dims;
    const Spacing& s = cfg.spacing;
    const std::array<double, 3> center{(d.nx - 1) * s.sx / 2.0, (d.ny - 1) * s.sy / 2.0, (d.nz - 1) * s.sz / 2.0};
    const std::array<double, 3> extent{d.nx * s.sx, d.ny * s.sy, d.nz * s.sz};
    std::array<double, 3> axes{};
    for (std::size_t k = 0; k < 3; ++k) axes[k] = cfg.gland_fraction[k] * extent[k] * rng_.uniform(0.95, 1.05);
    const double tz2 = cfg.tz_scale * cfg.tz_scale;
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
      for (int y = 0; y < d.ny; ++y) {
        for (int x = 0; x < d.nx; ++x, ++i) {
          const double u = (x * s.sx - center[0]) / axes[0];
          const double v = (y * s.sy - center[1]) / axes[1];
          const double w = (z * s.sz - center[2]) / axes[2];
          const double r2 = u * u + v * v + w * w;
          if (r2 > 1.0) continue;
          zone_[i] = r2 <= tz2 ? Zone::tz : Zone::pz;
          gland_.push_back(i);
        }
      }
    }
    require(!gland_.empty(), ErrorKind::config, "phantom gland is empty");
  }

  // Ellipsoid blob inside one zone, clear of everything placed so far.
  std::pair<VoxelList, Zone> place_blob(const std::string& what) {
    const Dims& d = cfg_.dims;
    const Spacing& s = cfg_.spacing;
    for (int attempt = 0; attempt < cfg_.max_placement_attempts; ++attempt) {
      const std::size_t c = gland_[rng_.below(gland_.size())];
      const double rx = rng_.uniform(cfg_.radius_min_mm, cfg_.radius_max_mm);
      const double ry = rng_.uniform(cfg_.radius_min_mm, cfg_.radius_max_mm);
      const double rz = rng_.uniform(cfg_.radius_min_mm, cfg_.radius_max_mm);
      const Zone zone = zone_[c];
      const int cx = static_cast<int>(c % static_cast<std::size_t>(d.nx));
      const int cy = static_cast<int>((c / static_cast<std::size_t>(d.nx)) % static_cast<std::size_t>(d.ny));
      const int cz = static_cast<int>(c / (static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny)));
      const int hx = static_cast<int>(std::floor(rx / s.sx));
      const int hy = static_cast<int>(std::floor(ry / s.sy));
      const int hz = static_cast<int>(std::floor(rz / s.sz));

      VoxelList voxels;
      bool ok = true;
      for (int z = cz - hz; ok && z <= cz + hz; ++z) {
        for (int y = cy - hy; ok && y <= cy + hy; ++y) {
          for (int x = cx - hx; ok && x <= cx + hx; ++x) {
            const double u = (x - cx) * s.sx / rx;
            const double v = (y - cy) * s.sy / ry;
            const double w = (z - cz) * s.sz / rz;
            if (u * u + v * v + w * w > 1.0) continue;
            if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) {
              ok = false;
              break;
            }
            const std::size_t i = static_cast<std::size_t>(x) +
                                  static_cast<std::size_t>(d.nx) *
                                      (static_cast<std::size_t>(y) + static_cast<std::size_t>(d.ny) * static_cast<std::size_t>(z));
            if (zone_[i] != zone || blocked_[i]) {
              ok = false;
              break;
            }
            voxels.push_back(i);
          }
        }
      }
      if (!ok) continue;
      std::sort(voxels.begin(), voxels.end());
      block_around(voxels);
      return {std::move(voxels), zone};
    }
    fail(ErrorKind::config, "could not place " + what + " without overlap after " +
                                std::to_string(cfg_.max_placement_attempts) + " attempts");
  }

  const std::vector<Zone>& zones() const { return zone_; }

 private:
  // Blocks every voxel within Chebyshev distance 2, so later blobs keep two
  // empty voxels in between.
  void block_around(const VoxelList& voxels) {
    const Dims& d = cfg_.dims;
    for (std::size_t v : voxels) {
      const int x = static_cast<int>(v % static_cast<std::size_t>(d.nx));
      const int y = static_cast<int>((v / static_cast<std::size_t>(d.nx)) % static_cast<std::size_t>(d.ny));
      const int z = static_cast<int>(v / (static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny)));
      for (int dz = -2; dz <= 2; ++dz)
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const int qx = x + dx, qy = y + dy, qz = z + dz;
            if (qx < 0 || qy < 0 || qz < 0 || qx >= d.nx || qy >= d.ny || qz >= d.nz) continue;
            blocked_[static_cast<std::size_t>(qx) +
                     static_cast<std::size_t>(d.nx) *
                         (static_cast<std::size_t>(qy) + static_cast<std::size_t>(d.ny) * static_cast<std::size_t>(qz))] = 1;
          }
    }
  }

  const PhantomConfig& cfg_;
  CounterRng& rng_;
  std::vector<Zone> zone_;
  std::vector<std::uint8_t> blocked_;
  std::vector<std::size_t> gland_;
};

std::string patient_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%03d", index);
  return buf;
}

}  // namespace

PhantomCohort generate_cohort(const PhantomConfig& config) {
  config.validate();
  PhantomCohort cohort;
  cohort.ledger.config = config;
  const CounterRng master(config.seed);
  const Dims& d = config.dims;

  for (int p = 0; p < config.n_patients; ++p) {
    CounterRng rng = master.substream(static_cast<std::uint64_t>(p));
    PatientBuilder builder(config, rng);
    PatientLedger entry;
    entry.id = patient_id(p);
    entry.fold = p % config.n_folds;

    for (Grade g : kAllGrades) {
      for (int k = 0; k < config.lesions_per_grade[static_cast<std::size_t>(grade_index(g))]; ++k) {
        PhantomLesion lesion;
        lesion.grade = g;
        std::tie(lesion.voxels, lesion.zone) = builder.place_blob("lesion");
        lesion.detected = !rng.bernoulli(config.miss_fraction);
        lesion.pred_grade = grade_from_index(sample_index(rng, config.misgrade[static_cast<std::size_t>(grade_index(g))]));
        lesion.score = float_score(rng.uniform(config.score_min, config.score_max));
        if (!lesion.detected) {
          lesion.pred_grade = Grade::gs6;
          lesion.score = 0.0;
        }
        entry.lesions.push_back(std::move(lesion));
      }
    }
    for (int k = 0; k < config.fp_per_patient; ++k) {
      PhantomFalsePositive fp;
      fp.grade = grade_from_index(sample_index(rng, config.fp_grade_weights));
      std::tie(fp.voxels, fp.zone) = builder.place_blob("false positive");
      fp.score = float_score(config.fp_score);
      entry.false_positives.push_back(std::move(fp));
    }

    std::vector<float> labels(d.count(), static_cast<float>(label::background));
    std::vector<float> pz(d.count(), 0.0f);
    std::vector<float> tz(d.count(), 0.0f);
    const auto& zones = builder.zones();
    for (std::size_t i = 0; i < d.count(); ++i) {
      if (zones[i] == Zone::unknown) continue;
      labels[i] = label::prostate;
      (zones[i] == Zone::pz ? pz : tz)[i] = 1.0f;
    }
    for (const PhantomLesion& l : entry.lesions)
      for (std::size_t v : l.voxels) labels[v] = label_of(l.grade);

    cohort.patients.push_back(PhantomPatient{
        entry.id, entry.fold, Volume(d, config.spacing, VolumeKind::label, std::move(labels)),
        ZoneMask(Volume(d, config.spacing, VolumeKind::label, std::move(pz)),
                 Volume(d, config.spacing, VolumeKind::label, std::move(tz)))});
    cohort.ledger.patients.push_back(std::move(entry));
  }
  return cohort;
}

ProbStack degrade_prediction(const PhantomPatient& patient, const PatientLedger& ledger) {
  const Volume& labels = patient.labels;
  const std::size_t n = labels.size();
  std::vector<std::vector<float>> ch(kNumClasses, std::vector<float>(n, 0.0f));
  for (std::size_t i = 0; i < n; ++i) {
    ch[labels[i] == label::background ? label::background : label::prostate][i] = 1.0f;
  }
  auto paint = [&](const VoxelList& voxels, Grade g, double score) {
    const auto s = static_cast<float>(score);
    for (std::size_t v : voxels) {
      for (auto& c : ch) c[v] = 0.0f;
      ch[label_of(g)][v] = s;
      ch[label::prostate][v] = 1.0f - s;
    }
  };
  for (const PhantomLesion& l : ledger.lesions) {
    if (l.detected) paint(l.voxels, l.pred_grade, l.score);
  }
  for (const PhantomFalsePositive& fp : ledger.false_positives) paint(fp.voxels, fp.grade, fp.score);

  std::vector<Volume> channels;
  for (auto& c : ch) channels.emplace_back(labels.dims(), labels.spacing(), VolumeKind::probability, std::move(c));
  return ProbStack(std::move(channels));
}

void write_cohort(const PhantomCohort& cohort, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "gt", ec);
  std::filesystem::create_directories(dir / "pred", ec);
  require(std::filesystem::is_directory(dir / "gt") && std::filesystem::is_directory(dir / "pred"), ErrorKind::data,
          "cannot create cohort directory " + dir.string());

  json manifest;
  manifest["n_folds"] = cohort.ledger.config.n_folds;
  manifest["patients"] = json::array();
  for (std::size_t p = 0; p < cohort.patients.size(); ++p) {
    const PhantomPatient& patient = cohort.patients[p];
    write_volume(patient.labels, dir / "gt" / (patient.id + "_labels"));
    write_volume(patient.zones.pz(), dir / "gt" / (patient.id + "_pz"));
    write_volume(patient.zones.tz(), dir / "gt" / (patient.id + "_tz"));
    write_prob_stack(degrade_prediction(patient, cohort.ledger.patients[p]), dir / "pred" / (patient.id + "_prob"));
    manifest["patients"].push_back({{"id", patient.id}, {"fold", patient.fold}});
  }
  write_json_file(manifest, dir / "cohort.json");
  write_json_file(ledger_to_json(cohort.ledger), dir / "ledger.json");
}

}  // namespace prosteval
