#include "prosteval/netmath.hpp"

#include <cmath>
#include <string>

#include "prosteval/error.hpp"

namespace prosteval {

ClassMatrix::ClassMatrix(std::size_t voxels, std::size_t classes, std::vector<double> values)
    : voxels_(voxels), classes_(classes), values_(std::move(values)) {
  require(classes_ >= 1, ErrorKind::config, "class matrix needs at least one class");
  require(values_.size() == voxels_ * classes_, ErrorKind::config, "class matrix size mismatch");
}

ClassMatrix::ClassMatrix(std::size_t voxels, std::size_t classes, double fill)
    : ClassMatrix(voxels, classes, std::vector<double>(voxels * classes, fill)) {}

ClassMatrix ClassMatrix::one_hot(std::span<const int> labels, std::size_t classes) {
  ClassMatrix m(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < classes, ErrorKind::config,
            "label " + std::to_string(labels[i]) + " outside the class range");
    m(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return m;
}

ClassWeights::ClassWeights(std::vector<double> w) : w_(std::move(w)) {
  require(!w_.empty(), ErrorKind::config, "class weights are empty");
  bool any_positive = false;
  for (double x : w_) {
    require(std::isfinite(x) && x >= 0.0, ErrorKind::config, "class weights must be finite and nonnegative");
    any_positive = any_positive || x > 0.0;
  }
  require(any_positive, ErrorKind::config, "at least one class weight must be positive");
}

ClassWeights ClassWeights::prostate_branch() { return ClassWeights({0.002, 0.14}); }

ClassWeights ClassWeights::lesion_branch() { return ClassWeights({0.002, 0.14, 0.1715, 0.1715, 0.1715, 0.1715}); }

void LossSchedule::validate() const {
  require(lambda1 >= 0.0 && lambda2 >= 0.0, ErrorKind::config, "loss weights must be nonnegative");
  require(switch_epoch >= 0, ErrorKind::config, "switch epoch must be nonnegative");
}

namespace {

void check_inputs(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  require(p.voxels() == y.voxels() && p.classes() == y.classes(), ErrorKind::config,
          "prediction and ground truth shapes differ");
  require(w.size() == p.classes(), ErrorKind::config,
          "expected " + std::to_string(p.classes()) + " class weights, got " + std::to_string(w.size()));
  require(p.voxels() >= 1, ErrorKind::config, "loss needs at least one voxel");
  for (double v : p.values()) {
    require(v >= 0.0 && v <= 1.0, ErrorKind::config, "predicted probability outside [0,1]");
  }
  for (std::size_t i = 0; i < y.voxels(); ++i) {
    double row = 0.0;
    for (std::size_t c = 0; c < y.classes(); ++c) {
      const double v = y(i, c);
      require(v == 0.0 || v == 1.0, ErrorKind::config, "ground truth is not one-hot");
      row += v;
    }
    require(row == 1.0, ErrorKind::config, "ground truth is not one-hot");
  }
}

struct DiceSums {
  double overlap = 0.0;      // sum_c w_c sum_i y p
  double denominator = 0.0;  // sum_c w_c sum_i (y + p)
};

DiceSums dice_sums(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  DiceSums s;
  for (std::size_t c = 0; c < p.classes(); ++c) {
    double yp = 0.0;
    double ysum = 0.0;
    double psum = 0.0;
    for (std::size_t i = 0; i < p.voxels(); ++i) {
      yp += y(i, c) * p(i, c);
      ysum += y(i, c);
      psum += p(i, c);
    }
    s.overlap += w[c] * yp;
    s.denominator += w[c] * (ysum + psum);
  }
  return s;
}

void check_interior(const ClassMatrix& p) {
  for (double v : p.values()) {
    require(v > kLogClamp && v < 1.0, ErrorKind::config,
            "cross-entropy gradient needs probabilities strictly inside (1e-7, 1)");
  }
}

}  // namespace

double weighted_dice_loss(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  check_inputs(p, y, w);
  const DiceSums s = dice_sums(p, y, w);
  if (s.denominator == 0.0) return 0.0;
  return 1.0 - 2.0 * s.overlap / s.denominator;
}

double weighted_ce_loss(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  check_inputs(p, y, w);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.voxels(); ++i) {
    for (std::size_t c = 0; c < p.classes(); ++c) {
      if (y(i, c) != 0.0) sum += w[c] * std::log(std::max(p(i, c), kLogClamp));
    }
  }
  return -sum / static_cast<double>(p.voxels());
}

LossValue branch_loss(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  LossValue v;
  v.dice_term = weighted_dice_loss(p, y, w);
  v.ce_term = weighted_ce_loss(p, y, w);
  v.dice_empty = dice_sums(p, y, w).denominator == 0.0;
  v.total = v.dice_term + v.ce_term;
  return v;
}

double global_loss(const LossValue& prostate, const LossValue& lesion, const LossSchedule& schedule, int epoch) {
  schedule.validate();
  require(epoch >= 0, ErrorKind::config, "epoch must be nonnegative");
  const double lambda2 = epoch < schedule.switch_epoch ? 0.0 : schedule.lambda2;
  return schedule.lambda1 * prostate.total + lambda2 * lesion.total;
}

ClassMatrix weighted_dice_gradient(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  check_inputs(p, y, w);
  const DiceSums s = dice_sums(p, y, w);
  ClassMatrix g(p.voxels(), p.classes());
  if (s.denominator == 0.0) return g;
  const double inv_b2 = 1.0 / (s.denominator * s.denominator);
  for (std::size_t i = 0; i < p.voxels(); ++i) {
    for (std::size_t c = 0; c < p.classes(); ++c) {
      g(i, c) = -2.0 * w[c] * (y(i, c) * s.denominator - s.overlap) * inv_b2;
    }
  }
  return g;
}

ClassMatrix weighted_ce_gradient(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  check_inputs(p, y, w);
  check_interior(p);
  ClassMatrix g(p.voxels(), p.classes());
  const double inv_n = 1.0 / static_cast<double>(p.voxels());
  for (std::size_t i = 0; i < p.voxels(); ++i) {
    for (std::size_t c = 0; c < p.classes(); ++c) {
      if (y(i, c) != 0.0) g(i, c) = -inv_n * w[c] / p(i, c);
    }
  }
  return g;
}

ClassMatrix branch_loss_gradient(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w) {
  ClassMatrix g = weighted_ce_gradient(p, y, w);
  const ClassMatrix d = weighted_dice_gradient(p, y, w);
  for (std::size_t k = 0; k < g.values().size(); ++k) g.values()[k] += d.values()[k];
  return g;
}

// ---------------------------------------------------------------------------

FeatureStack::FeatureStack(std::size_t c, std::size_t h, std::size_t w, double fill)
    : channels(c), height(h), width(w), values(c * h * w, fill) {}

AttentionMap::AttentionMap(std::size_t h, std::size_t w, double fill) : height(h), width(w), values(h * w, fill) {}

AttentionResampler::AttentionResampler(std::size_t src_h, std::size_t src_w, std::size_t dst_h, std::size_t dst_w)
    : src_h_(src_h), src_w_(src_w), dst_h_(dst_h), dst_w_(dst_w) {
  require(dst_h >= 1 && dst_w >= 1 && src_h >= dst_h && src_w >= dst_w, ErrorKind::config,
          "attention map (" + std::to_string(src_h) + "x" + std::to_string(src_w) +
              ") cannot be downsampled to block (" + std::to_string(dst_h) + "x" + std::to_string(dst_w) + ")");
  pooling_ = src_h % dst_h == 0 && src_w % dst_w == 0;
  offsets_.reserve(dst_h * dst_w + 1);
  offsets_.push_back(0);
  if (pooling_) {
    const std::size_t fy = src_h / dst_h;
    const std::size_t fx = src_w / dst_w;
    const double weight = 1.0 / static_cast<double>(fy * fx);
    for (std::size_t y = 0; y < dst_h; ++y) {
      for (std::size_t x = 0; x < dst_w; ++x) {
        for (std::size_t dy = 0; dy < fy; ++dy)
          for (std::size_t dx = 0; dx < fx; ++dx) taps_.push_back({(y * fy + dy) * src_w + x * fx + dx, weight});
        offsets_.push_back(taps_.size());
      }
    }
    return;
  }
  auto axis = [](std::size_t i, std::size_t n_src, std::size_t n_dst) {
    double u = (static_cast<double>(i) + 0.5) * static_cast<double>(n_src) / static_cast<double>(n_dst) - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(n_src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(u));
    const std::size_t i1 = std::min(i0 + 1, n_src - 1);
    return std::tuple{i0, i1, u - static_cast<double>(i0)};
  };
  for (std::size_t y = 0; y < dst_h; ++y) {
    const auto [y0, y1, fy] = axis(y, src_h, dst_h);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const auto [x0, x1, fx] = axis(x, src_w, dst_w);
      taps_.push_back({y0 * src_w + x0, (1.0 - fy) * (1.0 - fx)});
      taps_.push_back({y0 * src_w + x1, (1.0 - fy) * fx});
      taps_.push_back({y1 * src_w + x0, fy * (1.0 - fx)});
      taps_.push_back({y1 * src_w + x1, fy * fx});
      offsets_.push_back(taps_.size());
    }
  }
}

AttentionMap AttentionResampler::apply(const AttentionMap& a) const {
  require(a.height == src_h_ && a.width == src_w_, ErrorKind::config, "attention map shape mismatch");
  AttentionMap out(dst_h_, dst_w_);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    double v = 0.0;
    for (std::size_t t = offsets_[i]; t < offsets_[i + 1]; ++t) v += taps_[t].weight * a.values[taps_[t].src];
    out.values[i] = v;
  }
  return out;
}

AttentionMap AttentionResampler::apply_adjoint(const AttentionMap& g) const {
  require(g.height == dst_h_ && g.width == dst_w_, ErrorKind::config, "gradient shape mismatch");
  AttentionMap out(src_h_, src_w_);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    for (std::size_t t = offsets_[i]; t < offsets_[i + 1]; ++t) out.values[taps_[t].src] += taps_[t].weight * g.values[i];
  }
  return out;
}

namespace {

void check_gate_inputs(const FeatureStack& f, const AttentionMap& a) {
  require(f.values.size() == f.channels * f.height * f.width, ErrorKind::config, "feature stack size mismatch");
  require(a.values.size() == a.height * a.width, ErrorKind::config, "attention map size mismatch");
  for (double v : f.values) require(std::isfinite(v), ErrorKind::config, "non-finite feature value");
  for (double v : a.values) require(v >= 0.0 && v <= 1.0, ErrorKind::config, "attention value outside [0,1]");
}

}  // namespace

FeatureStack attention_gate_forward(const FeatureStack& f, const AttentionMap& a) {
  check_gate_inputs(f, a);
  const AttentionMap gate = AttentionResampler(a.height, a.width, f.height, f.width).apply(a);
  FeatureStack out(f.channels, f.height, f.width);
  const std::size_t plane = f.height * f.width;
  for (std::size_t c = 0; c < f.channels; ++c)
    for (std::size_t k = 0; k < plane; ++k) out.values[c * plane + k] = f.values[c * plane + k] * gate.values[k];
  return out;
}

AttentionGradients attention_gate_backward(const FeatureStack& f, const AttentionMap& a, const FeatureStack& dout) {
  check_gate_inputs(f, a);
  require(dout.channels == f.channels && dout.height == f.height && dout.width == f.width &&
              dout.values.size() == f.values.size(),
          ErrorKind::config, "output gradient shape differs from the features");
  const AttentionResampler resampler(a.height, a.width, f.height, f.width);
  const AttentionMap gate = resampler.apply(a);
  const std::size_t plane = f.height * f.width;

  AttentionGradients g{FeatureStack(f.channels, f.height, f.width), AttentionMap(f.height, f.width)};
  for (std::size_t c = 0; c < f.channels; ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      const std::size_t idx = c * plane + k;
      g.features.values[idx] = dout.values[idx] * gate.values[k];
      g.attention.values[k] += dout.values[idx] * f.values[idx];
    }
  }
  g.attention = resampler.apply_adjoint(g.attention);
  return g;
}

// ---------------------------------------------------------------------------

Volume label_from_probs(const ProbStack& probs) {
  std::vector<float> labels(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    int best = 0;
    float best_p = probs.prob(0, i);
    for (int c = 1; c < kNumClasses; ++c) {
      const float v = probs.prob(c, i);
      if (v > best_p) {
        best = c;
        best_p = v;
      }
    }
    labels[i] = static_cast<float>(best);
  }
  return Volume(probs.dims(), probs.spacing(), VolumeKind::label, std::move(labels));
}

ClassMatrix slice_probabilities(const ProbStack& probs, int z) {
  const Dims& d = probs.dims();
  require(z >= 0 && z < d.nz, ErrorKind::config, "slice index out of range");
  const std::size_t plane = static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny);
  ClassMatrix m(plane, kNumClasses);
  for (std::size_t k = 0; k < plane; ++k)
    for (int c = 0; c < kNumClasses; ++c)
      m(k, static_cast<std::size_t>(c)) = probs.prob(c, static_cast<std::size_t>(z) * plane + k);
  return m;
}

ClassMatrix slice_one_hot(const Volume& labels, int z, std::size_t classes) {
  require(labels.kind() == VolumeKind::label, ErrorKind::config, "expected a label volume");
  const Dims& d = labels.dims();
  require(z >= 0 && z < d.nz, ErrorKind::config, "slice index out of range");
  const std::size_t plane = static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny);
  std::vector<int> l(plane);
  for (std::size_t k = 0; k < plane; ++k) l[k] = static_cast<int>(labels[static_cast<std::size_t>(z) * plane + k]);
  return ClassMatrix::one_hot(l, classes);
}

}  // namespace prosteval
