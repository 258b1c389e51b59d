#include <algorithm>
#include <cmath>

#include "prosteval/error.hpp"
#include "prosteval/netmath.hpp"
#include "prosteval/rng.hpp"

namespace prosteval {

double GradientCheckReport::max_rel() const {
  return std::max({dice_max_rel, ce_max_rel, branch_max_rel, attention_features_max_rel, attention_map_max_rel});
}

namespace {

constexpr std::size_t kProbes = 256;

double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

std::vector<std::size_t> probe_indices(std::size_t n, CounterRng& rng) {
  std::vector<std::size_t> idx;
  if (n <= kProbes) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t k = 0; k < kProbes; ++k) idx.push_back(static_cast<std::size_t>(rng.below(n)));
  return idx;
}

template <class Loss>
double max_rel_over(ClassMatrix p, const ClassMatrix& grad, Loss&& loss, double h, CounterRng& rng) {
  double worst = 0.0;
  for (std::size_t k : probe_indices(p.values().size(), rng)) {
    double& x = p.values()[k];
    const double x0 = x;
    x = x0 + h;
    const double up = loss(p);
    x = x0 - h;
    const double down = loss(p);
    x = x0;
    worst = std::max(worst, rel_error(grad.values()[k], (up - down) / (2.0 * h)));
  }
  return worst;
}

}  // namespace

GradientCheckReport check_gradients(std::uint64_t seed, int instances, double step) {
  require(instances >= 1, ErrorKind::config, "instances must be >= 1");
  require(step > 0.0 && step < 0.01, ErrorKind::config, "finite-difference step must lie in (0, 0.01)");
  GradientCheckReport r;
  r.instances = instances;
  r.step = step;
  const CounterRng root(seed);

  for (int n = 0; n < instances; ++n) {
    CounterRng rng = root.substream(static_cast<std::uint64_t>(n));
    const std::size_t nx = 4 + rng.below(13), ny = 4 + rng.below(13), nz = 1 + rng.below(6);
    const std::size_t voxels = nx * ny * nz;
    const bool lesion = n % 2 == 1;
    const std::size_t classes = lesion ? kNumClasses : 2;
    const ClassWeights w = lesion ? ClassWeights::lesion_branch() : ClassWeights::prostate_branch();

    std::vector<int> labels(voxels);
    for (int& l : labels) l = static_cast<int>(rng.below(classes));
    const ClassMatrix y = ClassMatrix::one_hot(labels, classes);
    ClassMatrix p(voxels, classes);
    for (std::size_t i = 0; i < voxels; ++i) {
      double sum = 0.0;
      for (std::size_t c = 0; c < classes; ++c) sum += p(i, c) = rng.uniform(0.1, 1.0);
      for (std::size_t c = 0; c < classes; ++c) p(i, c) /= sum;
    }

    r.dice_max_rel = std::max(r.dice_max_rel, max_rel_over(p, weighted_dice_gradient(p, y, w),
                                                           [&](const ClassMatrix& q) { return weighted_dice_loss(q, y, w); },
                                                           step, rng));
    r.ce_max_rel = std::max(r.ce_max_rel, max_rel_over(p, weighted_ce_gradient(p, y, w),
                                                       [&](const ClassMatrix& q) { return weighted_ce_loss(q, y, w); },
                                                       step, rng));
    r.branch_max_rel = std::max(r.branch_max_rel, max_rel_over(p, branch_loss_gradient(p, y, w),
                                                               [&](const ClassMatrix& q) { return branch_loss(q, y, w).total; },
                                                               step, rng));

    // Attention gate: scalar loss sum(dout * forward(f, a)).
    const std::size_t ch = 1 + rng.below(6), bh = 2 + rng.below(15), bw = 2 + rng.below(15);
    std::size_t ah = bh, aw = bw;
    if (rng.bernoulli(0.5)) {
      const std::size_t ratio = 1 + rng.below(3);
      ah *= ratio;
      aw *= ratio;
    } else {
      // Non-integer ratios; the map is never smaller than the block.
      ah = bh + rng.below(9);
      aw = bw + rng.below(9);
    }
    FeatureStack f(ch, bh, bw), dout(ch, bh, bw);
    for (double& v : f.values) v = rng.uniform(-1.0, 1.0);
    for (double& v : dout.values) v = rng.uniform(-1.0, 1.0);
    AttentionMap a(ah, aw);
    // Interior values so the +/- step stays inside [0, 1].
    for (double& v : a.values) v = rng.uniform(0.01, 0.99);
    const AttentionGradients g = attention_gate_backward(f, a, dout);
    auto scalar = [&](const FeatureStack& ff, const AttentionMap& aa) {
      const FeatureStack out = attention_gate_forward(ff, aa);
      double s = 0.0;
      for (std::size_t k = 0; k < out.values.size(); ++k) s += dout.values[k] * out.values[k];
      return s;
    };
    for (std::size_t k : probe_indices(f.values.size(), rng)) {
      FeatureStack ff = f;
      ff.values[k] = f.values[k] + step;
      const double up = scalar(ff, a);
      ff.values[k] = f.values[k] - step;
      const double down = scalar(ff, a);
      r.attention_features_max_rel =
          std::max(r.attention_features_max_rel, rel_error(g.features.values[k], (up - down) / (2.0 * step)));
    }
    for (std::size_t k : probe_indices(a.values.size(), rng)) {
      AttentionMap aa = a;
      aa.values[k] = a.values[k] + step;
      const double up = scalar(f, aa);
      aa.values[k] = a.values[k] - step;
      const double down = scalar(f, aa);
      r.attention_map_max_rel =
          std::max(r.attention_map_max_rel, rel_error(g.attention.values[k], (up - down) / (2.0 * step)));
    }
  }
  return r;
}

}  // namespace prosteval
