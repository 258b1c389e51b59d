#include <cmath>
#include <numeric>

#include "doctest.h"
#include "prosteval/error.hpp"
#include "prosteval/netmath.hpp"
#include "support/oracles.hpp"

using namespace prosteval;

namespace {

ClassMatrix random_probs(oracle::Gen& gen, std::size_t n, std::size_t c) {
  ClassMatrix p(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += p(i, k) = gen.real(0.1, 1.0);
    for (std::size_t k = 0; k < c; ++k) p(i, k) /= s;
  }
  return p;
}

ClassMatrix random_onehot(oracle::Gen& gen, std::size_t n, std::size_t c) {
  std::vector<int> labels(n);
  for (int& l : labels) l = gen.integer(0, static_cast<int>(c) - 1);
  return ClassMatrix::one_hot(labels, c);
}

// Direct evaluation of the weighted Dice and CE terms.
double dice_ref(const ClassMatrix& p, const ClassMatrix& y, const std::vector<double>& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.voxels(); ++i)
    for (std::size_t c = 0; c < p.classes(); ++c) {
      num += w[c] * y(i, c) * p(i, c);
      den += w[c] * (y(i, c) + p(i, c));
    }
  return 1.0 - 2.0 * num / den;
}

double ce_ref(const ClassMatrix& p, const ClassMatrix& y, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.voxels(); ++i)
    for (std::size_t c = 0; c < p.classes(); ++c) s -= y(i, c) * w[c] * std::log(std::max(p(i, c), 1e-7));
  return s / static_cast<double>(p.voxels());
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST_CASE("class weights and schedule constants") {
  const auto lesion = ClassWeights::lesion_branch();
  REQUIRE(lesion.size() == 6);
  CHECK(lesion[0] == 0.002);
  CHECK(lesion[1] == 0.14);
  for (std::size_t c = 2; c < 6; ++c) CHECK(lesion[c] == 0.1715);
  const auto prostate = ClassWeights::prostate_branch();
  REQUIRE(prostate.size() == 2);
  CHECK(prostate[0] == 0.002);
  CHECK(prostate[1] == 0.14);
  const LossSchedule s;
  CHECK(s.switch_epoch == 20);
  CHECK(s.lambda1 == 1.0);
  CHECK(s.lambda2 == 1.0);
}

TEST_CASE("global loss activates the lesion branch at the switch epoch") {
  const LossValue prostate{0.5, 0.3, 0.2, false};
  const LossValue lesion{2.0, 1.0, 1.0, false};
  const LossSchedule s;
  CHECK(global_loss(prostate, lesion, s, 0) == 0.5);
  CHECK(global_loss(prostate, lesion, s, 19) == 0.5);
  CHECK(global_loss(prostate, lesion, s, 20) == 2.5);
  CHECK(global_loss(prostate, lesion, {2.0, 0.5, 3}, 3) == 2.0);
  CHECK_THROWS_AS(LossSchedule({1.0, -1.0, 20}).validate(), Error);
}

TEST_CASE("losses match direct formulas") {
  oracle::Gen gen(5);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 200));
    const std::size_t c = t % 2 ? 6 : 2;
    const auto w = c == 6 ? ClassWeights::lesion_branch() : ClassWeights::prostate_branch();
    const std::vector<double> wv(w.values().begin(), w.values().end());
    const auto p = random_probs(gen, n, c);
    const auto y = random_onehot(gen, n, c);
    CHECK(weighted_dice_loss(p, y, w) == doctest::Approx(dice_ref(p, y, wv)).epsilon(1e-12));
    CHECK(weighted_ce_loss(p, y, w) == doctest::Approx(ce_ref(p, y, wv)).epsilon(1e-12));
    const LossValue b = branch_loss(p, y, w);
    CHECK(b.total == doctest::Approx(b.dice_term + b.ce_term).epsilon(1e-15));
  }
}

TEST_CASE("loss edge cases") {
  const ClassMatrix y = ClassMatrix::one_hot(std::vector<int>{0, 1, 1}, 2);
  const ClassWeights w = ClassWeights::prostate_branch();
  CHECK(weighted_dice_loss(y, y, w) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(weighted_ce_loss(y, y, w) == 0.0);

  // Zero probability is clamped before the log.
  const ClassMatrix wrong = ClassMatrix::one_hot(std::vector<int>{1, 0, 0}, 2);
  CHECK(weighted_ce_loss(wrong, y, w) == doctest::Approx(-(0.002 + 0.14 + 0.14) * std::log(1e-7) / 3.0));

  // Only background present and weighted zero: the Dice denominator vanishes.
  const ClassMatrix bg = ClassMatrix::one_hot(std::vector<int>{0, 0, 0}, 2);
  const LossValue v = branch_loss(bg, bg, ClassWeights({0.0, 1.0}));
  CHECK(v.dice_empty);
  CHECK(v.dice_term == 0.0);

  CHECK_THROWS_AS(weighted_ce_gradient(wrong, y, w), Error);
  CHECK_THROWS_AS(weighted_dice_loss(ClassMatrix(3, 6), y, w), Error);
}

TEST_CASE("loss gradients match central differences") {
  oracle::Gen gen(21);
  const double h = 1e-4;
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(2, 16) * gen.integer(2, 16));
    const std::size_t c = t % 2 ? 6 : 2;
    const auto w = c == 6 ? ClassWeights::lesion_branch() : ClassWeights::prostate_branch();
    const std::vector<double> wv(w.values().begin(), w.values().end());
    auto p = random_probs(gen, n, c);
    const auto y = random_onehot(gen, n, c);
    const ClassMatrix g = branch_loss_gradient(p, y, w);
    const ClassMatrix gd = weighted_dice_gradient(p, y, w);
    const ClassMatrix gc = weighted_ce_gradient(p, y, w);
    double worst = 0.0;
    for (int probe = 0; probe < 40; ++probe) {
      const std::size_t i = static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1));
      const std::size_t k = static_cast<std::size_t>(gen.integer(0, static_cast<int>(c) - 1));
      const double x0 = p(i, k);
      p(i, k) = x0 + h;
      const double dp = dice_ref(p, y, wv), cp = ce_ref(p, y, wv);
      p(i, k) = x0 - h;
      const double dm = dice_ref(p, y, wv), cm = ce_ref(p, y, wv);
      p(i, k) = x0;
      worst = std::max(worst, rel(gd(i, k), (dp - dm) / (2 * h)));
      worst = std::max(worst, rel(gc(i, k), (cp - cm) / (2 * h)));
      worst = std::max(worst, rel(g(i, k), (dp + cp - dm - cm) / (2 * h)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("library self check agrees") {
  const GradientCheckReport r = check_gradients(7, 4);
  CHECK(r.instances == 4);
  CHECK(r.max_rel() < 1e-4);
}

TEST_CASE("attention resampler") {
  SUBCASE("integer ratio pools block averages") {
    const AttentionResampler r(4, 4, 2, 2);
    CHECK(r.is_pooling());
    AttentionMap a(4, 4);
    std::iota(a.values.begin(), a.values.end(), 0.0);
    const AttentionMap out = r.apply(a);
    CHECK(out.at(0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
    CHECK(out.at(1, 1) == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  }
  SUBCASE("same size is the identity") {
    const AttentionResampler r(3, 5, 3, 5);
    AttentionMap a(3, 5);
    std::iota(a.values.begin(), a.values.end(), 1.0);
    CHECK(r.apply(a).values == a.values);
  }
  SUBCASE("adjoint satisfies <Ax, y> = <x, A^T y>") {
    oracle::Gen gen(9);
    for (int t = 0; t < 20; ++t) {
      const std::size_t sh = static_cast<std::size_t>(gen.integer(2, 20)), sw = static_cast<std::size_t>(gen.integer(2, 20));
      const std::size_t dh = static_cast<std::size_t>(gen.integer(1, static_cast<int>(sh)));
      const std::size_t dw = static_cast<std::size_t>(gen.integer(1, static_cast<int>(sw)));
      const AttentionResampler r(sh, sw, dh, dw);
      AttentionMap x(sh, sw), y(dh, dw);
      for (double& v : x.values) v = gen.real(-1, 1);
      for (double& v : y.values) v = gen.real(-1, 1);
      const AttentionMap ax = r.apply(x), aty = r.apply_adjoint(y);
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t k = 0; k < y.values.size(); ++k) lhs += ax.values[k] * y.values[k];
      for (std::size_t k = 0; k < x.values.size(); ++k) rhs += x.values[k] * aty.values[k];
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention gate forward and backward") {
  oracle::Gen gen(33);
  const double h = 1e-4;
  for (int t = 0; t < 10; ++t) {
    const std::size_t ch = static_cast<std::size_t>(gen.integer(1, 6));
    const std::size_t bh = static_cast<std::size_t>(gen.integer(2, 16)), bw = static_cast<std::size_t>(gen.integer(2, 16));
    const std::size_t ratio = static_cast<std::size_t>(gen.integer(1, 2));
    // The attention map is at least the block resolution.
    const std::size_t ah = t % 2 ? bh * ratio : bh + static_cast<std::size_t>(gen.integer(0, 7));
    const std::size_t aw = t % 2 ? bw * ratio : bw + static_cast<std::size_t>(gen.integer(0, 7));
    FeatureStack f(ch, bh, bw), dout(ch, bh, bw);
    for (double& v : f.values) v = gen.real(-1, 1);
    for (double& v : dout.values) v = gen.real(-1, 1);
    AttentionMap a(ah, aw);
    for (double& v : a.values) v = gen.real(0, 1);
    auto loss = [&](const FeatureStack& ff, const AttentionMap& aa) {
      const FeatureStack o = attention_gate_forward(ff, aa);
      double s = 0.0;
      for (std::size_t k = 0; k < o.values.size(); ++k) s += o.values[k] * dout.values[k];
      return s;
    };
    const AttentionGradients g = attention_gate_backward(f, a, dout);
    REQUIRE(g.attention.height == ah);
    REQUIRE(g.attention.width == aw);
    double worst = 0.0;
    for (std::size_t k = 0; k < f.values.size(); ++k) {
      FeatureStack fp = f, fm = f;
      fp.values[k] += h;
      fm.values[k] -= h;
      worst = std::max(worst, rel(g.features.values[k], (loss(fp, a) - loss(fm, a)) / (2 * h)));
    }
    for (std::size_t k = 0; k < a.values.size(); ++k) {
      AttentionMap ap = a, am = a;
      ap.values[k] += h;
      am.values[k] -= h;
      worst = std::max(worst, rel(g.attention.values[k], (loss(f, ap) - loss(f, am)) / (2 * h)));
    }
    CHECK(worst < 1e-4);
  }

  // All-ones attention passes features through unchanged.
  FeatureStack f(2, 3, 3);
  std::iota(f.values.begin(), f.values.end(), 0.0);
  CHECK(attention_gate_forward(f, AttentionMap(6, 6, 1.0)).values == f.values);
  CHECK(attention_gate_forward(f, AttentionMap(3, 3, 0.0)).values == std::vector<double>(18, 0.0));
}

TEST_CASE("label_from_probs takes the argmax, lowest index on ties") {
  const Dims d{3, 1, 1};
  std::vector<Volume> ch;
  const std::vector<std::vector<float>> v{{0.5f, 0.0f, 0.0f}, {0.5f, 0.2f, 0.0f}, {0, 0.2f, 0},
                                          {0, 0.6f, 0},       {0, 0, 0},          {0, 0, 1}};
  for (const auto& c : v) ch.emplace_back(d, Spacing{1, 1, 3}, VolumeKind::probability, c);
  const Volume labels = label_from_probs(ProbStack(ch));
  CHECK(labels.kind() == VolumeKind::label);
  CHECK(labels[0] == 0.0f);
  CHECK(labels[1] == 3.0f);
  CHECK(labels[2] == 5.0f);
}
