#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prosteval/volume.hpp"

namespace prosteval {

/// Row-per-voxel matrix of per-class values (N voxels x C classes).
class ClassMatrix {
 public:
  ClassMatrix(std::size_t voxels, std::size_t classes, std::vector<double> values);
  ClassMatrix(std::size_t voxels, std::size_t classes, double fill = 0.0);

  /// One-hot encoding of integer labels in [0, classes).
  static ClassMatrix one_hot(std::span<const int> labels, std::size_t classes);

  std::size_t voxels() const { return voxels_; }
  std::size_t classes() const { return classes_; }
  double operator()(std::size_t i, std::size_t c) const { return values_[i * classes_ + c]; }
  double& operator()(std::size_t i, std::size_t c) { return values_[i * classes_ + c]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  friend bool operator==(const ClassMatrix&, const ClassMatrix&) = default;

 private:
  std::size_t voxels_;
  std::size_t classes_;
  std::vector<double> values_;
};

class ClassWeights {
 public:
  explicit ClassWeights(std::vector<double> w);

  /// (background, prostate) = (0.002, 0.14).
  static ClassWeights prostate_branch();
  /// (0.002, 0.14, 0.1715, 0.1715, 0.1715, 0.1715).
  static ClassWeights lesion_branch();

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t c) const { return w_[c]; }
  std::span<const double> values() const { return w_; }

 private:
  std::vector<double> w_;
};

struct LossSchedule {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int switch_epoch = 20;  // lambda2 is inactive for epochs < switch_epoch

  void validate() const;
};

struct LossValue {
  double total = 0.0;
  double dice_term = 0.0;
  double ce_term = 0.0;
  bool dice_empty = false;  // weighted denominator was zero; dice_term forced to 0
};

/// Lower clamp applied to probabilities before the log.
inline constexpr double kLogClamp = 1e-7;

/// 1 - 2 * sum_c w_c sum_i y_ci p_ci / sum_c w_c sum_i (y_ci + p_ci).
/// Returns 0 when the weighted denominator is zero.
double weighted_dice_loss(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w);

/// -(1/N) sum_i sum_c y_ci w_c log(max(p_ci, kLogClamp)).
double weighted_ce_loss(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w);

/// Dice + cross-entropy, used for both the 2-class and the 6-class branch.
LossValue branch_loss(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w);

/// lambda1 * prostate + (epoch < switch_epoch ? 0 : lambda2) * lesion.
double global_loss(const LossValue& prostate, const LossValue& lesion, const LossSchedule& schedule, int epoch);

/// d(dice term)/dp. Defined on the closed box [0,1]; zero when the denominator is zero.
ClassMatrix weighted_dice_gradient(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w);

/// d(ce term)/dp. Requires every p strictly inside (kLogClamp, 1).
ClassMatrix weighted_ce_gradient(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w);

/// d(dice_term + ce_term)/dp. Same precondition as weighted_ce_gradient.
ClassMatrix branch_loss_gradient(const ClassMatrix& p, const ClassMatrix& y, const ClassWeights& w);

// ---------------------------------------------------------------------------
// Attention gate

/// C feature planes of (height, width), channel-major then row-major.
struct FeatureStack {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  FeatureStack() = default;
  FeatureStack(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0);

  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
};

/// Prostate probability plane (height, width), row-major.
struct AttentionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  AttentionMap() = default;
  AttentionMap(std::size_t h, std::size_t w, double fill = 0.0);

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Linear map from an attention plane down to a block resolution. Integer
/// ratios use area-average pooling, anything else bilinear sampling at
/// aligned pixel centers. apply_adjoint is its exact transpose.
class AttentionResampler {
 public:
  AttentionResampler(std::size_t src_h, std::size_t src_w, std::size_t dst_h, std::size_t dst_w);

  bool is_pooling() const { return pooling_; }
  AttentionMap apply(const AttentionMap& a) const;
  AttentionMap apply_adjoint(const AttentionMap& g) const;

 private:
  struct Tap {
    std::size_t src;
    double weight;
  };
  std::size_t src_h_, src_w_, dst_h_, dst_w_;
  bool pooling_;
  std::vector<std::size_t> offsets_;  // dst pixel i uses taps_[offsets_[i] .. offsets_[i+1])
  std::vector<Tap> taps_;
};

/// out_c = f_c * resample(a), for every channel.
FeatureStack attention_gate_forward(const FeatureStack& f, const AttentionMap& a);

struct AttentionGradients {
  FeatureStack features;   // dL/df
  AttentionMap attention;  // dL/da at the full attention resolution
};

AttentionGradients attention_gate_backward(const FeatureStack& f, const AttentionMap& a, const FeatureStack& dout);

// ---------------------------------------------------------------------------

/// Per-voxel argmax over the six channels; ties go to the lowest class index.
Volume label_from_probs(const ProbStack& probs);

/// One axial slice of a stack as an (nx*ny) x 6 matrix.
ClassMatrix slice_probabilities(const ProbStack& probs, int z);

/// One axial slice of a label volume, one-hot over `classes`.
ClassMatrix slice_one_hot(const Volume& labels, int z, std::size_t classes = kNumClasses);

// ---------------------------------------------------------------------------
// Finite-difference self check, used by the `losscheck` command.

struct GradientCheckReport {
  int instances = 0;
  double step = 0.0;
  double dice_max_rel = 0.0;
  double ce_max_rel = 0.0;
  double branch_max_rel = 0.0;
  double attention_features_max_rel = 0.0;
  double attention_map_max_rel = 0.0;

  double max_rel() const;
};

/// Central differences against the analytic gradients on random instances
/// (loss: up to 16x16x6 voxels, 2 or 6 classes; gate: random block and
/// attention resolutions, both pooling and bilinear).
GradientCheckReport check_gradients(std::uint64_t seed, int instances = 10, double step = 1e-4);

}  // namespace prosteval
