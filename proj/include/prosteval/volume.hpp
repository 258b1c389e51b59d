#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "prosteval/grade.hpp"

namespace prosteval {

struct Dims {
  int nx = 1;
  int ny = 1;
  int nz = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Millimeters per voxel along x, y, z.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double voxel_volume_mm3() const { return sx * sy * sz; }
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;
  friend bool operator==(const Index3&, const Index3&) = default;
};

enum class VolumeKind : std::uint8_t { intensity, label, probability };

std::string_view kind_name(VolumeKind kind);
VolumeKind parse_kind(std::string_view text);

/// Dense 3D scalar grid, x-fastest / z-slowest. Immutable once built; the
/// constructor enforces the kind-specific value domain.
class Volume {
 public:
  Volume(Dims dims, Spacing spacing, VolumeKind kind, std::vector<float> values);

  static Volume filled(Dims dims, Spacing spacing, VolumeKind kind, float value = 0.0f);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  VolumeKind kind() const { return kind_; }
  std::span<const float> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double voxel_volume_mm3() const { return spacing_.voxel_volume_mm3(); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.nx) * (static_cast<std::size_t>(y) +
                                                 static_cast<std::size_t>(dims_.ny) * static_cast<std::size_t>(z));
  }
  Index3 coords(std::size_t i) const;
  bool contains(const Index3& p) const {
    return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < dims_.nx && p.y < dims_.ny && p.z < dims_.nz;
  }

  float operator[](std::size_t i) const { return values_[i]; }
  float operator()(int x, int y, int z) const { return values_[index(x, y, z)]; }

  bool same_grid(const Volume& other) const { return dims_ == other.dims_ && spacing_ == other.spacing_; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  VolumeKind kind_;
  std::vector<float> values_;
};

/// Six softmax channels on a shared grid, ordered as the label table in grade.hpp.
class ProbStack {
 public:
  static constexpr double kSumTolerance = 1e-5;

  explicit ProbStack(std::vector<Volume> channels);

  const Volume& channel(int c) const { return channels_[static_cast<std::size_t>(c)]; }
  float prob(int c, std::size_t voxel) const { return channels_[static_cast<std::size_t>(c)][voxel]; }
  const Dims& dims() const { return channels_.front().dims(); }
  const Spacing& spacing() const { return channels_.front().spacing(); }
  std::size_t size() const { return channels_.front().size(); }

 private:
  std::vector<Volume> channels_;
};

/// Peripheral and transition zone masks on the patient grid.
class ZoneMask {
 public:
  ZoneMask(Volume pz, Volume tz);

  const Volume& pz() const { return pz_; }
  const Volume& tz() const { return tz_; }
  Zone zone_at(std::size_t voxel) const;

  /// Zone holding the strict majority of `voxels`; unknown on ties or if most
  /// voxels lie outside both zones.
  Zone majority_zone(std::span<const std::size_t> voxels) const;

 private:
  Volume pz_;
  Volume tz_;
};

// ---------------------------------------------------------------------------
// File I/O
//
// A volume is stored as a JSON header `<name>.vol.json`
//   {"dims":[nx,ny,nz], "spacing_mm":[sx,sy,sz], "dtype":"u8"|"f32",
//    "kind":"intensity"|"label"|"probability", "data":"<name>.vol.raw"}
// plus the raw payload, little-endian, x-fastest. Label volumes are written
// as u8, all others as f32.

/// Accepts either the header path or the bare `<name>` stem.
Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

/// Header path for a stem or header path.
std::filesystem::path volume_header_path(const std::filesystem::path& path);

/// A stack is stored as six volumes `<prefix>_c0` .. `<prefix>_c5`.
ProbStack read_prob_stack(const std::filesystem::path& prefix);
void write_prob_stack(const ProbStack& stack, const std::filesystem::path& prefix);
std::filesystem::path prob_channel_path(const std::filesystem::path& prefix, int channel);

// ---------------------------------------------------------------------------
// Preprocessing

enum class Interpolation : std::uint8_t { bilinear, nearest };
enum class NormalizationScope : std::uint8_t { volume, slice };

/// Resamples each axial slice onto a grid with in-plane spacing (tx, ty).
/// The output extent is round(n * s / t). Sample positions are aligned on
/// voxel centers and clamped at the border, so equal grids give the identity.
Volume resample_in_plane(const Volume& v, double tx, double ty, Interpolation interp);

/// Crops a (w, h) in-plane window whose origin is floor((extent - crop) / 2).
Volume crop_center(const Volume& v, int w, int h);

/// Linear min-max map onto [0, 1]; constant input (per scope) maps to zeros.
Volume normalize_min_max(const Volume& v, NormalizationScope scope = NormalizationScope::volume);

/// Resample (bilinear) + center crop + min-max normalization of an intensity
/// volume. The z spacing must already equal target.sz.
Volume preprocess(const Volume& v, const Spacing& target, int crop_w, int crop_h,
                  NormalizationScope scope = NormalizationScope::volume);

/// Nearest-neighbor resample + center crop of a label volume, no normalization.
Volume preprocess_labels(const Volume& v, const Spacing& target, int crop_w, int crop_h);

/// Mask of voxels whose value is nonzero.
std::vector<std::uint8_t> foreground_mask(const Volume& v);

}  // namespace prosteval
