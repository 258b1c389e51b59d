#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prosteval/grade.hpp"
#include "prosteval/volume.hpp"

namespace prosteval {

enum class Connectivity : std::uint8_t { six = 6, eighteen = 18, twenty_six = 26 };

Connectivity connectivity_from_int(int n);
inline int to_int(Connectivity c) { return static_cast<int>(c); }

/// Sorted linear voxel indices.
using VoxelList = std::vector<std::size_t>;

/// Maximal connected foreground sets of `mask` (nonzero = foreground).
/// Two-pass union-find. Components are ordered by their first voxel in
/// raster order; each component's voxels are sorted.
std::vector<VoxelList> connected_components(std::span<const std::uint8_t> mask, const Dims& dims,
                                            Connectivity connectivity);
std::vector<VoxelList> connected_components(const Volume& binary, Connectivity connectivity);

struct BoundingBox {
  Index3 min;
  Index3 max;  // inclusive
};

enum class MapKind : std::uint8_t { gs, cs };

struct LesionCluster {
  VoxelList voxels;
  std::optional<Grade> grade;  // empty for CS-binary clusters
  double volume_mm3 = 0.0;
  double score = 0.0;
  BoundingBox bbox;
  Zone zone = Zone::unknown;

  std::size_t voxel_count() const { return voxels.size(); }
};

struct LesionMap {
  std::vector<LesionCluster> clusters;
  Dims dims;
  Spacing spacing;
  MapKind kind = MapKind::gs;

  std::size_t size() const { return clusters.size(); }
};

/// Per-grade clustering of the label map: one pass per grade over label == g,
/// so clusters never merge across grades. Clusters are listed by grade, then
/// by first voxel. Scores come from the grade channel.
LesionMap gs_lesion_maps(const Volume& labels, const ProbStack& probs, Connectivity connectivity);
/// Ground-truth variant: every cluster scores 1.
LesionMap gs_lesion_maps(const Volume& labels, Connectivity connectivity);

/// Clustering of the binary mask label in {GS3+4, GS4+3, GS>=8}. Scores use the
/// per-voxel sum of the three CS channels.
LesionMap cs_lesion_maps(const Volume& labels, const ProbStack& probs, Connectivity connectivity);
LesionMap cs_lesion_maps(const Volume& labels, Connectivity connectivity);

/// Drops clusters with volume_mm3 < min_mm3.
LesionMap filter_by_volume(LesionMap map, double min_mm3);

/// Mean over the cluster of its scoring channel, clamped to [0, 1].
double lesion_probability_score(const LesionCluster& cluster, const ProbStack& probs);

/// Sets every cluster's zone to the majority zone of its voxels.
void assign_zones(LesionMap& map, const ZoneMask& zones);

/// Keeps the clusters assigned to `zone`. Call assign_zones first.
LesionMap filter_by_zone(LesionMap map, Zone zone);

/// Keeps graded clusters of grade `g`.
LesionMap filter_by_grade(const LesionMap& map, Grade g);

BoundingBox bounding_box(const VoxelList& voxels, const Dims& dims);

/// |a ∩ b| for sorted voxel lists.
std::size_t intersection_size(const VoxelList& a, const VoxelList& b);

}  // namespace prosteval
