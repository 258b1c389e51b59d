#include "prosteval/cluster.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <numeric>
#include <string>

#include "prosteval/error.hpp"

namespace prosteval {

Connectivity connectivity_from_int(int n) {
  switch (n) {
    case 6: return Connectivity::six;
    case 18: return Connectivity::eighteen;
    case 26: return Connectivity::twenty_six;
    default: fail(ErrorKind::config, "connectivity must be 6, 18 or 26, got " + std::to_string(n));
  }
}

namespace {

struct Offset {
  int dx, dy, dz;
};

// Neighbors already visited by a raster scan (z slowest, x fastest).
std::vector<Offset> backward_offsets(Connectivity connectivity) {
  const int max_l1 = connectivity == Connectivity::six ? 1 : connectivity == Connectivity::eighteen ? 2 : 3;
  std::vector<Offset> out;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const bool before = dz < 0 || (dz == 0 && dy < 0) || (dz == 0 && dy == 0 && dx < 0);
        if (before && std::abs(dx) + std::abs(dy) + std::abs(dz) <= max_l1) out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const std::size_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  // The smaller index becomes the root, so each root is its set's first voxel.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<VoxelList> connected_components(std::span<const std::uint8_t> mask, const Dims& dims,
                                            Connectivity connectivity) {
  require(mask.size() == dims.count(), ErrorKind::config, "mask size does not match dims");
  const std::vector<Offset> offsets = backward_offsets(connectivity);
  const auto nx = static_cast<std::ptrdiff_t>(dims.nx);
  const auto nxy = nx * dims.ny;

  DisjointSets sets(mask.size());
  std::size_t i = 0;
  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x, ++i) {
        if (!mask[i]) continue;
        for (const Offset& o : offsets) {
          const int qx = x + o.dx;
          const int qy = y + o.dy;
          const int qz = z + o.dz;
          if (qx < 0 || qy < 0 || qz < 0 || qx >= dims.nx || qy >= dims.ny) continue;
          const auto j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + o.dx + o.dy * nx + o.dz * nxy);
          if (mask[j]) sets.unite(i, j);
        }
      }
    }
  }

  // Roots are first voxels, so visiting in raster order yields components
  // ordered by first voxel and voxels already sorted.
  std::vector<VoxelList> components;
  std::vector<std::size_t> slot(mask.size(), 0);
  for (std::size_t v = 0; v < mask.size(); ++v) {
    if (!mask[v]) continue;
    const std::size_t root = sets.find(v);
    if (root == v) {
      slot[v] = components.size();
      components.emplace_back();
    }
    components[slot[root]].push_back(v);
  }
  return components;
}

std::vector<VoxelList> connected_components(const Volume& binary, Connectivity connectivity) {
  const std::vector<std::uint8_t> mask = foreground_mask(binary);
  return connected_components(mask, binary.dims(), connectivity);
}

BoundingBox bounding_box(const VoxelList& voxels, const Dims& dims) {
  require(!voxels.empty(), ErrorKind::config, "bounding box of an empty cluster");
  const auto nx = static_cast<std::size_t>(dims.nx);
  const auto ny = static_cast<std::size_t>(dims.ny);
  auto at = [&](std::size_t v) {
    return Index3{static_cast<int>(v % nx), static_cast<int>((v / nx) % ny), static_cast<int>(v / (nx * ny))};
  };
  BoundingBox box{at(voxels.front()), at(voxels.front())};
  for (std::size_t v : voxels) {
    const Index3 p = at(v);
    box.min = {std::min(box.min.x, p.x), std::min(box.min.y, p.y), std::min(box.min.z, p.z)};
    box.max = {std::max(box.max.x, p.x), std::max(box.max.y, p.y), std::max(box.max.z, p.z)};
  }
  return box;
}

std::size_t intersection_size(const VoxelList& a, const VoxelList& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

double lesion_probability_score(const LesionCluster& cluster, const ProbStack& probs) {
  require(!cluster.voxels.empty(), ErrorKind::config, "cannot score an empty cluster");
  double sum = 0.0;
  for (std::size_t v : cluster.voxels) {
    require(v < probs.size(), ErrorKind::data, "cluster voxel outside the probability grid");
    if (cluster.grade) {
      sum += probs.prob(label_of(*cluster.grade), v);
    } else {
      sum += static_cast<double>(probs.prob(label::gs3_4, v)) + static_cast<double>(probs.prob(label::gs4_3, v)) +
             static_cast<double>(probs.prob(label::gs8_plus, v));
    }
  }
  return std::clamp(sum / static_cast<double>(cluster.voxels.size()), 0.0, 1.0);
}

namespace {

void check_labels(const Volume& labels) {
  require(labels.kind() == VolumeKind::label, ErrorKind::data, "lesion maps need a label volume");
}

LesionCluster make_cluster(VoxelList voxels, std::optional<Grade> grade, const Volume& labels) {
  LesionCluster c;
  c.bbox = bounding_box(voxels, labels.dims());
  c.volume_mm3 = static_cast<double>(voxels.size()) * labels.voxel_volume_mm3();
  c.voxels = std::move(voxels);
  c.grade = grade;
  c.score = 1.0;
  return c;
}

LesionMap gs_map_impl(const Volume& labels, const ProbStack* probs, Connectivity connectivity) {
  check_labels(labels);
  if (probs) require(probs->dims() == labels.dims(), ErrorKind::data, "labels and probabilities differ in grid");
  LesionMap map{{}, labels.dims(), labels.spacing(), MapKind::gs};
  std::vector<std::uint8_t> mask(labels.size());
  for (Grade g : kAllGrades) {
    const float target = label_of(g);
    bool any = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      mask[i] = labels[i] == target ? 1 : 0;
      any = any || mask[i];
    }
    if (!any) continue;
    for (VoxelList& comp : connected_components(mask, labels.dims(), connectivity)) {
      LesionCluster c = make_cluster(std::move(comp), g, labels);
      if (probs) c.score = lesion_probability_score(c, *probs);
      map.clusters.push_back(std::move(c));
    }
  }
  return map;
}

LesionMap cs_map_impl(const Volume& labels, const ProbStack* probs, Connectivity connectivity) {
  check_labels(labels);
  if (probs) require(probs->dims() == labels.dims(), ErrorKind::data, "labels and probabilities differ in grid");
  LesionMap map{{}, labels.dims(), labels.spacing(), MapKind::cs};
  std::vector<std::uint8_t> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = is_cs_label(static_cast<int>(labels[i])) ? 1 : 0;
  for (VoxelList& comp : connected_components(mask, labels.dims(), connectivity)) {
    LesionCluster c = make_cluster(std::move(comp), std::nullopt, labels);
    if (probs) c.score = lesion_probability_score(c, *probs);
    map.clusters.push_back(std::move(c));
  }
  return map;
}

}  // namespace

LesionMap gs_lesion_maps(const Volume& labels, const ProbStack& probs, Connectivity connectivity) {
  return gs_map_impl(labels, &probs, connectivity);
}

LesionMap gs_lesion_maps(const Volume& labels, Connectivity connectivity) {
  return gs_map_impl(labels, nullptr, connectivity);
}

LesionMap cs_lesion_maps(const Volume& labels, const ProbStack& probs, Connectivity connectivity) {
  return cs_map_impl(labels, &probs, connectivity);
}

LesionMap cs_lesion_maps(const Volume& labels, Connectivity connectivity) {
  return cs_map_impl(labels, nullptr, connectivity);
}

LesionMap filter_by_volume(LesionMap map, double min_mm3) {
  require(min_mm3 >= 0.0, ErrorKind::config, "minimum volume must be nonnegative");
  std::erase_if(map.clusters, [min_mm3](const LesionCluster& c) { return c.volume_mm3 < min_mm3; });
  return map;
}

void assign_zones(LesionMap& map, const ZoneMask& zones) {
  require(zones.pz().dims() == map.dims, ErrorKind::data, "zone masks and lesion map differ in grid");
  for (LesionCluster& c : map.clusters) c.zone = zones.majority_zone(c.voxels);
}

LesionMap filter_by_zone(LesionMap map, Zone zone) {
  std::erase_if(map.clusters, [zone](const LesionCluster& c) { return c.zone != zone; });
  return map;
}

LesionMap filter_by_grade(const LesionMap& map, Grade g) {
  LesionMap out{{}, map.dims, map.spacing, map.kind};
  for (const LesionCluster& c : map.clusters) {
    if (c.grade == g) out.clusters.push_back(c);
  }
  return out;
}

}  // namespace prosteval
