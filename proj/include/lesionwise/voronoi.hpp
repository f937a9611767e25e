// Nearest-component partition of the lattice.
//
// Every voxel t is assigned the component C minimising d(t, C), the Euclidean
// distance to C's closest voxel. Ties go to the lowest component id.

#ifndef LESIONWISE_VORONOI_HPP
#define LESIONWISE_VORONOI_HPP

#include "lesionwise/components.hpp"

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace lesionwise {

enum class DistanceKind { Voxel, Physical };

/// Voxel: Euclidean distance on integer indices. Physical: indices scaled by spacing.
struct DistanceMetric {
  DistanceKind kind = DistanceKind::Voxel;
  Spacing spacing;

  static DistanceMetric voxel() { return {}; }
  static DistanceMetric physical(const Spacing& s) { return {DistanceKind::Physical, s}; }

  /// Per-axis weights on squared index offsets.
  std::array<double, 3> axis_weights() const {
    if (kind == DistanceKind::Voxel) return {1.0, 1.0, 1.0};
    return {spacing.sx * spacing.sx, spacing.sy * spacing.sy, spacing.sz * spacing.sz};
  }

  /// Squared distance for integer offsets, always summed x, then y, then z so
  /// every code path produces the same bits for the same pair of voxels.
  double squared(Index dx, Index dy, Index dz) const {
    const auto w = axis_weights();
    return (w[0] * static_cast<double>(dx * dx) + w[1] * static_cast<double>(dy * dy)) +
           w[2] * static_cast<double>(dz * dz);
  }

  std::string name() const { return kind == DistanceKind::Voxel ? "voxel" : "physical"; }
};

class EmptyGroundTruthError : public std::invalid_argument {
 public:
  explicit EmptyGroundTruthError(const std::string& where)
      : std::invalid_argument(where + ": ground truth has no components") {}
};

struct VoronoiPartition {
  /// Component id (1..count) owning each voxel.
  LabelVolume region_of;
  /// Euclidean distance from each voxel to its owning component.
  Volume<double> distances;
  Label count = 0;
  /// Voxel count of each region, index c - 1.
  std::vector<Index> region_sizes;

  const Shape& shape() const { return region_of.shape(); }
};

inline constexpr const char* kTiePolicy = "lowest-component-id";

/// Exact separable feature transform. O(|lattice|).
VoronoiPartition voronoi_partition(const ComponentLabeling& lab,
                                   const DistanceMetric& metric = DistanceMetric::voxel());

/// Literal evaluation of the definition: every voxel against every component
/// voxel. O(|lattice| * |foreground|); meant for tests.
VoronoiPartition voronoi_partition_bruteforce(const ComponentLabeling& lab,
                                              const DistanceMetric& metric = DistanceMetric::voxel());

/// Mask of region `id` (1..count).
BinaryMask region_mask(const VoronoiPartition& part, Label id);

}  // namespace lesionwise

#endif  // LESIONWISE_VORONOI_HPP
