// 26-connected component labeling of binary volumes.

#ifndef LESIONWISE_COMPONENTS_HPP
#define LESIONWISE_COMPONENTS_HPP

#include "lesionwise/volume.hpp"

#include <cstdint>
#include <vector>

namespace lesionwise {

using Label = std::int32_t;
using LabelVolume = Volume<Label>;

/// Connected components of a mask.
///
/// Labels are 1..count in ascending order of each component's smallest linear
/// voxel index; background is 0. voxel_lists[c - 1] holds the linear indices
/// of component c in ascending order.
struct ComponentLabeling {
  LabelVolume labels;
  Label count = 0;
  std::vector<std::vector<Index>> voxel_lists;
  std::vector<Index> volumes_vox;
  std::vector<double> volumes_mm3;

  const Shape& shape() const { return labels.shape(); }
  const Spacing& spacing() const { return labels.spacing(); }
};

/// Two-pass union-find labeling under 26-connectivity.
ComponentLabeling label_components(const BinaryMask& mask);

/// Mask of a single component. Throws std::invalid_argument unless 1 <= id <= count.
BinaryMask component_mask(const ComponentLabeling& lab, Label id);

/// Foreground of all components except `id` (K \ C).
BinaryMask other_components_mask(const ComponentLabeling& lab, Label id);

}  // namespace lesionwise

#endif  // LESIONWISE_COMPONENTS_HPP
