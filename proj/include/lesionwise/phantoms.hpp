// Deterministic synthetic volumes for tests, demos and the CLI.

#ifndef LESIONWISE_PHANTOMS_HPP
#define LESIONWISE_PHANTOMS_HPP

#include "lesionwise/components.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace lesionwise {

enum class BlobKind { Box, Ball };

struct BlobSpec {
  std::array<Index, 3> center{};
  BlobKind kind = BlobKind::Box;
  /// Box: edge lengths in voxels, starting at center - size / 2.
  /// Ball: size[0] is the radius; voxels with |v - center|^2 <= r^2.
  std::array<Index, 3> size{1, 1, 1};
};

struct PhantomSpec {
  Shape shape;
  Spacing spacing;
  std::vector<BlobSpec> components;
  std::uint64_t seed = 0;
};

struct Phantom {
  BinaryMask gt;
  ComponentLabeling lab;
};

/// Minimum Chebyshev distance between voxels of different components, i.e.
/// at least two background voxels in between.
inline constexpr Index kMinComponentGap = 3;

/// Paints the blobs. Throws std::invalid_argument when a blob leaves the
/// volume, is empty, or comes closer than kMinComponentGap to another blob.
Phantom build_phantom(const PhantomSpec& spec);

/// Voxel indices covered by one blob (unclipped coordinates).
std::vector<std::array<Index, 3>> blob_voxels(const BlobSpec& blob);

/// Seeded random layout of `n_components` boxes and balls with edge/radius up
/// to `max_size`. Identical output for identical arguments.
PhantomSpec random_phantom_spec(const Shape& shape, const Spacing& spacing, int n_components,
                                std::uint64_t seed, Index max_size = 3);

/// Seeded random mask with roughly `fill` foreground fraction; no component constraints.
BinaryMask random_mask(const Shape& shape, double fill, std::uint64_t seed,
                       const Spacing& spacing = {});

/// Random logits uniform in [-scale, scale].
Volume<double> random_logits(const Shape& shape, double scale, std::uint64_t seed,
                             const Spacing& spacing = {});

/// Logits at +40 on `fg`, -40 elsewhere.
Volume<double> saturated_logits(const BinaryMask& fg);

/// Sixteen lesions on a 4x4 grid, three of them large.
struct Figure1Scenario {
  BinaryMask gt;
  ComponentLabeling lab;
  Volume<double> pred_perfect;
  /// Only the three largest components predicted.
  Volume<double> pred_partial;
  /// Foreground fraction held by the three predicted components.
  double predicted_fraction = 0.0;
};
Figure1Scenario figure1_scenario();

/// One large and one small lesion. The prediction covers the large lesion,
/// adds a false-positive blob next to it and misses the small lesion.
struct Figure2Scenario {
  BinaryMask gt;
  ComponentLabeling lab;
  Volume<double> logits;
  BinaryMask fp_blob;
  Label large_id = 0;
  Label small_id = 0;
};
Figure2Scenario figure2_scenario();

}  // namespace lesionwise

#endif  // LESIONWISE_PHANTOMS_HPP
