#include "lesionwise/phantoms.hpp"
#include "lesionwise/voronoi.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

using namespace lesionwise;

TEST_SUITE("phantoms") {

TEST_CASE("sixteen balls on a grid") {
  PhantomSpec spec{Shape(32, 32, 7), Spacing{}, {}, 0};
  for (Index cy = 0; cy < 4; ++cy)
    for (Index cx = 0; cx < 4; ++cx) spec.components.push_back({{8 * cx + 4, 8 * cy + 4, 3}, BlobKind::Ball, {2, 0, 0}});
  const Phantom p = build_phantom(spec);
  CHECK(p.lab.count == 16);
  CHECK(oracle::flood_fill(p.gt).size() == 16);
  for (Index v : p.lab.volumes_vox) CHECK(v == 33);  // radius-2 digital ball
}

TEST_CASE("adjacent or out-of-bounds components are rejected") {
  const Shape s(12, 5, 1);
  PhantomSpec gap1{s, Spacing{}, {{{2, 2, 0}, BlobKind::Box, {3, 1, 1}}, {{6, 2, 0}, BlobKind::Box, {3, 1, 1}}}, 0};
  // boxes x 1..3 and 5..7: one background voxel between them
  CHECK_THROWS_AS(build_phantom(gap1), std::invalid_argument);
  PhantomSpec gap2 = gap1;
  gap2.components[1].center = {7, 2, 0};  // x 6..8, two voxels apart
  CHECK(build_phantom(gap2).lab.count == 2);
  PhantomSpec outside{s, Spacing{}, {{{11, 2, 0}, BlobKind::Box, {3, 1, 1}}}, 0};
  CHECK_THROWS_AS(build_phantom(outside), std::invalid_argument);
}

TEST_CASE("seeded generators are deterministic") {
  const auto a = random_phantom_spec(Shape(16, 16, 16), Spacing{}, 5, 42);
  const auto b = random_phantom_spec(Shape(16, 16, 16), Spacing{}, 5, 42);
  const Phantom pa = build_phantom(a), pb = build_phantom(b);
  CHECK((pa.gt.array() == pb.gt.array()).all());
  CHECK(pa.lab.count == 5);
  const auto c = build_phantom(random_phantom_spec(Shape(16, 16, 16), Spacing{}, 5, 43));
  CHECK_FALSE((pa.gt.array() == c.gt.array()).all());

  CHECK((random_mask(Shape(5, 5, 5), 0.3, 9).array() == random_mask(Shape(5, 5, 5), 0.3, 9).array()).all());
  CHECK((random_logits(Shape(5, 5, 5), 2.0, 9).array() == random_logits(Shape(5, 5, 5), 2.0, 9).array()).all());
  CHECK(random_logits(Shape(5, 5, 5), 2.0, 9).array().abs().maxCoeff() <= 2.0);
  CHECK_THROWS_AS(random_phantom_spec(Shape(4, 4, 4), Spacing{}, 30, 1), std::invalid_argument);
}

TEST_CASE("figure one scenario") {
  const auto f = figure1_scenario();
  CHECK(f.lab.count == 16);
  CHECK(f.predicted_fraction == 100.0 / 113.0);
  const BinaryMask pred = binarize(sigmoid(f.pred_partial));
  const auto pred_lab = label_components(pred);
  CHECK(pred_lab.count == 3);
  // The predicted components are exactly the three largest ground-truth ones.
  std::vector<Index> sizes = f.lab.volumes_vox;
  std::sort(sizes.rbegin(), sizes.rend());
  std::vector<Index> pred_sizes = pred_lab.volumes_vox;
  std::sort(pred_sizes.rbegin(), pred_sizes.rend());
  CHECK(std::vector<Index>(sizes.begin(), sizes.begin() + 3) == pred_sizes);
  CHECK(((pred.array() != 0) && (f.gt.array() == 0)).count() == 0);
  CHECK((f.pred_perfect.array().abs() == kLogitClamp).all());
}

TEST_CASE("figure two scenario") {
  const auto f = figure2_scenario();
  CHECK(f.lab.count == 2);
  const auto part = voronoi_partition_bruteforce(f.lab);
  const auto small = static_cast<std::size_t>(f.small_id - 1), large = static_cast<std::size_t>(f.large_id - 1);
  CHECK(part.region_sizes[small] < part.region_sizes[large]);
  CHECK(f.lab.volumes_vox[small] < f.lab.volumes_vox[large]);
  for (Index v = 0; v < f.gt.size(); ++v) {
    if (f.fp_blob[v] == 0) continue;
    CHECK(part.region_of[v] == f.large_id);
    CHECK(f.gt[v] == 0);
    CHECK(f.logits[v] > 0.0);
  }
  // Small component is a false negative.
  for (Index v : f.lab.voxel_lists[small]) CHECK(f.logits[v] < 0.0);
}

}
