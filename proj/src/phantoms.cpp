#include "lesionwise/phantoms.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace lesionwise {

namespace {

// mt19937_64 output is fixed by the standard; the std distributions are not,
// so draws are reduced by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Index below(Index n) { return static_cast<Index>(engine_() % static_cast<std::uint64_t>(n)); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace

std::vector<std::array<Index, 3>> blob_voxels(const BlobSpec& blob) {
  std::vector<std::array<Index, 3>> out;
  const auto& c = blob.center;
  if (blob.kind == BlobKind::Box) {
    for (Index s : blob.size) {
      if (s <= 0) throw std::invalid_argument("blob: box edges must be positive");
    }
    const std::array<Index, 3> lo{c[0] - blob.size[0] / 2, c[1] - blob.size[1] / 2,
                                  c[2] - blob.size[2] / 2};
    for (Index z = lo[2]; z < lo[2] + blob.size[2]; ++z)
      for (Index y = lo[1]; y < lo[1] + blob.size[1]; ++y)
        for (Index x = lo[0]; x < lo[0] + blob.size[0]; ++x) out.push_back({x, y, z});
  } else {
    const Index r = blob.size[0];
    if (r < 0) throw std::invalid_argument("blob: ball radius must be non-negative");
    for (Index z = c[2] - r; z <= c[2] + r; ++z)
      for (Index y = c[1] - r; y <= c[1] + r; ++y)
        for (Index x = c[0] - r; x <= c[0] + r; ++x) {
          const Index dx = x - c[0], dy = y - c[1], dz = z - c[2];
          if (dx * dx + dy * dy + dz * dz <= r * r) out.push_back({x, y, z});
        }
  }
  return out;
}

Phantom build_phantom(const PhantomSpec& spec) {
  const Shape& s = spec.shape;
  LabelVolume owner(s, spec.spacing, Label{0});
  Label id = 0;
  for (const auto& blob : spec.components) {
    ++id;
    for (const auto& v : blob_voxels(blob)) {
      if (!s.contains(v[0], v[1], v[2])) {
        throw std::invalid_argument("phantom: component " + std::to_string(id) + " leaves the volume");
      }
      owner(v[0], v[1], v[2]) = id;
    }
  }

  constexpr Index reach = kMinComponentGap - 1;
  for (Index z = 0; z < s.nz; ++z)
    for (Index y = 0; y < s.ny; ++y)
      for (Index x = 0; x < s.nx; ++x) {
        const Label a = owner(x, y, z);
        if (a == 0) continue;
        for (Index dz = -reach; dz <= reach; ++dz)
          for (Index dy = -reach; dy <= reach; ++dy)
            for (Index dx = -reach; dx <= reach; ++dx) {
              if (!s.contains(x + dx, y + dy, z + dz)) continue;
              const Label b = owner(x + dx, y + dy, z + dz);
              if (b != 0 && b != a) {
                throw std::invalid_argument("phantom: components " + std::to_string(std::min(a, b)) +
                                            " and " + std::to_string(std::max(a, b)) +
                                            " are closer than the minimum gap");
              }
            }
      }

  Phantom p;
  p.gt = BinaryMask::like(owner, (owner.array() != 0).cast<std::uint8_t>());
  p.lab = label_components(p.gt);
  if (p.lab.count != static_cast<Label>(spec.components.size())) {
    throw std::invalid_argument("phantom: expected " + std::to_string(spec.components.size()) +
                                " components, labeling found " + std::to_string(p.lab.count));
  }
  return p;
}

PhantomSpec random_phantom_spec(const Shape& shape, const Spacing& spacing, int n_components,
                                std::uint64_t seed, Index max_size) {
  if (n_components < 0) throw std::invalid_argument("random_phantom_spec: negative component count");
  if (max_size < 1) throw std::invalid_argument("random_phantom_spec: max_size must be >= 1");
  Rng rng(seed);
  PhantomSpec spec{shape, spacing, {}, seed};
  constexpr int kAttempts = 1000;
  for (int attempt = 0; attempt < kAttempts && static_cast<int>(spec.components.size()) < n_components;
       ++attempt) {
    BlobSpec blob;
    blob.kind = rng.below(2) == 0 ? BlobKind::Box : BlobKind::Ball;
    if (blob.kind == BlobKind::Box) {
      blob.size = {1 + rng.below(max_size), 1 + rng.below(max_size), 1 + rng.below(max_size)};
      for (int a = 0; a < 3; ++a) {
        const Index extent = a == 0 ? shape.nx : a == 1 ? shape.ny : shape.nz;
        blob.size[a] = std::min(blob.size[a], extent);
      }
    } else {
      blob.size = {rng.below(std::max<Index>(1, max_size / 2 + 1)), 0, 0};
    }
    blob.center = {rng.below(shape.nx), rng.below(shape.ny), rng.below(shape.nz)};

    PhantomSpec trial = spec;
    trial.components.push_back(blob);
    try {
      build_phantom(trial);
      spec = std::move(trial);
    } catch (const std::invalid_argument&) {
      // rejected placement; draw again
    }
  }
  if (static_cast<int>(spec.components.size()) < n_components) {
    throw std::invalid_argument("random_phantom_spec: could not place " + std::to_string(n_components) +
                                " components");
  }
  return spec;
}

BinaryMask random_mask(const Shape& shape, double fill, std::uint64_t seed, const Spacing& spacing) {
  Rng rng(seed);
  BinaryMask m(shape, spacing, std::uint8_t{0});
  for (Index i = 0; i < m.size(); ++i) m[i] = rng.unit() < fill ? 1 : 0;
  return m;
}

Volume<double> random_logits(const Shape& shape, double scale, std::uint64_t seed, const Spacing& spacing) {
  Rng rng(seed);
  Volume<double> l(shape, spacing, 0.0);
  for (Index i = 0; i < l.size(); ++i) l[i] = scale * (2.0 * rng.unit() - 1.0);
  return l;
}

Volume<double> saturated_logits(const BinaryMask& fg) {
  return Volume<double>::like(fg, (fg.array() != 0).select(VoxelArray<double>::Constant(fg.size(), kLogitClamp),
                                                           VoxelArray<double>::Constant(fg.size(), -kLogitClamp)));
}

Figure1Scenario figure1_scenario() {
  // 4x4 grid of 8x8 cells in the xy plane. Three boxes of 32, 32 and 36
  // voxels and thirteen single voxels: the boxes hold 100 / 113 of the
  // foreground, so the global soft Dice loss is 1 - 200/213 = 13/213.
  PhantomSpec spec{Shape(32, 32, 4), Spacing(1.0, 1.0, 1.0), {}, 0};
  const std::array<std::array<Index, 3>, 3> big_sizes{{{4, 4, 2}, {4, 4, 2}, {6, 3, 2}}};
  const std::array<std::array<Index, 2>, 3> big_cells{{{0, 0}, {2, 1}, {1, 3}}};
  std::vector<BlobSpec> big;
  for (Index cy = 0; cy < 4; ++cy) {
    for (Index cx = 0; cx < 4; ++cx) {
      BlobSpec b;
      b.center = {8 * cx + 4, 8 * cy + 4, 2};
      b.kind = BlobKind::Box;
      b.size = {1, 1, 1};
      for (std::size_t k = 0; k < big_cells.size(); ++k) {
        if (big_cells[k][0] == cx && big_cells[k][1] == cy) {
          b.size = big_sizes[k];
          big.push_back(b);
        }
      }
      spec.components.push_back(b);
    }
  }
  const Phantom p = build_phantom(spec);

  BinaryMask predicted = make_mask(p.gt.shape(), p.gt.spacing());
  for (const auto& b : big) {
    for (const auto& v : blob_voxels(b)) predicted(v[0], v[1], v[2]) = 1;
  }

  Figure1Scenario out;
  out.gt = p.gt;
  out.lab = p.lab;
  out.pred_perfect = saturated_logits(p.gt);
  out.pred_partial = saturated_logits(predicted);
  out.predicted_fraction =
      static_cast<double>(count_foreground(predicted)) / static_cast<double>(count_foreground(p.gt));
  return out;
}

Figure2Scenario figure2_scenario() {
  constexpr double kLogit = 4.0;
  const BlobSpec large{{8, 10, 0}, BlobKind::Box, {10, 12, 1}};  // x 3..12, y 4..15
  const BlobSpec small{{27, 20, 0}, BlobKind::Box, {2, 2, 1}};   // x 26..27, y 19..20
  const BlobSpec fp{{16, 4, 0}, BlobKind::Box, {3, 3, 1}};       // x 15..17, y 3..5
  const Phantom p = build_phantom({Shape(32, 24, 1), Spacing(1.0, 1.0, 1.0), {large, small}, 0});

  Figure2Scenario out;
  out.gt = p.gt;
  out.lab = p.lab;
  out.fp_blob = make_mask(p.gt.shape(), p.gt.spacing());
  for (const auto& v : blob_voxels(fp)) out.fp_blob(v[0], v[1], v[2]) = 1;

  out.logits = Volume<double>(p.gt.shape(), p.gt.spacing(), -kLogit);
  for (const auto& v : blob_voxels(large)) out.logits(v[0], v[1], v[2]) = kLogit;
  for (const auto& v : blob_voxels(fp)) out.logits(v[0], v[1], v[2]) = kLogit;

  out.large_id = p.lab.labels(large.center[0], large.center[1], large.center[2]);
  out.small_id = p.lab.labels(small.center[0], small.center[1], small.center[2]);
  return out;
}

}  // namespace lesionwise
