#include "lesionwise/components.hpp"

#include <array>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lesionwise {

namespace {

class DisjointSet {
 public:
  Label add() {
    parent_.push_back(static_cast<Label>(parent_.size()));
    return parent_.back();
  }

  Label root(Label n) {
    while (parent_[n] != n) {
      parent_[n] = parent_[parent_[n]];
      n = parent_[n];
    }
    return n;
  }

  void unite(Label a, Label b) {
    a = root(a);
    b = root(b);
    if (a == b) return;
    // Smaller provisional label becomes the root; not required for
    // correctness since final ids are assigned by scan order anyway.
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<Label> parent_;
};

// The 13 neighbours already visited by an x-fastest raster scan.
constexpr std::array<std::array<int, 3>, 13> kBackNeighbours{{
    {-1, -1, -1}, {0, -1, -1}, {1, -1, -1},
    {-1, 0, -1},  {0, 0, -1},  {1, 0, -1},
    {-1, 1, -1},  {0, 1, -1},  {1, 1, -1},
    {-1, -1, 0},  {0, -1, 0},  {1, -1, 0},
    {-1, 0, 0},
}};

}  // namespace

ComponentLabeling label_components(const BinaryMask& mask) {
  const Shape& s = mask.shape();
  ComponentLabeling out;
  out.labels = LabelVolume(s, mask.spacing(), Label{0});
  auto& labels = out.labels;

  // Pass 1: provisional labels, offset by one so 0 stays background.
  DisjointSet sets;
  sets.add();
  for (Index z = 0; z < s.nz; ++z) {
    for (Index y = 0; y < s.ny; ++y) {
      for (Index x = 0; x < s.nx; ++x) {
        const Index i = s.index(x, y, z);
        if (mask[i] == 0) continue;
        Label current = 0;
        for (const auto& d : kBackNeighbours) {
          const Index nx = x + d[0], ny = y + d[1], nz = z + d[2];
          if (!s.contains(nx, ny, nz)) continue;
          const Label nb = labels(nx, ny, nz);
          if (nb == 0) continue;
          if (current == 0) {
            current = nb;
          } else if (nb != current) {
            sets.unite(current, nb);
          }
        }
        labels[i] = current != 0 ? current : sets.add();
      }
    }
  }

  // Pass 2: resolve roots; final ids follow first encounter in linear order,
  // which is ascending minimal voxel index.
  std::vector<Label> final_id;
  for (Index i = 0; i < s.size(); ++i) {
    const Label provisional = labels[i];
    if (provisional == 0) continue;
    const Label r = sets.root(provisional);
    if (static_cast<std::size_t>(r) >= final_id.size()) final_id.resize(r + 1, 0);
    if (final_id[r] == 0) {
      final_id[r] = ++out.count;
      out.voxel_lists.emplace_back();
    }
    labels[i] = final_id[r];
    out.voxel_lists[final_id[r] - 1].push_back(i);
  }

  const double voxel_mm3 = mask.spacing().voxel_volume();
  for (const auto& voxels : out.voxel_lists) {
    out.volumes_vox.push_back(static_cast<Index>(voxels.size()));
    out.volumes_mm3.push_back(static_cast<double>(voxels.size()) * voxel_mm3);
  }
  return out;
}

BinaryMask component_mask(const ComponentLabeling& lab, Label id) {
  if (id < 1 || id > lab.count) {
    throw std::invalid_argument("component_mask: id " + std::to_string(id) + " outside 1.." +
                                std::to_string(lab.count));
  }
  return BinaryMask::like(lab.labels, (lab.labels.array() == id).cast<std::uint8_t>());
}

BinaryMask other_components_mask(const ComponentLabeling& lab, Label id) {
  if (id < 1 || id > lab.count) {
    throw std::invalid_argument("other_components_mask: id " + std::to_string(id) +
                                " outside 1.." + std::to_string(lab.count));
  }
  const auto& l = lab.labels.array();
  return BinaryMask::like(lab.labels, ((l != 0) && (l != id)).cast<std::uint8_t>());
}

}  // namespace lesionwise
