// Dense 3D voxel grids shared by every other part of lesionwise.
//
// Storage is a flat Eigen column array in x-fastest order, so the voxel at
// (x, y, z) lives at x + nx * (y + ny * z). This matches the on-disk NIfTI
// layout and the raw format written by volume_io.

#ifndef LESIONWISE_VOLUME_HPP
#define LESIONWISE_VOLUME_HPP

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace lesionwise {

using Index = std::int64_t;

struct Shape {
  Index nx = 1;
  Index ny = 1;
  Index nz = 1;

  Shape() = default;
  Shape(Index x, Index y, Index z) : nx(x), ny(y), nz(z) {
    if (nx <= 0 || ny <= 0 || nz <= 0) {
      throw std::invalid_argument("shape: every axis must be strictly positive");
    }
    constexpr auto kMax = std::numeric_limits<Index>::max();
    if (nx > kMax / ny || nx * ny > kMax / nz) {
      throw std::invalid_argument("shape: voxel count overflows");
    }
  }

  Index size() const { return nx * ny * nz; }
  Index index(Index x, Index y, Index z) const { return x + nx * (y + ny * z); }

  std::array<Index, 3> coords(Index i) const {
    return {i % nx, (i / nx) % ny, i / (nx * ny)};
  }

  bool contains(Index x, Index y, Index z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Physical voxel edge lengths in mm.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  Spacing() = default;
  Spacing(double x, double y, double z) : sx(x), sy(y), sz(z) {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!ok(sx) || !ok(sy) || !ok(sz)) {
      throw std::invalid_argument("spacing: every axis must be finite and strictly positive");
    }
  }

  double voxel_volume() const { return sx * sy * sz; }

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

template <typename Scalar>
using VoxelArray = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// A dense grid of voxels with geometry attached.
template <typename Scalar>
class Volume {
 public:
  using value_type = Scalar;

  Volume() = default;

  Volume(const Shape& shape, const Spacing& spacing, Scalar fill = Scalar(0))
      : shape_(shape), spacing_(spacing), data_(VoxelArray<Scalar>::Constant(shape.size(), fill)) {}

  Volume(const Shape& shape, const Spacing& spacing, VoxelArray<Scalar> data)
      : shape_(shape), spacing_(spacing), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw std::invalid_argument("volume: voxel count " + std::to_string(data_.size()) +
                                  " does not match shape product " +
                                  std::to_string(shape_.size()));
    }
  }

  const Shape& shape() const { return shape_; }
  const Spacing& spacing() const { return spacing_; }
  Index size() const { return shape_.size(); }

  const VoxelArray<Scalar>& array() const { return data_; }
  VoxelArray<Scalar>& array() { return data_; }

  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator[](Index i) { return data_[i]; }

  Scalar operator()(Index x, Index y, Index z) const { return data_[shape_.index(x, y, z)]; }
  Scalar& operator()(Index x, Index y, Index z) { return data_[shape_.index(x, y, z)]; }

  /// Same geometry, new contents.
  template <typename Other, typename Derived>
  static Volume like(const Volume<Other>& ref, const Eigen::ArrayBase<Derived>& values) {
    return Volume(ref.shape(), ref.spacing(), VoxelArray<Scalar>(values.template cast<Scalar>()));
  }

 private:
  Shape shape_;
  Spacing spacing_;
  VoxelArray<Scalar> data_;
};

/// Foreground is any nonzero voxel.
using BinaryMask = Volume<std::uint8_t>;
/// Network outputs before the sigmoid; must stay finite.
using LogitVolume = Volume<double>;
/// Probabilities in [0, 1].
using ProbVolume = Volume<double>;

template <typename A, typename B>
bool same_geometry(const Volume<A>& a, const Volume<B>& b) {
  return a.shape() == b.shape();
}

template <typename A, typename B>
void require_same_shape(const Volume<A>& a, const Volume<B>& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.shape().nx) + "x" + std::to_string(a.shape().ny) +
                                "x" + std::to_string(a.shape().nz) + " vs " +
                                std::to_string(b.shape().nx) + "x" + std::to_string(b.shape().ny) +
                                "x" + std::to_string(b.shape().nz) + ")");
  }
}

template <typename Scalar>
bool all_finite(const Volume<Scalar>& v) {
  return v.array().isFinite().all();
}

/// Logit magnitude bound applied inside loss code. exp(40) does not overflow
/// and sigmoid(+-40) differs from 0/1 by less than 1e-17.
inline constexpr double kLogitClamp = 40.0;

/// Element-wise logistic function. Throws if any logit is NaN or infinite.
template <typename Scalar>
Volume<Scalar> sigmoid(const Volume<Scalar>& logits) {
  if (!all_finite(logits)) {
    throw std::invalid_argument("sigmoid: logits must be finite");
  }
  const auto& l = logits.array();
  // Split on sign so exp never sees a large positive argument. Negative
  // logits stay strictly below 0.5 even when the exact value rounds to it.
  const Scalar below_half = std::nextafter(Scalar(0.5), Scalar(0));
  VoxelArray<Scalar> out =
      (l >= Scalar(0))
          .select(Scalar(1) / (Scalar(1) + (-l).exp()),
                  (l.exp() / (Scalar(1) + l.exp())).min(below_half));
  return Volume<Scalar>(logits.shape(), logits.spacing(), std::move(out));
}

/// Voxel is foreground iff p >= threshold. threshold must lie in (0, 1).
template <typename Scalar>
BinaryMask binarize(const Volume<Scalar>& probs, double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("binarize: threshold must lie in (0, 1)");
  }
  return BinaryMask::like(probs, (probs.array() >= Scalar(threshold)).template cast<std::uint8_t>());
}

inline Index count_foreground(const BinaryMask& m) {
  return (m.array() != 0).count();
}

inline BinaryMask make_mask(const Shape& shape, const Spacing& spacing = {}) {
  return BinaryMask(shape, spacing, std::uint8_t{0});
}

}  // namespace lesionwise

#endif  // LESIONWISE_VOLUME_HPP
