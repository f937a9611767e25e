// Differentiable segmentation losses with analytic gradients w.r.t. logits.
//
// Global terms (soft Dice with no smoothing constant, binary cross-entropy,
// and their weighted sum DiceCE) and two instance-aware aggregates that give
// every ground-truth component the same 1/N weight:
//
//   CC-DiceCE    component C is scored on its nearest-component region R_C
//   BlobDiceCE   component C is scored on the whole lattice with the
//                probabilities on the other components' voxels zeroed
//
// Logits are clamped to [-40, 40] before the sigmoid. The clamp has unit
// derivative inside the interval and zero outside.

#ifndef LESIONWISE_LOSSES_HPP
#define LESIONWISE_LOSSES_HPP

#include "lesionwise/components.hpp"
#include "lesionwise/voronoi.hpp"
#include "lesionwise/volume.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lesionwise {

template <typename Scalar>
struct LossValue {
  Scalar value{};
  /// d(value)/d(logit) per voxel.
  Volume<Scalar> grad;
};

struct LossWeights {
  double w_global = 1.0;
  double w_instance = 1.0;
  double w_dice = 1.0;
  double w_ce = 1.0;

  void validate() const {
    auto ok = [](double w) { return std::isfinite(w) && w >= 0.0; };
    if (!ok(w_global) || !ok(w_instance) || !ok(w_dice) || !ok(w_ce)) {
      throw std::invalid_argument("loss weights must be finite and non-negative");
    }
    if (w_global == 0.0 && w_instance == 0.0) {
      throw std::invalid_argument("loss weights: w_global and w_instance are both zero");
    }
    if (w_dice == 0.0 && w_ce == 0.0) {
      throw std::invalid_argument("loss weights: w_dice and w_ce are both zero");
    }
  }
};

enum class EmptyGtMode {
  /// No ground-truth components: the instance term is dropped.
  GlobalOnly,
  /// No ground-truth components: the instance term is 0 with zero gradient.
  Zero,
};

struct DegeneratePolicy {
  EmptyGtMode empty_gt = EmptyGtMode::GlobalOnly;
  /// Soft Dice loss reported when prediction and target are both empty over the scope.
  double empty_denominator_dice = 0.0;

  std::string empty_gt_name() const {
    return empty_gt == EmptyGtMode::GlobalOnly ? "global-only" : "zero";
  }
};

enum class LossKind { DiceCE, CCDiceCE, BlobDiceCE };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::DiceCE: return "dicece";
    case LossKind::CCDiceCE: return "cc-dicece";
    case LossKind::BlobDiceCE: return "blob-dicece";
  }
  return "?";
}

/// Voxels a loss term looks at.
///
/// `region` restricts the sums to its foreground (default: whole lattice).
/// `zeroed` forces the predicted probability to 0 on its foreground, with no
/// gradient flowing there; the target must be 0 on those voxels.
struct LossScope {
  const BinaryMask* region = nullptr;
  const BinaryMask* zeroed = nullptr;
};

namespace detail {

template <typename Scalar>
struct Activation {
  VoxelArray<Scalar> logit;  // clamped
  VoxelArray<Scalar> p;      // sigmoid(logit), 0 where zeroed
  VoxelArray<Scalar> dp;     // dp / d(raw logit)
  VoxelArray<Scalar> live;   // 0 where zeroed
};

template <typename Scalar>
Activation<Scalar> activate(const Volume<Scalar>& logits, const BinaryMask* zeroed) {
  if (!all_finite(logits)) throw std::invalid_argument("loss: logits must be finite");
  const Scalar bound = Scalar(kLogitClamp);
  const auto& raw = logits.array();
  Activation<Scalar> a;
  a.logit = raw.max(-bound).min(bound);
  a.live = zeroed ? VoxelArray<Scalar>((zeroed->array() == 0).template cast<Scalar>())
                  : VoxelArray<Scalar>::Ones(raw.size());
  const VoxelArray<Scalar> p = sigmoid(Volume<Scalar>(logits.shape(), logits.spacing(), a.logit)).array();
  const VoxelArray<Scalar> inside = (raw.abs() <= bound).template cast<Scalar>();
  a.p = p * a.live;
  a.dp = p * (Scalar(1) - p) * inside * a.live;
  return a;
}

template <typename Scalar>
VoxelArray<Scalar> region_weights(const BinaryMask* region, Index n) {
  return region ? VoxelArray<Scalar>((region->array() != 0).template cast<Scalar>())
                : VoxelArray<Scalar>::Ones(n);
}

template <typename Scalar>
VoxelArray<Scalar> target(const BinaryMask& gt) {
  return (gt.array() != 0).template cast<Scalar>();
}

/// Numerically stable per-voxel binary cross-entropy on clamped logits.
template <typename Derived, typename DerivedG>
auto bce(const Eigen::ArrayBase<Derived>& l, const Eigen::ArrayBase<DerivedG>& g) {
  using Scalar = typename Derived::Scalar;
  return l.max(Scalar(0)) - l * g + (-l.abs()).exp().log1p();
}

template <typename Scalar>
void check_scope(const Volume<Scalar>& logits, const BinaryMask& gt, const LossScope& scope,
                 const char* what) {
  require_same_shape(logits, gt, what);
  if (scope.region) require_same_shape(logits, *scope.region, what);
  if (scope.zeroed) {
    require_same_shape(logits, *scope.zeroed, what);
    if (((scope.zeroed->array() != 0) && (gt.array() != 0)).any()) {
      throw std::invalid_argument(std::string(what) + ": zeroed voxels must be target background");
    }
  }
}

template <typename Scalar>
LossValue<Scalar> soft_dice(const Activation<Scalar>& a, const VoxelArray<Scalar>& g,
                            const VoxelArray<Scalar>& w, const Volume<Scalar>& ref,
                            const DegeneratePolicy& policy) {
  const Scalar inter = (w * a.p * g).sum();
  const Scalar denom = (w * a.p).sum() + (w * g).sum();
  if (denom == Scalar(0)) {
    return {Scalar(policy.empty_denominator_dice), Volume<Scalar>(ref.shape(), ref.spacing(), Scalar(0))};
  }
  const Scalar value = Scalar(1) - Scalar(2) * inter / denom;
  const Scalar scale = Scalar(-2) / (denom * denom);
  return {value, Volume<Scalar>::like(ref, w * scale * (g * denom - inter) * a.dp)};
}

template <typename Scalar>
LossValue<Scalar> cross_entropy(const Activation<Scalar>& a, const VoxelArray<Scalar>& g,
                                const VoxelArray<Scalar>& w, const Volume<Scalar>& ref,
                                const VoxelArray<Scalar>& inside) {
  const Scalar n = w.sum();
  if (n == Scalar(0)) return {Scalar(0), Volume<Scalar>(ref.shape(), ref.spacing(), Scalar(0))};
  const Scalar value = (w * a.live * bce(a.logit, g)).sum() / n;
  return {value, Volume<Scalar>::like(ref, w * a.live * inside * (a.p - g) / n)};
}

template <typename Scalar>
VoxelArray<Scalar> clamp_inside(const Volume<Scalar>& logits) {
  return (logits.array().abs() <= Scalar(kLogitClamp)).template cast<Scalar>();
}

template <typename Scalar>
LossValue<Scalar> weighted_sum(Scalar wa, const LossValue<Scalar>& a, Scalar wb,
                               const LossValue<Scalar>& b) {
  return {wa * a.value + wb * b.value, Volume<Scalar>::like(a.grad, wa * a.grad.array() + wb * b.grad.array())};
}

template <typename Scalar>
Volume<Scalar> zeros_like(const Volume<Scalar>& ref) {
  return Volume<Scalar>(ref.shape(), ref.spacing(), Scalar(0));
}

inline void check_labeling(const BinaryMask& gt, const ComponentLabeling& lab, const char* what) {
  require_same_shape(gt, lab.labels, what);
}

}  // namespace detail

/// 1 - 2 sum(p g) / (sum(p) + sum(g)) over the scope, no smoothing constant.
template <typename Scalar>
LossValue<Scalar> soft_dice_loss(const Volume<Scalar>& logits, const BinaryMask& gt,
                                 const LossScope& scope = {}, const DegeneratePolicy& policy = {}) {
  detail::check_scope(logits, gt, scope, "soft_dice_loss");
  const auto a = detail::activate(logits, scope.zeroed);
  return detail::soft_dice(a, detail::target<Scalar>(gt), detail::region_weights<Scalar>(scope.region, logits.size()),
                           logits, policy);
}

/// Mean binary cross-entropy over the scope. Empty scope gives 0.
template <typename Scalar>
LossValue<Scalar> cross_entropy_loss(const Volume<Scalar>& logits, const BinaryMask& gt,
                                     const LossScope& scope = {}) {
  detail::check_scope(logits, gt, scope, "cross_entropy_loss");
  const auto a = detail::activate(logits, scope.zeroed);
  return detail::cross_entropy(a, detail::target<Scalar>(gt),
                               detail::region_weights<Scalar>(scope.region, logits.size()), logits,
                               detail::clamp_inside(logits));
}

template <typename Scalar>
LossValue<Scalar> dicece_loss(const Volume<Scalar>& logits, const BinaryMask& gt,
                              const LossScope& scope = {}, double w_dice = 1.0, double w_ce = 1.0,
                              const DegeneratePolicy& policy = {}) {
  detail::check_scope(logits, gt, scope, "dicece_loss");
  const auto a = detail::activate(logits, scope.zeroed);
  const auto g = detail::target<Scalar>(gt);
  const auto w = detail::region_weights<Scalar>(scope.region, logits.size());
  return detail::weighted_sum(Scalar(w_dice), detail::soft_dice(a, g, w, logits, policy), Scalar(w_ce),
                              detail::cross_entropy(a, g, w, logits, detail::clamp_inside(logits)));
}

/// Per-component CC terms, unscaled: term c is DiceCE of (prediction, C)
/// restricted to the region R_C. Straightforward O(N |lattice|) evaluation.
template <typename Scalar>
std::vector<LossValue<Scalar>> cc_instance_terms(const Volume<Scalar>& logits, const BinaryMask& gt,
                                                 const ComponentLabeling& lab,
                                                 const VoronoiPartition& part, double w_dice = 1.0,
                                                 double w_ce = 1.0,
                                                 const DegeneratePolicy& policy = {}) {
  detail::check_labeling(gt, lab, "cc_instance_terms");
  require_same_shape(gt, part.region_of, "cc_instance_terms");
  std::vector<LossValue<Scalar>> terms;
  for (Label c = 1; c <= lab.count; ++c) {
    const BinaryMask target = component_mask(lab, c);
    const BinaryMask region = region_mask(part, c);
    terms.push_back(dicece_loss(logits, target, LossScope{&region, nullptr}, w_dice, w_ce, policy));
  }
  return terms;
}

/// Per-component blob terms, unscaled: term c is DiceCE of (prediction with
/// K \ C zeroed, C) over the whole lattice.
template <typename Scalar>
std::vector<LossValue<Scalar>> blob_instance_terms(const Volume<Scalar>& logits, const BinaryMask& gt,
                                                   const ComponentLabeling& lab, double w_dice = 1.0,
                                                   double w_ce = 1.0,
                                                   const DegeneratePolicy& policy = {}) {
  detail::check_labeling(gt, lab, "blob_instance_terms");
  std::vector<LossValue<Scalar>> terms;
  for (Label c = 1; c <= lab.count; ++c) {
    const BinaryMask target = component_mask(lab, c);
    const BinaryMask others = other_components_mask(lab, c);
    terms.push_back(dicece_loss(logits, target, LossScope{nullptr, &others}, w_dice, w_ce, policy));
  }
  return terms;
}

/// (1/N) sum_C DiceCE(prediction on R_C, C), in one pass over the lattice.
/// Requires lab.count >= 1 (guaranteed by the existence of `part`).
template <typename Scalar>
LossValue<Scalar> cc_instance_loss(const Volume<Scalar>& logits, const BinaryMask& gt,
                                   const ComponentLabeling& lab, const VoronoiPartition& part,
                                   double w_dice = 1.0, double w_ce = 1.0) {
  detail::check_labeling(gt, lab, "cc_instance_loss");
  require_same_shape(gt, part.region_of, "cc_instance_loss");
  if (lab.count < 1 || part.count != lab.count) throw EmptyGroundTruthError("cc_instance_loss");
  const auto a = detail::activate(logits, nullptr);
  const auto inside = detail::clamp_inside(logits);
  const auto& region = part.region_of.array();
  const auto& labels = lab.labels.array();
  const auto n_comp = static_cast<std::size_t>(lab.count);

  // Per-region sums: intersection, prediction mass, target size, voxel count, BCE.
  std::vector<Scalar> inter(n_comp, 0), pred(n_comp, 0), tgt(n_comp, 0), count(n_comp, 0), ce(n_comp, 0);
  std::vector<Scalar> g(static_cast<std::size_t>(logits.size()));
  for (Index i = 0; i < logits.size(); ++i) {
    const auto r = static_cast<std::size_t>(region[i] - 1);
    // Inside R_C the target is C itself; other components never reach R_C.
    const Scalar gi = labels[i] == region[i] ? Scalar(1) : Scalar(0);
    g[static_cast<std::size_t>(i)] = gi;
    inter[r] += a.p[i] * gi;
    pred[r] += a.p[i];
    tgt[r] += gi;
    count[r] += Scalar(1);
    const Scalar l = a.logit[i];
    ce[r] += std::max(l, Scalar(0)) - l * gi + std::log1p(std::exp(-std::abs(l)));
  }

  const Scalar inv_n = Scalar(1) / Scalar(lab.count);
  Scalar value = 0;
  std::vector<Scalar> dice_scale(n_comp), denom(n_comp);
  for (std::size_t c = 0; c < n_comp; ++c) {
    denom[c] = pred[c] + tgt[c];
    const Scalar dice = Scalar(1) - Scalar(2) * inter[c] / denom[c];
    value += inv_n * (Scalar(w_dice) * dice + Scalar(w_ce) * ce[c] / count[c]);
    dice_scale[c] = Scalar(-2) / (denom[c] * denom[c]);
  }

  Volume<Scalar> grad = detail::zeros_like(logits);
  for (Index i = 0; i < logits.size(); ++i) {
    const auto r = static_cast<std::size_t>(region[i] - 1);
    const Scalar gi = g[static_cast<std::size_t>(i)];
    const Scalar d_dice = dice_scale[r] * (gi * denom[r] - inter[r]) * a.dp[i];
    const Scalar d_ce = inside[i] * (a.p[i] - gi) / count[r];
    grad[i] = inv_n * (Scalar(w_dice) * d_dice + Scalar(w_ce) * d_ce);
  }
  return {value, std::move(grad)};
}

/// (1/N) sum_C DiceCE(prediction with K \ C zeroed, C), in one pass over the lattice.
template <typename Scalar>
LossValue<Scalar> blob_instance_loss(const Volume<Scalar>& logits, const BinaryMask& gt,
                                     const ComponentLabeling& lab, double w_dice = 1.0,
                                     double w_ce = 1.0) {
  detail::check_labeling(gt, lab, "blob_instance_loss");
  if (lab.count < 1) throw EmptyGroundTruthError("blob_instance_loss");
  const auto a = detail::activate(logits, nullptr);
  const auto inside = detail::clamp_inside(logits);
  const auto& labels = lab.labels.array();
  const auto n_comp = static_cast<std::size_t>(lab.count);
  const Scalar lattice = Scalar(logits.size());

  // Background mass and BCE are shared by every term; component voxels only
  // count towards their own term.
  Scalar bg_pred = 0, bg_ce = 0;
  std::vector<Scalar> comp_pred(n_comp, 0), comp_ce(n_comp, 0), comp_size(n_comp, 0);
  for (Index i = 0; i < logits.size(); ++i) {
    const Scalar l = a.logit[i];
    const Scalar softplus = std::log1p(std::exp(-std::abs(l)));
    if (labels[i] == 0) {
      bg_pred += a.p[i];
      bg_ce += std::max(l, Scalar(0)) + softplus;
    } else {
      const auto c = static_cast<std::size_t>(labels[i] - 1);
      comp_pred[c] += a.p[i];
      comp_ce[c] += std::max(l, Scalar(0)) - l + softplus;
      comp_size[c] += Scalar(1);
    }
  }

  const Scalar inv_n = Scalar(1) / Scalar(lab.count);
  Scalar value = 0;
  Scalar bg_dice_coeff = 0;  // sum_C 2 I_C / D_C^2
  std::vector<Scalar> denom(n_comp);
  for (std::size_t c = 0; c < n_comp; ++c) {
    const Scalar inter = comp_pred[c];
    denom[c] = bg_pred + comp_pred[c] + comp_size[c];
    const Scalar dice = Scalar(1) - Scalar(2) * inter / denom[c];
    value += inv_n * (Scalar(w_dice) * dice + Scalar(w_ce) * (bg_ce + comp_ce[c]) / lattice);
    bg_dice_coeff += Scalar(2) * inter / (denom[c] * denom[c]);
  }

  Volume<Scalar> grad = detail::zeros_like(logits);
  const Scalar n_terms = Scalar(lab.count);
  for (Index i = 0; i < logits.size(); ++i) {
    Scalar d = 0;
    if (labels[i] == 0) {
      d = Scalar(w_dice) * bg_dice_coeff * a.dp[i] + Scalar(w_ce) * n_terms * inside[i] * a.p[i] / lattice;
    } else {
      const auto c = static_cast<std::size_t>(labels[i] - 1);
      const Scalar dd = Scalar(-2) * (denom[c] - comp_pred[c]) / (denom[c] * denom[c]);
      d = Scalar(w_dice) * dd * a.dp[i] + Scalar(w_ce) * inside[i] * (a.p[i] - Scalar(1)) / lattice;
    }
    grad[i] = inv_n * d;
  }
  return {value, std::move(grad)};
}

/// Instance term of `kind` with the empty-ground-truth policy applied.
/// Returns nullopt when the term is dropped (no components, GlobalOnly) or
/// kind is DiceCE.
template <typename Scalar>
std::optional<LossValue<Scalar>> instance_loss(LossKind kind, const Volume<Scalar>& logits,
                                               const BinaryMask& gt, const ComponentLabeling& lab,
                                               const LossWeights& weights,
                                               const DegeneratePolicy& policy = {},
                                               const DistanceMetric& metric = DistanceMetric::voxel()) {
  if (kind == LossKind::DiceCE) return std::nullopt;
  if (lab.count == 0) {
    if (policy.empty_gt == EmptyGtMode::GlobalOnly) return std::nullopt;
    return LossValue<Scalar>{Scalar(0), detail::zeros_like(logits)};
  }
  if (kind == LossKind::CCDiceCE) {
    const VoronoiPartition part = voronoi_partition(lab, metric);
    return cc_instance_loss(logits, gt, lab, part, weights.w_dice, weights.w_ce);
  }
  return blob_instance_loss(logits, gt, lab, weights.w_dice, weights.w_ce);
}

/// w_global * DiceCE(whole lattice) + w_instance * instance term of `kind`.
/// The two parts are summed, not averaged.
template <typename Scalar>
LossValue<Scalar> combined_loss(LossKind kind, const Volume<Scalar>& logits, const BinaryMask& gt,
                                const LossWeights& weights = {}, const DegeneratePolicy& policy = {},
                                const DistanceMetric& metric = DistanceMetric::voxel()) {
  weights.validate();
  require_same_shape(logits, gt, "combined_loss");
  LossValue<Scalar> total{Scalar(0), detail::zeros_like(logits)};
  if (weights.w_global > 0.0) {
    const auto global = dicece_loss(logits, gt, {}, weights.w_dice, weights.w_ce, policy);
    total = detail::weighted_sum(Scalar(weights.w_global), global, Scalar(0), total);
  }
  if (kind != LossKind::DiceCE && weights.w_instance > 0.0) {
    const ComponentLabeling lab = label_components(gt);
    if (auto inst = instance_loss(kind, logits, gt, lab, weights, policy, metric)) {
      total = detail::weighted_sum(Scalar(1), total, Scalar(weights.w_instance), *inst);
    }
  }
  return total;
}

template <typename Scalar>
struct GradientMap {
  Volume<Scalar> grad;
  /// grad / max|grad|, or all zeros when the gradient vanishes.
  Volume<Scalar> normalized;
};

template <typename Scalar>
Volume<Scalar> normalize_by_max_abs(const Volume<Scalar>& grad) {
  const Scalar peak = grad.size() > 0 ? grad.array().abs().maxCoeff() : Scalar(0);
  if (peak == Scalar(0)) return detail::zeros_like(grad);
  return Volume<Scalar>::like(grad, grad.array() / peak);
}

template <typename Scalar>
GradientMap<Scalar> gradient_map(LossKind kind, const Volume<Scalar>& logits, const BinaryMask& gt,
                                 const LossWeights& weights = {}, const DegeneratePolicy& policy = {},
                                 const DistanceMetric& metric = DistanceMetric::voxel()) {
  auto loss = combined_loss(kind, logits, gt, weights, policy, metric);
  auto normalized = normalize_by_max_abs(loss.grad);
  return {std::move(loss.grad), std::move(normalized)};
}

}  // namespace lesionwise

#endif  // LESIONWISE_LOSSES_HPP
