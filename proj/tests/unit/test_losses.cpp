#include "lesionwise/losses.hpp"
#include "lesionwise/phantoms.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace lesionwise;
using testing::from_vector;
using testing::to_vector;

namespace {

struct Case {
  Phantom p;
  Volume<double> logits;
  std::vector<int> labels;
  std::vector<int> region;
};

Case make_case(const Shape& s, int n, std::uint64_t seed, double scale = 3.0) {
  Case c{testing::random_phantom(s, n, seed), random_logits(s, scale, seed + 1000), {}, {}};
  const auto parts = oracle::flood_fill(c.p.gt);
  c.labels = oracle::label_grid(parts, s.size());
  c.region = oracle::nearest_component(oracle::component_distances(s, parts), s.size());
  return c;
}

oracle::Kind oracle_kind(LossKind k) {
  return k == LossKind::DiceCE ? oracle::Kind::Global
         : k == LossKind::CCDiceCE ? oracle::Kind::CC
                                   : oracle::Kind::Blob;
}

double instance_value(LossKind kind, const Volume<double>& l, const Phantom& p, double w_dice, double w_ce) {
  if (kind == LossKind::CCDiceCE) {
    return cc_instance_loss(l, p.gt, p.lab, voronoi_partition(p.lab), w_dice, w_ce).value;
  }
  return blob_instance_loss(l, p.gt, p.lab, w_dice, w_ce).value;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("soft dice extremes") {
  const Phantom p = testing::random_phantom(Shape(8, 8, 8), 3, 4);
  CHECK(soft_dice_loss(saturated_logits(p.gt), p.gt).value <= 1e-9);

  BinaryMask shifted = make_mask(p.gt.shape());
  shifted(0, 0, 0) = 1;
  BinaryMask gt = make_mask(p.gt.shape());
  gt(7, 7, 7) = 1;
  CHECK(soft_dice_loss(saturated_logits(shifted), gt).value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross entropy examples") {
  BinaryMask gt = make_mask(Shape(3, 2, 1));
  gt(1, 1, 0) = 1;
  const Volume<double> zero(gt.shape(), gt.spacing(), 0.0);
  CHECK(cross_entropy_loss(zero, gt).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  BinaryMask one = make_mask(Shape(1, 1, 1));
  one[0] = 1;
  const auto ce = cross_entropy_loss(Volume<double>(one.shape(), one.spacing(), 0.0), one);
  CHECK(ce.grad[0] == -0.5);

  // Empty scope contributes nothing.
  const BinaryMask empty = make_mask(gt.shape());
  const LossScope scope{&empty, nullptr};
  const auto none = cross_entropy_loss(zero, gt, scope);
  CHECK(none.value == 0.0);
  CHECK((none.grad.array() == 0.0).all());
}

TEST_CASE("values agree with the loop-based definitions") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Case c = make_case(Shape(7, 6, 5), 1 + static_cast<int>(seed % 4), seed);
    const auto x = to_vector(c.logits);
    const int n = c.p.lab.count;
    for (double wd : {1.0, 0.3}) {
      for (double wc : {1.0, 0.0}) {
        CHECK(dicece_loss(c.logits, c.p.gt, {}, wd, wc).value ==
              doctest::Approx(oracle::naive_loss(oracle::Kind::Global, x, c.labels, c.region, n, wd, wc))
                  .epsilon(1e-12));
        for (LossKind k : {LossKind::CCDiceCE, LossKind::BlobDiceCE}) {
          CHECK(instance_value(k, c.logits, c.p, wd, wc) ==
                doctest::Approx(oracle::naive_loss(oracle_kind(k), x, c.labels, c.region, n, wd, wc))
                    .epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("gradients match finite differences") {
  for (std::uint64_t seed = 21; seed <= 24; ++seed) {
    const Case c = make_case(Shape(6, 6, 6), 1 + static_cast<int>(seed % 3), seed);
    for (LossKind k : {LossKind::DiceCE, LossKind::CCDiceCE, LossKind::BlobDiceCE}) {
      const LossWeights w{1.0, 1.0, 1.0, 1.0};
      const auto analytic = combined_loss(k, c.logits, c.p.gt, w);
      auto f = [&](const std::vector<double>& x) {
        return combined_loss(k, from_vector(c.logits, x), c.p.gt, w).value;
      };
      const auto check = oracle::compare_gradients(to_vector(analytic.grad),
                                                   oracle::central_differences(f, to_vector(c.logits)));
      INFO("kind " << to_string(k) << " seed " << seed);
      CHECK(check.max_rel < 1e-4);
      CHECK(check.max_abs_small < 1e-7);
    }
  }
}

TEST_CASE("soft dice alone matches finite differences") {
  const Case c = make_case(Shape(6, 6, 6), 2, 77);
  const auto analytic = soft_dice_loss(c.logits, c.p.gt);
  auto f = [&](const std::vector<double>& x) { return soft_dice_loss(from_vector(c.logits, x), c.p.gt).value; };
  const auto check =
      oracle::compare_gradients(to_vector(analytic.grad), oracle::central_differences(f, to_vector(c.logits)));
  CHECK(check.ok());
}

TEST_CASE("gradient is zero beyond the clamp") {
  BinaryMask gt = make_mask(Shape(3, 1, 1));
  gt[0] = 1;
  Volume<double> l(gt.shape(), gt.spacing(), 0.0);
  l[0] = 50.0;
  l[1] = -45.0;
  const auto v = combined_loss(LossKind::BlobDiceCE, l, gt);
  CHECK(v.grad[0] == 0.0);
  CHECK(v.grad[1] == 0.0);
  CHECK(v.grad[2] != 0.0);
}

TEST_CASE("fast instance losses equal the mean of per-term evaluations") {
  for (std::uint64_t seed = 40; seed < 46; ++seed) {
    const Case c = make_case(Shape(9, 8, 7), 1 + static_cast<int>(seed % 5), seed);
    const auto part = voronoi_partition(c.p.lab);
    for (double wc : {1.0, 0.0}) {
      const auto cc = cc_instance_loss(c.logits, c.p.gt, c.p.lab, part, 1.0, wc);
      const auto cc_terms = cc_instance_terms(c.logits, c.p.gt, c.p.lab, part, 1.0, wc);
      const auto blob = blob_instance_loss(c.logits, c.p.gt, c.p.lab, 1.0, wc);
      const auto blob_terms = blob_instance_terms(c.logits, c.p.gt, c.p.lab, 1.0, wc);
      REQUIRE(cc_terms.size() == static_cast<std::size_t>(c.p.lab.count));
      REQUIRE(blob_terms.size() == cc_terms.size());
      const double n = static_cast<double>(cc_terms.size());
      double cc_sum = 0, blob_sum = 0;
      VoxelArray<double> cc_grad = VoxelArray<double>::Zero(c.logits.size());
      VoxelArray<double> blob_grad = cc_grad;
      for (std::size_t i = 0; i < cc_terms.size(); ++i) {
        cc_sum += cc_terms[i].value;
        blob_sum += blob_terms[i].value;
        cc_grad += cc_terms[i].grad.array();
        blob_grad += blob_terms[i].grad.array();
      }
      CHECK(cc.value == doctest::Approx(cc_sum / n).epsilon(1e-12));
      CHECK(blob.value == doctest::Approx(blob_sum / n).epsilon(1e-12));
      CHECK(((cc.grad.array() - cc_grad / n).abs().maxCoeff()) < 1e-14);
      CHECK(((blob.grad.array() - blob_grad / n).abs().maxCoeff()) < 1e-14);
    }
  }
}

TEST_CASE("sixteen components, three predicted") {
  const auto f1 = figure1_scenario();
  const auto part = voronoi_partition(f1.lab);
  CHECK(f1.lab.count == 16);
  CHECK(std::abs(cc_instance_loss(f1.pred_partial, f1.gt, f1.lab, part, 1.0, 0.0).value - 0.8125) < 1e-9);
  CHECK(std::abs(blob_instance_loss(f1.pred_partial, f1.gt, f1.lab, 1.0, 0.0).value - 0.8125) < 1e-9);
  const double f = f1.predicted_fraction;
  const double global = soft_dice_loss(f1.pred_partial, f1.gt).value;
  CHECK(global == doctest::Approx(1.0 - 2.0 * f / (1.0 + f)).epsilon(1e-12));
  CHECK(global >= 0.055);
  CHECK(global <= 0.065);

  CHECK(cc_instance_loss(f1.pred_perfect, f1.gt, f1.lab, part, 1.0, 0.0).value <= 1e-9);
  CHECK(blob_instance_loss(f1.pred_perfect, f1.gt, f1.lab, 1.0, 0.0).value <= 1e-9);
  CHECK(soft_dice_loss(f1.pred_perfect, f1.gt).value <= 1e-9);
}

TEST_CASE("single component reduces to global DiceCE") {
  const Case c = make_case(Shape(7, 7, 7), 1, 9);
  const auto global = dicece_loss(c.logits, c.p.gt);
  const auto cc = cc_instance_loss(c.logits, c.p.gt, c.p.lab, voronoi_partition(c.p.lab));
  const auto blob = blob_instance_loss(c.logits, c.p.gt, c.p.lab);
  CHECK(cc.value == doctest::Approx(global.value).epsilon(1e-14));
  CHECK(blob.value == doctest::Approx(global.value).epsilon(1e-14));
  CHECK((cc.grad.array() - global.grad.array()).abs().maxCoeff() < 1e-15);

  const auto inst_only = combined_loss(LossKind::CCDiceCE, c.logits, c.p.gt, LossWeights{0.0, 1.0, 1.0, 1.0});
  CHECK(inst_only.value == doctest::Approx(cc.value).epsilon(1e-14));
}

TEST_CASE("weights combine linearly") {
  const Case c = make_case(Shape(6, 7, 5), 3, 13);
  const auto global = dicece_loss(c.logits, c.p.gt);
  const auto pure = combined_loss(LossKind::CCDiceCE, c.logits, c.p.gt, LossWeights{1.0, 0.0, 1.0, 1.0});
  CHECK(pure.value == global.value);
  const auto dice = soft_dice_loss(c.logits, c.p.gt);
  const auto ce = cross_entropy_loss(c.logits, c.p.gt);
  const auto mix = dicece_loss(c.logits, c.p.gt, {}, 0.25, 2.0);
  CHECK(mix.value == doctest::Approx(0.25 * dice.value + 2.0 * ce.value).epsilon(1e-14));
  CHECK((mix.grad.array() - (0.25 * dice.grad.array() + 2.0 * ce.grad.array())).abs().maxCoeff() < 1e-15);

  const auto inst = instance_loss(LossKind::BlobDiceCE, c.logits, c.p.gt, c.p.lab, LossWeights{});
  REQUIRE(inst.has_value());
  const auto both = combined_loss(LossKind::BlobDiceCE, c.logits, c.p.gt, LossWeights{0.5, 2.0, 1.0, 1.0});
  CHECK(both.value == doctest::Approx(0.5 * global.value + 2.0 * inst->value).epsilon(1e-14));
  CHECK_FALSE(instance_loss(LossKind::DiceCE, c.logits, c.p.gt, c.p.lab, LossWeights{}).has_value());

  CHECK_THROWS_AS(combined_loss(LossKind::DiceCE, c.logits, c.p.gt, LossWeights{0, 0, 1, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(combined_loss(LossKind::DiceCE, c.logits, c.p.gt, LossWeights{1, 1, -1, 1}),
                  std::invalid_argument);
}

TEST_CASE("empty ground truth policies") {
  const BinaryMask gt = make_mask(Shape(4, 4, 4));
  const auto l = random_logits(gt.shape(), 2.0, 3);
  const auto lab = label_components(gt);
  const auto global = dicece_loss(l, gt);

  DegeneratePolicy only;
  CHECK_FALSE(instance_loss(LossKind::CCDiceCE, l, gt, lab, LossWeights{}, only).has_value());
  CHECK(combined_loss(LossKind::CCDiceCE, l, gt, LossWeights{}, only).value == global.value);

  DegeneratePolicy zero{EmptyGtMode::Zero};
  const auto z = instance_loss(LossKind::BlobDiceCE, l, gt, lab, LossWeights{}, zero);
  REQUIRE(z.has_value());
  CHECK(z->value == 0.0);
  CHECK((z->grad.array() == 0.0).all());

  VoronoiPartition no_regions;
  no_regions.region_of = LabelVolume(gt.shape(), gt.spacing(), Label{0});
  CHECK_THROWS_AS(cc_instance_loss(l, gt, lab, no_regions), EmptyGroundTruthError);
  CHECK_THROWS_AS(blob_instance_loss(l, gt, lab), EmptyGroundTruthError);

  // Nothing in scope: the dice part is the policy value.
  const BinaryMask none = make_mask(gt.shape());
  const LossScope nothing{&none, nullptr};
  CHECK(soft_dice_loss(l, gt, nothing).value == 0.0);
  CHECK(soft_dice_loss(l, gt, nothing, DegeneratePolicy{EmptyGtMode::GlobalOnly, 1.0}).value == 1.0);
  CHECK((soft_dice_loss(l, gt, nothing).grad.array() == 0.0).all());
}

TEST_CASE("shape mismatch") {
  const BinaryMask gt = make_mask(Shape(4, 4, 4));
  const Volume<double> l(Shape(4, 4, 5), Spacing{}, 0.0);
  CHECK_THROWS_AS(dicece_loss(l, gt), std::invalid_argument);
  CHECK_THROWS_AS(combined_loss(LossKind::CCDiceCE, l, gt), std::invalid_argument);
}

TEST_CASE("false positive reaches every blob term but one cc term") {
  BinaryMask gt = make_mask(Shape(9, 9, 1));
  gt(1, 1, 0) = 1;
  gt(7, 1, 0) = 1;
  const Index fp = gt.shape().index(7, 7, 0);  // nearer to the second component
  const auto lab = label_components(gt);
  const auto part = voronoi_partition(lab);
  Volume<double> l = Volume<double>::like(gt, (gt.array() != 0).select(VoxelArray<double>::Constant(81, 4.0),
                                                                       VoxelArray<double>::Constant(81, -4.0)));
  l[fp] = 4.0;
  const auto cc = cc_instance_terms(l, gt, lab, part);
  const auto blob = blob_instance_terms(l, gt, lab);
  REQUIRE(cc.size() == 2);
  CHECK(part.region_of[fp] == 2);
  CHECK(cc[0].grad[fp] == 0.0);
  CHECK(cc[1].grad[fp] > 0.0);
  CHECK(blob[0].grad[fp] > 0.0);
  CHECK(blob[1].grad[fp] > 0.0);

  // Removing the false positive lowers exactly the affected terms.
  Volume<double> clean = l;
  clean[fp] = -4.0;
  const auto cc0 = cc_instance_terms(clean, gt, lab, part);
  const auto blob0 = blob_instance_terms(clean, gt, lab);
  CHECK(cc[0].value == cc0[0].value);
  CHECK(cc[1].value > cc0[1].value);
  CHECK(blob[0].value > blob0[0].value);
  CHECK(blob[1].value > blob0[1].value);
}

TEST_CASE("gradient maps") {
  const BinaryMask gt = make_mask(Shape(3, 3, 3));
  const auto zero = normalize_by_max_abs(Volume<double>(gt.shape(), gt.spacing(), 0.0));
  CHECK((zero.array() == 0.0).all());

  BinaryMask single = make_mask(Shape(1, 1, 1));
  single[0] = 1;
  for (double l0 : {-3.0, 0.0, 2.0, 60.0}) {
    const auto map = gradient_map(LossKind::CCDiceCE, Volume<double>(single.shape(), single.spacing(), l0), single);
    const double g = map.normalized[0];
    CHECK((g == -1.0 || g == 0.0 || g == 1.0));
  }

  const auto f2 = figure2_scenario();
  const auto map = gradient_map(LossKind::CCDiceCE, f2.logits, f2.gt);
  CHECK(map.normalized.array().abs().maxCoeff() == 1.0);
}

TEST_CASE("smaller region gets the larger relative gradient") {
  const auto f2 = figure2_scenario();
  const auto part = voronoi_partition(f2.lab);
  REQUIRE(part.region_sizes[static_cast<std::size_t>(f2.small_id - 1)] <
          part.region_sizes[static_cast<std::size_t>(f2.large_id - 1)]);
  // Mean |normalized grad| on the missed small component over the mean on
  // the false positive in the large region.
  auto ratio = [&](LossKind k) {
    const auto map = gradient_map(k, f2.logits, f2.gt);
    double fn = 0, fp = 0;
    Index nfn = 0, nfp = 0;
    for (Index v = 0; v < f2.gt.size(); ++v) {
      if (f2.lab.labels[v] == f2.small_id) {
        fn += std::abs(map.normalized[v]);
        ++nfn;
      }
      if (f2.fp_blob[v] != 0) {
        fp += std::abs(map.normalized[v]);
        ++nfp;
      }
    }
    return (fn / static_cast<double>(nfn)) / (fp / static_cast<double>(nfp));
  };
  const double cc = ratio(LossKind::CCDiceCE), blob = ratio(LossKind::BlobDiceCE);
  CHECK(cc > 1.0);
  CHECK(cc > blob);
}

}
