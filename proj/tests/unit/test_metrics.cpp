#include "lesionwise/metrics.hpp"
#include "lesionwise/phantoms.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace lesionwise;

namespace {

BinaryMask first_n(const Shape& s, Index n, Index offset = 0) {
  BinaryMask m = make_mask(s);
  for (Index i = 0; i < n; ++i) m[offset + i] = 1;
  return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hard dice") {
  const Shape s(10, 4, 1);
  const BinaryMask a = first_n(s, 10);
  CHECK(hard_dice(a, a) == 1.0);
  CHECK(hard_dice(a, first_n(s, 10, 20)) == 0.0);
  CHECK(hard_dice(a, first_n(s, 10, 5)) == 0.5);
  CHECK(hard_dice(make_mask(s), make_mask(s)) == 1.0);
  CHECK(hard_dice(a, make_mask(s)) == 0.0);
  CHECK_THROWS_AS(hard_dice(a, make_mask(Shape(10, 4, 2))), std::invalid_argument);
}

TEST_CASE("detection rates") {
  const auto r = detection_rates(3, 1, 13);
  CHECK(*r.precision == 0.75);
  CHECK(*r.recall == 0.1875);
  CHECK(*r.f1 == doctest::Approx(0.3).epsilon(1e-15));
  const auto none = detection_rates(0, 0, 0);
  CHECK_FALSE(none.precision.has_value());
  CHECK_FALSE(none.recall.has_value());
  CHECK_FALSE(none.f1.has_value());
  const auto miss = detection_rates(0, 2, 3);
  CHECK(*miss.precision == 0.0);
  CHECK(*miss.recall == 0.0);
  CHECK(*miss.f1 == 0.0);
}

TEST_CASE("cc dice") {
  const auto f1 = figure1_scenario();
  CHECK(*cc_dice(binarize(sigmoid(f1.pred_perfect)), f1.gt) == 1.0);
  CHECK(*cc_dice(binarize(sigmoid(f1.pred_partial)), f1.gt) == 0.1875);
  CHECK_FALSE(cc_dice(f1.gt, make_mask(f1.gt.shape())).has_value());

  BinaryMask gt = make_mask(Shape(9, 9, 1));
  gt(1, 1, 0) = 1;
  gt(7, 1, 0) = 1;
  BinaryMask pred = gt;
  pred(7, 7, 0) = 1;  // closer to the second component
  // Region 1 stays perfect; region 2 gets dice 2/3.
  CHECK(*cc_dice(pred, gt) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  const auto lab = label_components(gt);
  CHECK(cc_dice(pred, lab, voronoi_partition(lab)) == *cc_dice(pred, gt));
}

TEST_CASE("instance matching cases") {
  BinaryMask gt = make_mask(Shape(9, 3, 1));
  gt(1, 1, 0) = 1;
  gt(5, 1, 0) = 1;
  BinaryMask pred = make_mask(gt.shape());
  pred(1, 1, 0) = 1;
  const auto one = match_instances(label_components(pred), label_components(gt));
  CHECK(one.pairs.size() == 1);
  CHECK(one.unmatched_gt == std::vector<Label>{2});

  // One long prediction covering both: one-to-one allows a single pair.
  for (Index x = 1; x <= 5; ++x) pred(x, 1, 0) = 1;
  const auto merged = match_instances(label_components(pred), label_components(gt));
  CHECK(merged.pairs.size() == 1);
  CHECK(merged.unmatched_gt.size() == 1);
  CHECK(merged.unmatched_pred.empty());

  BinaryMask far = make_mask(gt.shape());
  far(8, 0, 0) = 1;
  const auto disjoint = match_instances(label_components(far), label_components(gt));
  CHECK(disjoint.pairs.empty());
  CHECK(disjoint.unmatched_gt.size() == 2);
  CHECK(disjoint.unmatched_pred.size() == 1);
}

TEST_CASE("bipartite matching is maximum") {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 300; ++t) {
    const int ng = 1 + static_cast<int>(gen() % 7), np = 1 + static_cast<int>(gen() % 7);
    const double density = 0.1 + 0.1 * static_cast<double>(gen() % 6);
    std::vector<std::vector<Label>> edges(static_cast<std::size_t>(ng));
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(ng));
    for (int g = 0; g < ng; ++g)
      for (int p = 1; p <= np; ++p)
        if (static_cast<double>(gen() % 1000) < 1000 * density) {
          edges[static_cast<std::size_t>(g)].push_back(p);
          adj[static_cast<std::size_t>(g)].push_back(p);
        }
    const auto m = match_bipartite(edges, np);
    REQUIRE(static_cast<int>(m.pairs.size()) == oracle::exhaustive_max_matching(adj, np));
    std::vector<char> used(static_cast<std::size_t>(np + 1), 0);
    for (const auto& [g, p] : m.pairs) {
      const auto& e = edges[static_cast<std::size_t>(g - 1)];
      CHECK(std::find(e.begin(), e.end(), p) != e.end());
      CHECK_FALSE(used[static_cast<std::size_t>(p)]);
      used[static_cast<std::size_t>(p)] = 1;
    }
    CHECK(m.pairs.size() + m.unmatched_gt.size() == static_cast<std::size_t>(ng));
    CHECK(m.pairs.size() + m.unmatched_pred.size() == static_cast<std::size_t>(np));
  }
}

TEST_CASE("case metrics") {
  const Phantom p = testing::random_phantom(Shape(10, 10, 10), 3, 8);
  const auto same = case_metrics(p.gt, p.gt);
  CHECK(same.dice == 1.0);
  CHECK(*same.f1 == 1.0);
  CHECK(*same.cc_dice == 1.0);
  CHECK(same.tp == 3);
  CHECK(same.gt_components.size() == 3);
  for (const auto& c : same.gt_components) CHECK(c.detected);

  const auto f1 = figure1_scenario();
  const auto partial = case_metrics(binarize(sigmoid(f1.pred_partial)), f1.gt);
  CHECK(partial.tp == 3);
  CHECK(partial.fn == 13);
  CHECK(partial.fp == 0);
  CHECK(*partial.recall == 0.1875);
  CHECK(*partial.precision == 1.0);
  CHECK(*partial.cc_dice == 0.1875);

  const auto empty = case_metrics(make_mask(p.gt.shape()), make_mask(p.gt.shape()));
  CHECK(empty.dice == 1.0);
  CHECK_FALSE(empty.cc_dice.has_value());
  CHECK_FALSE(empty.recall.has_value());
}

TEST_CASE("percentiles interpolate linearly") {
  CHECK(percentile({0, 1, 2}, 25) == 0.5);
  CHECK(percentile({2, 0, 1}, 50) == 1.0);
  CHECK(percentile({0, 1, 2}, 75) == 1.5);
  CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8}, 25) == 2.75);
  CHECK(percentile({5}, 90) == 5.0);
  CHECK_THROWS_AS(percentile({}, 50), std::invalid_argument);
  CHECK_THROWS_AS(percentile({1.0}, 101), std::invalid_argument);
}

TEST_CASE("quartile recall") {
  std::vector<GtComponentOutcome> pooled;
  for (int v = 1; v <= 8; ++v) pooled.push_back({static_cast<double>(v), v > 4.5});
  const auto q = quartile_recall(pooled);
  CHECK(q.boundaries == std::array<double, 3>{2.75, 4.5, 6.25});
  CHECK(*q.recall[0] == 0.0);
  CHECK(*q.recall[1] == 0.0);
  CHECK(*q.recall[2] == 1.0);
  CHECK(*q.recall[3] == 1.0);
  CHECK(q.n_components == std::array<Index, 4>{2, 2, 2, 2});

  for (auto& c : pooled) c.detected = true;
  const auto all = quartile_recall(pooled);
  for (const auto& r : all.recall) CHECK(*r == 1.0);

  // Equal volumes leave the lower bins empty, hence undefined.
  const std::vector<GtComponentOutcome> flat(4, {3.0, true});
  const auto f = quartile_recall(flat);
  CHECK_FALSE(f.recall[0].has_value());
  CHECK(*f.recall[3] == 1.0);

  CHECK_THROWS_AS(quartile_recall(std::span<const GtComponentOutcome>{}), std::invalid_argument);
}

TEST_CASE("aggregate") {
  const std::vector<MetricValue> one{0.7};
  CHECK(*aggregate(one).mean == 0.7);
  CHECK(*aggregate(one).std == 0.0);
  const std::vector<MetricValue> two{0.4, 0.6, std::nullopt};
  const auto s = aggregate(two);
  CHECK(*s.mean == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(*s.std == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.n_defined == 2);
  CHECK(s.n_undefined == 1);
  const std::vector<MetricValue> undefined{std::nullopt};
  CHECK_FALSE(aggregate(undefined).mean.has_value());
  CHECK_THROWS_AS(aggregate(std::span<const MetricValue>{}), std::invalid_argument);
}

}
