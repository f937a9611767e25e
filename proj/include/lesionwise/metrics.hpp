// Lesion-wise evaluation of binarized predictions.

#ifndef LESIONWISE_METRICS_HPP
#define LESIONWISE_METRICS_HPP

#include "lesionwise/components.hpp"
#include "lesionwise/voronoi.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lesionwise {

/// Undefined metrics (zero denominators) are nullopt.
using MetricValue = std::optional<double>;

/// 2|P n K| / (|P| + |K|); 1 when both masks are empty.
double hard_dice(const BinaryMask& pred, const BinaryMask& gt);

/// Mean over ground-truth components C of dice(P n R_C, C). Undefined for empty ground truth.
MetricValue cc_dice(const BinaryMask& pred, const BinaryMask& gt,
                    const DistanceMetric& metric = DistanceMetric::voxel());

/// Same quantity from precomputed ground-truth labeling and partition.
double cc_dice(const BinaryMask& pred, const ComponentLabeling& gt_lab, const VoronoiPartition& part);

struct MatchResult {
  /// (gt id, pred id), sorted by gt id.
  std::vector<std::pair<Label, Label>> pairs;
  std::vector<Label> unmatched_gt;
  std::vector<Label> unmatched_pred;
};

/// Overlap graph: edges[g - 1] lists pred ids sharing at least one voxel with gt component g, ascending.
std::vector<std::vector<Label>> overlap_graph(const ComponentLabeling& pred_lab,
                                              const ComponentLabeling& gt_lab);

/// Maximum-cardinality one-to-one matching over the overlap graph (Hopcroft-Karp).
MatchResult match_instances(const ComponentLabeling& pred_lab, const ComponentLabeling& gt_lab);
MatchResult match_bipartite(const std::vector<std::vector<Label>>& edges, Label n_pred);

struct GtComponentOutcome {
  double volume_mm3 = 0.0;
  bool detected = false;
};

struct CaseMetrics {
  double dice = 0.0;
  MetricValue cc_dice;
  MetricValue precision;
  MetricValue recall;
  MetricValue f1;
  Index n_gt = 0;
  Index n_pred = 0;
  Index tp = 0;
  Index fp = 0;
  Index fn = 0;
  /// One entry per ground-truth component, in id order.
  std::vector<GtComponentOutcome> gt_components;
};

CaseMetrics case_metrics(const BinaryMask& pred, const BinaryMask& gt,
                         const DistanceMetric& metric = DistanceMetric::voxel());

struct DetectionRates {
  MetricValue precision;
  MetricValue recall;
  MetricValue f1;
};
DetectionRates detection_rates(Index tp, Index fp, Index fn);

struct QuartileRecall {
  /// 25th, 50th and 75th percentiles of pooled component volumes (mm3).
  std::array<double, 3> boundaries{};
  std::array<MetricValue, 4> recall;
  std::array<Index, 4> n_components{};
  std::array<Index, 4> n_detected{};
};

/// Bin edges are [min, b1), [b1, b2), [b2, b3), [b3, max]. Throws if no case has a component.
QuartileRecall quartile_recall(std::span<const CaseMetrics> cases);
QuartileRecall quartile_recall(std::span<const GtComponentOutcome> pooled);

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

struct Summary {
  MetricValue mean;
  MetricValue std;
  Index n_defined = 0;
  Index n_undefined = 0;
};

/// Mean and population standard deviation over defined values. Throws on empty input.
Summary aggregate(std::span<const MetricValue> values);

}  // namespace lesionwise

#endif  // LESIONWISE_METRICS_HPP
