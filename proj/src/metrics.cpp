#include "lesionwise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace lesionwise {

double hard_dice(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "hard_dice");
  const auto p = pred.array() != 0;
  const auto g = gt.array() != 0;
  const Index np = p.count();
  const Index ng = g.count();
  if (np + ng == 0) return 1.0;
  const Index inter = (p && g).count();
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

double cc_dice(const BinaryMask& pred, const ComponentLabeling& gt_lab, const VoronoiPartition& part) {
  require_same_shape(pred, gt_lab.labels, "cc_dice");
  require_same_shape(pred, part.region_of, "cc_dice");
  if (gt_lab.count < 1) throw EmptyGroundTruthError("cc_dice");
  const auto n = static_cast<std::size_t>(gt_lab.count);
  std::vector<Index> inter(n, 0), pred_in_region(n, 0);
  for (Index i = 0; i < pred.size(); ++i) {
    if (pred[i] == 0) continue;
    const auto r = static_cast<std::size_t>(part.region_of[i] - 1);
    ++pred_in_region[r];
    if (gt_lab.labels[i] == part.region_of[i]) ++inter[r];
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    sum += 2.0 * static_cast<double>(inter[c]) /
           static_cast<double>(pred_in_region[c] + gt_lab.volumes_vox[c]);
  }
  return sum / static_cast<double>(n);
}

MetricValue cc_dice(const BinaryMask& pred, const BinaryMask& gt, const DistanceMetric& metric) {
  require_same_shape(pred, gt, "cc_dice");
  const ComponentLabeling lab = label_components(gt);
  if (lab.count == 0) return std::nullopt;
  return cc_dice(pred, lab, voronoi_partition(lab, metric));
}

std::vector<std::vector<Label>> overlap_graph(const ComponentLabeling& pred_lab,
                                              const ComponentLabeling& gt_lab) {
  require_same_shape(pred_lab.labels, gt_lab.labels, "overlap_graph");
  std::vector<std::vector<Label>> edges(static_cast<std::size_t>(gt_lab.count));
  for (Index i = 0; i < gt_lab.labels.size(); ++i) {
    const Label g = gt_lab.labels[i];
    const Label p = pred_lab.labels[i];
    if (g != 0 && p != 0) edges[static_cast<std::size_t>(g - 1)].push_back(p);
  }
  for (auto& e : edges) {
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
  }
  return edges;
}

namespace {

// Hopcroft-Karp on left = gt (0-based), right = pred (0-based).
class HopcroftKarp {
 public:
  HopcroftKarp(const std::vector<std::vector<Label>>& edges, Label n_right)
      : edges_(edges),
        match_left_(edges.size(), kFree),
        match_right_(static_cast<std::size_t>(n_right), kFree),
        dist_(edges.size(), 0) {}

  void run() {
    while (bfs()) {
      for (std::size_t u = 0; u < edges_.size(); ++u) {
        if (match_left_[u] == kFree) dfs(u);
      }
    }
  }

  const std::vector<long>& match_left() const { return match_left_; }
  const std::vector<long>& match_right() const { return match_right_; }

 private:
  static constexpr long kFree = -1;
  static constexpr long kInf = std::numeric_limits<long>::max();

  bool bfs() {
    std::queue<std::size_t> q;
    for (std::size_t u = 0; u < edges_.size(); ++u) {
      if (match_left_[u] == kFree) {
        dist_[u] = 0;
        q.push(u);
      } else {
        dist_[u] = kInf;
      }
    }
    bool found = false;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (Label p : edges_[u]) {
        const long v = match_right_[static_cast<std::size_t>(p - 1)];
        if (v == kFree) {
          found = true;
        } else if (dist_[static_cast<std::size_t>(v)] == kInf) {
          dist_[static_cast<std::size_t>(v)] = dist_[u] + 1;
          q.push(static_cast<std::size_t>(v));
        }
      }
    }
    return found;
  }

  bool dfs(std::size_t u) {
    for (Label p : edges_[u]) {
      const auto r = static_cast<std::size_t>(p - 1);
      const long v = match_right_[r];
      if (v == kFree || (dist_[static_cast<std::size_t>(v)] == dist_[u] + 1 &&
                         dfs(static_cast<std::size_t>(v)))) {
        match_left_[u] = static_cast<long>(r);
        match_right_[r] = static_cast<long>(u);
        return true;
      }
    }
    dist_[u] = kInf;
    return false;
  }

  const std::vector<std::vector<Label>>& edges_;
  std::vector<long> match_left_;
  std::vector<long> match_right_;
  std::vector<long> dist_;
};

}  // namespace

MatchResult match_bipartite(const std::vector<std::vector<Label>>& edges, Label n_pred) {
  for (const auto& e : edges) {
    for (Label p : e) {
      if (p < 1 || p > n_pred) throw std::invalid_argument("match_bipartite: pred id out of range");
    }
  }
  HopcroftKarp hk(edges, n_pred);
  hk.run();
  MatchResult out;
  for (std::size_t g = 0; g < edges.size(); ++g) {
    const long p = hk.match_left()[g];
    if (p >= 0) {
      out.pairs.emplace_back(static_cast<Label>(g + 1), static_cast<Label>(p + 1));
    } else {
      out.unmatched_gt.push_back(static_cast<Label>(g + 1));
    }
  }
  for (std::size_t p = 0; p < hk.match_right().size(); ++p) {
    if (hk.match_right()[p] < 0) out.unmatched_pred.push_back(static_cast<Label>(p + 1));
  }
  return out;
}

MatchResult match_instances(const ComponentLabeling& pred_lab, const ComponentLabeling& gt_lab) {
  return match_bipartite(overlap_graph(pred_lab, gt_lab), pred_lab.count);
}

DetectionRates detection_rates(Index tp, Index fp, Index fn) {
  DetectionRates r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (2 * tp + fp + fn > 0) r.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  return r;
}

CaseMetrics case_metrics(const BinaryMask& pred, const BinaryMask& gt, const DistanceMetric& metric) {
  require_same_shape(pred, gt, "case_metrics");
  const ComponentLabeling gt_lab = label_components(gt);
  const ComponentLabeling pred_lab = label_components(pred);
  const MatchResult match = match_instances(pred_lab, gt_lab);

  CaseMetrics m;
  m.dice = hard_dice(pred, gt);
  if (gt_lab.count > 0) m.cc_dice = cc_dice(pred, gt_lab, voronoi_partition(gt_lab, metric));
  m.n_gt = gt_lab.count;
  m.n_pred = pred_lab.count;
  m.tp = static_cast<Index>(match.pairs.size());
  m.fp = m.n_pred - m.tp;
  m.fn = m.n_gt - m.tp;
  const DetectionRates r = detection_rates(m.tp, m.fp, m.fn);
  m.precision = r.precision;
  m.recall = r.recall;
  m.f1 = r.f1;

  m.gt_components.resize(static_cast<std::size_t>(gt_lab.count));
  for (std::size_t c = 0; c < m.gt_components.size(); ++c) {
    m.gt_components[c].volume_mm3 = gt_lab.volumes_mm3[c];
  }
  for (const auto& [g, p] : match.pairs) m.gt_components[static_cast<std::size_t>(g - 1)].detected = true;
  return m;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile: q outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

QuartileRecall quartile_recall(std::span<const GtComponentOutcome> pooled) {
  if (pooled.empty()) throw std::invalid_argument("quartile_recall: no ground-truth components");
  std::vector<double> volumes;
  volumes.reserve(pooled.size());
  for (const auto& c : pooled) volumes.push_back(c.volume_mm3);

  QuartileRecall out;
  out.boundaries = {percentile(volumes, 25.0), percentile(volumes, 50.0), percentile(volumes, 75.0)};
  for (const auto& c : pooled) {
    std::size_t bin = 0;
    while (bin < 3 && c.volume_mm3 >= out.boundaries[bin]) ++bin;
    ++out.n_components[bin];
    if (c.detected) ++out.n_detected[bin];
  }
  for (std::size_t b = 0; b < 4; ++b) {
    if (out.n_components[b] > 0) {
      out.recall[b] = static_cast<double>(out.n_detected[b]) / static_cast<double>(out.n_components[b]);
    }
  }
  return out;
}

QuartileRecall quartile_recall(std::span<const CaseMetrics> cases) {
  std::vector<GtComponentOutcome> pooled;
  for (const auto& c : cases) pooled.insert(pooled.end(), c.gt_components.begin(), c.gt_components.end());
  return quartile_recall(std::span<const GtComponentOutcome>(pooled));
}

Summary aggregate(std::span<const MetricValue> values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  Summary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      ++s.n_defined;
      sum += *v;
    } else {
      ++s.n_undefined;
    }
  }
  if (s.n_defined == 0) return s;
  const double mean = sum / static_cast<double>(s.n_defined);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - mean) * (*v - mean);
  }
  s.mean = mean;
  s.std = std::sqrt(ss / static_cast<double>(s.n_defined));
  return s;
}

}  // namespace lesionwise
