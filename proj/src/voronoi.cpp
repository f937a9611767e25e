#include "lesionwise/voronoi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lesionwise {

namespace {

template <typename Value>
struct WideOf;
template <>
struct WideOf<std::int64_t> {
  using type = __int128;
};
template <>
struct WideOf<double> {
  using type = long double;
};

// Lower envelope of the parabolas g_j(q) = f_j + w (q - j)^2 over one line
// (Felzenszwalb & Huttenlocher). Breakpoints are kept as exact fractions
// num/den and a parabola is only dropped when it is strictly above the
// envelope everywhere, so every minimiser at an integer q stays reachable
// and ties can be resolved by label.
template <typename Value>
class LineEnvelope {
 public:
  using Wide = typename WideOf<Value>::type;

  // lab[q] == 0 marks a position without a site.
  void solve(const std::vector<Value>& f, const std::vector<Label>& lab, Value w,
             std::vector<Value>& out_f, std::vector<Label>& out_lab) {
    const Index n = static_cast<Index>(f.size());
    sites_.clear();
    znum_.clear();
    zden_.clear();

    for (Index q = 0; q < n; ++q) {
      if (lab[q] == 0) continue;
      if (sites_.empty()) {
        push(q, 0, 0);
        continue;
      }
      Wide num = 0, den = 1;
      for (;;) {
        intersect(f, w, sites_.back(), q, num, den);
        if (sites_.size() > 1 && frac_less(num, den, znum_.back(), zden_.back())) {
          sites_.pop_back();
          znum_.pop_back();
          zden_.pop_back();
        } else {
          break;
        }
      }
      push(q, num, den);
    }

    if (sites_.empty()) {
      std::fill(out_lab.begin(), out_lab.end(), Label{0});
      return;
    }

    const std::size_t m = sites_.size();
    std::size_t k = 0;
    for (Index q = 0; q < n; ++q) {
      while (k + 1 < m && breakpoint_below(k + 1, q)) ++k;
      Value best_f{};
      Label best_l = 0;
      auto consider = [&](std::size_t c) {
        const Index j = sites_[c];
        const Index d = q - j;
        const Value g = f[j] + w * static_cast<Value>(d * d);
        if (best_l == 0 || g < best_f || (g == best_f && lab[j] < best_l)) {
          best_f = g;
          best_l = lab[j];
        }
      };
      // Neighbouring parabolas are also scored exactly; harmless when they
      // lose and it absorbs rounding in the floating-point breakpoints.
      if (k > 0) consider(k - 1);
      consider(k);
      for (std::size_t c = k + 1; c < m && (c == k + 1 || !breakpoint_above(c, q)); ++c) {
        consider(c);
      }
      out_f[q] = best_f;
      out_lab[q] = best_l;
    }
  }

 private:
  void push(Index q, Wide num, Wide den) {
    sites_.push_back(q);
    znum_.push_back(num);
    zden_.push_back(den);
  }

  static void intersect(const std::vector<Value>& f, Value w, Index a, Index b, Wide& num,
                        Wide& den) {
    const Wide wa = static_cast<Wide>(a), wb = static_cast<Wide>(b), ww = static_cast<Wide>(w);
    num = (static_cast<Wide>(f[b]) + ww * wb * wb) - (static_cast<Wide>(f[a]) + ww * wa * wa);
    den = 2 * ww * (wb - wa);
  }

  // a/b < c/d with b, d > 0
  static bool frac_less(Wide a, Wide b, Wide c, Wide d) { return a * d < c * b; }

  bool breakpoint_below(std::size_t c, Index q) const {
    return znum_[c] < static_cast<Wide>(q) * zden_[c];
  }
  bool breakpoint_above(std::size_t c, Index q) const {
    return znum_[c] > static_cast<Wide>(q) * zden_[c];
  }

  std::vector<Index> sites_;
  std::vector<Wide> znum_;
  std::vector<Wide> zden_;
};

template <typename Value>
void feature_transform(const Shape& s, const std::array<Value, 3>& w, std::vector<Value>& dist,
                       std::vector<Label>& owner) {
  LineEnvelope<Value> envelope;
  std::vector<Value> f, out_f;
  std::vector<Label> lab, out_lab;

  const std::array<Index, 3> extent{s.nx, s.ny, s.nz};
  const std::array<Index, 3> stride{1, s.nx, s.nx * s.ny};

  for (int axis = 0; axis < 3; ++axis) {
    const Index n = extent[axis];
    const Index st = stride[axis];
    f.resize(n);
    lab.resize(n);
    out_f.resize(n);
    out_lab.resize(n);

    // The two axes orthogonal to `axis` enumerate line origins.
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    for (Index u2 = 0; u2 < extent[a2]; ++u2) {
      for (Index u1 = 0; u1 < extent[a1]; ++u1) {
        const Index base = u1 * stride[a1] + u2 * stride[a2];
        for (Index q = 0; q < n; ++q) {
          f[q] = dist[base + q * st];
          lab[q] = owner[base + q * st];
        }
        envelope.solve(f, lab, w[axis], out_f, out_lab);
        for (Index q = 0; q < n; ++q) {
          dist[base + q * st] = out_f[q];
          owner[base + q * st] = out_lab[q];
        }
      }
    }
  }
}

template <typename Value>
void run_transform(const ComponentLabeling& lab, const std::array<Value, 3>& w,
                   VoronoiPartition& out) {
  const Shape& s = lab.shape();
  const auto n = static_cast<std::size_t>(s.size());
  std::vector<Value> dist(n, Value{0});
  std::vector<Label> owner(lab.labels.array().data(), lab.labels.array().data() + n);
  feature_transform(s, w, dist, owner);
  for (std::size_t i = 0; i < n; ++i) {
    out.region_of[static_cast<Index>(i)] = owner[i];
    out.distances[static_cast<Index>(i)] = std::sqrt(static_cast<double>(dist[i]));
  }
}

void fill_sizes(VoronoiPartition& part) {
  part.region_sizes.assign(static_cast<std::size_t>(part.count), 0);
  for (Index i = 0; i < part.region_of.size(); ++i) ++part.region_sizes[part.region_of[i] - 1];
}

VoronoiPartition make_partition(const ComponentLabeling& lab, const char* where) {
  if (lab.count < 1) throw EmptyGroundTruthError(where);
  VoronoiPartition part;
  part.count = lab.count;
  part.region_of = LabelVolume(lab.shape(), lab.spacing(), Label{0});
  part.distances = Volume<double>(lab.shape(), lab.spacing(), 0.0);
  return part;
}

}  // namespace

VoronoiPartition voronoi_partition(const ComponentLabeling& lab, const DistanceMetric& metric) {
  VoronoiPartition part = make_partition(lab, "voronoi_partition");
  if (metric.kind == DistanceKind::Voxel) {
    run_transform<std::int64_t>(lab, {1, 1, 1}, part);
  } else {
    run_transform<double>(lab, metric.axis_weights(), part);
  }
  fill_sizes(part);
  return part;
}

VoronoiPartition voronoi_partition_bruteforce(const ComponentLabeling& lab,
                                              const DistanceMetric& metric) {
  VoronoiPartition part = make_partition(lab, "voronoi_partition_bruteforce");
  const Shape& s = lab.shape();

  std::vector<std::vector<std::array<Index, 3>>> sites(lab.voxel_lists.size());
  for (std::size_t c = 0; c < sites.size(); ++c) {
    for (Index i : lab.voxel_lists[c]) sites[c].push_back(s.coords(i));
  }

  for (Index i = 0; i < s.size(); ++i) {
    const auto t = s.coords(i);
    double best = std::numeric_limits<double>::infinity();
    Label owner = 0;
    for (std::size_t c = 0; c < sites.size(); ++c) {
      double d_c = std::numeric_limits<double>::infinity();
      for (const auto& u : sites[c]) {
        d_c = std::min(d_c, metric.squared(t[0] - u[0], t[1] - u[1], t[2] - u[2]));
      }
      // Strict comparison in ascending id order keeps the lowest id on ties.
      if (d_c < best) {
        best = d_c;
        owner = static_cast<Label>(c + 1);
      }
    }
    part.region_of[i] = owner;
    part.distances[i] = std::sqrt(best);
  }
  fill_sizes(part);
  return part;
}

BinaryMask region_mask(const VoronoiPartition& part, Label id) {
  if (id < 1 || id > part.count) {
    throw std::invalid_argument("region_mask: id " + std::to_string(id) + " outside 1.." +
                                std::to_string(part.count));
  }
  return BinaryMask::like(part.region_of, (part.region_of.array() == id).cast<std::uint8_t>());
}

}  // namespace lesionwise
