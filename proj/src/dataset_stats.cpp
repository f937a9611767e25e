#include "lesionwise/dataset_stats.hpp"

#include "lesionwise/components.hpp"
#include "lesionwise/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lesionwise {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

CorpusStats corpus_stats_from_volumes(const std::vector<std::vector<double>>& volumes_per_scan,
                                      StdKind std_kind) {
  if (volumes_per_scan.empty()) throw std::invalid_argument("corpus_stats: no scans");
  CorpusStats s;
  s.n_scans = static_cast<Index>(volumes_per_scan.size());

  std::vector<double> counts;
  std::vector<double> pooled;
  for (const auto& scan : volumes_per_scan) {
    counts.push_back(static_cast<double>(scan.size()));
    s.counts_per_scan.push_back(static_cast<Index>(scan.size()));
    pooled.insert(pooled.end(), scan.begin(), scan.end());
  }
  s.cc_p25 = percentile(counts, 25.0);
  s.cc_p50 = percentile(counts, 50.0);
  s.cc_p75 = percentile(counts, 75.0);
  s.n_components = static_cast<Index>(pooled.size());

  if (!pooled.empty()) {
    double sum = 0.0;
    for (double v : pooled) sum += v;
    const double mean = sum / static_cast<double>(pooled.size());
    s.vol_mean_mm3 = mean;
    const double dof = std_kind == StdKind::Population ? static_cast<double>(pooled.size())
                                                       : static_cast<double>(pooled.size()) - 1.0;
    if (dof > 0.0) {
      double ss = 0.0;
      for (double v : pooled) ss += (v - mean) * (v - mean);
      s.vol_std_mm3 = std::sqrt(ss / dof);
    }
  }
  return s;
}

CorpusStats corpus_stats(std::span<const BinaryMask> masks, StdKind std_kind) {
  if (masks.empty()) throw std::invalid_argument("corpus_stats: no scans");
  std::vector<std::vector<double>> volumes;
  volumes.reserve(masks.size());
  for (const auto& m : masks) volumes.push_back(label_components(m).volumes_mm3);
  return corpus_stats_from_volumes(volumes, std_kind);
}

std::string format_cc_cell(const CorpusStats& s) {
  return fmt(s.cc_p50) + " [" + fmt(s.cc_p25) + ", " + fmt(s.cc_p75) + "]";
}

std::string format_volume_cell(const CorpusStats& s) {
  if (!s.vol_mean_mm3) return "n/a";
  return fmt(*s.vol_mean_mm3) + " ± " + (s.vol_std_mm3 ? fmt(*s.vol_std_mm3) : std::string("n/a"));
}

}  // namespace lesionwise
