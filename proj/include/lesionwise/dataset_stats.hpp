// Corpus-level component statistics: per-scan component count percentiles and
// pooled component volumes in mm3.

#ifndef LESIONWISE_DATASET_STATS_HPP
#define LESIONWISE_DATASET_STATS_HPP

#include "lesionwise/volume.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lesionwise {

enum class StdKind { Population, Sample };

struct CorpusStats {
  double cc_p25 = 0.0;
  double cc_p50 = 0.0;
  double cc_p75 = 0.0;
  /// Unset when the corpus has no components (or one component with sample std).
  std::optional<double> vol_mean_mm3;
  std::optional<double> vol_std_mm3;
  Index n_scans = 0;
  Index n_components = 0;
  std::vector<Index> counts_per_scan;
};

CorpusStats corpus_stats(std::span<const BinaryMask> masks, StdKind std_kind = StdKind::Population);

/// Same statistics from per-scan component volumes (one inner vector per scan).
CorpusStats corpus_stats_from_volumes(const std::vector<std::vector<double>>& volumes_per_scan,
                                      StdKind std_kind = StdKind::Population);

/// "P50 [P25, P75]" and "mean ± std" cells, shortest round-trip formatting.
std::string format_cc_cell(const CorpusStats& s);
std::string format_volume_cell(const CorpusStats& s);

}  // namespace lesionwise

#endif  // LESIONWISE_DATASET_STATS_HPP
