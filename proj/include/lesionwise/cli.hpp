// Command implementations behind the `lesionwise` executable.

#ifndef LESIONWISE_CLI_HPP
#define LESIONWISE_CLI_HPP

#include "lesionwise/dataset_stats.hpp"
#include "lesionwise/losses.hpp"
#include "lesionwise/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lesionwise::cli {

inline constexpr const char* kToolName = "lesionwise";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kUsage = 1, kIoError = 2, kPartialFailure = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  /// Manifest, input volumes or phantom name, depending on the command.
  std::vector<std::string> inputs;
  LossKind loss = LossKind::CCDiceCE;
  LossWeights weights;
  DegeneratePolicy policy;
  DistanceKind distance = DistanceKind::Voxel;
  double threshold = 0.5;
  std::filesystem::path out;
  std::vector<std::string> formats{"json"};
  bool sample_std = false;
  std::uint64_t seed = 0;
  int count = 4;
  std::string volume_format = "raw";
  /// Worker pool size; not echoed into reports.
  int threads = 1;

  /// Throws UsageError on inconsistent settings. Touches no files.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

LossKind parse_loss_kind(const std::string& s);
DistanceKind parse_distance(const std::string& s);
EmptyGtMode parse_empty_gt(const std::string& s);

/// LESIONWISE_THREADS if set and positive, otherwise hardware concurrency.
int threads_from_env();

struct ManifestEntry {
  std::string gt;
  std::string pred;
};
/// CSV with header `gt,pred`. Paths are returned as written.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct EvalOutcome {
  nlohmann::ordered_json report;
  std::string csv;
  int exit_code = kOk;
};

/// Evaluates every manifest pair. Paths resolve relative to the manifest.
EvalOutcome run_eval(const RunConfig& config);

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_loss(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_stats(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_phantom(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_voronoi(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Dispatches on config.command; maps exceptions to exit codes.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// "CC P50 [P25, P75]" and "mean ± std" rows of corpus statistics.
std::string stats_csv(const std::string& name, const CorpusStats& s);
std::string stats_text(const std::string& name, const CorpusStats& s);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace lesionwise::cli

#endif  // LESIONWISE_CLI_HPP
