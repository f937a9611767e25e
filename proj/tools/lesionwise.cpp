#include "lesionwise/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace lesionwise;

namespace {

struct Flags {
  std::string loss = "cc-dicece";
  std::string distance = "voxel";
  std::string empty_gt = "global-only";
  std::string format;
  std::string out;
};

void add_common(CLI::App* sub, cli::RunConfig& cfg, Flags& f) {
  sub->add_option("--out", f.out, "Output directory or file");
  sub->add_option("--format", f.format, "Comma-separated report formats: json,csv,text");
  sub->add_option("--distance", f.distance, "Voronoi distance: voxel or physical")
      ->check(CLI::IsMember({"voxel", "physical"}));
  sub->add_option("--threshold", cfg.threshold, "Binarization threshold for probability predictions");
}

void add_loss_flags(CLI::App* sub, cli::RunConfig& cfg, Flags& f) {
  sub->add_option("--loss", f.loss, "dicece, cc-dicece or blob-dicece")
      ->check(CLI::IsMember({"dicece", "cc-dicece", "blob-dicece"}));
  sub->add_option("--w-global", cfg.weights.w_global, "Weight of the global DiceCE term");
  sub->add_option("--w-instance", cfg.weights.w_instance, "Weight of the instance term");
  sub->add_option("--w-dice", cfg.weights.w_dice, "Weight of soft Dice inside DiceCE");
  sub->add_option("--w-ce", cfg.weights.w_ce, "Weight of cross-entropy inside DiceCE");
  sub->add_option("--empty-gt", f.empty_gt, "Policy without ground-truth components: global-only or zero")
      ->check(CLI::IsMember({"global-only", "zero"}));
}

std::vector<std::string> split_formats(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance-aware segmentation losses and lesion-wise evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kToolVersion);

  cli::RunConfig cfg;
  Flags f;
  std::string positional, second;

  auto* eval = app.add_subcommand("eval", "Evaluate prediction/ground-truth pairs from a gt,pred CSV manifest");
  eval->add_option("manifest", positional, "Manifest CSV")->required();
  add_common(eval, cfg, f);

  auto* loss = app.add_subcommand("loss", "Compute a loss and optionally export its normalized gradient map");
  loss->add_option("gt", positional, "Ground-truth mask")->required();
  loss->add_option("logits", second, "Logit volume")->required();
  add_common(loss, cfg, f);
  add_loss_flags(loss, cfg, f);

  auto* stats = app.add_subcommand("stats", "Component count and volume statistics for a directory of masks");
  stats->add_option("mask_dir", positional, "Directory of mask volumes")->required();
  stats->add_flag("--sample-std", cfg.sample_std, "Use the sample standard deviation (n - 1)");
  add_common(stats, cfg, f);

  auto* phantom = app.add_subcommand("phantom", "Write a synthetic phantom: figure1, figure2 or random");
  phantom->add_option("name", positional, "Phantom name")->required();
  phantom->add_option("--seed", cfg.seed, "Seed for the random phantom");
  phantom->add_option("--count", cfg.count, "Component count for the random phantom");
  phantom->add_option("--volume-format", cfg.volume_format, "raw or nii")->check(CLI::IsMember({"raw", "nii"}));
  add_common(phantom, cfg, f);

  auto* voronoi = app.add_subcommand("voronoi", "Export the nearest-component region id volume");
  voronoi->add_option("gt", positional, "Ground-truth mask")->required();
  add_common(voronoi, cfg, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kUsage;
  }

  cfg.command = app.get_subcommands().front()->get_name();
  cfg.inputs = {positional};
  if (!second.empty()) cfg.inputs.push_back(second);
  cfg.out = f.out;
  cfg.threads = cli::threads_from_env();
  if (!f.format.empty()) {
    cfg.formats = split_formats(f.format);
  } else if (cfg.command == "eval") {
    cfg.formats = {"json", "csv"};
  } else if (cfg.command == "stats") {
    cfg.formats = {"csv"};
  }
  try {
    cfg.loss = cli::parse_loss_kind(f.loss);
    cfg.distance = cli::parse_distance(f.distance);
    cfg.policy.empty_gt = cli::parse_empty_gt(f.empty_gt);
  } catch (const cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return cli::kUsage;
  }
  return cli::run(cfg, std::cout, std::cerr);
}
