#include "lesionwise/cli.hpp"

#include "lesionwise/phantoms.hpp"
#include "lesionwise/volume_io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace lesionwise::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "dicece") return LossKind::DiceCE;
  if (s == "cc-dicece") return LossKind::CCDiceCE;
  if (s == "blob-dicece") return LossKind::BlobDiceCE;
  throw UsageError("unknown loss '" + s + "' (expected dicece, cc-dicece or blob-dicece)");
}

DistanceKind parse_distance(const std::string& s) {
  if (s == "voxel") return DistanceKind::Voxel;
  if (s == "physical") return DistanceKind::Physical;
  throw UsageError("unknown distance '" + s + "' (expected voxel or physical)");
}

EmptyGtMode parse_empty_gt(const std::string& s) {
  if (s == "global-only") return EmptyGtMode::GlobalOnly;
  if (s == "zero") return EmptyGtMode::Zero;
  throw UsageError("unknown empty-gt policy '" + s + "' (expected global-only or zero)");
}

int threads_from_env() {
  if (const char* env = std::getenv("LESIONWISE_THREADS")) {
    int n = 0;
    const std::string_view sv(env);
    const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), n);
    if (res.ec == std::errc() && res.ptr == sv.data() + sv.size() && n > 0) return n;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void RunConfig::validate() const {
  static const std::vector<std::string> kCommands{"eval", "loss", "stats", "phantom", "voronoi"};
  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    throw UsageError("unknown command '" + command + "'");
  }
  try {
    weights.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");
  if (!(policy.empty_denominator_dice >= 0.0 && policy.empty_denominator_dice <= 1.0)) {
    throw UsageError("empty-denominator Dice must lie in [0, 1]");
  }
  for (const auto& f : formats) {
    if (f != "json" && f != "csv" && f != "text") throw UsageError("unknown format '" + f + "'");
  }
  if (volume_format != "raw" && volume_format != "nii") {
    throw UsageError("unknown volume format '" + volume_format + "' (expected raw or nii)");
  }
  if (threads < 1) throw UsageError("thread count must be positive");
  const std::size_t need = command == "loss" ? 2 : 1;
  if (inputs.size() != need) {
    throw UsageError(command + " expects " + std::to_string(need) + " positional input(s)");
  }
  if ((command == "eval" || command == "phantom" || command == "voronoi") && out.empty()) {
    throw UsageError(command + " requires --out");
  }
  if (command == "phantom" && count < 1) throw UsageError("--count must be positive");
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["command"] = command;
  j["inputs"] = inputs;
  j["loss"] = to_string(loss);
  j["weights"] = {{"w_global", weights.w_global},
                  {"w_instance", weights.w_instance},
                  {"w_dice", weights.w_dice},
                  {"w_ce", weights.w_ce}};
  j["empty_gt"] = policy.empty_gt_name();
  j["empty_denominator_dice"] = policy.empty_denominator_dice;
  j["distance"] = distance == DistanceKind::Voxel ? "voxel" : "physical";
  j["threshold"] = threshold;
  j["formats"] = formats;
  return j;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw VolumeFormatError("cannot open manifest " + path.string());
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::string line;
  if (!std::getline(in, line)) throw UsageError("manifest " + path.string() + " is empty");
  const auto comma = line.find(',');
  if (comma == std::string::npos || trim(line.substr(0, comma)) != "gt" || trim(line.substr(comma + 1)) != "pred") {
    throw UsageError("manifest " + path.string() + ": header must be 'gt,pred'");
  }
  std::vector<ManifestEntry> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto c = line.find(',');
    if (c == std::string::npos || line.find(',', c + 1) != std::string::npos) {
      throw UsageError("manifest " + path.string() + ":" + std::to_string(lineno) + ": expected two columns");
    }
    rows.push_back({trim(line.substr(0, c)), trim(line.substr(c + 1))});
  }
  return rows;
}

namespace {

ordered_json metric_json(const MetricValue& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string metric_csv(const MetricValue& v) { return v ? format_number(*v) : std::string(); }

DistanceMetric metric_for(DistanceKind kind, const Spacing& spacing) {
  return kind == DistanceKind::Voxel ? DistanceMetric::voxel() : DistanceMetric::physical(spacing);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

BinaryMask read_prediction(const fs::path& path, double threshold) {
  return std::visit(
      [&](auto&& v) -> BinaryMask {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, BinaryMask>) {
          return BinaryMask::like(v, (v.array() != 0).template cast<std::uint8_t>());
        } else {
          if (!((v.array() >= 0.0f) && (v.array() <= 1.0f)).all()) {
            throw std::invalid_argument(path.string() + ": float predictions must be probabilities in [0, 1]");
          }
          return binarize(v, threshold);
        }
      },
      read_volume(path));
}

struct CaseResult {
  bool ok = false;
  std::string error;
  CaseMetrics metrics;
};

CaseResult evaluate_case(const ManifestEntry& e, const fs::path& base, const RunConfig& config) {
  CaseResult r;
  try {
    const BinaryMask gt = read_mask(resolve(base, e.gt));
    const BinaryMask pred = read_prediction(resolve(base, e.pred), config.threshold);
    if (!(gt.shape() == pred.shape())) {
      r.error = "shape mismatch between ground truth and prediction";
      return r;
    }
    r.metrics = case_metrics(pred, gt, metric_for(config.distance, gt.spacing()));
    r.ok = true;
  } catch (const std::exception& ex) {
    r.error = ex.what();
  }
  return r;
}

std::vector<CaseResult> evaluate_all(const std::vector<ManifestEntry>& rows, const fs::path& base,
                                     const RunConfig& config) {
  std::vector<CaseResult> results(rows.size());
  const auto workers = static_cast<std::size_t>(std::max(1, config.threads));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) results[i] = evaluate_case(rows[i], base, config);
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(workers, rows.size()); ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return results;
}

ordered_json summary_json(const Summary& s) {
  ordered_json j;
  j["mean"] = metric_json(s.mean);
  j["std"] = metric_json(s.std);
  j["n_defined"] = s.n_defined;
  j["n_undefined"] = s.n_undefined;
  return j;
}

}  // namespace

EvalOutcome run_eval(const RunConfig& config) {
  config.validate();
  const fs::path manifest(config.inputs.front());
  const auto rows = read_manifest(manifest);
  if (rows.empty()) throw UsageError("manifest " + manifest.string() + " lists no cases");
  const auto results = evaluate_all(rows, manifest.parent_path(), config);

  EvalOutcome outcome;
  ordered_json& rep = outcome.report;
  rep["schema_version"] = kReportSchemaVersion;
  rep["tool"] = kToolName;
  rep["version"] = kToolVersion;
  rep["config"] = config.to_json();
  rep["policies"] = {
      {"tie_policy", kTiePolicy},
      {"empty_gt", config.policy.empty_gt_name()},
      {"matching", "maximum-cardinality one-to-one, overlap >= 1 voxel"},
      {"percentiles", "linear interpolation"},
      {"quartile_bins", "[min,p25) [p25,p50) [p50,p75) [p75,max]"},
      {"quartile_pooling", "pooled over all evaluated cases"},
      {"std", "population"},
      {"undefined_metrics", "null, excluded from aggregates"},
  };

  std::ostringstream csv;
  csv << "case,gt,pred,status,dice,cc_dice,precision,recall,f1,n_gt,n_pred,tp,fp,fn\n";

  ordered_json cases = ordered_json::array();
  std::vector<CaseMetrics> ok_cases;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = results[i];
    ordered_json c;
    c["case"] = i;
    c["gt"] = rows[i].gt;
    c["pred"] = rows[i].pred;
    csv << i << ',' << rows[i].gt << ',' << rows[i].pred << ',';
    if (!r.ok) {
      ++failures;
      c["status"] = "error";
      c["error"] = r.error;
      csv << "error,,,,,,,,,,\n";
    } else {
      const CaseMetrics& m = r.metrics;
      ok_cases.push_back(m);
      c["status"] = "ok";
      c["metrics"] = {{"dice", m.dice},
                      {"cc_dice", metric_json(m.cc_dice)},
                      {"precision", metric_json(m.precision)},
                      {"recall", metric_json(m.recall)},
                      {"f1", metric_json(m.f1)},
                      {"n_gt", m.n_gt},
                      {"n_pred", m.n_pred},
                      {"tp", m.tp},
                      {"fp", m.fp},
                      {"fn", m.fn}};
      csv << "ok," << format_number(m.dice) << ',' << metric_csv(m.cc_dice) << ','
          << metric_csv(m.precision) << ',' << metric_csv(m.recall) << ',' << metric_csv(m.f1) << ','
          << m.n_gt << ',' << m.n_pred << ',' << m.tp << ',' << m.fp << ',' << m.fn << '\n';
    }
    cases.push_back(std::move(c));
  }
  rep["cases"] = std::move(cases);
  rep["n_cases"] = rows.size();
  rep["n_failed"] = failures;

  if (!ok_cases.empty()) {
    auto collect = [&](auto field) {
      std::vector<MetricValue> v;
      for (const auto& m : ok_cases) v.push_back(field(m));
      return aggregate(v);
    };
    const std::vector<std::pair<const char*, Summary>> summaries{
        {"dice", collect([](const CaseMetrics& m) -> MetricValue { return m.dice; })},
        {"cc_dice", collect([](const CaseMetrics& m) { return m.cc_dice; })},
        {"precision", collect([](const CaseMetrics& m) { return m.precision; })},
        {"recall", collect([](const CaseMetrics& m) { return m.recall; })},
        {"f1", collect([](const CaseMetrics& m) { return m.f1; })},
    };
    ordered_json agg;
    for (const auto& [name, s] : summaries) {
      agg[name] = summary_json(s);
      csv << "summary," << name << ",,mean," << metric_csv(s.mean) << ",std," << metric_csv(s.std)
          << ",n_defined," << s.n_defined << ",n_undefined," << s.n_undefined << ",,,\n";
    }
    rep["aggregate"] = std::move(agg);

    Index tp = 0, fp = 0, fn = 0;
    for (const auto& m : ok_cases) {
      tp += m.tp;
      fp += m.fp;
      fn += m.fn;
    }
    const DetectionRates pooled = detection_rates(tp, fp, fn);
    rep["pooled_detection"] = {{"tp", tp},
                               {"fp", fp},
                               {"fn", fn},
                               {"precision", metric_json(pooled.precision)},
                               {"recall", metric_json(pooled.recall)},
                               {"f1", metric_json(pooled.f1)}};

    const bool any_gt = std::any_of(ok_cases.begin(), ok_cases.end(),
                                    [](const CaseMetrics& m) { return m.n_gt > 0; });
    if (any_gt) {
      const QuartileRecall q = quartile_recall(std::span<const CaseMetrics>(ok_cases));
      ordered_json qj;
      qj["boundaries_mm3"] = q.boundaries;
      qj["recall"] = ordered_json::array();
      for (const auto& r : q.recall) qj["recall"].push_back(metric_json(r));
      qj["n_components"] = q.n_components;
      qj["n_detected"] = q.n_detected;
      rep["quartile_recall"] = std::move(qj);
    } else {
      rep["quartile_recall"] = nullptr;
    }
  } else {
    rep["aggregate"] = nullptr;
    rep["pooled_detection"] = nullptr;
    rep["quartile_recall"] = nullptr;
  }

  outcome.csv = csv.str();
  outcome.exit_code = failures > 0 ? kPartialFailure : kOk;
  return outcome;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw VolumeFormatError("cannot write " + path.string());
  out << text;
}

bool wants(const RunConfig& c, const std::string& f) {
  return std::find(c.formats.begin(), c.formats.end(), f) != c.formats.end();
}

template <typename V>
void write_volume(const V& v, const fs::path& stem, const std::string& format) {
  if (format == "nii") {
    fs::path p = stem;
    p += ".nii";
    write_nifti(v, p);
  } else {
    write_raw(v, stem);
  }
}

template <typename V>
void write_volume_to(const V& v, const fs::path& path) {
  if (is_nifti_path(path)) {
    write_nifti(v, path);
  } else {
    write_raw(v, path);
  }
}

}  // namespace

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err) {
  const EvalOutcome o = run_eval(config);
  fs::create_directories(config.out);
  if (wants(config, "json") || config.formats.empty()) {
    write_text(config.out / "report.json", o.report.dump(2) + "\n");
  }
  if (wants(config, "csv")) write_text(config.out / "report.csv", o.csv);
  for (const auto& c : o.report["cases"]) {
    if (c["status"] != "ok") err << "case " << c["case"].get<std::size_t>() << ": " << c["error"].get<std::string>() << '\n';
  }
  out << "evaluated " << o.report["n_cases"].get<std::size_t>() << " case(s), "
      << o.report["n_failed"].get<std::size_t>() << " failed; report in " << config.out.string() << '\n';
  return o.exit_code;
}

int cmd_loss(const RunConfig& config, std::ostream& out, std::ostream&) {
  config.validate();
  const BinaryMask gt = read_mask(config.inputs[0]);
  const LogitVolume logits = read_real(config.inputs[1]);
  require_same_shape(logits, gt, "loss");
  const DistanceMetric metric = metric_for(config.distance, gt.spacing());

  const ComponentLabeling lab = label_components(gt);
  const auto global = dicece_loss(logits, gt, {}, config.weights.w_dice, config.weights.w_ce, config.policy);
  const auto inst = instance_loss(config.loss, logits, gt, lab, config.weights, config.policy, metric);
  const auto total = combined_loss(config.loss, logits, gt, config.weights, config.policy, metric);

  ordered_json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["config"] = config.to_json();
  j["tie_policy"] = kTiePolicy;
  j["n_components"] = lab.count;
  j["global_dicece"] = global.value;
  j["instance_term"] = inst ? ordered_json(inst->value) : ordered_json(nullptr);
  j["loss"] = total.value;

  if (!config.out.empty()) {
    const auto normalized = normalize_by_max_abs(total.grad);
    write_volume_to(normalized, config.out);
    j["gradient_map"] = config.out.string();
    j["gradient_max_abs"] = total.grad.array().abs().maxCoeff();
  }
  out << j.dump(2) << '\n';
  return kOk;
}

std::string stats_csv(const std::string& name, const CorpusStats& s) {
  std::ostringstream os;
  os << "dataset,n_scans,n_components,cc_p25,cc_p50,cc_p75,vol_mean_mm3,vol_std_mm3,"
        "\"CC P50 [P25, P75]\",\"Mean volume ± std [mm³]\"\n";
  os << name << ',' << s.n_scans << ',' << s.n_components << ',' << format_number(s.cc_p25) << ','
     << format_number(s.cc_p50) << ',' << format_number(s.cc_p75) << ','
     << (s.vol_mean_mm3 ? format_number(*s.vol_mean_mm3) : "") << ','
     << (s.vol_std_mm3 ? format_number(*s.vol_std_mm3) : "") << ",\"" << format_cc_cell(s) << "\",\""
     << format_volume_cell(s) << "\"\n";
  return os.str();
}

std::string stats_text(const std::string& name, const CorpusStats& s) {
  const std::string h1 = "CC P50 [P25, P75]";
  const std::string h2 = "Mean volume ± std [mm³]";
  const std::string c1 = format_cc_cell(s);
  const std::string c2 = format_volume_cell(s);
  const auto w0 = std::max<std::size_t>(name.size(), 7);
  const auto w1 = std::max(h1.size(), c1.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w0)) << "Dataset" << "  " << std::setw(static_cast<int>(w1)) << h1
     << "  " << h2 << '\n';
  os << std::left << std::setw(static_cast<int>(w0)) << name << "  " << std::setw(static_cast<int>(w1)) << c1 << "  "
     << c2 << '\n';
  return os.str();
}

int cmd_stats(const RunConfig& config, std::ostream& out, std::ostream&) {
  config.validate();
  const fs::path dir(config.inputs.front());
  if (!fs::is_directory(dir)) throw VolumeFormatError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_volume_path(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError(dir.string() + " holds no volumes");
  std::vector<BinaryMask> masks;
  for (const auto& f : files) masks.push_back(read_mask(f));
  const CorpusStats s = corpus_stats(masks, config.sample_std ? StdKind::Sample : StdKind::Population);

  std::string name = dir.filename().string();
  if (name.empty()) name = dir.parent_path().filename().string();
  if (!config.out.empty()) fs::create_directories(config.out);
  if (wants(config, "csv")) {
    if (config.out.empty()) {
      out << stats_csv(name, s);
    } else {
      write_text(config.out / "stats.csv", stats_csv(name, s));
    }
  }
  if (wants(config, "json")) {
    ordered_json j;
    j["dataset"] = name;
    j["n_scans"] = s.n_scans;
    j["n_components"] = s.n_components;
    j["cc_p25"] = s.cc_p25;
    j["cc_p50"] = s.cc_p50;
    j["cc_p75"] = s.cc_p75;
    j["vol_mean_mm3"] = metric_json(s.vol_mean_mm3);
    j["vol_std_mm3"] = metric_json(s.vol_std_mm3);
    j["std"] = config.sample_std ? "sample" : "population";
    j["percentiles"] = "linear interpolation";
    j["counts_per_scan"] = s.counts_per_scan;
    if (config.out.empty()) {
      out << j.dump(2) << '\n';
    } else {
      write_text(config.out / "stats.json", j.dump(2) + "\n");
    }
  }
  out << stats_text(name, s);
  return kOk;
}

int cmd_phantom(const RunConfig& config, std::ostream& out, std::ostream&) {
  config.validate();
  const std::string& name = config.inputs.front();
  fs::create_directories(config.out);
  std::vector<std::string> written;
  auto emit = [&](const auto& v, const std::string& stem) {
    write_volume(v, config.out / stem, config.volume_format);
    written.push_back(stem);
  };
  if (name == "figure1") {
    const auto s = figure1_scenario();
    emit(s.gt, "gt");
    emit(s.pred_perfect, "pred_perfect");
    emit(s.pred_partial, "pred_partial");
  } else if (name == "figure2") {
    const auto s = figure2_scenario();
    emit(s.gt, "gt");
    emit(s.logits, "logits");
  } else if (name == "random") {
    const auto spec = random_phantom_spec(Shape(32, 32, 32), Spacing(), config.count, config.seed);
    emit(build_phantom(spec).gt, "gt");
  } else {
    throw UsageError("unknown phantom '" + name + "' (expected figure1, figure2 or random)");
  }
  for (const auto& w : written) out << (config.out / w).string() << '\n';
  return kOk;
}

int cmd_voronoi(const RunConfig& config, std::ostream& out, std::ostream&) {
  config.validate();
  const BinaryMask gt = read_mask(config.inputs.front());
  const ComponentLabeling lab = label_components(gt);
  const VoronoiPartition part = voronoi_partition(lab, metric_for(config.distance, gt.spacing()));
  write_volume_to(Volume<float>::like(part.region_of, part.region_of.array()), config.out);
  out << "components: " << part.count << '\n';
  for (Label c = 1; c <= part.count; ++c) {
    out << "region " << c << ": " << part.region_sizes[static_cast<std::size_t>(c - 1)] << " voxels\n";
  }
  return kOk;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    if (config.command == "eval") return cmd_eval(config, out, err);
    if (config.command == "loss") return cmd_loss(config, out, err);
    if (config.command == "stats") return cmd_stats(config, out, err);
    if (config.command == "phantom") return cmd_phantom(config, out, err);
    return cmd_voronoi(config, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace lesionwise::cli
