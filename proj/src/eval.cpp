#include "vcf/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vcf/error.hpp"

namespace vcf::eval {
namespace {

using nlohmann::json;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::string fmt(const char* pattern, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

bool has_flag(const volume::VertebraRecord& r, volume::ExclusionFlag f) { return r.exclusion_flags.count(f) > 0; }

json distribution(std::vector<double> values) {
  if (values.empty()) return {{"count", 0}};
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return {
      {"count", values.size()},
      {"min", values.front()},
      {"q1", orientation::percentile(values, 0.25)},
      {"median", orientation::percentile(values, 0.5)},
      {"q3", orientation::percentile(values, 0.75)},
      {"max", values.back()},
      {"mean", sum / static_cast<double>(values.size())},
  };
}

}  // namespace

void PipelineConfig::validate() const {
  if (threads < 1) throw Error(ErrorCode::kValidation, "threads must be at least 1");
  if (projection.grid_size < 4) throw Error(ErrorCode::kValidation, "grid size must be at least 4");
  if (!(min_valid_fraction >= 0.0 && min_valid_fraction <= 1.0)) {
    throw Error(ErrorCode::kValidation, "min_valid_fraction must be in [0, 1]");
  }
  if (kmeans.restarts < 1 || kmeans.max_iterations < 1) throw Error(ErrorCode::kValidation, "k-means settings must be positive");
}

void apply_config_json(PipelineConfig& cfg, const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed pipeline config: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kFormat, "pipeline config must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "threads") cfg.threads = value.get<int>();
      else if (key == "grid_size") cfg.projection.grid_size = value.get<int>();
      else if (key == "min_component_voxels") cfg.meshing.min_component_voxels = value.get<std::size_t>();
      else if (key == "smooth") cfg.meshing.smooth = value.get<bool>();
      else if (key == "kmeans_restarts") cfg.kmeans.restarts = value.get<int>();
      else if (key == "kmeans_max_iterations") cfg.kmeans.max_iterations = value.get<int>();
      else if (key == "column_span") cfg.projection.column_span = value.get<bool>();
      else if (key == "min_valid_fraction") cfg.min_valid_fraction = value.get<double>();
      else if (key == "use_orientation_hints") cfg.use_orientation_hints = value.get<bool>();
      else if (key == "split") cfg.split = value.get<std::string>();
      else if (key == "reference_mode") {
        const auto m = value.get<std::string>();
        if (m == "scan_max") cfg.reference_mode = features::ReferenceMode::kScanMax;
        else if (m == "adjacent") cfg.reference_mode = features::ReferenceMode::kAdjacent;
        else throw Error(ErrorCode::kValidation, "unknown reference_mode '" + m + "'");
      } else {
        throw Error(ErrorCode::kValidation, "unknown pipeline config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad pipeline config value: ") + e.what());
  }
  cfg.validate();
}

VertebraGeometry extract_vertebra(const volume::LabelVolume& vol, int label, const PipelineConfig& cfg) {
  VertebraGeometry g;
  const volume::BinaryMask mask = volume::extract_mask(vol, label);
  g.mesh = meshing::marching_cubes(mask, cfg.meshing, &g.meshing_report);
  const meshing::OrientedPointCloud cloud = meshing::to_point_cloud(g.mesh);
  g.clusters = orientation::cluster_normals(cloud, cfg.seed + static_cast<std::uint64_t>(label), cfg.kmeans);
  std::optional<orientation::PoseHints> hints;
  if (cfg.use_orientation_hints) hints = orientation::PoseHints{};
  g.pose = orientation::compute_pose(g.clusters, cloud, hints);
  g.posed = orientation::apply_pose(cloud, g.pose.transform);
  g.map = heightmap::project_heightmap(g.posed, cfg.projection);
  g.stats = features::section_stats(g.map, cfg.layout, cfg.min_valid_fraction);
  return g;
}

ScanResult process_scan(const std::string& scan_id, const std::filesystem::path& volume_path,
                        const std::vector<volume::VertebraRecord>& records, const PipelineConfig& cfg) {
  ScanResult out;
  out.scan_id = scan_id;
  std::vector<const volume::VertebraRecord*> remaining;
  for (const auto& r : records) {
    if (has_flag(r, volume::ExclusionFlag::kForeignMaterial)) {
      out.exclusions.push_back({scan_id, r.vertebra_label, "foreign_material", "annotated foreign material"});
    } else {
      remaining.push_back(&r);
    }
  }
  const bool flagged_single = std::any_of(records.begin(), records.end(), [](const volume::VertebraRecord& r) {
    return has_flag(r, volume::ExclusionFlag::kSingleVertebraScan);
  });
  if (flagged_single || remaining.size() < 2) {
    for (const auto* r : remaining) {
      out.exclusions.push_back({scan_id, r->vertebra_label, "single_vertebra", "scan has fewer than two usable annotations"});
    }
    return out;
  }

  volume::LabelVolume vol;
  try {
    vol = volume::load_label_volume(volume_path);
  } catch (const Error& e) {
    for (const auto* r : remaining) out.exclusions.push_back({scan_id, r->vertebra_label, std::string(to_string(e.code())), e.what()});
    return out;
  }

  std::vector<int> labels;
  std::vector<features::SectionStats> stats;
  for (const auto* r : remaining) {
    try {
      stats.push_back(extract_vertebra(vol, r->vertebra_label, cfg).stats);
      labels.push_back(r->vertebra_label);
    } catch (const Error& e) {
      out.exclusions.push_back({scan_id, r->vertebra_label, std::string(to_string(e.code())), e.what()});
    }
  }
  if (labels.size() < 2) {
    for (int l : labels) out.exclusions.push_back({scan_id, l, "scan_excluded", "fewer than two valid vertebrae in scan"});
    return out;
  }
  out.features = features::build_scan_features(scan_id, labels, stats, cfg.reference_mode);
  return out;
}

std::optional<std::filesystem::path> find_volume(const std::filesystem::path& dir, const std::string& scan_id) {
  for (const char* ext : {".lvol", ".nii.gz", ".nii"}) {
    const auto p = dir / (scan_id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

std::map<std::string, std::string> load_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::getline(in, line);
  if (line.rfind("scan_id,split", 0) != 0) throw Error(ErrorCode::kFormat, "splits.csv must have header scan_id,split");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::kFormat, "malformed splits.csv line '" + line + "'");
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

FeatureRun run_features(const std::filesystem::path& dataset_dir, const PipelineConfig& cfg) {
  cfg.validate();
  FeatureRun run;
  auto all = volume::load_annotations(dataset_dir / "annotations.csv");
  std::map<std::string, std::string> splits;
  if (cfg.split) {
    const auto split_path = dataset_dir / "splits.csv";
    if (!std::filesystem::exists(split_path)) throw Error(ErrorCode::kValidation, "a split was requested but splits.csv is missing");
    splits = load_splits(split_path);
  }
  std::vector<std::string> scan_ids;
  std::map<std::string, std::vector<volume::VertebraRecord>> by_scan;
  for (auto& r : all) {
    if (cfg.split) {
      const auto it = splits.find(r.scan_id);
      if (it == splits.end() || it->second != *cfg.split) continue;
    }
    if (!by_scan.count(r.scan_id)) scan_ids.push_back(r.scan_id);
    by_scan[r.scan_id].push_back(r);
    run.records.push_back(r);
  }

  run.scans.resize(scan_ids.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < scan_ids.size(); i = next++) {
      try {
        const std::string& id = scan_ids[i];
        // A missing volume surfaces as an io error after the annotation exclusions.
        const auto path = find_volume(dataset_dir, id).value_or(dataset_dir / (id + ".lvol"));
        run.scans[i] = process_scan(id, path, by_scan.at(id), cfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, cfg.threads));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n, scan_ids.size()); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return run;
}

std::vector<features::FeatureRow> feature_rows(const FeatureRun& run) {
  std::vector<features::FeatureRow> rows;
  for (const auto& scan : run.scans) {
    for (const auto& f : scan.features) rows.push_back(features::to_row(f));
  }
  return rows;
}

Metrics compute_metrics(const Confusion& c) {
  Metrics m;
  const auto ratio = [&](double num, double den, const char* what) {
    if (den == 0.0) {
      m.notes.push_back(std::string(what) + " undefined (zero denominator), reported as 0");
      return 0.0;
    }
    return num / den;
  };
  const double tp = static_cast<double>(c.tp);
  m.precision = ratio(tp, tp + static_cast<double>(c.fp), "precision");
  m.recall = ratio(tp, tp + static_cast<double>(c.fn), "recall");
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall, "f1");
  m.accuracy = ratio(tp + static_cast<double>(c.tn), static_cast<double>(c.total()), "accuracy");
  return m;
}

std::string features_digest(const features::FeatureSet& values) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, v] : values) {
    const std::string item = name + "=" + fmt("%.17g", v) + ";";
    for (unsigned char ch : item) {
      h ^= ch;
      h *= kFnvPrime;
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvaluationReport evaluate(const FeatureRun& run, const rules::RuleModel& model) {
  model.validate();
  EvaluationReport report;
  report.total = run.records.size();
  std::map<std::pair<std::string, int>, int> grades;
  for (const auto& r : run.records) grades[{r.scan_id, r.vertebra_label}] = r.genant_grade;

  for (const auto& scan : run.scans) {
    report.exclusions.insert(report.exclusions.end(), scan.exclusions.begin(), scan.exclusions.end());
    for (const auto& f : scan.features) {
      rules::Prediction p;
      try {
        p = rules::predict(model, f.values);
      } catch (const Error& e) {
        report.exclusions.push_back({f.scan_id, f.label, std::string(to_string(e.code())), e.what()});
        continue;
      }
      PredictionRow row;
      row.scan_id = f.scan_id;
      row.label = f.label;
      row.grade = grades.at({f.scan_id, f.label});
      row.truth = row.grade >= kPositiveGrade;
      row.features_digest = features_digest(f.values);
      row.score = p.score;
      row.predicted = p.positive;
      row.fired = p.fired;
      if (row.truth && row.predicted) ++report.confusion.tp;
      else if (!row.truth && row.predicted) ++report.confusion.fp;
      else if (row.truth) ++report.confusion.fn;
      else ++report.confusion.tn;
      report.rows.push_back(std::move(row));
      report.feature_table.push_back(features::to_row(f));
    }
  }
  if (report.rows.size() + report.exclusions.size() != report.total) {
    throw Error(ErrorCode::kValidation, "exclusion accounting does not add up to the annotated total");
  }
  if (report.rows.empty()) throw Error(ErrorCode::kEmptyEvaluation, "no vertebra survived the exclusions");
  report.metrics = compute_metrics(report.confusion);
  return report;
}

EvaluationReport run_pipeline(const std::filesystem::path& dataset_dir, const rules::RuleModel& model,
                              const PipelineConfig& cfg) {
  return evaluate(run_features(dataset_dir, cfg), model);
}

std::string report_json(const EvaluationReport& report, const rules::RuleModel& model) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({
        {"scan_id", r.scan_id},
        {"vertebra_label", r.label},
        {"genant_grade", r.grade},
        {"positive_truth", r.truth},
        {"features_digest", r.features_digest},
        {"score", r.score},
        {"predicted_positive", r.predicted},
        {"fired_rules", r.fired},
    });
  }
  json exclusions = json::array();
  std::map<std::string, std::size_t> reason_counts;
  for (const auto& e : report.exclusions) {
    exclusions.push_back({{"scan_id", e.scan_id}, {"vertebra_label", e.label}, {"reason", e.reason}, {"detail", e.detail}});
    ++reason_counts[e.reason];
  }

  std::set<std::string> names;
  for (const auto& row : report.feature_table) {
    for (const auto& [name, v] : row.values) names.insert(name);
  }
  json dists = json::object();
  for (const auto& name : names) {
    std::vector<double> pos, neg, all;
    for (std::size_t i = 0; i < report.feature_table.size(); ++i) {
      const auto it = report.feature_table[i].values.find(name);
      if (it == report.feature_table[i].values.end()) continue;
      all.push_back(it->second);
      (report.rows[i].truth ? pos : neg).push_back(it->second);
    }
    dists[name] = {{"all", distribution(all)}, {"positive", distribution(pos)}, {"negative", distribution(neg)}};
  }

  const auto& c = report.confusion;
  const json doc = {
      {"counts", {{"total", report.total}, {"included", report.rows.size()}, {"excluded", report.exclusions.size()}}},
      {"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}},
      {"metrics",
       {{"precision", report.metrics.precision},
        {"recall", report.metrics.recall},
        {"f1", report.metrics.f1},
        {"accuracy", report.metrics.accuracy},
        {"notes", report.metrics.notes}}},
      {"rows", rows},
      {"exclusions", exclusions},
      {"exclusion_reasons", reason_counts},
      {"feature_distributions", dists},
      {"model", json::parse(rules::to_json(model))},
  };
  return doc.dump(2) + "\n";
}

std::string metrics_table(const EvaluationReport& report) {
  std::ostringstream out;
  const auto& c = report.confusion;
  const auto& m = report.metrics;
  out << "vertebrae: " << report.total << " annotated, " << report.rows.size() << " evaluated, "
      << report.exclusions.size() << " excluded\n";
  out << "confusion: TP " << c.tp << "  FP " << c.fp << "  FN " << c.fn << "  TN " << c.tn << "\n";
  out << "F1        " << fmt("%.4f", m.f1) << "\n";
  out << "accuracy  " << fmt("%.4f", m.accuracy) << "\n";
  out << "precision " << fmt("%.4f", m.precision) << "\n";
  out << "recall    " << fmt("%.4f", m.recall) << "\n";
  for (const auto& note : m.notes) out << "note: " << note << "\n";
  return out.str();
}

}  // namespace vcf::eval
