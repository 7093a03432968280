// vcfscreen: height-map based vertebral fracture screening from label volumes.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <json.hpp>

#include "vcf/error.hpp"
#include "vcf/eval.hpp"
#include "vcf/features.hpp"
#include "vcf/heightmap.hpp"
#include "vcf/phantom.hpp"
#include "vcf/rulefit.hpp"
#include "vcf/rules.hpp"
#include "vcf/volume.hpp"

namespace {

using namespace vcf;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

phantom::Deformation parse_deformation(const std::string& text) {
  if (text == "none") return phantom::Deformation::none();
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kValidation, "deformation must be none or kind:fraction");
  const std::string kind = text.substr(0, colon);
  double f = 0.0;
  try {
    f = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kValidation, "bad deformation fraction in '" + text + "'");
  }
  if (kind == "wedge") return phantom::Deformation::wedge(f);
  if (kind == "biconcave") return phantom::Deformation::biconcave(f);
  if (kind == "crush") return phantom::Deformation::crush(f);
  throw Error(ErrorCode::kValidation, "unknown deformation kind '" + kind + "'");
}

void write_volume(const volume::LabelVolume& vol, const std::string& path) {
  if (path.size() > 4 && path.compare(path.size() - 4, 4, ".nii") == 0) {
    volume::write_nifti(vol, path);
  } else {
    volume::write_lvol(vol, path);
  }
}

std::string pose_json(const eval::VertebraGeometry& g) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({g.pose.transform.rotation(r, 0), g.pose.transform.rotation(r, 1), g.pose.transform.rotation(r, 2)});
  nlohmann::json centroids = nlohmann::json::array();
  for (const auto& c : g.clusters.centroids) centroids.push_back({c.x(), c.y(), c.z()});
  const auto& t = g.pose.transform.translation;
  const nlohmann::json doc = {
      {"rotation", rot},
      {"translation", {t.x(), t.y(), t.z()}},
      {"posterior_cluster", g.pose.posterior_cluster},
      {"inferior_cluster", g.pose.inferior_cluster},
      {"low_confidence", g.pose.low_confidence},
      {"cluster_centroids", centroids},
      {"cluster_sizes", g.clusters.sizes},
  };
  return doc.dump(2) + "\n";
}

rules::RuleModel model_or_default(const std::string& path) {
  return path.empty() ? rules::fixed_model() : rules::load_model(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertebral compression fracture screening from segmentation label volumes"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int grid_size = heightmap::kDefaultGridSize;
  int threads = 1;
  std::string config_path;
  app.add_option("--seed", seed, "Seed for clustering and phantom generation");
  app.add_option("--grid-size", grid_size, "Height map resolution G (G x G cells)");
  app.add_option("--threads", threads, "Worker threads for per-scan processing");
  app.add_option("--config", config_path, "Pipeline config JSON");

  // phantom
  auto* ph = app.add_subcommand("phantom", "Generate a phantom benchmark suite or a single phantom volume");
  std::string ph_out;
  int ph_scans = 40;
  std::string ph_volume;
  std::string ph_deformation = "none";
  double ph_tilt = 0.0;
  double ph_spacing = 1.0;
  double ph_noise = 0.0;
  ph->add_option("--out", ph_out, "Output directory for the benchmark suite");
  ph->add_option("--scans", ph_scans, "Number of scans in the suite");
  ph->add_option("--volume", ph_volume, "Write a single phantom to this .lvol or .nii file instead");
  ph->add_option("--deformation", ph_deformation, "none | wedge:F | biconcave:F | crush:F");
  ph->add_option("--tilt", ph_tilt, "Tilt in degrees about the lateral axis");
  ph->add_option("--spacing", ph_spacing, "Voxel spacing in mm");
  ph->add_option("--noise", ph_noise, "Surface jitter in voxels (<= 0.5)");

  // extract
  auto* ex = app.add_subcommand("extract", "Mesh, pose and height-map one vertebra");
  std::string ex_volume, ex_mesh, ex_pose, ex_csv, ex_pgm;
  int ex_label = 0;
  ex->add_option("--volume", ex_volume, "Label volume (.lvol, .nii, .nii.gz)")->required();
  ex->add_option("--label", ex_label, "Vertebra label")->required();
  ex->add_option("--dump-mesh", ex_mesh, "Write the surface mesh as PLY");
  ex->add_option("--dump-pose", ex_pose, "Write clusters and pose as JSON");
  ex->add_option("--heightmap-csv", ex_csv, "Write the height map as CSV (NA = invalid)");
  ex->add_option("--pgm", ex_pgm, "Write the height map as PGM");

  // features
  auto* fe = app.add_subcommand("features", "Compute the feature table for a dataset directory");
  std::string fe_dataset, fe_out, fe_split;
  fe->add_option("--dataset", fe_dataset, "Directory with annotations.csv and volumes")->required();
  fe->add_option("--out", fe_out, "Feature CSV path")->required();
  fe->add_option("--split", fe_split, "Only scans of this split (needs splits.csv)");

  // train
  auto* tr = app.add_subcommand("train", "Fit a rule model from a feature table");
  std::string tr_features, tr_labels, tr_config, tr_out, tr_report;
  int tr_grade = 2;
  bool tr_raw = false;
  tr->add_option("--features", tr_features, "Feature CSV")->required();
  tr->add_option("--labels-from", tr_labels, "annotations.csv with genant grades")->required();
  tr->add_option("--grade-threshold", tr_grade, "Grades at or above this are positive");
  tr->add_option("--config", tr_config, "Training config JSON");
  tr->add_option("--out", tr_out, "Model JSON output")->required();
  tr->add_option("--report", tr_report, "Training report JSON output");
  tr->add_flag("--include-raw", tr_raw, "Offer raw section means and stds as features");

  // predict
  auto* pr = app.add_subcommand("predict", "Score one vertebra and explain the decision");
  std::string pr_volume, pr_model, pr_features, pr_scan;
  int pr_label = 0;
  pr->add_option("--volume", pr_volume, "Label volume holding the vertebra and its neighbours");
  pr->add_option("--features", pr_features, "Feature CSV instead of a volume");
  pr->add_option("--scan", pr_scan, "Scan id (with --features)");
  pr->add_option("--label", pr_label, "Vertebra label")->required();
  pr->add_option("--model", pr_model, "Model JSON (default: the fixed three-rule model)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a model over a dataset directory");
  std::string ev_dataset, ev_model, ev_report, ev_features, ev_split;
  ev->add_option("--dataset", ev_dataset, "Directory with annotations.csv and volumes")->required();
  ev->add_option("--model", ev_model, "Model JSON (default: the fixed three-rule model)");
  ev->add_option("--report", ev_report, "Report JSON output");
  ev->add_option("--features-out", ev_features, "Also write the evaluated feature table");
  ev->add_option("--split", ev_split, "Only scans of this split (needs splits.csv)");

  // render
  auto* re = app.add_subcommand("render", "Render a vertebra height map as PGM");
  std::string re_volume, re_out;
  int re_label = 0;
  int re_scale = 8;
  re->add_option("--volume", re_volume, "Label volume")->required();
  re->add_option("--label", re_label, "Vertebra label")->required();
  re->add_option("--out", re_out, "PGM output")->required();
  re->add_option("--scale", re_scale, "Pixels per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    eval::PipelineConfig cfg;
    if (!config_path.empty()) eval::apply_config_json(cfg, read_text(config_path));
    if (app.count("--seed")) cfg.seed = seed;
    if (app.count("--grid-size")) cfg.projection.grid_size = grid_size;
    if (app.count("--threads")) cfg.threads = threads;
    cfg.validate();

    if (*ph) {
      if (!ph_volume.empty()) {
        phantom::PhantomSpec spec;
        spec.deformation = parse_deformation(ph_deformation);
        spec.tilt_deg = ph_tilt;
        spec.spacing = ph_spacing;
        spec.surface_noise = ph_noise;
        write_volume(phantom::generate_phantom(spec, cfg.seed).volume, ph_volume);
        std::cout << "wrote " << ph_volume << " (" << spec.deformation.describe() << ", labels " << spec.label << " and "
                  << spec.label - 1 << ")\n";
      } else {
        if (ph_out.empty()) throw Error(ErrorCode::kValidation, "phantom needs --out DIR or --volume FILE");
        const auto suite = phantom::benchmark_suite(ph_scans, cfg.seed);
        phantom::write_benchmark(ph_out, suite, cfg.seed);
        std::cout << "wrote " << suite.size() << " scans to " << ph_out << "\n";
      }
    } else if (*ex) {
      const auto vol = volume::load_label_volume(ex_volume);
      const auto g = eval::extract_vertebra(vol, ex_label, cfg);
      if (!ex_mesh.empty()) meshing::write_ply(g.mesh, ex_mesh);
      if (!ex_pose.empty()) write_text(ex_pose, pose_json(g));
      if (!ex_csv.empty()) {
        std::ofstream out(ex_csv);
        if (!out) throw Error(ErrorCode::kIo, "cannot write " + ex_csv);
        heightmap::write_csv(g.map, out);
      }
      if (!ex_pgm.empty()) heightmap::render_heightmap(g.map, ex_pgm);
      std::cout << "label " << ex_label << ": " << g.mesh.vertices.size() << " vertices, " << g.map.valid_count() << "/"
                << g.map.grid_size * g.map.grid_size << " valid cells"
                << (g.pose.low_confidence ? ", pose low-confidence" : "") << "\n";
      for (int s = 0; s < features::kSectionCount; ++s) {
        std::printf("  %-2s mean %.3f std %.3f valid %.2f\n", features::kSectionNames[static_cast<std::size_t>(s)],
                    g.stats.mean[static_cast<std::size_t>(s)], g.stats.stdev[static_cast<std::size_t>(s)],
                    g.stats.valid_fraction[static_cast<std::size_t>(s)]);
      }
    } else if (*fe) {
      if (!fe_split.empty()) cfg.split = fe_split;
      const auto run = eval::run_features(fe_dataset, cfg);
      std::ofstream out(fe_out);
      if (!out) throw Error(ErrorCode::kIo, "cannot write " + fe_out);
      const auto rows = eval::feature_rows(run);
      features::write_feature_csv(rows, out);
      std::size_t excluded = 0;
      for (const auto& s : run.scans) excluded += s.exclusions.size();
      std::cout << rows.size() << " vertebrae with features, " << excluded << " excluded\n";
    } else if (*tr) {
      std::ifstream in(tr_features);
      if (!in) throw Error(ErrorCode::kIo, "cannot read " + tr_features);
      const auto rows = features::read_feature_csv(in);
      std::map<std::pair<std::string, int>, int> grades;
      for (const auto& r : volume::load_annotations(tr_labels)) grades[{r.scan_id, r.vertebra_label}] = r.genant_grade;
      rulefit::TrainConfig tcfg;
      if (!tr_config.empty()) tcfg = rulefit::parse_train_config(read_text(tr_config));
      if (app.count("--seed")) tcfg.boosting.seed = seed;
      std::vector<std::string> dropped;
      const auto data = rulefit::build_dataset(rows, grades, {tr_grade, tr_raw}, &dropped);
      auto report = rulefit::train(data, tcfg);
      report.dropped_columns = dropped;
      rules::save_model(report.model, tr_out);
      if (!tr_report.empty()) write_text(tr_report, rulefit::report_json(report));
      std::cout << "trained on " << report.rows << " rows (" << report.positives << " positive), lambda "
                << report.lambda << "\n";
      for (std::size_t k = 0; k < report.model.rules.size(); ++k) {
        std::printf("  %+.6f  %s\n", report.model.coefficients[k], report.model.rules[k].text().c_str());
      }
    } else if (*pr) {
      const auto model = model_or_default(pr_model);
      features::FeatureSet x;
      if (!pr_features.empty()) {
        if (pr_scan.empty()) throw Error(ErrorCode::kValidation, "--features needs --scan");
        std::ifstream in(pr_features);
        if (!in) throw Error(ErrorCode::kIo, "cannot read " + pr_features);
        bool found = false;
        for (const auto& row : features::read_feature_csv(in)) {
          if (row.scan_id == pr_scan && row.label == pr_label) {
            x = row.values;
            found = true;
          }
        }
        if (!found) throw Error(ErrorCode::kValidation, "no feature row for that scan and label");
      } else if (!pr_volume.empty()) {
        const auto vol = volume::load_label_volume(pr_volume);
        std::vector<volume::VertebraRecord> records;
        for (int l : vol.labels_present()) records.push_back({"input", l, 0, {}});
        if (!vol.labels_present().count(pr_label)) throw Error(ErrorCode::kEmptyMask, "label not present in volume");
        const auto scan = eval::process_scan("input", pr_volume, records, cfg);
        for (const auto& e : scan.exclusions) {
          if (e.label == pr_label) throw Error(ErrorCode::kScanExcluded, "vertebra excluded: " + e.reason + " (" + e.detail + ")");
        }
        for (const auto& f : scan.features) {
          if (f.label == pr_label) x = f.values;
        }
      } else {
        throw Error(ErrorCode::kValidation, "predict needs --volume or --features");
      }
      const auto p = rules::predict(model, x);
      std::cout << rules::render_explanation(model, p, x);
    } else if (*ev) {
      if (!ev_split.empty()) cfg.split = ev_split;
      const auto model = model_or_default(ev_model);
      const auto run = eval::run_features(ev_dataset, cfg);
      const auto report = eval::evaluate(run, model);
      if (!ev_report.empty()) write_text(ev_report, eval::report_json(report, model));
      if (!ev_features.empty()) {
        std::ofstream out(ev_features);
        if (!out) throw Error(ErrorCode::kIo, "cannot write " + ev_features);
        features::write_feature_csv(report.feature_table, out);
      }
      std::cout << eval::metrics_table(report);
    } else if (*re) {
      const auto vol = volume::load_label_volume(re_volume);
      const auto g = eval::extract_vertebra(vol, re_label, cfg);
      heightmap::render_heightmap(g.map, re_out, re_scale);
      std::cout << "wrote " << re_out << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
