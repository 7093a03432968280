#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vcf/features.hpp"
#include "vcf/rules.hpp"

namespace vcf::rulefit {

/// Dense training table: one row per vertebra, binary labels (1 = fracture).
struct Dataset {
  std::vector<std::string> feature_names;
  Eigen::MatrixXd x;  // rows x features
  std::vector<int> y;

  std::size_t rows() const { return y.size(); }
  int column(const std::string& name) const;  // -1 when absent
};

struct BoostingConfig {
  int n_trees = 100;
  int max_depth = 2;
  double learning_rate = 0.1;
  double subsample = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;  // left: x <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

struct Ensemble {
  double init = 0.0;  // prior log-odds
  double learning_rate = 0.1;
  std::vector<Tree> trees;

  double margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

// Gradient boosting on logistic loss: each stage fits a squared-error
// regression tree to y - p, then sets leaves by one Newton step.
// Throws Error(kDegenerateLabels) when only one class is present.
Ensemble fit_boosting(const Dataset& data, const BoostingConfig& cfg, std::vector<double>* stage_loss = nullptr);

double log_loss(const Ensemble& ensemble, const Dataset& data);

// Every root-to-node path (all non-root nodes) as a rule, before any cleanup.
std::vector<rules::Rule> harvest_paths(const Ensemble& ensemble, const std::vector<std::string>& names);

// Keeps the tightest threshold per (feature, op) and sorts conditions.
rules::Rule normalize(const rules::Rule& rule);

struct HarvestOptions {
  double min_support = 0.02;
  double max_support = 0.98;
  // Drop conditions whose removal changes a rule's support by fewer than
  // min_support * rows rows.
  bool prune_redundant = true;
};

// Removes near-vacuous conditions one at a time (first in condition order);
// at least one condition is kept.
rules::Rule prune(const rules::Rule& rule, const Dataset& data, double min_support);

// Normalised, pruned, deduplicated paths whose support on `data` lies in
// [min_support, max_support].
std::vector<rules::Rule> harvest_rules(const Ensemble& ensemble, const Dataset& data, const HarvestOptions& options = {});

// 0/1 indicator of a rule over the rows of `data`.
Eigen::VectorXd rule_column(const rules::Rule& rule, const Dataset& data);

enum class RankMetric { kBalancedAccuracy, kInformationGain };

struct ScoredRule {
  rules::Rule rule;
  double score = 0.0;
  double support = 0.0;
};

double balanced_accuracy(const Eigen::VectorXd& fires, const std::vector<int>& y);  // max over rule and complement
double information_gain(const Eigen::VectorXd& fires, const std::vector<int>& y);

// All rules scored and sorted: score descending, then fewer conditions, then
// rule text.
std::vector<ScoredRule> rank_rules(const std::vector<rules::Rule>& candidates, const Dataset& data,
                                   RankMetric metric = RankMetric::kBalancedAccuracy);

// Top-k selection that prefers rules disjoint on the training rows from the
// ones already chosen; remaining slots take the best rules with a distinct
// support pattern.
std::vector<ScoredRule> select_rules(const std::vector<ScoredRule>& ranked, const Dataset& data, int k);

struct LassoOptions {
  double tolerance = 1e-8;  // max coefficient change per sweep
  int max_sweeps = 100000;
};

struct LassoFit {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  int sweeps = 0;
};

// Cyclic coordinate descent on (1/2n)|t - b0 - Z beta|^2 + lambda |beta|_1 with
// an unpenalised intercept when fit_intercept. Throws Error(kConvergence).
LassoFit fit_lasso(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, double lambda, bool fit_intercept,
                   const LassoOptions& options = {});

// Smallest lambda with an all-zero solution.
double lambda_max(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, bool fit_intercept);

// Largest violation of the optimality conditions of `fit`.
double kkt_violation(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, const LassoFit& fit, double lambda,
                     bool fit_intercept);

struct TrainConfig {
  BoostingConfig boosting;
  HarvestOptions harvest;
  RankMetric metric = RankMetric::kBalancedAccuracy;
  int top_k = 3;
  int cv_folds = 5;
  int lambda_count = 50;
  double lambda_min_ratio = 1e-4;
  LassoOptions lasso;

  void validate() const;
};

// Reads the keys of TrainConfig from a JSON object; unknown keys are errors.
TrainConfig parse_train_config(const std::string& json_text);

struct CvPoint {
  double lambda = 0.0;
  double mean_error = 0.0;
  int nonzero = 0;
};

struct TrainReport {
  std::size_t rows = 0;
  std::size_t positives = 0;
  std::vector<std::string> features_used;
  std::vector<std::string> dropped_columns;  // had missing values
  std::size_t harvested_paths = 0;
  std::size_t harvested_rules = 0;
  std::vector<ScoredRule> selected;
  bool partition = false;  // selected rules fire exactly once per row
  std::vector<CvPoint> cv_path;
  double lambda = 0.0;
  std::vector<double> fold_accuracy;  // at the chosen lambda
  double kkt_violation = 0.0;
  rules::RuleModel model;
};

TrainReport train(const Dataset& data, const TrainConfig& config);

std::string report_json(const TrainReport& report);

struct DatasetOptions {
  int grade_threshold = 2;
  bool include_raw = false;  // also offer mean_* and std_* columns
};

// Joins feature rows with annotation grades. Rows without an annotation are
// skipped; candidate columns with any missing value are dropped and listed.
Dataset build_dataset(const std::vector<features::FeatureRow>& rows,
                      const std::map<std::pair<std::string, int>, int>& grades, const DatasetOptions& options,
                      std::vector<std::string>* dropped = nullptr);

}  // namespace vcf::rulefit
