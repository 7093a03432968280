#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vcf/features.hpp"

namespace vcf::rules {

enum class Op { kLe, kGt };

struct Condition {
  std::string feature;
  Op op = Op::kLe;
  double threshold = 0.0;

  bool holds(double value) const { return op == Op::kLe ? value <= threshold : value > threshold; }
  bool operator==(const Condition&) const = default;
};

/// Conjunction of threshold conditions; evaluates to 1 when all hold.
struct Rule {
  std::vector<Condition> conditions;

  // Throws Error(kMissingFeature) when a referenced feature is absent.
  int evaluate(const features::FeatureSet& x) const;
  std::string text() const;
  bool operator==(const Rule&) const = default;
};

/// Sparse linear model over rule indicators: score = intercept + sum a_k r_k(x),
/// positive iff score > decision_threshold.
struct RuleModel {
  std::vector<Rule> rules;
  std::vector<double> coefficients;
  double intercept = 0.0;
  double decision_threshold = 0.0;

  void validate() const;
  bool operator==(const RuleModel&) const = default;
};

inline constexpr int kModelVersion = 1;
inline constexpr const char* kFeatureSchemaId = "vcf-features-v1";

// The fixed three-rule screening model on pair_P_A0 and ref_C.
RuleModel fixed_model();

struct Prediction {
  double score = 0.0;
  bool positive = false;
  std::vector<int> fired;  // indices into model.rules
};

Prediction predict(const RuleModel& model, const features::FeatureSet& x);

// Readable name for a feature column: pair_P_A0 -> avg(A0)/avg(P),
// ref_C -> avg(C)/avg(C_ref).
std::string display_name(const std::string& feature);

// One line per fired condition with the observed value, e.g.
// "avg(A0)/avg(P) = 0.84 ≤ 0.91".
std::string render_explanation(const RuleModel& model, const Prediction& prediction, const features::FeatureSet& x);

std::string to_json(const RuleModel& model);
// Throws Error(kFormat) on schema violations.
RuleModel from_json(const std::string& text);
RuleModel load_model(const std::filesystem::path& path);
void save_model(const RuleModel& model, const std::filesystem::path& path);

}  // namespace vcf::rules
