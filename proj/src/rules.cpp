#include "vcf/rules.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vcf/error.hpp"

namespace vcf::rules {
namespace {

using nlohmann::json;

constexpr const char* kLe = "<=";
constexpr const char* kGt = ">";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

const char* symbol(Op op) { return op == Op::kLe ? "≤" : ">"; }

}  // namespace

int Rule::evaluate(const features::FeatureSet& x) const {
  int fires = 1;
  for (const Condition& c : conditions) {
    const auto it = x.find(c.feature);
    if (it == x.end()) throw Error(ErrorCode::kMissingFeature, "feature '" + c.feature + "' is missing");
    if (!c.holds(it->second)) fires = 0;
  }
  return fires;
}

std::string Rule::text() const {
  std::string out;
  for (const Condition& c : conditions) {
    if (!out.empty()) out += " AND ";
    out += display_name(c.feature) + " " + symbol(c.op) + " " + fmt(c.threshold);
  }
  return out;
}

void RuleModel::validate() const {
  if (rules.size() != coefficients.size()) throw Error(ErrorCode::kValidation, "rule and coefficient counts differ");
  for (const Rule& r : rules) {
    if (r.conditions.empty()) throw Error(ErrorCode::kValidation, "rule without conditions");
    for (const Condition& c : r.conditions) {
      if (c.feature.empty() || !std::isfinite(c.threshold)) throw Error(ErrorCode::kValidation, "malformed condition");
    }
  }
  for (double a : coefficients) {
    if (!std::isfinite(a)) throw Error(ErrorCode::kValidation, "non-finite coefficient");
  }
  if (!std::isfinite(intercept) || !std::isfinite(decision_threshold)) {
    throw Error(ErrorCode::kValidation, "non-finite intercept or threshold");
  }
}

RuleModel fixed_model() {
  RuleModel m;
  m.rules = {
      Rule{{{"pair_P_A0", Op::kLe, 0.91}}},
      Rule{{{"pair_P_A0", Op::kGt, 0.91}, {"ref_C", Op::kLe, 0.81}}},
      Rule{{{"pair_P_A0", Op::kGt, 0.91}, {"ref_C", Op::kGt, 0.81}}},
  };
  m.coefficients = {1.49471001, 0.36870275, -4.10884354};
  return m;
}

Prediction predict(const RuleModel& model, const features::FeatureSet& x) {
  Prediction p;
  p.score = model.intercept;
  for (std::size_t k = 0; k < model.rules.size(); ++k) {
    if (model.rules[k].evaluate(x)) {
      p.score += model.coefficients[k];
      p.fired.push_back(static_cast<int>(k));
    }
  }
  p.positive = p.score > model.decision_threshold;
  return p;
}

std::string display_name(const std::string& feature) {
  if (feature.rfind("pair_", 0) == 0) {
    const auto rest = feature.substr(5);
    const auto sep = rest.find('_');
    if (sep != std::string::npos) return "avg(" + rest.substr(sep + 1) + ")/avg(" + rest.substr(0, sep) + ")";
  }
  if (feature.rfind("ref_", 0) == 0) {
    const auto s = feature.substr(4);
    return "avg(" + s + ")/avg(" + s + "_ref)";
  }
  return feature;
}

std::string render_explanation(const RuleModel& model, const Prediction& prediction, const features::FeatureSet& x) {
  std::ostringstream out;
  out << "prediction: " << (prediction.positive ? "positive" : "negative") << " (score " << fmt(prediction.score)
      << (prediction.positive ? " > " : " ≤ ") << fmt(model.decision_threshold) << ")\n";
  if (prediction.fired.empty()) out << "no rule fired\n";
  for (int k : prediction.fired) {
    const Rule& rule = model.rules[static_cast<std::size_t>(k)];
    char coef[40];
    std::snprintf(coef, sizeof(coef), "%.9g", model.coefficients[static_cast<std::size_t>(k)]);
    out << "rule " << (k + 1) << " fired (coefficient " << coef << "):\n";
    for (const Condition& c : rule.conditions) {
      out << "  " << display_name(c.feature) << " = " << fmt(x.at(c.feature)) << " " << symbol(c.op) << " "
          << fmt(c.threshold) << "\n";
    }
  }
  return out.str();
}

std::string to_json(const RuleModel& model) {
  json rules = json::array();
  for (const Rule& r : model.rules) {
    json conds = json::array();
    for (const Condition& c : r.conditions) {
      conds.push_back({{"feature", c.feature}, {"op", c.op == Op::kLe ? kLe : kGt}, {"threshold", c.threshold}});
    }
    rules.push_back({{"conditions", conds}});
  }
  const json doc = {
      {"version", kModelVersion},
      {"feature_schema_id", kFeatureSchemaId},
      {"rules", rules},
      {"coefficients", model.coefficients},
      {"intercept", model.intercept},
      {"decision_threshold", model.decision_threshold},
  };
  return doc.dump(2) + "\n";
}

RuleModel from_json(const std::string& text) {
  RuleModel m;
  try {
    const json doc = json::parse(text);
    if (doc.at("version").get<int>() != kModelVersion) throw Error(ErrorCode::kFormat, "unsupported model version");
    if (doc.at("feature_schema_id").get<std::string>() != kFeatureSchemaId) {
      throw Error(ErrorCode::kFormat, "model was trained on a different feature schema");
    }
    for (const json& r : doc.at("rules")) {
      Rule rule;
      for (const json& c : r.at("conditions")) {
        const auto op = c.at("op").get<std::string>();
        if (op != kLe && op != kGt) throw Error(ErrorCode::kFormat, "unknown comparator '" + op + "'");
        rule.conditions.push_back({c.at("feature").get<std::string>(), op == kLe ? Op::kLe : Op::kGt,
                                   c.at("threshold").get<double>()});
      }
      m.rules.push_back(std::move(rule));
    }
    m.coefficients = doc.at("coefficients").get<std::vector<double>>();
    m.intercept = doc.value("intercept", 0.0);
    m.decision_threshold = doc.value("decision_threshold", 0.0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed model JSON: ") + e.what());
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kFormat, e.what());
  }
  return m;
}

RuleModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void save_model(const RuleModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write model " + path.string());
  out << to_json(model);
}

}  // namespace vcf::rules
