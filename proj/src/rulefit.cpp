#include "vcf/rulefit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <json.hpp>

#include "vcf/error.hpp"
#include "vcf/random.hpp"

namespace vcf::rulefit {
namespace {

using nlohmann::json;
using rules::Condition;
using rules::Op;
using rules::Rule;

constexpr double kGainEpsilon = 1e-12;
constexpr double kHessianFloor = 1e-12;
constexpr std::uint64_t kFoldStream = 0x9e3779b97f4a7c15ULL;

double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

void require_both_classes(const std::vector<int>& y) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<long>(y.size())) {
    throw Error(ErrorCode::kDegenerateLabels, "training labels contain a single class");
  }
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

Split best_split(const Eigen::MatrixXd& x, const std::vector<double>& r, const std::vector<std::size_t>& idx) {
  Split best;
  const double n = static_cast<double>(idx.size());
  double total = 0.0;
  for (std::size_t i : idx) total += r[i];
  const double base = total * total / n;
  std::vector<std::size_t> order(idx);
  for (int f = 0; f < static_cast<int>(x.cols()); ++f) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(static_cast<Eigen::Index>(a), f) < x(static_cast<Eigen::Index>(b), f); });
    double left = 0.0;
    for (std::size_t k = 1; k < order.size(); ++k) {
      left += r[order[k - 1]];
      const double lo = x(static_cast<Eigen::Index>(order[k - 1]), f);
      const double hi = x(static_cast<Eigen::Index>(order[k]), f);
      if (!(lo < hi)) continue;
      const double nl = static_cast<double>(k);
      const double right = total - left;
      const double gain = left * left / nl + right * right / (n - nl) - base;
      if (gain > best.gain + kGainEpsilon) {
        double mid = lo + (hi - lo) / 2.0;
        if (!(mid < hi)) mid = lo;
        best = {f, mid, gain};
      }
    }
  }
  return best;
}

int build_node(Tree& tree, const Eigen::MatrixXd& x, const std::vector<double>& r, const std::vector<double>& p,
               const std::vector<std::size_t>& idx, int depth, int max_depth) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  Split split;
  if (depth < max_depth && idx.size() >= 2) split = best_split(x, r, idx);
  if (split.feature < 0) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i : idx) {
      num += r[i];
      den += p[i] * (1.0 - p[i]);
    }
    tree.nodes[static_cast<std::size_t>(id)].value = den > kHessianFloor ? num / den : 0.0;
    return id;
  }
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  for (std::size_t i : idx) (x(static_cast<Eigen::Index>(i), split.feature) <= split.threshold ? left : right).push_back(i);
  const int l = build_node(tree, x, r, p, left, depth + 1, max_depth);
  const int rr = build_node(tree, x, r, p, right, depth + 1, max_depth);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
  node.feature = split.feature;
  node.threshold = split.threshold;
  node.left = l;
  node.right = rr;
  return id;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string rule_key(const Rule& rule) {
  std::string key;
  for (const Condition& c : rule.conditions) {
    key += c.feature + (c.op == Op::kLe ? "<=" : ">") + fmt17(c.threshold) + ";";
  }
  return key;
}

void collect_paths(const Tree& tree, int node, std::vector<Condition>& path, const std::vector<std::string>& names,
                   std::vector<Rule>& out) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.feature < 0) return;
  const std::string& name = names[static_cast<std::size_t>(n.feature)];
  for (const auto& [child, op] : {std::pair{n.left, Op::kLe}, std::pair{n.right, Op::kGt}}) {
    path.push_back({name, op, n.threshold});
    out.push_back(Rule{path});
    collect_paths(tree, child, path, names, out);
    path.pop_back();
  }
}

double entropy(double pos, double total) {
  if (total <= 0.0 || pos <= 0.0 || pos >= total) return 0.0;
  const double q = pos / total;
  return -(q * std::log2(q) + (1.0 - q) * std::log2(1.0 - q));
}

Eigen::MatrixXd design(const std::vector<ScoredRule>& selected, const Dataset& data) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(data.rows()), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t k = 0; k < selected.size(); ++k) z.col(static_cast<Eigen::Index>(k)) = rule_column(selected[k].rule, data);
  return z;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

}  // namespace

int Dataset::column(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  return it == feature_names.end() ? -1 : static_cast<int>(it - feature_names.begin());
}

void BoostingConfig::validate() const {
  if (n_trees < 1 || max_depth < 1) throw Error(ErrorCode::kValidation, "n_trees and max_depth must be at least 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kValidation, "learning_rate must be positive");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw Error(ErrorCode::kValidation, "subsample must be in (0, 1]");
}

double Tree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int id = 0;
  while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    id = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(id)].value;
}

double Ensemble::margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double m = init;
  for (const Tree& t : trees) m += learning_rate * t.predict(row);
  return m;
}

Ensemble fit_boosting(const Dataset& data, const BoostingConfig& cfg, std::vector<double>* stage_loss) {
  cfg.validate();
  if (data.rows() == 0 || data.x.cols() == 0) throw Error(ErrorCode::kEmptyInput, "empty training table");
  require_both_classes(data.y);
  const std::size_t n = data.rows();
  const double prior = static_cast<double>(std::count(data.y.begin(), data.y.end(), 1)) / static_cast<double>(n);

  Ensemble ens;
  ens.init = std::log(prior / (1.0 - prior));
  ens.learning_rate = cfg.learning_rate;
  std::vector<double> margin(n, ens.init);
  std::vector<double> p(n);
  std::vector<double> r(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(cfg.seed);
  const auto m = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(cfg.subsample * static_cast<double>(n))));

  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = sigmoid(margin[i]);
      r[i] = data.y[i] - p[i];
    }
    std::vector<std::size_t> idx = all;
    if (cfg.subsample < 1.0 && m < n) {
      rng.shuffle(idx);
      idx.resize(m);
      std::sort(idx.begin(), idx.end());
    }
    Tree tree;
    build_node(tree, data.x, r, p, idx, 0, cfg.max_depth);
    for (std::size_t i = 0; i < n; ++i) margin[i] += cfg.learning_rate * tree.predict(data.x.row(static_cast<Eigen::Index>(i)));
    ens.trees.push_back(std::move(tree));
    if (stage_loss) stage_loss->push_back(log_loss(ens, data));
  }
  return ens;
}

double log_loss(const Ensemble& ensemble, const Dataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double p = std::clamp(sigmoid(ensemble.margin(data.x.row(static_cast<Eigen::Index>(i)))), 1e-15, 1.0 - 1e-15);
    total -= data.y[i] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(data.rows());
}

std::vector<Rule> harvest_paths(const Ensemble& ensemble, const std::vector<std::string>& names) {
  std::vector<Rule> out;
  for (const Tree& tree : ensemble.trees) {
    std::vector<Condition> path;
    collect_paths(tree, 0, path, names, out);
  }
  return out;
}

Rule normalize(const Rule& rule) {
  std::map<std::pair<std::string, Op>, double> tightest;
  for (const Condition& c : rule.conditions) {
    const auto key = std::make_pair(c.feature, c.op);
    const auto it = tightest.find(key);
    if (it == tightest.end()) {
      tightest.emplace(key, c.threshold);
    } else {
      it->second = c.op == Op::kLe ? std::min(it->second, c.threshold) : std::max(it->second, c.threshold);
    }
  }
  Rule out;
  for (const auto& [key, threshold] : tightest) out.conditions.push_back({key.first, key.second, threshold});
  return out;
}

Eigen::VectorXd rule_column(const Rule& rule, const Dataset& data) {
  Eigen::VectorXd fires = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(data.rows()));
  for (const Condition& c : rule.conditions) {
    const int col = data.column(c.feature);
    if (col < 0) throw Error(ErrorCode::kMissingFeature, "feature '" + c.feature + "' is not in the training table");
    for (Eigen::Index i = 0; i < fires.size(); ++i) {
      if (!c.holds(data.x(i, col))) fires[i] = 0.0;
    }
  }
  return fires;
}

Rule prune(const Rule& rule, const Dataset& data, double min_support) {
  Rule current = rule;
  const double slack = min_support * static_cast<double>(data.rows());
  bool changed = true;
  while (changed && current.conditions.size() > 1) {
    changed = false;
    const double support = rule_column(current, data).sum();
    for (std::size_t k = 0; k < current.conditions.size(); ++k) {
      Rule without = current;
      without.conditions.erase(without.conditions.begin() + static_cast<std::ptrdiff_t>(k));
      if (rule_column(without, data).sum() - support < slack) {
        current = std::move(without);
        changed = true;
        break;
      }
    }
  }
  return current;
}

std::vector<Rule> harvest_rules(const Ensemble& ensemble, const Dataset& data, const HarvestOptions& options) {
  std::set<std::string> seen;
  std::vector<Rule> out;
  const double n = static_cast<double>(data.rows());
  for (const Rule& raw : harvest_paths(ensemble, data.feature_names)) {
    Rule rule = normalize(raw);
    if (options.prune_redundant) rule = prune(rule, data, options.min_support);
    if (!seen.insert(rule_key(rule)).second) continue;
    const double support = rule_column(rule, data).sum() / n;
    if (support < options.min_support || support > options.max_support) continue;
    out.push_back(std::move(rule));
  }
  return out;
}

double balanced_accuracy(const Eigen::VectorXd& fires, const std::vector<int>& y) {
  double tp = 0.0, tn = 0.0, pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool f = fires[static_cast<Eigen::Index>(i)] > 0.5;
    if (y[i]) {
      ++pos;
      if (f) ++tp;
    } else {
      ++neg;
      if (!f) ++tn;
    }
  }
  if (pos == 0.0 || neg == 0.0) return 0.5;
  const double ba = 0.5 * (tp / pos + tn / neg);
  return std::max(ba, 1.0 - ba);
}

double information_gain(const Eigen::VectorXd& fires, const std::vector<int>& y) {
  double n1 = 0.0, p1 = 0.0, n0 = 0.0, p0 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (fires[static_cast<Eigen::Index>(i)] > 0.5) {
      ++n1;
      p1 += y[i];
    } else {
      ++n0;
      p0 += y[i];
    }
  }
  const double n = n0 + n1;
  if (n == 0.0) return 0.0;
  return entropy(p0 + p1, n) - (n1 / n) * entropy(p1, n1) - (n0 / n) * entropy(p0, n0);
}

std::vector<ScoredRule> rank_rules(const std::vector<Rule>& candidates, const Dataset& data, RankMetric metric) {
  std::vector<ScoredRule> out;
  std::vector<std::string> keys;
  for (const Rule& rule : candidates) {
    const Eigen::VectorXd fires = rule_column(rule, data);
    const double score = metric == RankMetric::kBalancedAccuracy ? balanced_accuracy(fires, data.y)
                                                                  : information_gain(fires, data.y);
    out.push_back({rule, score, fires.sum() / static_cast<double>(data.rows())});
  }
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  for (const ScoredRule& s : out) keys.push_back(rule_key(s.rule));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out[a].score != out[b].score) return out[a].score > out[b].score;
    if (out[a].rule.conditions.size() != out[b].rule.conditions.size()) {
      return out[a].rule.conditions.size() < out[b].rule.conditions.size();
    }
    return keys[a] < keys[b];
  });
  std::vector<ScoredRule> sorted;
  for (std::size_t i : order) sorted.push_back(out[i]);
  return sorted;
}

std::vector<ScoredRule> select_rules(const std::vector<ScoredRule>& ranked, const Dataset& data, int k) {
  if (k < 1) throw Error(ErrorCode::kValidation, "top_k must be at least 1");
  std::vector<ScoredRule> chosen;
  std::vector<Eigen::VectorXd> columns;
  std::vector<bool> taken(ranked.size(), false);
  // Disjoint pass: rules that never co-fire with any chosen rule.
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(chosen.size()) < k; ++i) {
    const Eigen::VectorXd col = rule_column(ranked[i].rule, data);
    const bool disjoint = std::all_of(columns.begin(), columns.end(), [&](const Eigen::VectorXd& c) { return c.dot(col) == 0.0; });
    if (!disjoint) continue;
    chosen.push_back(ranked[i]);
    columns.push_back(col);
    taken[i] = true;
  }
  // Fill pass: best remaining rules with a support pattern not yet present.
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(chosen.size()) < k; ++i) {
    if (taken[i]) continue;
    const Eigen::VectorXd col = rule_column(ranked[i].rule, data);
    const bool fresh = std::none_of(columns.begin(), columns.end(), [&](const Eigen::VectorXd& c) { return c == col; });
    if (!fresh) continue;
    chosen.push_back(ranked[i]);
    columns.push_back(col);
  }
  return chosen;
}

LassoFit fit_lasso(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, double lambda, bool fit_intercept,
                   const LassoOptions& options) {
  if (z.rows() != t.size() || z.rows() == 0) throw Error(ErrorCode::kValidation, "lasso design and target differ in rows");
  if (lambda < 0.0) throw Error(ErrorCode::kValidation, "lambda must be non-negative");
  const double n = static_cast<double>(z.rows());
  LassoFit fit;
  fit.beta = Eigen::VectorXd::Zero(z.cols());
  fit.intercept = fit_intercept ? t.mean() : 0.0;
  Eigen::VectorXd r = t.array() - fit.intercept;
  const Eigen::VectorXd scale = z.colwise().squaredNorm().transpose() / n;

  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      if (scale[j] == 0.0) continue;
      const double rho = z.col(j).dot(r) / n + scale[j] * fit.beta[j];
      const double shrunk = std::copysign(std::max(0.0, std::abs(rho) - lambda), rho) / scale[j];
      const double delta = shrunk - fit.beta[j];
      if (delta != 0.0) {
        r -= delta * z.col(j);
        fit.beta[j] = shrunk;
        change = std::max(change, std::abs(delta));
      }
    }
    if (fit_intercept) {
      const double d = r.mean();
      fit.intercept += d;
      r.array() -= d;
      change = std::max(change, std::abs(d));
    }
    if (change < options.tolerance) {
      fit.sweeps = sweep + 1;
      return fit;
    }
  }
  throw Error(ErrorCode::kConvergence, "coordinate descent did not converge");
}

double lambda_max(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, bool fit_intercept) {
  // Same expression as the first coordinate-descent update so lambda_max itself yields zeros.
  const Eigen::VectorXd centred = t.array() - (fit_intercept ? t.mean() : 0.0);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) worst = std::max(worst, std::abs(z.col(j).dot(centred) / static_cast<double>(z.rows())));
  return worst;
}

double kkt_violation(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, const LassoFit& fit, double lambda,
                     bool fit_intercept) {
  const double n = static_cast<double>(z.rows());
  const Eigen::VectorXd r = t - z * fit.beta - Eigen::VectorXd::Constant(t.size(), fit.intercept);
  double worst = fit_intercept ? std::abs(r.mean()) : 0.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double g = z.col(j).dot(r) / n;
    const double v = fit.beta[j] == 0.0 ? std::max(0.0, std::abs(g) - lambda)
                                        : std::abs(g - lambda * (fit.beta[j] > 0.0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

void TrainConfig::validate() const {
  boosting.validate();
  if (top_k < 1) throw Error(ErrorCode::kValidation, "top_k must be at least 1");
  if (cv_folds < 2) throw Error(ErrorCode::kValidation, "cv_folds must be at least 2");
  if (lambda_count < 2) throw Error(ErrorCode::kValidation, "lambda_count must be at least 2");
  if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) throw Error(ErrorCode::kValidation, "lambda_min_ratio must be in (0, 1)");
  if (!(harvest.min_support >= 0.0 && harvest.min_support < harvest.max_support && harvest.max_support <= 1.0)) {
    throw Error(ErrorCode::kValidation, "support bounds must satisfy 0 <= min < max <= 1");
  }
}

TrainConfig parse_train_config(const std::string& json_text) {
  TrainConfig cfg;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed training config: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kFormat, "training config must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "n_trees") cfg.boosting.n_trees = value.get<int>();
      else if (key == "max_depth") cfg.boosting.max_depth = value.get<int>();
      else if (key == "learning_rate") cfg.boosting.learning_rate = value.get<double>();
      else if (key == "subsample") cfg.boosting.subsample = value.get<double>();
      else if (key == "seed") cfg.boosting.seed = value.get<std::uint64_t>();
      else if (key == "top_k") cfg.top_k = value.get<int>();
      else if (key == "cv_folds") cfg.cv_folds = value.get<int>();
      else if (key == "lambda_count") cfg.lambda_count = value.get<int>();
      else if (key == "lambda_min_ratio") cfg.lambda_min_ratio = value.get<double>();
      else if (key == "min_support") cfg.harvest.min_support = value.get<double>();
      else if (key == "max_support") cfg.harvest.max_support = value.get<double>();
      else if (key == "prune_redundant") cfg.harvest.prune_redundant = value.get<bool>();
      else if (key == "lasso_tolerance") cfg.lasso.tolerance = value.get<double>();
      else if (key == "lasso_max_sweeps") cfg.lasso.max_sweeps = value.get<int>();
      else if (key == "rank_metric") {
        const auto m = value.get<std::string>();
        if (m == "balanced_accuracy") cfg.metric = RankMetric::kBalancedAccuracy;
        else if (m == "information_gain") cfg.metric = RankMetric::kInformationGain;
        else throw Error(ErrorCode::kValidation, "unknown rank_metric '" + m + "'");
      } else {
        throw Error(ErrorCode::kValidation, "unknown training config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad training config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainReport train(const Dataset& data, const TrainConfig& config) {
  config.validate();
  require_both_classes(data.y);
  if (static_cast<int>(data.rows()) < config.cv_folds) throw Error(ErrorCode::kValidation, "fewer rows than CV folds");

  TrainReport report;
  report.rows = data.rows();
  report.positives = static_cast<std::size_t>(std::count(data.y.begin(), data.y.end(), 1));
  report.features_used = data.feature_names;

  const Ensemble ensemble = fit_boosting(data, config.boosting);
  report.harvested_paths = harvest_paths(ensemble, data.feature_names).size();
  const auto candidates = harvest_rules(ensemble, data, config.harvest);
  report.harvested_rules = candidates.size();
  if (candidates.empty()) throw Error(ErrorCode::kValidation, "no harvested rule passes the support filter");
  report.selected = select_rules(rank_rules(candidates, data, config.metric), data, config.top_k);

  const Eigen::MatrixXd z = design(report.selected, data);
  Eigen::VectorXd t(static_cast<Eigen::Index>(data.rows()));
  for (std::size_t i = 0; i < data.rows(); ++i) t[static_cast<Eigen::Index>(i)] = data.y[i] ? 1.0 : -1.0;
  report.partition = (z.rowwise().sum().array() == 1.0).all();
  const bool fit_intercept = !report.partition;

  std::vector<Eigen::Index> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.boosting.seed ^ kFoldStream);
  rng.shuffle(order);
  std::vector<std::vector<Eigen::Index>> train_rows(static_cast<std::size_t>(config.cv_folds));
  std::vector<std::vector<Eigen::Index>> test_rows(static_cast<std::size_t>(config.cv_folds));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto fold = pos % static_cast<std::size_t>(config.cv_folds);
    for (std::size_t f = 0; f < test_rows.size(); ++f) (f == fold ? test_rows : train_rows)[f].push_back(order[pos]);
  }
  for (auto& rows : train_rows) std::sort(rows.begin(), rows.end());
  for (auto& rows : test_rows) std::sort(rows.begin(), rows.end());

  const double lmax = lambda_max(z, t, fit_intercept);
  std::vector<double> grid;
  if (lmax > 0.0) {
    for (int k = 0; k < config.lambda_count; ++k) {
      grid.push_back(lmax * std::pow(config.lambda_min_ratio, static_cast<double>(k) / (config.lambda_count - 1)));
    }
  }
  grid.push_back(0.0);

  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sse = 0.0;
    for (std::size_t f = 0; f < train_rows.size(); ++f) {
      const LassoFit fit = fit_lasso(take_rows(z, train_rows[f]), take_rows(t, train_rows[f]), grid[g], fit_intercept, config.lasso);
      const Eigen::VectorXd resid = take_rows(t, test_rows[f]) - take_rows(z, test_rows[f]) * fit.beta -
                                    Eigen::VectorXd::Constant(static_cast<Eigen::Index>(test_rows[f].size()), fit.intercept);
      sse += resid.squaredNorm();
    }
    const LassoFit full = fit_lasso(z, t, grid[g], fit_intercept, config.lasso);
    report.cv_path.push_back({grid[g], sse / static_cast<double>(data.rows()), static_cast<int>((full.beta.array() != 0.0).count())});
    if (report.cv_path.back().mean_error < report.cv_path[best].mean_error) best = g;
  }
  report.lambda = grid[best];

  for (std::size_t f = 0; f < train_rows.size(); ++f) {
    const LassoFit fit = fit_lasso(take_rows(z, train_rows[f]), take_rows(t, train_rows[f]), report.lambda, fit_intercept, config.lasso);
    std::size_t correct = 0;
    for (Eigen::Index i : test_rows[f]) {
      const bool pos = fit.intercept + z.row(i).dot(fit.beta) > 0.0;
      if (pos == (data.y[static_cast<std::size_t>(i)] == 1)) ++correct;
    }
    report.fold_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(test_rows[f].size()));
  }

  const LassoFit final_fit = fit_lasso(z, t, report.lambda, fit_intercept, config.lasso);
  report.kkt_violation = kkt_violation(z, t, final_fit, report.lambda, fit_intercept);
  for (std::size_t k = 0; k < report.selected.size(); ++k) {
    report.model.rules.push_back(report.selected[k].rule);
    report.model.coefficients.push_back(final_fit.beta[static_cast<Eigen::Index>(k)]);
  }
  report.model.intercept = final_fit.intercept;
  report.model.decision_threshold = 0.0;
  return report;
}

std::string report_json(const TrainReport& report) {
  json selected = json::array();
  for (const ScoredRule& s : report.selected) {
    selected.push_back({{"rule", s.rule.text()}, {"score", s.score}, {"support", s.support}});
  }
  json path = json::array();
  for (const CvPoint& p : report.cv_path) {
    path.push_back({{"lambda", p.lambda}, {"mean_squared_error", p.mean_error}, {"nonzero", p.nonzero}});
  }
  const json doc = {
      {"rows", report.rows},
      {"positives", report.positives},
      {"features_used", report.features_used},
      {"dropped_columns", report.dropped_columns},
      {"harvested_paths", report.harvested_paths},
      {"harvested_rules", report.harvested_rules},
      {"selected_rules", selected},
      {"rules_partition_rows", report.partition},
      {"cv_path", path},
      {"lambda", report.lambda},
      {"fold_accuracy", report.fold_accuracy},
      {"kkt_violation", report.kkt_violation},
      {"model", json::parse(rules::to_json(report.model))},
  };
  return doc.dump(2) + "\n";
}

Dataset build_dataset(const std::vector<features::FeatureRow>& rows,
                      const std::map<std::pair<std::string, int>, int>& grades, const DatasetOptions& options,
                      std::vector<std::string>* dropped) {
  std::vector<const features::FeatureRow*> kept;
  std::vector<int> y;
  for (const auto& row : rows) {
    const auto it = grades.find({row.scan_id, row.label});
    if (it == grades.end()) continue;
    kept.push_back(&row);
    y.push_back(it->second >= options.grade_threshold ? 1 : 0);
  }
  if (kept.empty()) throw Error(ErrorCode::kEmptyInput, "no feature row has an annotation");

  Dataset data;
  for (const std::string& col : features::feature_columns()) {
    const bool raw = col.rfind("mean_", 0) == 0 || col.rfind("std_", 0) == 0;
    if (!features::is_ratio_feature(col) && !(options.include_raw && raw)) continue;
    const bool complete = std::all_of(kept.begin(), kept.end(), [&](const features::FeatureRow* r) { return r->values.count(col) > 0; });
    if (complete) {
      data.feature_names.push_back(col);
    } else if (dropped) {
      dropped->push_back(col);
    }
  }
  data.x.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(data.feature_names.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t c = 0; c < data.feature_names.size(); ++c) {
      data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = kept[i]->values.at(data.feature_names[c]);
    }
  }
  data.y = std::move(y);
  return data;
}

}  // namespace vcf::rulefit
