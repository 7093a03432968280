#include "vcf/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "vcf/error.hpp"

namespace vcf::features {
namespace {

constexpr std::array<Section, 3> kRequired = {Section::kA0, Section::kP, Section::kC};

std::size_t idx(Section s) { return static_cast<std::size_t>(s); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

bool Region::contains(double u, double v) const {
  const bool u_ok = (u_lo_open ? u > u_lo : u >= u_lo) && (u_hi_open ? u < u_hi : u <= u_hi);
  const bool v_ok = v >= v_lo && (v_hi_open ? v < v_hi : v <= v_hi);
  return u_ok && v_ok;
}

SectionLayout SectionLayout::standard() {
  constexpr double kThird = 1.0 / 3.0;
  constexpr double kTwoThirds = 2.0 / 3.0;
  SectionLayout layout;
  auto& r = layout.regions;
  r[idx(Section::kP)] = {0.0, 1.0, 0.0, kThird, false, true, false};
  r[idx(Section::kM)] = {0.0, 1.0, kThird, kTwoThirds, false, true, false};
  r[idx(Section::kA)] = {0.0, 1.0, kTwoThirds, 1.0, false, false, false};
  r[idx(Section::kL)] = {0.0, kThird, 0.0, 1.0, true, false, false};
  r[idx(Section::kR)] = {kTwoThirds, 1.0, 0.0, 1.0, false, false, true};
  r[idx(Section::kC)] = {0.25, 0.75, 0.25, 0.75, false, false, false};
  r[idx(Section::kA0)] = {kThird, kTwoThirds, kTwoThirds, 1.0, false, false, false};
  return layout;
}

std::vector<int> SectionLayout::cells(Section s, int g) const {
  std::vector<int> out;
  const Region& region = regions[idx(s)];
  for (int iv = 0; iv < g; ++iv) {
    for (int iu = 0; iu < g; ++iu) {
      if (region.contains((iu + 0.5) / g, (iv + 0.5) / g)) out.push_back(iv * g + iu);
    }
  }
  return out;
}

SectionStats section_stats(const heightmap::HeightMap& map, const SectionLayout& layout, double min_valid_fraction) {
  SectionStats stats;
  for (int s = 0; s < kSectionCount; ++s) {
    const auto cells = layout.cells(static_cast<Section>(s), map.grid_size);
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;
    for (int c : cells) {
      if (!map.valid[static_cast<std::size_t>(c)]) continue;
      const double h = map.heights[static_cast<std::size_t>(c)];
      sum += h;
      sum_sq += h * h;
      ++n;
    }
    const auto k = static_cast<std::size_t>(s);
    stats.valid_fraction[k] = cells.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(cells.size());
    stats.usable[k] = n > 0 && stats.valid_fraction[k] >= min_valid_fraction;
    if (n > 0) {
      const double mean = sum / static_cast<double>(n);
      stats.mean[k] = mean;
      stats.stdev[k] = std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean));
    }
  }
  for (Section s : kRequired) {
    if (!stats.usable[idx(s)]) {
      throw Error(ErrorCode::kFeatureFailure,
                  std::string("section ") + kSectionNames[idx(s)] + " has too few valid cells");
    }
  }
  return stats;
}

std::array<std::pair<int, int>, kPairCount> pair_order() {
  std::array<std::pair<int, int>, kPairCount> out;
  std::size_t k = 0;
  for (int i = 0; i < kSectionCount; ++i) {
    for (int j = i + 1; j < kSectionCount; ++j) out[k++] = {i, j};
  }
  return out;
}

std::array<double, kPairCount> pairwise_ratios(const std::array<double, kSectionCount>& means) {
  std::array<double, kPairCount> out{};
  const auto pairs = pair_order();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double denom = means[static_cast<std::size_t>(pairs[k].first)];
    if (!(denom > 0.0)) throw Error(ErrorCode::kDivisionGuard, "non-positive section mean in ratio denominator");
    out[k] = means[static_cast<std::size_t>(pairs[k].second)] / denom;
  }
  return out;
}

std::string pair_name(int i, int j) {
  return std::string("pair_") + kSectionNames[static_cast<std::size_t>(i)] + "_" + kSectionNames[static_cast<std::size_t>(j)];
}

std::string ref_name(int s) { return std::string("ref_") + kSectionNames[static_cast<std::size_t>(s)]; }

std::size_t select_reference(const std::vector<int>& labels, const std::vector<SectionStats>& stats) {
  if (labels.size() != stats.size()) throw Error(ErrorCode::kValidation, "labels and stats differ in length");
  if (stats.size() < 2) throw Error(ErrorCode::kScanExcluded, "fewer than two valid vertebrae in scan");
  std::size_t best = 0;
  for (std::size_t i = 1; i < stats.size(); ++i) {
    const double m = stats[i].mean[idx(Section::kC)];
    const double b = stats[best].mean[idx(Section::kC)];
    if (m > b || (m == b && labels[i] < labels[best])) best = i;
  }
  return best;
}

std::vector<VertebraFeatures> build_scan_features(const std::string& scan_id, const std::vector<int>& labels,
                                                  const std::vector<SectionStats>& stats, ReferenceMode mode) {
  const std::size_t scan_ref = select_reference(labels, stats);
  std::vector<VertebraFeatures> out;
  const auto pairs = pair_order();
  for (std::size_t v = 0; v < stats.size(); ++v) {
    std::size_t ref = scan_ref;
    if (mode == ReferenceMode::kAdjacent) {
      ref = v == 0 ? 1 : 0;
      for (std::size_t o = 0; o < stats.size(); ++o) {
        if (o == v) continue;
        const int d = std::abs(labels[o] - labels[v]);
        const int best = std::abs(labels[ref] - labels[v]);
        if (d < best || (d == best && labels[o] < labels[ref])) ref = o;
      }
    }
    VertebraFeatures f;
    f.scan_id = scan_id;
    f.label = labels[v];
    f.stats = stats[v];
    f.reference_label = labels[ref];
    const SectionStats& s = stats[v];
    for (const auto& [i, j] : pairs) {
      const auto a = static_cast<std::size_t>(i);
      const auto b = static_cast<std::size_t>(j);
      if (!s.usable[a] || !s.usable[b]) continue;
      if (!(s.mean[a] > 0.0)) throw Error(ErrorCode::kDivisionGuard, "non-positive section mean in ratio denominator");
      f.values[pair_name(i, j)] = s.mean[b] / s.mean[a];
    }
    for (int k = 0; k < kSectionCount; ++k) {
      const auto a = static_cast<std::size_t>(k);
      const SectionStats& r = stats[ref];
      if (s.usable[a] && r.usable[a]) {
        if (!(r.mean[a] > 0.0)) throw Error(ErrorCode::kDivisionGuard, "non-positive reference section mean");
        f.values[ref_name(k)] = s.mean[a] / r.mean[a];
      }
      const std::string name = kSectionNames[a];
      if (s.usable[a]) {
        f.values["mean_" + name] = s.mean[a];
        f.values["std_" + name] = s.stdev[a];
      }
      f.values["valid_" + name] = s.valid_fraction[a];
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<std::string> feature_columns() {
  std::vector<std::string> cols;
  for (const auto& [i, j] : pair_order()) cols.push_back(pair_name(i, j));
  for (int k = 0; k < kSectionCount; ++k) cols.push_back(ref_name(k));
  for (const char* prefix : {"mean_", "std_", "valid_"}) {
    for (const char* name : kSectionNames) cols.push_back(std::string(prefix) + name);
  }
  return cols;
}

bool is_ratio_feature(const std::string& name) { return name.rfind("pair_", 0) == 0 || name.rfind("ref_", 0) == 0; }

FeatureRow to_row(const VertebraFeatures& f) { return {f.scan_id, f.label, f.reference_label, f.values}; }

void write_feature_csv(const std::vector<FeatureRow>& rows, std::ostream& out) {
  const auto cols = feature_columns();
  out << "scan_id,vertebra_label,reference_label";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  for (const FeatureRow& row : rows) {
    out << row.scan_id << ',' << row.label << ',' << row.reference_label;
    for (const auto& c : cols) {
      const auto it = row.values.find(c);
      out << ',' << (it == row.values.end() ? std::string("NA") : format_double(it->second));
    }
    out << '\n';
  }
}

std::vector<FeatureRow> read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kFormat, "feature table is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "scan_id" || header[1] != "vertebra_label" || header[2] != "reference_label") {
    throw Error(ErrorCode::kFormat, "feature table must start with scan_id,vertebra_label,reference_label");
  }
  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kFormat, "feature table line " + std::to_string(line_no) + " has the wrong column count");
    }
    FeatureRow row;
    row.scan_id = cells[0];
    try {
      row.label = std::stoi(cells[1]);
      row.reference_label = std::stoi(cells[2]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kFormat, "bad vertebra label on line " + std::to_string(line_no));
    }
    for (std::size_t c = 3; c < cells.size(); ++c) {
      if (cells[c] == "NA" || cells[c].empty()) continue;
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0' || !std::isfinite(v)) {
        throw Error(ErrorCode::kFormat, "bad value '" + cells[c] + "' on line " + std::to_string(line_no));
      }
      row.values[header[c]] = v;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace vcf::features
