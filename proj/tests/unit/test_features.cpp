#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "vcf/error.hpp"
#include "vcf/eval.hpp"
#include "vcf/features.hpp"
#include "vcf/phantom.hpp"

using namespace vcf;
using namespace vcf::features;
using heightmap::HeightMap;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

std::size_t idx(Section s) { return static_cast<std::size_t>(s); }

HeightMap map_from(int g, const std::function<double(int, int)>& h) {
  HeightMap m;
  m.grid_size = g;
  m.u_max = m.v_max = 1.0;
  for (int iv = 0; iv < g; ++iv)
    for (int iu = 0; iu < g; ++iu) {
      m.heights.push_back(h(iu, iv));
      m.valid.push_back(1);
    }
  return m;
}

HeightMap random_map(std::uint64_t seed, int g = 16) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(15.0, 30.0);
  return map_from(g, [&](int, int) { return d(gen); });
}

oracle::Box box_of(Section s) {
  switch (s) {
    case Section::kP: return oracle::posterior();
    case Section::kM: return oracle::middle();
    case Section::kA: return oracle::anterior();
    case Section::kL: return {0.0, 1.0 / 3.0, 0.0, 1.0, false, true, false};
    case Section::kR: return {2.0 / 3.0, 1.0, 0.0, 1.0, true, false, false};
    case Section::kC: return oracle::central();
    case Section::kA0: return oracle::antero_central();
  }
  return {};
}

std::vector<SectionStats> pipeline_stats(const phantom::Phantom& ph, const eval::PipelineConfig& cfg = {}) {
  std::vector<SectionStats> out;
  for (int label : ph.labels) out.push_back(eval::extract_vertebra(ph.volume, label, cfg).stats);
  return out;
}

double analytic_ratio(const phantom::PhantomSpec& spec, const oracle::Box& num, const oracle::Box& den) {
  const phantom::HeightField f(spec.base_height, spec.radius_ap, spec.radius_lateral, spec.deformation);
  auto h = [&](double u, double v) { return f(u, v); };
  return oracle::region_mean(h, spec.radius_lateral, spec.radius_ap, num) /
         oracle::region_mean(h, spec.radius_lateral, spec.radius_ap, den);
}

}  // namespace

TEST(Layout, CellsMatchRegionOracle) {
  const auto layout = SectionLayout::standard();
  for (int g = 4; g <= 32; ++g) {
    for (int s = 0; s < kSectionCount; ++s) {
      std::vector<int> expected;
      const oracle::Box b = box_of(static_cast<Section>(s));
      for (int iv = 0; iv < g; ++iv)
        for (int iu = 0; iu < g; ++iu)
          if (b.contains((iu + 0.5) / g, (iv + 0.5) / g)) expected.push_back(iv * g + iu);
      EXPECT_EQ(layout.cells(static_cast<Section>(s), g), expected) << kSectionNames[static_cast<std::size_t>(s)] << " g=" << g;
    }
  }
}

TEST(Layout, RegionsNonEmptyAndBandsPartition) {
  const auto layout = SectionLayout::standard();
  for (int g = 8; g <= 40; ++g) {
    for (int s = 0; s < kSectionCount; ++s) EXPECT_FALSE(layout.cells(static_cast<Section>(s), g).empty());
    std::vector<int> hits(static_cast<std::size_t>(g * g), 0);
    for (Section s : {Section::kP, Section::kM, Section::kA})
      for (int c : layout.cells(s, g)) hits[static_cast<std::size_t>(c)]++;
    for (int h : hits) EXPECT_EQ(h, 1);
    const auto l = layout.cells(Section::kL, g), r = layout.cells(Section::kR, g);
    for (int c : l) EXPECT_EQ(std::count(r.begin(), r.end(), c), 0);
  }
}

TEST(SectionStats, ConstantMap) {
  const auto st = section_stats(map_from(16, [](int, int) { return 25.0; }));
  for (int s = 0; s < kSectionCount; ++s) {
    EXPECT_DOUBLE_EQ(st.mean[static_cast<std::size_t>(s)], 25.0);
    EXPECT_DOUBLE_EQ(st.stdev[static_cast<std::size_t>(s)], 0.0);
    EXPECT_DOUBLE_EQ(st.valid_fraction[static_cast<std::size_t>(s)], 1.0);
  }
}

TEST(SectionStats, PopulationStdOverValidCells) {
  // Alternating rows 10/20 inside P at G = 12 (rows 0..3).
  auto m = map_from(12, [](int, int iv) { return iv % 2 ? 20.0 : 10.0; });
  const auto st = section_stats(m);
  EXPECT_NEAR(st.mean[idx(Section::kP)], 15.0, 1e-12);
  EXPECT_NEAR(st.stdev[idx(Section::kP)], 5.0, 1e-12);
  // Invalid cells are skipped entirely.
  for (int iu = 0; iu < 12; ++iu) m.valid[static_cast<std::size_t>(iu)] = 0;  // row 0 (all 10s)
  const auto st2 = section_stats(m);
  EXPECT_NEAR(st2.mean[idx(Section::kP)], (20.0 * 24 + 10.0 * 12) / 36.0, 1e-12);
  EXPECT_NEAR(st2.valid_fraction[idx(Section::kP)], 0.75, 1e-12);
}

TEST(SectionStats, RequiredSectionMissingIsFeatureFailure) {
  const auto layout = SectionLayout::standard();
  for (Section s : {Section::kA0, Section::kP, Section::kC}) {
    auto m = map_from(16, [](int, int) { return 25.0; });
    for (int c : layout.cells(s, 16)) m.valid[static_cast<std::size_t>(c)] = 0;
    EXPECT_EQ(code_of([&] { section_stats(m); }), ErrorCode::kFeatureFailure);
  }
}

TEST(SectionStats, WedgeOrdersBands) {
  phantom::PhantomSpec spec;
  spec.deformation = phantom::Deformation::wedge(0.8);
  const auto st = pipeline_stats(phantom::generate_phantom(spec, 0))[0];
  EXPECT_LT(st.mean[idx(Section::kA)], st.mean[idx(Section::kM)]);
  EXPECT_LT(st.mean[idx(Section::kM)], st.mean[idx(Section::kP)]);
}

TEST(SectionStats, WedgeA0OverPMatchesAnalyticIntegral) {
  phantom::PhantomSpec spec;
  spec.deformation = phantom::Deformation::wedge(0.85);
  const auto st = pipeline_stats(phantom::generate_phantom(spec, 0))[0];
  const double measured = st.mean[idx(Section::kA0)] / st.mean[idx(Section::kP)];
  EXPECT_NEAR(measured, analytic_ratio(spec, oracle::antero_central(), oracle::posterior()), 0.03);
}

TEST(SectionStats, GridSizeFourAndSixteenAgree) {
  for (auto d : {phantom::Deformation::wedge(0.8), phantom::Deformation::none(), phantom::Deformation::crush(0.75)}) {
    phantom::PhantomSpec spec;
    spec.deformation = d;
    const auto ph = phantom::generate_phantom(spec, 0);
    eval::PipelineConfig coarse, fine;
    coarse.projection.grid_size = 4;
    fine.projection.grid_size = 16;
    const auto a = pairwise_ratios(eval::extract_vertebra(ph.volume, 20, coarse).stats.mean);
    const auto b = pairwise_ratios(eval::extract_vertebra(ph.volume, 20, fine).stats.mean);
    for (int i = 0; i < kPairCount; ++i) EXPECT_NEAR(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(i)], 0.02) << d.describe();
  }
}

TEST(PairwiseRatios, OrderAndValues) {
  const auto order = pair_order();
  EXPECT_EQ(order[0], std::make_pair(0, 1));
  EXPECT_EQ(order[5], std::make_pair(0, 6));
  EXPECT_EQ(order[6], std::make_pair(1, 2));
  EXPECT_EQ(pair_name(0, 6), "pair_P_A0");
  EXPECT_EQ(ref_name(5), "ref_C");

  std::array<double, kSectionCount> equal;
  equal.fill(7.0);
  for (double r : pairwise_ratios(equal)) EXPECT_EQ(r, 1.0);

  std::array<double, kSectionCount> m = {25, 24, 20, 23, 23, 22, 20};
  EXPECT_DOUBLE_EQ(pairwise_ratios(m)[5], 0.8);
  auto doubled = m;
  for (double& x : doubled) x *= 2.0;
  EXPECT_EQ(pairwise_ratios(doubled), pairwise_ratios(m));

  m[1] = 0.0;
  EXPECT_EQ(code_of([&] { pairwise_ratios(m); }), ErrorCode::kDivisionGuard);
}

TEST(Reference, ArgmaxCentralMeanWithLowerLabelTies) {
  auto mk = [](double c) {
    SectionStats s = section_stats(map_from(16, [&](int, int) { return c; }));
    return s;
  };
  EXPECT_EQ(select_reference({20, 19, 18}, {mk(22), mk(25), mk(24)}), 1u);
  EXPECT_EQ(select_reference({20, 19, 18}, {mk(25), mk(24), mk(25)}), 2u);
  EXPECT_EQ(code_of([&] { select_reference({20}, {mk(25)}); }), ErrorCode::kScanExcluded);
}

TEST(Reference, ReferenceRatiosOfReferenceAreOne) {
  const std::vector<int> labels = {3, 4, 5};
  const std::vector<SectionStats> stats = {section_stats(random_map(1)), section_stats(random_map(2)),
                                           section_stats(random_map(3))};
  const auto out = build_scan_features("s", labels, stats);
  const int ref = out[0].reference_label;
  for (const auto& f : out) EXPECT_EQ(f.reference_label, ref);
  for (const auto& f : out) {
    if (f.label != ref) continue;
    for (int k = 0; k < kSectionCount; ++k) EXPECT_EQ(f.values.at(ref_name(k)), 1.0);
  }
}

// Property: editing a non-reference vertebra without making it the new argmax
// leaves every other vertebra's reference ratios untouched.
TEST(Reference, NonReferenceEditsAreLocal) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::vector<int> labels = {10, 11, 12, 13};
    std::vector<SectionStats> stats;
    for (std::uint64_t k = 0; k < 4; ++k) stats.push_back(section_stats(random_map(seed * 10 + k)));
    const auto before = build_scan_features("s", labels, stats);
    const std::size_t ref = select_reference(labels, stats);
    const std::size_t other = (ref + 1) % 4;
    auto edited = stats;
    for (double& m : edited[other].mean) m *= 0.9;  // shrinking cannot create a new argmax
    const auto after = build_scan_features("s", labels, edited);
    for (std::size_t v = 0; v < 4; ++v) {
      if (v == other) continue;
      for (int k = 0; k < kSectionCount; ++k) EXPECT_EQ(before[v].values.at(ref_name(k)), after[v].values.at(ref_name(k)));
    }
  }
}

TEST(Reference, AdjacentModePicksNearestLabel) {
  const std::vector<int> labels = {20, 18, 19, 15};
  std::vector<SectionStats> stats;
  for (std::uint64_t k = 0; k < 4; ++k) stats.push_back(section_stats(random_map(k)));
  const auto out = build_scan_features("s", labels, stats, ReferenceMode::kAdjacent);
  EXPECT_EQ(out[0].reference_label, 19);
  EXPECT_EQ(out[1].reference_label, 19);
  EXPECT_EQ(out[2].reference_label, 18);  // 18 and 20 tie; lower label
  EXPECT_EQ(out[3].reference_label, 18);
}

TEST(Features, MissingSideSectionIsAbsentNotFatal) {
  const auto layout = SectionLayout::standard();
  auto m = map_from(16, [](int, int) { return 25.0; });
  for (int c : layout.cells(Section::kL, 16)) m.valid[static_cast<std::size_t>(c)] = 0;
  const std::vector<SectionStats> stats = {section_stats(m), section_stats(map_from(16, [](int, int) { return 26.0; }))};
  const auto out = build_scan_features("s", {1, 2}, stats);
  const auto& v = out[0].values;
  EXPECT_EQ(v.count("pair_P_L"), 0u);
  EXPECT_EQ(v.count("pair_L_R"), 0u);
  EXPECT_EQ(v.count("ref_L"), 0u);
  EXPECT_EQ(v.count("mean_L"), 0u);
  EXPECT_EQ(v.at("valid_L"), 0.0);
  EXPECT_EQ(v.count("pair_P_A0"), 1u);
  EXPECT_NEAR(v.at("ref_C"), 25.0 / 26.0, 1e-15);
}

// Property: scaling every height by s > 0 leaves all ratio features unchanged.
TEST(Features, GlobalScaleInvariance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<HeightMap> maps = {random_map(seed), random_map(seed + 1000)};
    std::vector<SectionStats> a, b;
    const double s = 0.25 + 0.5 * static_cast<double>(seed);
    for (auto m : maps) {
      a.push_back(section_stats(m));
      for (double& h : m.heights) h *= s;
      b.push_back(section_stats(m));
    }
    const auto fa = build_scan_features("s", {1, 2}, a);
    const auto fb = build_scan_features("s", {1, 2}, b);
    for (std::size_t v = 0; v < 2; ++v)
      for (const auto& [name, value] : fa[v].values)
        if (is_ratio_feature(name)) EXPECT_NEAR(fb[v].values.at(name), value, 1e-12 * value) << name;
  }
}

// Property: mirroring in u swaps L and R and fixes the other sections.
TEST(Features, LeftRightMirror) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const HeightMap m = random_map(seed);
    HeightMap mirrored = m;
    const int g = m.grid_size;
    for (int iv = 0; iv < g; ++iv)
      for (int iu = 0; iu < g; ++iu)
        mirrored.heights[static_cast<std::size_t>(iv * g + iu)] = m.heights[static_cast<std::size_t>(iv * g + (g - 1 - iu))];
    const auto a = section_stats(m), b = section_stats(mirrored);
    EXPECT_NEAR(a.mean[idx(Section::kL)], b.mean[idx(Section::kR)], 1e-12);
    EXPECT_NEAR(a.stdev[idx(Section::kL)], b.stdev[idx(Section::kR)], 1e-12);
    for (Section s : {Section::kP, Section::kM, Section::kA, Section::kC, Section::kA0}) {
      EXPECT_NEAR(a.mean[idx(s)], b.mean[idx(s)], 1e-12);
      EXPECT_NEAR(a.stdev[idx(s)], b.stdev[idx(s)], 1e-12);
    }
  }
}

TEST(Features, CrushBesideReferenceGivesCentralRatio) {
  phantom::PhantomSpec spec;
  spec.deformation = phantom::Deformation::crush(0.75);
  const auto ph = phantom::generate_phantom(spec, 0);
  const auto out = build_scan_features("s", ph.labels, pipeline_stats(ph));
  ASSERT_EQ(out[0].label, 20);
  EXPECT_EQ(out[0].reference_label, 19);
  EXPECT_NEAR(out[0].values.at("ref_C"), 0.75, 0.03);
}

TEST(Features, UndeformedScanHasUnitRatios) {
  phantom::PhantomSpec spec;
  spec.count_in_scan = 3;
  spec.tilt_deg = 10.0;
  const auto ph = phantom::generate_phantom(spec, 5);
  for (const auto& f : build_scan_features("s", ph.labels, pipeline_stats(ph))) {
    int ratios = 0;
    for (const auto& [name, value] : f.values) {
      if (!is_ratio_feature(name)) continue;
      ++ratios;
      EXPECT_GE(value, 0.97) << name;
      EXPECT_LE(value, 1.03) << name;
    }
    EXPECT_EQ(ratios, 28);
  }
}

TEST(Features, WedgeEightyTriggersFirstRule) {
  phantom::PhantomSpec spec;
  spec.deformation = phantom::Deformation::wedge(0.8);
  const auto ph = phantom::generate_phantom(spec, 0);
  const auto out = build_scan_features("s", ph.labels, pipeline_stats(ph));
  EXPECT_LE(out[0].values.at("pair_P_A0"), 0.91);
}

TEST(Features, ColumnsAndRatioClassification) {
  const auto cols = feature_columns();
  EXPECT_EQ(cols.size(), 49u);
  EXPECT_EQ(cols.front(), "pair_P_M");
  EXPECT_TRUE(is_ratio_feature("pair_P_A0"));
  EXPECT_TRUE(is_ratio_feature("ref_C"));
  EXPECT_FALSE(is_ratio_feature("mean_C"));
  EXPECT_FALSE(is_ratio_feature("valid_P"));
}

TEST(FeatureCsv, RoundTripIsExactWithMissingValues) {
  std::vector<FeatureRow> rows(2);
  rows[0] = {"scanA", 20, 19, {{"pair_P_A0", 0.1 + 0.2}, {"ref_C", 1.0 / 3.0}, {"valid_L", 0.0}}};
  rows[1] = {"scanA", 19, 19, {{"pair_P_A0", 1.0}, {"mean_C", 24.999999999999996}}};
  std::stringstream ss;
  write_feature_csv(rows, ss);
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("scan_id,vertebra_label,reference_label,pair_P_M", 0), 0u);
  EXPECT_NE(text.find("NA"), std::string::npos);
  std::istringstream in(text);
  const auto back = read_feature_csv(in);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].scan_id, rows[i].scan_id);
    EXPECT_EQ(back[i].label, rows[i].label);
    EXPECT_EQ(back[i].reference_label, rows[i].reference_label);
    EXPECT_EQ(back[i].values, rows[i].values);
  }
}
