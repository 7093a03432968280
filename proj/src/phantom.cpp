#include "vcf/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "vcf/error.hpp"
#include "vcf/random.hpp"

namespace vcf::phantom {
namespace {

constexpr int kMarginVoxels = 4;
constexpr double kMinVoxelsPerRadius = 6.0;

void check_fraction(double f, const char* what) {
  if (!(f > 0.0 && f <= 1.0)) throw Error(ErrorCode::kValidation, std::string(what) + " must be in (0, 1]");
}

}  // namespace

std::string Deformation::describe() const {
  char buf[64];
  switch (kind) {
    case DeformationKind::kNone: return "none";
    case DeformationKind::kWedge: std::snprintf(buf, sizeof(buf), "wedge(%.4g)", fraction); break;
    case DeformationKind::kBiconcave: std::snprintf(buf, sizeof(buf), "biconcave(%.4g)", fraction); break;
    case DeformationKind::kCrush: std::snprintf(buf, sizeof(buf), "crush(%.4g)", fraction); break;
  }
  return buf;
}

void PhantomSpec::validate() const {
  if (!(base_height > 0.0) || !(radius_ap > 0.0) || !(radius_lateral > 0.0) || !(spacing > 0.0)) {
    throw Error(ErrorCode::kValidation, "phantom base_height, radii and spacing must be positive");
  }
  check_fraction(deformation.fraction, "deformation fraction");
  if (count_in_scan < 2) throw Error(ErrorCode::kValidation, "count_in_scan must be at least 2");
  if (label - (count_in_scan - 1) < 1) throw Error(ErrorCode::kValidation, "label too small for stacked references");
  if (surface_noise < 0.0 || surface_noise > 0.5) throw Error(ErrorCode::kValidation, "surface_noise must be in [0, 0.5]");
  if (gap < 0.0) throw Error(ErrorCode::kValidation, "gap must be non-negative");
  if (std::min(radius_ap, radius_lateral) / spacing < kMinVoxelsPerRadius) {
    throw Error(ErrorCode::kResolution, "spacing too coarse: fewer than 6 voxels across a radius");
  }
}

HeightField::HeightField(double base_height, double radius_ap, double radius_lateral, Deformation deformation)
    : base_height_(base_height), radius_ap_(radius_ap), radius_lateral_(radius_lateral), deformation_(deformation) {}

bool HeightField::inside(double u, double v) const {
  const double a = u / radius_lateral_;
  const double b = v / radius_ap_;
  return a * a + b * b <= 1.0;
}

double HeightField::operator()(double u, double v) const {
  const double f = deformation_.fraction;
  double factor = 1.0;
  switch (deformation_.kind) {
    case DeformationKind::kNone:
      break;
    case DeformationKind::kWedge:
      // posterior rim (v = -r) keeps full height, anterior rim (v = +r) keeps f
      factor = 1.0 + (f - 1.0) * (v + radius_ap_) / (2.0 * radius_ap_);
      break;
    case DeformationKind::kBiconcave: {
      const double a = u / radius_lateral_;
      const double b = v / radius_ap_;
      const double rho2 = std::min(1.0, a * a + b * b);
      factor = 1.0 - (1.0 - f) * (1.0 - rho2);
      break;
    }
    case DeformationKind::kCrush:
      factor = f;
      break;
  }
  return base_height_ * factor;
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<PhantomSpec> stack{spec};
  for (int i = 1; i < spec.count_in_scan; ++i) {
    PhantomSpec ref = spec;
    ref.deformation = Deformation::none();
    ref.label = spec.label - i;
    stack.push_back(ref);
  }
  return generate_scan(stack, seed);
}

Phantom generate_scan(std::span<const PhantomSpec> stack, std::uint64_t seed) {
  if (stack.empty()) throw Error(ErrorCode::kValidation, "empty phantom stack");
  const PhantomSpec& first = stack.front();
  const double s = first.spacing;
  for (const PhantomSpec& spec : stack) {
    PhantomSpec check = spec;
    check.count_in_scan = 2;
    check.label = std::max(spec.label, 2);
    check.validate();
    if (spec.label < 1) throw Error(ErrorCode::kValidation, "phantom labels must be positive");
    if (spec.spacing != s) throw Error(ErrorCode::kValidation, "stacked phantoms must share spacing");
  }

  Phantom out;
  std::vector<double> bases;
  double top = 0.0;
  double max_rl = 0.0;
  double max_rap = 0.0;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const PhantomSpec& spec = stack[i];
    if (i > 0) top += stack[i - 1].gap;
    bases.push_back(top);
    top += spec.base_height;
    out.fields.emplace_back(spec.base_height, spec.radius_ap, spec.radius_lateral, spec.deformation);
    out.labels.push_back(spec.label);
    max_rl = std::max(max_rl, spec.radius_lateral);
    max_rap = std::max(max_rap, spec.radius_ap);
  }

  const Mat3 q = Eigen::AngleAxisd(first.tilt_deg * std::numbers::pi / 180.0, Vec3::UnitX()).toRotationMatrix();
  const Vec3 pivot(0.0, 0.0, top / 2.0);
  out.body_rotation = q;
  out.body_origin = pivot - q * pivot;

  Vec3 lo = Vec3::Constant(1e300);
  Vec3 hi = Vec3::Constant(-1e300);
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner((c & 1) ? max_rl : -max_rl, (c & 2) ? max_rap : -max_rap, (c & 4) ? top : 0.0);
    const Vec3 p = out.body_origin + q * corner;
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  // x and y grids are symmetric about the body axis so untilted phantoms are
  // exactly mirror-symmetric; z has a voxel boundary at w = 0.
  const double xmax = std::max(std::abs(lo.x()), std::abs(hi.x()));
  const double ymax = std::max(std::abs(lo.y()), std::abs(hi.y()));
  const int nx = 2 * static_cast<int>(std::ceil(xmax / s)) + 2 * kMarginVoxels + 1;
  const int ny = 2 * static_cast<int>(std::ceil(ymax / s)) + 2 * kMarginVoxels + 1;
  const int zlo_index = static_cast<int>(std::floor(lo.z() / s)) - kMarginVoxels;
  const int nz = static_cast<int>(std::ceil(hi.z() / s)) + kMarginVoxels - zlo_index;

  volume::LabelVolume& vol = out.volume;
  vol.frame.dims = {nx, ny, nz};
  vol.frame.spacing = Vec3::Constant(s);
  vol.frame.direction = Mat3::Identity();
  vol.frame.origin = Vec3(-(nx - 1) / 2.0 * s, -(ny - 1) / 2.0 * s, (zlo_index + 0.5) * s);
  vol.voxels.assign(vol.frame.voxel_count(), 0);

  Rng rng(seed);
  const double jitter = first.surface_noise * s;
  const Mat3 qt = q.transpose();
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        Vec3 p = vol.frame.to_physical(i, j, k);
        if (jitter > 0.0) {
          const double dx = rng.uniform(-jitter, jitter);
          const double dy = rng.uniform(-jitter, jitter);
          const double dz = rng.uniform(-jitter, jitter);
          p += Vec3(dx, dy, dz);
        }
        const Vec3 b = qt * (p - out.body_origin);
        for (std::size_t body = 0; body < stack.size(); ++body) {
          const HeightField& field = out.fields[body];
          if (!field.inside(b.x(), b.y())) continue;
          const double w = b.z() - bases[body];
          if (w >= 0.0 && w < field(b.x(), b.y())) {
            vol.voxels[vol.frame.index(i, j, k)] = static_cast<std::uint16_t>(stack[body].label);
            break;
          }
        }
      }
    }
  }
  return out;
}

std::vector<BenchmarkScan> benchmark_suite(int scans, std::uint64_t seed) {
  if (scans < 1) throw Error(ErrorCode::kValidation, "benchmark needs at least one scan");
  static const std::array<Deformation, 6> kCycle = {
      Deformation::wedge(0.85), Deformation::wedge(0.80), Deformation::wedge(0.75),
      Deformation::wedge(0.70), Deformation::crush(0.75), Deformation::biconcave(0.70),
  };
  Rng rng(seed);
  std::vector<BenchmarkScan> suite;
  for (int s = 0; s < scans; ++s) {
    BenchmarkScan scan;
    char id[32];
    std::snprintf(id, sizeof(id), "phantom%03d", s);
    scan.scan_id = id;
    const double height = rng.uniform(23.0, 27.0);
    const double rl = rng.uniform(18.0, 22.0);
    const double rap = rng.uniform(13.0, 16.0);
    for (int v = 0; v < 3; ++v) {
      PhantomSpec spec;
      spec.base_height = height * rng.uniform(0.99, 1.01);
      spec.radius_lateral = rl;
      spec.radius_ap = rap;
      spec.label = 20 - v;
      spec.count_in_scan = 3;
      int grade = 0;
      if (v == 1 && s % 2 == 0) {
        spec.deformation = kCycle[static_cast<std::size_t>(s / 2) % kCycle.size()];
        grade = 1.0 - spec.deformation.fraction <= 0.25 + 1e-12 ? 2 : 3;
      }
      scan.stack.push_back(spec);
      scan.grades.push_back(grade);
    }
    suite.push_back(std::move(scan));
  }
  return suite;
}

void write_benchmark(const std::filesystem::path& dir, const std::vector<BenchmarkScan>& suite, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<volume::VertebraRecord> records;
  std::ofstream splits(dir / "splits.csv");
  if (!splits) throw Error(ErrorCode::kIo, "cannot write splits.csv");
  splits << "scan_id,split\n";
  for (std::size_t s = 0; s < suite.size(); ++s) {
    const BenchmarkScan& scan = suite[s];
    const Phantom ph = generate_scan(scan.stack, seed + s);
    volume::write_lvol(ph.volume, dir / (scan.scan_id + ".lvol"));
    for (std::size_t v = 0; v < scan.stack.size(); ++v) {
      records.push_back({scan.scan_id, scan.stack[v].label, scan.grades[v], {}});
    }
    const char* split = s % 5 == 4 ? "test" : (s % 5 == 3 ? "validation" : "train");
    splits << scan.scan_id << ',' << split << '\n';
  }
  std::ofstream ann(dir / "annotations.csv");
  if (!ann) throw Error(ErrorCode::kIo, "cannot write annotations.csv");
  volume::write_annotations(records, ann);
}

}  // namespace vcf::phantom
