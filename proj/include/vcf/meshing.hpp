#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vcf/geometry.hpp"
#include "vcf/volume.hpp"

namespace vcf::meshing {

/// Closed triangle surface in patient mm with outward winding and unit
/// area-weighted vertex normals.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> normals;
};

struct OrientedPointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;

  std::size_t size() const { return points.size(); }
};

struct MeshingOptions {
  std::size_t min_component_voxels = 100;
  // One pass of 3x3x3 box smoothing before extraction; vertices are then
  // interpolated instead of placed at edge midpoints.
  bool smooth = false;
};

struct MeshingReport {
  std::size_t component_count = 0;
  std::size_t voxels_used = 0;
  bool smoothed = false;
  std::vector<std::string> warnings;
};

// Iso-surface at 0.5 of the {0,1} field of the largest 6-connected component.
// Throws Error(kEmptyInput) for an empty mask, Error(kTooSmall) when the
// component is below options.min_component_voxels.
TriangleMesh marching_cubes(const volume::BinaryMask& mask, const MeshingOptions& options = {},
                            MeshingReport* report = nullptr);

// Keeps only the largest 6-connected component (ties: first in x-fastest scan
// order). `component_count` receives the number of components found.
volume::BinaryMask largest_component(const volume::BinaryMask& mask, std::size_t* component_count = nullptr);

OrientedPointCloud to_point_cloud(const TriangleMesh& mesh);

struct MeshTopology {
  std::size_t vertices = 0;  // referenced by at least one triangle
  std::size_t edges = 0;
  std::size_t faces = 0;
  bool edge_manifold = false;          // every edge has exactly two triangles
  bool consistently_oriented = false;  // every directed edge appears once, its reverse once
  bool vertex_manifold = false;        // every vertex link is a single cycle
  long euler_characteristic() const {
    return static_cast<long>(vertices) - static_cast<long>(edges) + static_cast<long>(faces);
  }
  bool closed_manifold() const { return edge_manifold && consistently_oriented && vertex_manifold; }
};

MeshTopology analyze_topology(const TriangleMesh& mesh);

// Divergence-theorem volume (positive for outward winding).
double enclosed_volume(const TriangleMesh& mesh);
double surface_area(const TriangleMesh& mesh);

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace vcf::meshing
