#include "vcf/meshing.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <unordered_map>

#include "vcf/error.hpp"

namespace vcf::meshing {
namespace {

// Cube corners are numbered by bits (x, y, z) = (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// Faces list their corners counter-clockwise as seen from outside the cube.
constexpr std::array<std::array<int, 4>, 6> kFaces = {{
    {0, 2, 3, 1},  // z = 0
    {4, 5, 7, 6},  // z = 1
    {0, 1, 5, 4},  // y = 0
    {2, 6, 7, 3},  // y = 1
    {0, 4, 6, 2},  // x = 0
    {1, 3, 7, 5},  // x = 1
}};

struct CubeEdge {
  int base_corner;  // corner with the lower coordinate along `axis`
  int axis;
};

struct CaseTable {
  std::array<CubeEdge, 12> edges{};
  std::array<std::array<int, 8>, 8> edge_of{};
  // Per configuration: closed loops of cube-edge ids.
  std::array<std::vector<std::vector<int>>, 256> loops;
};

// Builds the 256-configuration table. On every face the crossing segments
// pair each inside->outside crossing with the entry of the same run of inside
// corners, so diagonally opposite inside corners on a face stay separated.
// Both cubes sharing a face derive the same segments with opposite direction,
// which makes the assembled surface closed, manifold and consistently wound.
CaseTable build_case_table() {
  CaseTable t;
  for (auto& row : t.edge_of) row.fill(-1);
  int next_edge = 0;
  for (int c = 0; c < 8; ++c) {
    for (int axis = 0; axis < 3; ++axis) {
      if (c & (1 << axis)) continue;
      const int other = c | (1 << axis);
      t.edges[next_edge] = {c, axis};
      t.edge_of[c][other] = t.edge_of[other][c] = next_edge;
      ++next_edge;
    }
  }

  for (int config = 1; config < 255; ++config) {
    auto inside = [config](int corner) { return (config >> corner) & 1; };
    std::array<int, 12> successor;
    successor.fill(-1);
    for (const auto& face : kFaces) {
      for (int k = 0; k < 4; ++k) {
        const int a = face[k];
        const int b = face[(k + 1) % 4];
        if (!(inside(a) && !inside(b))) continue;
        // Walk back over the inside run ending at corner a.
        int j = (k + 3) % 4;
        while (inside(face[j])) j = (j + 3) % 4;
        const int entry = t.edge_of[face[j]][face[(j + 1) % 4]];
        successor[t.edge_of[a][b]] = entry;
      }
    }
    std::array<bool, 12> used{};
    for (int e = 0; e < 12; ++e) {
      if (successor[e] < 0 || used[e]) continue;
      std::vector<int> loop;
      for (int cur = e; !used[cur]; cur = successor[cur]) {
        used[cur] = true;
        loop.push_back(cur);
      }
      t.loops[config].push_back(std::move(loop));
    }
  }
  return t;
}

const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace

volume::BinaryMask largest_component(const volume::BinaryMask& mask, std::size_t* component_count) {
  const auto& f = mask.frame;
  std::vector<std::int32_t> component(mask.voxels.size(), -1);
  std::vector<std::size_t> sizes;
  std::deque<std::size_t> queue;
  const std::array<std::array<int, 3>, 6> offsets = {{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  for (int k = 0; k < f.dims[2]; ++k) {
    for (int j = 0; j < f.dims[1]; ++j) {
      for (int i = 0; i < f.dims[0]; ++i) {
        const std::size_t start = f.index(i, j, k);
        if (!mask.voxels[start] || component[start] >= 0) continue;
        const auto id = static_cast<std::int32_t>(sizes.size());
        std::size_t size = 0;
        component[start] = id;
        queue.push_back(start);
        while (!queue.empty()) {
          const std::size_t cur = queue.front();
          queue.pop_front();
          ++size;
          const int ci = static_cast<int>(cur % static_cast<std::size_t>(f.dims[0]));
          const int cj = static_cast<int>((cur / static_cast<std::size_t>(f.dims[0])) % static_cast<std::size_t>(f.dims[1]));
          const int ck = static_cast<int>(cur / (static_cast<std::size_t>(f.dims[0]) * static_cast<std::size_t>(f.dims[1])));
          for (const auto& o : offsets) {
            const int ni = ci + o[0], nj = cj + o[1], nk = ck + o[2];
            if (!f.contains(ni, nj, nk)) continue;
            const std::size_t n = f.index(ni, nj, nk);
            if (mask.voxels[n] && component[n] < 0) {
              component[n] = id;
              queue.push_back(n);
            }
          }
        }
        sizes.push_back(size);
      }
    }
  }
  if (component_count) *component_count = sizes.size();

  volume::BinaryMask out;
  out.frame = f;
  out.voxels.assign(mask.voxels.size(), 0);
  if (sizes.empty()) return out;
  const auto best = static_cast<std::int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < component.size(); ++i) {
    if (component[i] == best) out.voxels[i] = 1;
  }
  out.count = sizes[static_cast<std::size_t>(best)];
  return out;
}

TriangleMesh marching_cubes(const volume::BinaryMask& mask, const MeshingOptions& options, MeshingReport* report) {
  if (mask.count == 0 || mask.voxels.empty()) throw Error(ErrorCode::kEmptyInput, "empty mask");
  std::size_t components = 0;
  const volume::BinaryMask body = largest_component(mask, &components);
  MeshingReport local;
  local.component_count = components;
  local.voxels_used = body.count;
  local.smoothed = options.smooth;
  if (components > 1) {
    local.warnings.push_back("mask has " + std::to_string(components) + " 6-connected components; kept the largest (" +
                             std::to_string(body.count) + " voxels)");
  }
  if (body.count < options.min_component_voxels) {
    throw Error(ErrorCode::kTooSmall, "component of " + std::to_string(body.count) + " voxels is below the minimum of " +
                                          std::to_string(options.min_component_voxels));
  }

  const auto& frame = body.frame;
  const int nx = frame.dims[0], ny = frame.dims[1], nz = frame.dims[2];

  // Scalar field with a one-voxel zero border so the surface closes.
  const int px = nx + 2, py = ny + 2, pz = nz + 2;
  auto pidx = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i + 1) +
           static_cast<std::size_t>(px) * (static_cast<std::size_t>(j + 1) + static_cast<std::size_t>(py) * static_cast<std::size_t>(k + 1));
  };
  std::vector<float> field(static_cast<std::size_t>(px) * py * pz, 0.0f);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) field[pidx(i, j, k)] = body.at(i, j, k) ? 1.0f : 0.0f;
    }
  }
  if (options.smooth) {
    std::vector<float> smoothed(field.size(), 0.0f);
    for (int k = 0; k < nz; ++k) {
      for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
          float sum = 0.0f;
          for (int dk = -1; dk <= 1; ++dk) {
            for (int dj = -1; dj <= 1; ++dj) {
              for (int di = -1; di <= 1; ++di) sum += field[pidx(i + di, j + dj, k + dk)];
            }
          }
          smoothed[pidx(i, j, k)] = sum / 27.0f;
        }
      }
    }
    field.swap(smoothed);
  }
  auto value = [&](int i, int j, int k) -> float {
    if (i < -1 || j < -1 || k < -1 || i > nx || j > ny || k > nz) return 0.0f;
    return field[pidx(i, j, k)];
  };

  const CaseTable& table = case_table();
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> vertex_of_edge;
  auto vertex_for = [&](int vi, int vj, int vk, int axis) -> std::uint32_t {
    const std::uint64_t key = (static_cast<std::uint64_t>(pidx(vi, vj, vk)) << 2) | static_cast<std::uint64_t>(axis);
    auto [it, inserted] = vertex_of_edge.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (inserted) {
      double t = 0.5;
      if (options.smooth) {
        const float f0 = value(vi, vj, vk);
        const float f1 = value(vi + (axis == 0), vj + (axis == 1), vk + (axis == 2));
        t = (0.5 - f0) / (static_cast<double>(f1) - f0);
      }
      const double ci = vi + (axis == 0 ? t : 0.0);
      const double cj = vj + (axis == 1 ? t : 0.0);
      const double ck = vk + (axis == 2 ? t : 0.0);
      mesh.vertices.push_back(frame.to_physical(ci, cj, ck));
    }
    return it->second;
  };

  const bool mirrored = frame.direction.determinant() < 0.0;
  std::vector<std::uint32_t> ring;
  for (int k = -1; k < nz; ++k) {
    for (int j = -1; j < ny; ++j) {
      for (int i = -1; i < nx; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          if (value(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) > 0.5f) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;
        for (const auto& loop : table.loops[static_cast<std::size_t>(config)]) {
          ring.clear();
          for (int e : loop) {
            const CubeEdge& edge = table.edges[static_cast<std::size_t>(e)];
            const int c = edge.base_corner;
            ring.push_back(vertex_for(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1), edge.axis));
          }
          // Loops run clockwise seen from outside; the reversed fan faces out.
          for (std::size_t v = 1; v + 1 < ring.size(); ++v) {
            if (mirrored) {
              mesh.triangles.push_back({ring[0], ring[v], ring[v + 1]});
            } else {
              mesh.triangles.push_back({ring[0], ring[v + 1], ring[v]});
            }
          }
        }
      }
    }
  }

  mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& tri : mesh.triangles) {
    const Vec3 n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    for (std::uint32_t v : tri) mesh.normals[v] += n;
  }
  for (Vec3& n : mesh.normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  if (report) *report = std::move(local);
  return mesh;
}

OrientedPointCloud to_point_cloud(const TriangleMesh& mesh) {
  return OrientedPointCloud{mesh.vertices, mesh.normals};
}

MeshTopology analyze_topology(const TriangleMesh& mesh) {
  MeshTopology topo;
  topo.faces = mesh.triangles.size();
  auto key = [](std::uint32_t a, std::uint32_t b) { return (static_cast<std::uint64_t>(a) << 32) | b; };
  std::unordered_map<std::uint64_t, int> directed;
  std::unordered_map<std::uint64_t, int> undirected;
  std::vector<bool> referenced(mesh.vertices.size(), false);
  // Link of each vertex: for triangle (a, b, c), vertex a sees edge b -> c.
  std::unordered_map<std::uint32_t, std::vector<std::pair<std::uint32_t, std::uint32_t>>> link;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const std::uint32_t a = t[static_cast<std::size_t>(e)];
      const std::uint32_t b = t[static_cast<std::size_t>((e + 1) % 3)];
      const std::uint32_t c = t[static_cast<std::size_t>((e + 2) % 3)];
      referenced[a] = true;
      ++directed[key(a, b)];
      ++undirected[key(std::min(a, b), std::max(a, b))];
      link[a].emplace_back(b, c);
    }
  }
  topo.vertices = static_cast<std::size_t>(std::count(referenced.begin(), referenced.end(), true));
  topo.edges = undirected.size();
  topo.edge_manifold = std::all_of(undirected.begin(), undirected.end(), [](const auto& kv) { return kv.second == 2; });
  topo.consistently_oriented = std::all_of(directed.begin(), directed.end(), [&](const auto& kv) {
    const auto a = static_cast<std::uint32_t>(kv.first >> 32);
    const auto b = static_cast<std::uint32_t>(kv.first & 0xffffffffu);
    const auto rev = directed.find(key(b, a));
    return kv.second == 1 && rev != directed.end() && rev->second == 1;
  });
  topo.vertex_manifold = true;
  for (const auto& [v, edges] : link) {
    std::unordered_map<std::uint32_t, std::uint32_t> next;
    for (const auto& [b, c] : edges) {
      if (!next.emplace(b, c).second) {
        topo.vertex_manifold = false;
        break;
      }
    }
    if (!topo.vertex_manifold) break;
    std::size_t steps = 0;
    std::uint32_t cur = edges.front().first;
    do {
      auto it = next.find(cur);
      if (it == next.end()) break;
      cur = it->second;
      ++steps;
    } while (cur != edges.front().first && steps <= edges.size());
    if (steps != edges.size() || cur != edges.front().first) {
      topo.vertex_manifold = false;
      break;
    }
  }
  return topo;
}

double enclosed_volume(const TriangleMesh& mesh) {
  double six_v = 0.0;
  for (const auto& t : mesh.triangles) {
    six_v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  }
  return six_v / 6.0;
}

double surface_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    area += (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]).norm();
  }
  return area / 2.0;
}

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    const Vec3& n = mesh.normals[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

}  // namespace vcf::meshing
