// Triangle-mesh representation with per-vertex weights, weighted-region
// extraction and the normal-offset dermis extrusion.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gentact/math.hpp"

#include <nlohmann/json.hpp>

namespace gentact {

struct EmptyRegionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateNormalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MeshFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Indexed triangle mesh. `weights` holds one scalar in [0,1] per vertex and is
// always the same length as `vertices`.
struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<double> weights;
};

inline double face_area(const SurfaceMesh& mesh, int f) {
  const auto& t = mesh.faces[f];
  return 0.5 * norm(cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                          mesh.vertices[t[2]] - mesh.vertices[t[0]]));
}

inline Vec3 face_normal_scaled(const SurfaceMesh& mesh, int f) {
  const auto& t = mesh.faces[f];
  return cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
               mesh.vertices[t[2]] - mesh.vertices[t[0]]);
}

inline double total_area(const SurfaceMesh& mesh) {
  double a = 0.0;
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f)
    a += face_area(mesh, f);
  return a;
}

inline void validate_mesh(const SurfaceMesh& mesh) {
  if (mesh.weights.size() != mesh.vertices.size())
    throw MeshFormatError("mesh: weights length must equal vertex count");
  int n = static_cast<int>(mesh.vertices.size());
  for (const auto& t : mesh.faces) {
    for (int i : t)
      if (i < 0 || i >= n) throw MeshFormatError("mesh: face index out of range");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw MeshFormatError("mesh: degenerate face (repeated vertex)");
  }
  for (double w : mesh.weights)
    if (w < 0.0 || w > 1.0)
      throw MeshFormatError("mesh: vertex weight outside [0,1]");
}

// Drops zero-area faces. Returns the number removed.
inline int drop_degenerate_faces(SurfaceMesh& mesh, double min_area = 1e-16) {
  std::vector<std::array<int, 3>> kept;
  kept.reserve(mesh.faces.size());
  int dropped = 0;
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    if (face_area(mesh, f) > min_area)
      kept.push_back(mesh.faces[f]);
    else
      ++dropped;
  }
  mesh.faces = std::move(kept);
  return dropped;
}

// Area-weighted per-vertex normals. Vertices with no incident faces get a
// zero vector; callers that offset along normals must check magnitudes.
inline std::vector<Vec3> vertex_normals(const SurfaceMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertices.size());
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    Vec3 n = face_normal_scaled(mesh, f);  // length = 2 * area
    for (int i : mesh.faces[f]) normals[i] += n;
  }
  for (auto& n : normals) {
    double len = norm(n);
    if (len > 0.0) n = n / len;
  }
  return normals;
}

// Keeps exactly the faces whose three vertices all have weight >= threshold,
// compacting and reindexing the vertex list.
inline SurfaceMesh extract_weighted_region(const SurfaceMesh& mesh, double threshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw std::invalid_argument("extract_weighted_region: threshold must be in (0,1]");
  std::vector<int> remap(mesh.vertices.size(), -1);
  SurfaceMesh out;
  for (const auto& t : mesh.faces) {
    bool keep = true;
    for (int i : t)
      if (mesh.weights[i] < threshold) keep = false;
    if (!keep) continue;
    std::array<int, 3> nt{};
    for (int k = 0; k < 3; ++k) {
      int v = t[k];
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        out.weights.push_back(mesh.weights[v]);
      }
      nt[k] = remap[v];
    }
    out.faces.push_back(nt);
  }
  if (out.faces.empty())
    throw EmptyRegionError("extract_weighted_region: no face survives the threshold");
  return out;
}

// Boundary edges (used by exactly one face) chained into ordered loops that
// follow face winding. Deterministic: loops start at their smallest vertex id
// and are returned sorted by that id.
inline std::vector<std::vector<int>> boundary_loops(const SurfaceMesh& mesh) {
  // Directed boundary edges a->b in winding order.
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& t : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      edge_count[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  std::map<int, int> next;  // boundary successor in winding direction
  for (const auto& t : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      if (edge_count[{std::min(a, b), std::max(a, b)}] == 1) next[a] = b;
    }
  }
  std::vector<std::vector<int>> loops;
  std::map<int, bool> used;
  for (const auto& [start, _] : next) {
    if (used[start]) continue;
    std::vector<int> loop;
    int v = start;
    while (!used[v]) {
      used[v] = true;
      loop.push_back(v);
      auto it = next.find(v);
      if (it == next.end()) break;  // open chain: mesh not manifold along rim
      v = it->second;
    }
    if (loop.size() >= 3) {
      // rotate so the loop starts at its smallest vertex id
      auto mn = std::min_element(loop.begin(), loop.end());
      std::rotate(loop.begin(), mn, loop.end());
      loops.push_back(std::move(loop));
    }
  }
  std::sort(loops.begin(), loops.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return loops;
}

// Extruded shell. outer.vertices[i] == inner.vertices[i] + thickness * normals[i].
struct DermisShell {
  SurfaceMesh inner;
  SurfaceMesh outer;
  double thickness = 0.0;
  std::vector<Vec3> normals;                  // per inner vertex, unit length
  std::vector<std::vector<int>> rim_loops;    // ordered vertex-index loops on the rim
  bool self_intersection_warning = false;     // concave regions may fold; reported only
};

// Extrudes every face of `region` outward along area-weighted vertex normals.
inline DermisShell mold_dermis(const SurfaceMesh& region, double thickness) {
  if (region.faces.empty()) throw EmptyRegionError("mold_dermis: empty region");
  if (thickness <= 0.0)
    throw std::invalid_argument("mold_dermis: thickness must be > 0");
  DermisShell shell;
  shell.inner = region;
  shell.thickness = thickness;
  shell.normals = vertex_normals(region);
  for (const auto& n : shell.normals)
    if (norm(n) < 1e-12)
      throw DegenerateNormalError("mold_dermis: vertex normal has near-zero magnitude");
  shell.outer = region;
  for (size_t i = 0; i < region.vertices.size(); ++i)
    shell.outer.vertices[i] = region.vertices[i] + shell.normals[i] * thickness;
  shell.rim_loops = boundary_loops(region);
  // Folded extrusion shows up as an outer face whose normal flips against the
  // inner one.
  for (int f = 0; f < static_cast<int>(region.faces.size()); ++f) {
    if (dot(face_normal_scaled(shell.inner, f), face_normal_scaled(shell.outer, f)) < 0.0)
      shell.self_intersection_warning = true;
  }
  return shell;
}

// Closed manifold mesh of the shell: outer faces as-is, inner faces flipped,
// side walls stitched along each rim loop. Weights carried from the inner mesh.
inline SurfaceMesh shell_closed_mesh(const DermisShell& shell) {
  int n = static_cast<int>(shell.inner.vertices.size());
  SurfaceMesh out;
  out.vertices = shell.inner.vertices;
  out.vertices.insert(out.vertices.end(), shell.outer.vertices.begin(),
                      shell.outer.vertices.end());
  out.weights = shell.inner.weights;
  out.weights.insert(out.weights.end(), shell.inner.weights.begin(),
                     shell.inner.weights.end());
  for (const auto& t : shell.inner.faces) out.faces.push_back({t[0], t[2], t[1]});
  for (const auto& t : shell.outer.faces)
    out.faces.push_back({t[0] + n, t[1] + n, t[2] + n});
  for (const auto& loop : shell.rim_loops) {
    int m = static_cast<int>(loop.size());
    for (int i = 0; i < m; ++i) {
      int a = loop[i], b = loop[(i + 1) % m];
      // quad (a, b, b+n, a+n) split into two triangles, wound outward
      out.faces.push_back({a, b, b + n});
      out.faces.push_back({a, b + n, a + n});
    }
  }
  return out;
}

// Signed volume by the divergence theorem; positive for outward-wound meshes.
inline double mesh_volume(const SurfaceMesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.faces)
    v += dot(mesh.vertices[t[0]],
             cross(mesh.vertices[t[1]], mesh.vertices[t[2]])) / 6.0;
  return v;
}

inline double shell_volume(const DermisShell& shell) {
  return std::abs(mesh_volume(shell_closed_mesh(shell)));
}

// ---- mesh I/O ----
// Canonical JSON: {"vertices": [[x,y,z],...], "faces": [[i,j,k],...],
// "weights": [...]}. OBJ import defaults all weights to 1.0.

inline nlohmann::json mesh_to_json(const SurfaceMesh& mesh) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const auto& v : mesh.vertices) j["vertices"].push_back({v.x, v.y, v.z});
  j["faces"] = nlohmann::json::array();
  for (const auto& f : mesh.faces) j["faces"].push_back({f[0], f[1], f[2]});
  j["weights"] = mesh.weights;
  return j;
}

inline SurfaceMesh mesh_from_json(const nlohmann::json& j) {
  SurfaceMesh mesh;
  if (!j.contains("vertices") || !j.contains("faces"))
    throw MeshFormatError("mesh json: missing 'vertices' or 'faces'");
  for (const auto& v : j.at("vertices")) {
    if (!v.is_array() || v.size() != 3)
      throw MeshFormatError("mesh json: vertex must be [x,y,z]");
    mesh.vertices.push_back({v[0].get<double>(), v[1].get<double>(), v[2].get<double>()});
  }
  for (const auto& f : j.at("faces")) {
    if (!f.is_array() || f.size() != 3)
      throw MeshFormatError("mesh json: face must be [i,j,k] (triangles only)");
    mesh.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
  }
  if (j.contains("weights"))
    mesh.weights = j.at("weights").get<std::vector<double>>();
  else
    mesh.weights.assign(mesh.vertices.size(), 1.0);
  validate_mesh(mesh);
  drop_degenerate_faces(mesh);
  if (mesh.faces.empty()) throw MeshFormatError("mesh json: no non-degenerate faces");
  return mesh;
}

inline SurfaceMesh load_mesh_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshFormatError("cannot open mesh file: " + path);
  nlohmann::json j;
  in >> j;
  return mesh_from_json(j);
}

inline SurfaceMesh load_mesh_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshFormatError("cannot open mesh file: " + path);
  SurfaceMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) throw MeshFormatError("obj: bad vertex line");
      mesh.vertices.push_back({x, y, z});
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        // accept v, v/vt, v//vn, v/vt/vn
        idx.push_back(std::stoi(tok.substr(0, tok.find('/'))));
      }
      if (idx.size() != 3)
        throw MeshFormatError("obj: only triangle faces are supported");
      mesh.faces.push_back({idx[0] - 1, idx[1] - 1, idx[2] - 1});
    }
  }
  mesh.weights.assign(mesh.vertices.size(), 1.0);
  validate_mesh(mesh);
  drop_degenerate_faces(mesh);
  if (mesh.faces.empty()) throw MeshFormatError("obj: no non-degenerate faces");
  return mesh;
}

inline SurfaceMesh load_mesh(const std::string& path) {
  auto dotpos = path.find_last_of('.');
  std::string ext = dotpos == std::string::npos ? "" : path.substr(dotpos);
  if (ext == ".obj") return load_mesh_obj(path);
  return load_mesh_json(path);
}

inline void save_mesh_obj(const SurfaceMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshFormatError("cannot write mesh file: " + path);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

inline void save_mesh_json(const SurfaceMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshFormatError("cannot write mesh file: " + path);
  out << mesh_to_json(mesh).dump(2) << "\n";
}

}  // namespace gentact
