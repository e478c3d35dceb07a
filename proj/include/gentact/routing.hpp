// Layered routing graph inside the dermis and greedy non-overlapping wire
// generation: A* candidate paths ranked by the length/bundling heuristic,
// with node and clearance pruning after each committed wire.
#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

#include "gentact/layout.hpp"
#include "gentact/math.hpp"
#include "gentact/mesh.hpp"
#include "gentact/spline.hpp"

namespace gentact {

struct LayersExceedThicknessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnroutableError : std::runtime_error {
  int electrode_id;
  explicit UnroutableError(int id)
      : std::runtime_error("route_all: electrode " + std::to_string(id) +
                           " cannot reach any free port"),
        electrode_id(id) {}
};

struct RoutingNode {
  Vec3 pos;
  int layer = 0;
  int origin_vertex = 0;
};

struct RoutingEdge {
  int a = 0, b = 0;
  double length = 0.0;
};

struct RoutingGraph {
  std::vector<RoutingNode> nodes;
  std::vector<RoutingEdge> edges;
  // adjacency[n] = (neighbor node, edge index)
  std::vector<std::vector<std::pair<int, int>>> adjacency;
  std::map<int, int> electrode_terminals;  // electrode id -> node id
  std::map<int, int> port_terminals;       // port id -> node id

  void add_edge(int a, int b) {
    RoutingEdge e{a, b, distance(nodes[a].pos, nodes[b].pos)};
    int idx = static_cast<int>(edges.size());
    edges.push_back(e);
    adjacency[a].push_back({b, idx});
    adjacency[b].push_back({a, idx});
  }
};

struct Port {
  int id = 0;
  Vec3 position;
  int node = -1;
};

struct WirePath {
  int port_id = -1;
  int electrode_id = -1;
  std::vector<int> node_sequence;
  double length = 0.0;          // sum of traversed edge lengths
  double profile_radius = 0.0;  // set when the wire is tubed
};

// Copies of the weighted region vertices offset outward in layers, every pair
// within connect_radius linked. Vertices with route weight <= 0 are excluded.
inline RoutingGraph build_routing_graph(const DermisShell& dermis,
                                        const std::vector<double>& route_weights,
                                        int num_layers, double layer_gap,
                                        double connect_radius) {
  if (num_layers < 1)
    throw std::invalid_argument("build_routing_graph: num_layers must be >= 1");
  if (layer_gap <= 0.0)
    throw std::invalid_argument("build_routing_graph: layer_gap must be > 0");
  if (num_layers * layer_gap >= dermis.thickness)
    throw LayersExceedThicknessError(
        "build_routing_graph: layers do not fit inside the dermis thickness");
  if (connect_radius <= 0.0)
    throw std::invalid_argument("build_routing_graph: connect_radius must be > 0");
  if (route_weights.size() != dermis.inner.vertices.size())
    throw std::invalid_argument(
        "build_routing_graph: route_weights length must equal vertex count");

  RoutingGraph g;
  for (int layer = 0; layer < num_layers; ++layer) {
    double offset = layer_gap * (layer + 1);
    for (int v = 0; v < static_cast<int>(dermis.inner.vertices.size()); ++v) {
      if (route_weights[v] <= 0.0) continue;
      g.nodes.push_back(
          {dermis.inner.vertices[v] + dermis.normals[v] * offset, layer, v});
    }
  }
  g.adjacency.resize(g.nodes.size());
  double r2 = connect_radius * connect_radius;
  int n = static_cast<int>(g.nodes.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (norm_squared(g.nodes[i].pos - g.nodes[j].pos) <= r2) g.add_edge(i, j);
  return g;
}

inline void bind_electrode_terminals(RoutingGraph& graph,
                                     const std::vector<Electrode>& electrodes) {
  for (const auto& e : electrodes) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(graph.nodes.size()); ++i) {
      double d = norm_squared(graph.nodes[i].pos - e.center);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best < 0) throw std::invalid_argument("bind_electrode_terminals: empty graph");
    graph.electrode_terminals[e.id] = best;
  }
}

struct PortPlacement {
  std::vector<Port> ports;
  bool shared_node_warning = false;  // two ports bound to the same graph node
};

// Ports at equal arc-length spacing along the smoothed rim, each bound to its
// nearest routing-graph node.
inline PortPlacement place_ports(const std::vector<Vec3>& boundary, int count,
                                 RoutingGraph& graph) {
  if (count < 1) throw std::invalid_argument("place_ports: count must be >= 1");
  if (boundary.size() < 2)
    throw std::invalid_argument("place_ports: boundary polyline too short");
  PortPlacement out;
  double total = polyline_length(boundary);
  for (int i = 0; i < count; ++i) {
    Port p;
    p.id = i;
    p.position = point_at_arc_length(boundary, total * i / count);
    double best_d = std::numeric_limits<double>::infinity();
    for (int nidx = 0; nidx < static_cast<int>(graph.nodes.size()); ++nidx) {
      double d = norm_squared(graph.nodes[nidx].pos - p.position);
      if (d < best_d) {
        best_d = d;
        p.node = nidx;
      }
    }
    if (p.node < 0) throw std::invalid_argument("place_ports: empty graph");
    for (const auto& q : out.ports)
      if (q.node == p.node) out.shared_node_warning = true;
    graph.port_terminals[p.id] = p.node;
    out.ports.push_back(p);
  }
  return out;
}

namespace detail {

// A* over alive nodes/edges with edge-length cost and Euclidean-to-goal
// heuristic. Returns an empty sequence when the goal is unreachable.
inline std::vector<int> astar(const RoutingGraph& g, const std::vector<char>& node_alive,
                              const std::vector<char>& edge_alive, int start, int goal,
                              double* out_length = nullptr) {
  if (!node_alive[start] || !node_alive[goal]) return {};
  int n = static_cast<int>(g.nodes.size());
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  std::vector<char> closed(n, 0);
  using Entry = std::pair<double, int>;  // (f, node); tie-break on node id
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  dist[start] = 0.0;
  open.push({distance(g.nodes[start].pos, g.nodes[goal].pos), start});
  while (!open.empty()) {
    auto [f, u] = open.top();
    open.pop();
    if (closed[u]) continue;
    closed[u] = 1;
    if (u == goal) break;
    for (const auto& [v, eidx] : g.adjacency[u]) {
      if (!edge_alive[eidx] || !node_alive[v] || closed[v]) continue;
      double nd = dist[u] + g.edges[eidx].length;
      if (nd < dist[v] - 1e-15) {
        dist[v] = nd;
        parent[v] = u;
        open.push({nd + distance(g.nodes[v].pos, g.nodes[goal].pos), v});
      }
    }
  }
  if (!closed[goal]) return {};
  std::vector<int> path;
  for (int v = goal; v != -1; v = parent[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  if (out_length) *out_length = dist[goal];
  return path;
}

}  // namespace detail

// h = a_mix * L + (1 - a_mix) * K, lower is better. K is the mean distance
// from the path's nodes to the nearest node occupied by an existing wire,
// zero when no wires exist yet.
inline double heuristic_score(const std::vector<Vec3>& path_positions,
                              double path_length,
                              const std::vector<Vec3>& occupied_positions,
                              double a_mix) {
  if (a_mix < 0.0 || a_mix > 1.0)
    throw std::invalid_argument("heuristic_score: a_mix must be in [0,1]");
  double k = 0.0;
  if (!occupied_positions.empty() && !path_positions.empty()) {
    double acc = 0.0;
    for (const auto& p : path_positions) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& o : occupied_positions) best = std::min(best, distance(p, o));
      acc += best;
    }
    k = acc / static_cast<double>(path_positions.size());
  }
  return a_mix * path_length + (1.0 - a_mix) * k;
}

struct RouteResult {
  std::vector<WirePath> wires;
  // alive node count before routing and after each committed wire; strictly
  // decreasing by construction
  std::vector<int> node_counts;
};

// Greedy global-minimum routing: every iteration scores the A*-optimal
// candidate for each unrouted (electrode, port) pair, commits the best one,
// removes its nodes and every edge within `clearance` of them, and repeats.
// Ties break by (electrode_id, port_id) ascending.
inline RouteResult route_all(const RoutingGraph& graph, const std::vector<Port>& ports,
                             const std::vector<Electrode>& electrodes, double a_mix,
                             double clearance) {
  if (a_mix < 0.0 || a_mix > 1.0)
    throw std::invalid_argument("route_all: a_mix must be in [0,1]");
  if (ports.size() < electrodes.size())
    throw std::invalid_argument("route_all: need at least as many ports as electrodes");

  std::vector<char> node_alive(graph.nodes.size(), 1);
  std::vector<char> edge_alive(graph.edges.size(), 1);
  std::vector<char> port_used(ports.size(), 0);

  std::vector<int> unrouted;
  for (const auto& e : electrodes) unrouted.push_back(e.id);
  std::sort(unrouted.begin(), unrouted.end());

  std::vector<Vec3> occupied;
  RouteResult result;
  result.node_counts.push_back(static_cast<int>(graph.nodes.size()));

  while (!unrouted.empty()) {
    struct Candidate {
      double h = std::numeric_limits<double>::infinity();
      int electrode_id = -1;
      int port_index = -1;
      std::vector<int> path;
      double length = 0.0;
    };
    Candidate best;
    for (int eid : unrouted) {
      int enode = graph.electrode_terminals.at(eid);
      bool reachable = false;
      for (size_t pi = 0; pi < ports.size(); ++pi) {
        if (port_used[pi]) continue;
        int pnode = ports[pi].node;
        if (pnode < 0 || pnode >= static_cast<int>(graph.nodes.size()))
          throw std::invalid_argument("route_all: port is not bound to a graph node");
        double len = 0.0;
        auto path = detail::astar(graph, node_alive, edge_alive, enode, pnode, &len);
        if (path.empty()) continue;
        reachable = true;
        std::vector<Vec3> pos;
        pos.reserve(path.size());
        for (int nidx : path) pos.push_back(graph.nodes[nidx].pos);
        double h = heuristic_score(pos, len, occupied, a_mix);
        if (h < best.h) {
          best = {h, eid, static_cast<int>(pi), std::move(path), len};
        }
      }
      if (!reachable) throw UnroutableError(eid);
    }

    WirePath wire;
    wire.port_id = ports[best.port_index].id;
    wire.electrode_id = best.electrode_id;
    wire.node_sequence = best.path;
    wire.length = best.length;
    result.wires.push_back(wire);
    port_used[best.port_index] = 1;
    unrouted.erase(std::remove(unrouted.begin(), unrouted.end(), best.electrode_id),
                   unrouted.end());

    // prune: occupied nodes go dead, and so does any edge passing within
    // clearance of them
    std::vector<Vec3> new_nodes;
    for (int nidx : best.path) {
      node_alive[nidx] = 0;
      occupied.push_back(graph.nodes[nidx].pos);
      new_nodes.push_back(graph.nodes[nidx].pos);
    }
    if (clearance > 0.0) {
      for (size_t ei = 0; ei < graph.edges.size(); ++ei) {
        if (!edge_alive[ei]) continue;
        const auto& e = graph.edges[ei];
        for (const auto& p : new_nodes) {
          if (point_segment_distance(p, graph.nodes[e.a].pos, graph.nodes[e.b].pos) <
              clearance) {
            edge_alive[ei] = 0;
            break;
          }
        }
      }
    }
    int alive = 0;
    for (char c : node_alive) alive += c;
    result.node_counts.push_back(alive);
  }
  // stable output order: by electrode id
  std::sort(result.wires.begin(), result.wires.end(),
            [](const WirePath& a, const WirePath& b) {
              return a.electrode_id < b.electrode_id;
            });
  return result;
}

struct TubedWire {
  std::vector<Vec3> centerline;
  double radius = 0.0;
  double length = 0.0;  // numeric arc length of the smoothed centerline
};

// Smooths a wire's node polyline into a printable tube centerline. Control
// points are the endpoints plus each segment midpoint, so corners are cut
// rather than interpolated; a straight path stays straight.
inline TubedWire tube_wire(const std::vector<Vec3>& path_points, double profile_radius,
                           int smoothing_samples = 8) {
  if (profile_radius <= 0.0)
    throw std::invalid_argument("tube_wire: profile_radius must be > 0");
  if (path_points.size() < 2)
    throw std::invalid_argument("tube_wire: need at least 2 path points");
  std::vector<Vec3> controls;
  controls.push_back(path_points.front());
  for (size_t i = 0; i + 1 < path_points.size(); ++i)
    controls.push_back((path_points[i] + path_points[i + 1]) * 0.5);
  controls.push_back(path_points.back());
  TubedWire out;
  out.centerline = smooth_open_path(controls, std::max(smoothing_samples, 2));
  out.radius = profile_radius;
  out.length = polyline_length(out.centerline);
  return out;
}

}  // namespace gentact
