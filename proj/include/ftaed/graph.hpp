#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ftaed/csv.hpp"
#include "ftaed/errors.hpp"

namespace ftaed {

// How two connected nodes are related. Spatial classes live inside a time
// slice; temporal classes join consecutive slices of the spatiotemporal
// graph. Static graphs use only the spatial classes.
enum class RelationClass : int {
  SpatialLateral = 0,        // same milemarker, adjacent lane
  SpatialLongitudinal = 1,   // consecutive milemarker, any lane pair
  TemporalSelf = 2,          // same node, next slice
  TemporalLateral = 3,       // adjacent lane, next slice
  TemporalLongitudinal = 4,  // consecutive milemarker, next slice
};

struct GraphEdge {
  int u = 0;  // u < v; undirected, stored once
  int v = 0;
  int relation = 0;
};

// Node and edge set of the freeway graph, optionally replicated over time
// slices. Node order: slice-major, then milemarker descending, then lane
// ascending; slice 0 is the oldest (t-k), the last slice is the current t.
struct GraphTopology {
  int n_nodes = 0;
  int n_relations = 0;
  int n_milemarkers = 0;
  int n_lanes = 0;
  int n_slices = 1;  // k + 1
  std::vector<GraphEdge> edges;

  int n_base_nodes() const { return n_milemarkers * n_lanes; }
  int slice_of(int node) const { return node / n_base_nodes(); }
  // (milemarker index, lane) of the node inside its slice.
  std::pair<int, int> base_of(int node) const {
    int b = node % n_base_nodes();
    return {b / n_lanes, b % n_lanes + 1};
  }
  int current_slice_begin() const { return (n_slices - 1) * n_base_nodes(); }
  bool is_static() const { return n_slices == 1; }
};

inline GraphTopology build_static_topology(int n_milemarkers, int n_lanes) {
  if (n_milemarkers < 1 || n_lanes < 1)
    fail(ErrorKind::EmptyInput, "need at least one milemarker and lane");
  GraphTopology topo;
  topo.n_milemarkers = n_milemarkers;
  topo.n_lanes = n_lanes;
  topo.n_nodes = n_milemarkers * n_lanes;
  topo.n_relations = 2;
  topo.n_slices = 1;

  auto node = [&](int mm, int lane) { return mm * n_lanes + lane; };
  for (int mm = 0; mm < n_milemarkers; ++mm) {
    // Cars can change to the adjacent lane at the same milemarker.
    for (int lane = 0; lane + 1 < n_lanes; ++lane)
      topo.edges.push_back({node(mm, lane), node(mm, lane + 1),
                            static_cast<int>(RelationClass::SpatialLateral)});
    // Between consecutive milemarkers any lane change is possible.
    if (mm + 1 < n_milemarkers)
      for (int la = 0; la < n_lanes; ++la)
        for (int lb = 0; lb < n_lanes; ++lb)
          topo.edges.push_back(
              {node(mm, la), node(mm + 1, lb),
               static_cast<int>(RelationClass::SpatialLongitudinal)});
  }
  std::sort(topo.edges.begin(), topo.edges.end(),
            [](const GraphEdge& a, const GraphEdge& b) {
              return std::tie(a.u, a.v, a.relation) <
                     std::tie(b.u, b.v, b.relation);
            });
  return topo;
}

// Replicates the static graph over k+1 slices and joins consecutive slices
// with temporal edges (self, lateral, longitudinal). k = 0 returns a copy
// of the base graph.
inline GraphTopology build_st_topology(const GraphTopology& base, int k) {
  if (!base.is_static())
    fail(ErrorKind::ConfigMismatch, "base topology must be static");
  if (k < 0) fail(ErrorKind::OutOfRangeValue, "history length k < 0");

  GraphTopology topo;
  topo.n_milemarkers = base.n_milemarkers;
  topo.n_lanes = base.n_lanes;
  topo.n_slices = k + 1;
  topo.n_nodes = base.n_nodes * (k + 1);
  topo.n_relations = k == 0 ? base.n_relations : 5;

  const int nb = base.n_nodes;
  for (int s = 0; s <= k; ++s)
    for (const auto& e : base.edges)
      topo.edges.push_back({e.u + s * nb, e.v + s * nb, e.relation});

  auto node = [&](int s, int mm, int lane) {
    return s * nb + mm * base.n_lanes + lane;
  };
  for (int s = 0; s + 1 <= k; ++s) {
    for (int mm = 0; mm < base.n_milemarkers; ++mm) {
      for (int lane = 0; lane < base.n_lanes; ++lane) {
        topo.edges.push_back({node(s, mm, lane), node(s + 1, mm, lane),
                              static_cast<int>(RelationClass::TemporalSelf)});
        for (int dl : {-1, 1}) {
          int lb = lane + dl;
          if (lb < 0 || lb >= base.n_lanes) continue;
          topo.edges.push_back(
              {node(s, mm, lane), node(s + 1, mm, lb),
               static_cast<int>(RelationClass::TemporalLateral)});
        }
        for (int dm : {-1, 1}) {
          int mb = mm + dm;
          if (mb < 0 || mb >= base.n_milemarkers) continue;
          for (int lb = 0; lb < base.n_lanes; ++lb)
            topo.edges.push_back(
                {node(s, mm, lane), node(s + 1, mb, lb),
                 static_cast<int>(RelationClass::TemporalLongitudinal)});
        }
      }
    }
  }
  for (auto& e : topo.edges)
    if (e.u > e.v) std::swap(e.u, e.v);
  std::sort(topo.edges.begin(), topo.edges.end(),
            [](const GraphEdge& a, const GraphEdge& b) {
              return std::tie(a.u, a.v, a.relation) <
                     std::tie(b.u, b.v, b.relation);
            });
  return topo;
}

// Alternative relation taxonomies, mostly for ablation: collapse the five
// canonical classes down to coarser ones.
enum class RelationScheme {
  Full,             // 5 classes as built
  SpatialTemporal,  // 2 classes: spatial vs temporal
  Single,           // 1 class
};

inline GraphTopology collapse_relations(const GraphTopology& topo,
                                        RelationScheme scheme) {
  GraphTopology out = topo;
  switch (scheme) {
    case RelationScheme::Full:
      return out;
    case RelationScheme::SpatialTemporal:
      for (auto& e : out.edges) e.relation = e.relation >= 2 ? 1 : 0;
      out.n_relations = 2;
      return out;
    case RelationScheme::Single:
      for (auto& e : out.edges) e.relation = 0;
      out.n_relations = 1;
      return out;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Directed message view
// ---------------------------------------------------------------------------

// One undirected edge expands to two directed messages of the same relation
// class. Messages are sorted by (center, neighbor) so per-center segments
// are contiguous, which SegmentSoftmax and scatter aggregation rely on.
struct DirectedMessages {
  std::vector<int> center;    // destination node per message
  std::vector<int> neighbor;  // source node per message
  std::vector<int> relation;

  std::size_t size() const { return center.size(); }
};

inline DirectedMessages directed_messages(const GraphTopology& topo) {
  struct M {
    int c, n, r;
  };
  std::vector<M> ms;
  ms.reserve(topo.edges.size() * 2);
  for (const auto& e : topo.edges) {
    ms.push_back({e.u, e.v, e.relation});
    ms.push_back({e.v, e.u, e.relation});
  }
  std::sort(ms.begin(), ms.end(), [](const M& a, const M& b) {
    return std::tie(a.c, a.n, a.r) < std::tie(b.c, b.n, b.r);
  });
  DirectedMessages out;
  out.center.reserve(ms.size());
  out.neighbor.reserve(ms.size());
  out.relation.reserve(ms.size());
  for (const auto& m : ms) {
    out.center.push_back(m.c);
    out.neighbor.push_back(m.n);
    out.relation.push_back(m.r);
  }
  return out;
}

inline std::vector<int> node_degrees(const GraphTopology& topo) {
  std::vector<int> deg(topo.n_nodes, 0);
  for (const auto& e : topo.edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return deg;
}

// ---------------------------------------------------------------------------
// Edge-list export
// ---------------------------------------------------------------------------

inline void write_topology(const std::string& path, const GraphTopology& topo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "nodes=" << topo.n_nodes << " relations=" << topo.n_relations << "\n";
  for (const auto& e : topo.edges)
    out << e.u << ',' << e.v << ',' << e.relation << '\n';
}

// Reads the edge-list format back. Slice/base structure is not part of the
// format; the result is suitable for visualization and cross-checking.
inline GraphTopology read_topology(const std::string& path) {
  csv::Reader reader(path);
  std::string line;
  if (!reader.next_line(line)) fail(ErrorKind::MissingHeader, path);
  GraphTopology topo;
  if (std::sscanf(line.c_str(), "nodes=%d relations=%d", &topo.n_nodes,
                  &topo.n_relations) != 2)
    fail(ErrorKind::MissingHeader, path + ": bad header '" + line + "'");
  topo.n_milemarkers = topo.n_nodes;
  topo.n_lanes = 1;
  std::vector<std::string_view> fields;
  while (reader.next_line(line)) {
    if (line.empty()) continue;
    csv::split_fields(line, fields);
    if (fields.size() != 3)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()));
    auto fu = csv::parse_int_field(fields[0]);
    auto fv = csv::parse_int_field(fields[1]);
    auto fr = csv::parse_int_field(fields[2]);
    if (!fu || !fv || !fr)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()) + ": empty field");
    GraphEdge e{static_cast<int>(*fu), static_cast<int>(*fv),
                static_cast<int>(*fr)};
    if (e.u < 0 || e.v >= topo.n_nodes || e.u >= e.v ||
        e.relation >= topo.n_relations)
      fail(ErrorKind::MalformedRow,
           path + ":" + std::to_string(reader.line_number()) +
               ": edge out of range");
    topo.edges.push_back(e);
  }
  return topo;
}

}  // namespace ftaed
