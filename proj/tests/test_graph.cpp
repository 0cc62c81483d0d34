#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <tuple>

#include "ftaed/graph.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace ftaed;

namespace {

std::set<std::tuple<int, int, int>> edge_set(const GraphTopology& topo) {
  std::set<std::tuple<int, int, int>> s;
  for (const auto& e : topo.edges) s.insert({e.u, e.v, e.relation});
  REQUIRE(s.size() == topo.edges.size());  // no duplicate edges
  return s;
}

}  // namespace

TEST_CASE("static topology matches exhaustive enumeration") {
  struct Case {
    int mm, lanes;
  };
  for (Case c : {Case{1, 1}, Case{1, 4}, Case{2, 1}, Case{3, 2}, Case{5, 3},
                 Case{49, 4}}) {
    GraphTopology topo = build_static_topology(c.mm, c.lanes);
    REQUIRE(topo.n_nodes == c.mm * c.lanes);
    REQUIRE(topo.n_relations == 2);
    REQUIRE(topo.n_slices == 1);
    REQUIRE(topo.is_static());
    REQUIRE(edge_set(topo) == oracle::enumerate_edges(c.mm, c.lanes, 1));
    // closed form: lateral pairs within a milemarker plus longitudinal
    // pairs between consecutive milemarkers (all lane combinations)
    std::size_t expect = std::size_t(c.mm) * (c.lanes - 1) +
                         std::size_t(c.mm - 1) * c.lanes * c.lanes;
    REQUIRE(topo.edges.size() == expect);
  }
}

TEST_CASE("deployment-size static topology") {
  GraphTopology topo = build_static_topology(49, 4);
  REQUIRE(topo.n_nodes == 196);
  REQUIRE(topo.edges.size() == 915);
}

TEST_CASE("spatiotemporal topology matches exhaustive enumeration") {
  struct Case {
    int mm, lanes, k;
  };
  for (Case c : {Case{1, 1, 1}, Case{3, 2, 1}, Case{3, 2, 2}, Case{2, 3, 4},
                 Case{5, 2, 3}}) {
    GraphTopology base = build_static_topology(c.mm, c.lanes);
    GraphTopology topo = build_st_topology(base, c.k);
    REQUIRE(topo.n_nodes == c.mm * c.lanes * (c.k + 1));
    REQUIRE(topo.n_slices == c.k + 1);
    REQUIRE(topo.n_relations == 5);
    REQUIRE(topo.n_base_nodes() == c.mm * c.lanes);
    REQUIRE(edge_set(topo) == oracle::enumerate_edges(c.mm, c.lanes, c.k + 1));
  }
}

TEST_CASE("deployment-size spatiotemporal topology") {
  GraphTopology topo = build_st_topology(build_static_topology(49, 4), 8);
  REQUIRE(topo.n_nodes == 1764);
  REQUIRE(topo.current_slice_begin() == 8 * 196);
  REQUIRE(edge_set(topo) == oracle::enumerate_edges(49, 4, 9));
}

TEST_CASE("relations partition the edge set") {
  GraphTopology topo = build_st_topology(build_static_topology(4, 3), 2);
  std::vector<std::size_t> per_rel(topo.n_relations, 0);
  for (const auto& e : topo.edges) {
    REQUIRE(e.relation >= 0);
    REQUIRE(e.relation < topo.n_relations);
    ++per_rel[e.relation];
  }
  std::size_t total = 0;
  for (std::size_t c : per_rel) {
    REQUIRE(c > 0);  // every class is populated at this size
    total += c;
  }
  REQUIRE(total == topo.edges.size());
}

TEST_CASE("edges are canonical and ordered") {
  GraphTopology topo = build_st_topology(build_static_topology(5, 4), 3);
  for (const auto& e : topo.edges) REQUIRE(e.u < e.v);
  auto key = [](const GraphEdge& e) {
    return std::tuple<int, int, int>{e.u, e.v, e.relation};
  };
  for (std::size_t i = 1; i < topo.edges.size(); ++i)
    REQUIRE(key(topo.edges[i - 1]) < key(topo.edges[i]));
}

TEST_CASE("zero history collapses to the static graph") {
  GraphTopology base = build_static_topology(4, 2);
  GraphTopology topo = build_st_topology(base, 0);
  REQUIRE(topo.n_slices == 1);
  REQUIRE(topo.n_relations == 2);
  REQUIRE(edge_set(topo) == edge_set(base));
}

TEST_CASE("topology construction rejects bad arguments") {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::UnknownKind;
  };
  REQUIRE(kind_of([] { build_static_topology(0, 4); }) == ErrorKind::EmptyInput);
  REQUIRE(kind_of([] { build_static_topology(3, 0); }) == ErrorKind::EmptyInput);
  GraphTopology st = build_st_topology(build_static_topology(2, 2), 1);
  REQUIRE(kind_of([&] { build_st_topology(st, 1); }) ==
          ErrorKind::ConfigMismatch);
  GraphTopology base = build_static_topology(2, 2);
  REQUIRE(kind_of([&] { build_st_topology(base, -1); }) ==
          ErrorKind::OutOfRangeValue);
}

TEST_CASE("node coordinate helpers invert the id layout") {
  GraphTopology topo = build_st_topology(build_static_topology(3, 4), 2);
  // lanes are 1-based, milemarker index major within a slice
  REQUIRE(topo.base_of(0) == std::pair<int, int>{0, 1});
  REQUIRE(topo.base_of(5) == std::pair<int, int>{1, 2});
  REQUIRE(topo.slice_of(11) == 0);
  REQUIRE(topo.slice_of(12) == 1);
  REQUIRE(topo.base_of(12) == std::pair<int, int>{0, 1});
  REQUIRE(topo.slice_of(topo.n_nodes - 1) == topo.n_slices - 1);
}

TEST_CASE("relation collapse schemes") {
  GraphTopology topo = build_st_topology(build_static_topology(3, 2), 2);

  GraphTopology full = collapse_relations(topo, RelationScheme::Full);
  REQUIRE(edge_set(full) == edge_set(topo));
  REQUIRE(full.n_relations == 5);

  GraphTopology two = collapse_relations(topo, RelationScheme::SpatialTemporal);
  REQUIRE(two.n_relations == 2);
  REQUIRE(two.edges.size() == topo.edges.size());
  for (std::size_t i = 0; i < topo.edges.size(); ++i) {
    int want = topo.edges[i].relation >= 2 ? 1 : 0;
    REQUIRE(two.edges[i].u == topo.edges[i].u);
    REQUIRE(two.edges[i].v == topo.edges[i].v);
    REQUIRE(two.edges[i].relation == want);
  }

  GraphTopology one = collapse_relations(topo, RelationScheme::Single);
  REQUIRE(one.n_relations == 1);
  for (const auto& e : one.edges) REQUIRE(e.relation == 0);
}

TEST_CASE("directed message list doubles each edge") {
  GraphTopology topo = build_st_topology(build_static_topology(3, 3), 1);
  DirectedMessages msgs = directed_messages(topo);
  const std::size_t n = msgs.center.size();
  REQUIRE(n == 2 * topo.edges.size());
  REQUIRE(msgs.neighbor.size() == n);
  REQUIRE(msgs.relation.size() == n);
  std::set<std::tuple<int, int, int>> seen;
  for (std::size_t i = 0; i < n; ++i)
    seen.insert({msgs.center[i], msgs.neighbor[i], msgs.relation[i]});
  REQUIRE(seen.size() == n);
  for (const auto& e : topo.edges) {
    REQUIRE(seen.count({e.u, e.v, e.relation}) == 1);
    REQUIRE(seen.count({e.v, e.u, e.relation}) == 1);
  }
  for (std::size_t i = 1; i < n; ++i) {
    auto a = std::pair{msgs.center[i - 1], msgs.neighbor[i - 1]};
    auto b = std::pair{msgs.center[i], msgs.neighbor[i]};
    REQUIRE(a <= b);
  }
}

TEST_CASE("node degrees match the adjacency lists") {
  GraphTopology topo = build_st_topology(build_static_topology(4, 4), 2);
  auto adj = oracle::adjacency_lists(topo);
  auto deg = node_degrees(topo);
  REQUIRE(deg.size() == std::size_t(topo.n_nodes));
  for (int i = 0; i < topo.n_nodes; ++i)
    REQUIRE(deg[i] == int(adj[i].size()));
}

TEST_CASE("topology file round trip") {
  testutil::TempDir dir;
  GraphTopology topo = build_st_topology(build_static_topology(3, 2), 2);
  auto path = dir.file("topo.txt");
  write_topology(path, topo);
  GraphTopology back = read_topology(path);
  REQUIRE(back.n_nodes == topo.n_nodes);
  REQUIRE(back.n_relations == topo.n_relations);
  REQUIRE(edge_set(back) == edge_set(topo));
}

TEST_CASE("topology file rejects malformed input") {
  testutil::TempDir dir;
  auto write_text = [&](const std::string& name, const std::string& body) {
    std::ofstream out(dir.file(name));
    out << body;
    return dir.file(name);
  };
  auto kind_of = [](const std::string& path) {
    try {
      read_topology(path);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::UnknownKind;
  };
  REQUIRE(kind_of(write_text("a", "hello\n0,1,0\n")) ==
          ErrorKind::MissingHeader);
  REQUIRE(kind_of(write_text("b", "nodes=4 relations=2\n0,1\n")) ==
          ErrorKind::MalformedRow);
  REQUIRE(kind_of(write_text("c", "nodes=4 relations=2\n0,9,0\n")) ==
          ErrorKind::MalformedRow);
  REQUIRE(kind_of(write_text("d", "nodes=4 relations=2\n0,1,5\n")) ==
          ErrorKind::MalformedRow);
  REQUIRE(kind_of(write_text("e", "nodes=4 relations=2\n2,1,0\n")) ==
          ErrorKind::MalformedRow);
  REQUIRE(kind_of(dir.file("missing.txt")) == ErrorKind::IoError);
}
