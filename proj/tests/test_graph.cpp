#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "morphgrasp/cli.hpp"

using namespace morphgrasp;

namespace {

std::string fixture(const std::string& name, const char* ext) {
  return std::string(FIXTURE_DIR) + "/" + name + ext;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Compiled {
  KinematicTree tree;
  FingerChains chains;
  SemanticNodeAssignment assignment;
  HandGraph graph;
};

Compiled compile_fixture(const std::string& name) {
  Compiled c;
  c.tree = parse_urdf(read_file(fixture(name, ".urdf")));
  CompileOptions opt = load_meta(fixture(name, ".meta.json"));
  c.chains = resolve_chains(c.tree, opt.hints);
  c.assignment =
      partition_functional(c.tree, c.chains, opt.overrides, opt.partition);
  c.graph = build_graph(c.tree, c.assignment);
  return c;
}

// Independent normalized-adjacency oracle: symmetrize, add self-loops,
// then D^(-1/2) (A + I) D^(-1/2) entry by entry.
Matd brute_force_norm(const Matd& a) {
  int n = a.rows;
  Matd at(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      at(i, j) = (a(i, j) != 0.0 || a(j, i) != 0.0) ? 1.0 : 0.0;
  for (int i = 0; i < n; ++i) at(i, i) += 1.0;
  std::vector<double> deg(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) deg[i] += at(i, j);
  Matd out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out(i, j) = at(i, j) / (std::sqrt(deg[i]) * std::sqrt(deg[j]));
  return out;
}

}  // namespace

TEST_CASE("partition reproduces the frozen fixture node tables") {
  struct Expect {
    std::string name;
    int nodes, dof;
    std::vector<NodeType> types;
  };
  using NT = NodeType;
  std::vector<Expect> cases = {
      {"toy2f", 7, 4,
       {NT::Wrist, NT::Proximal, NT::Distal, NT::Fingertip, NT::Proximal,
        NT::Distal, NT::Fingertip}},
      {"toy_gripper", 5, 2,
       {NT::Wrist, NT::Distal, NT::Fingertip, NT::Distal, NT::Fingertip}},
      {"toy3f_abd", 13, 9,
       {NT::Wrist, NT::Proximal, NT::Middle, NT::Distal, NT::Fingertip,
        NT::Proximal, NT::Middle, NT::Distal, NT::Fingertip, NT::Proximal,
        NT::Middle, NT::Distal, NT::Fingertip}},
      {"toy_mimic", 7, 3,
       {NT::Wrist, NT::Proximal, NT::Distal, NT::Fingertip, NT::Proximal,
        NT::Distal, NT::Fingertip}},
  };
  for (const auto& e : cases) {
    INFO(e.name);
    Compiled c = compile_fixture(e.name);
    REQUIRE(c.graph.node_count == e.nodes);
    CHECK(c.tree.dof() == e.dof);
    for (int i = 0; i < e.nodes; ++i) CHECK(c.graph.types[i] == e.types[i]);
    CHECK(c.graph.wrist_node == 0);
    // edge count of a tree
    double edges = 0;
    for (double v : c.graph.adjacency.data) edges += v;
    CHECK(edges == double(e.nodes - 1));
  }
}

TEST_CASE("co-located joints merge into one node") {
  Compiled c = compile_fixture("toy_allegro");
  REQUIRE(c.graph.node_count == 17);
  // each finger root holds both the abduction and flexion joint
  for (int base : {1, 5, 9, 13}) {
    INFO("node " << base);
    CHECK(c.graph.types[base] == NodeType::Proximal);
    CHECK(c.graph.node_joints[base].size() == 2);
  }
  // fingertip nodes are jointless and link-anchored
  for (int tip : {4, 8, 12, 16}) {
    CHECK(c.graph.types[tip] == NodeType::Fingertip);
    CHECK(c.graph.node_joints[tip].empty());
    CHECK(c.graph.anchor_joint[tip] < 0);
    CHECK(c.graph.anchor_link[tip] >= 0);
  }
}

TEST_CASE("mimic joints occupy nodes without being actuated") {
  Compiled c = compile_fixture("toy_mimic");
  int pip = c.tree.joint_index("coupled_pip");
  CHECK(c.assignment.joint_to_node[pip] == 2);
  CHECK(c.graph.types[2] == NodeType::Distal);
}

TEST_CASE("partition overrides move joints between groups") {
  Compiled c = compile_fixture("toy2f");
  // push the thumb pip joint into the proximal node
  std::vector<PartitionOverride> ov = {
      {c.tree.joint_index("thumb_pip"), FingerLabel::Thumb, NodeType::Proximal}};
  auto a = partition_functional(c.tree, c.chains, ov, {});
  HandGraph g = build_graph(c.tree, a);
  CHECK(g.node_count == 6);  // distal thumb node collapsed away
  CHECK(g.node_joints[1].size() == 2);

  // duplicate override entries conflict
  std::vector<PartitionOverride> dup = {ov[0], ov[0]};
  CHECK_THROWS_MATCHES(partition_functional(c.tree, c.chains, dup, {}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::OverrideConflict;
                       }));
}

TEST_CASE("groups refuse more than three joints") {
  Compiled c = compile_fixture("toy2f");
  std::vector<PartitionOverride> ov;
  for (const char* j : {"thumb_pip", "index_mcp", "index_pip"})
    ov.push_back({c.tree.joint_index(j), FingerLabel::Thumb, NodeType::Proximal});
  CHECK_THROWS_MATCHES(partition_functional(c.tree, c.chains, ov, {}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::TooManyJointsInGroup;
                       }));
}

TEST_CASE("graph parents follow the kinematic structure") {
  Compiled c = compile_fixture("toy2f");
  const HandGraph& g = c.graph;
  CHECK(g.parent[0] == -1);
  CHECK(g.parent[1] == 0);  // thumb proximal hangs off the wrist
  CHECK(g.parent[2] == 1);
  CHECK(g.parent[3] == 2);  // fingertip under the distal node
  CHECK(g.parent[4] == 0);
  CHECK(g.parent[5] == 4);
  CHECK(g.parent[6] == 5);
  for (int i = 0; i < g.node_count; ++i)
    for (int j = 0; j < g.node_count; ++j)
      CHECK(g.adjacency(i, j) == (g.parent[j] == i ? 1.0 : 0.0));
}

TEST_CASE("normalized adjacency matches the closed-form examples") {
  // single edge 0-1
  Matd a(2, 2);
  a(0, 1) = 1.0;
  Matd n = normalize_adjacency(a);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(n(i, j) == 0.5);

  // path 0-1-2
  Matd p(3, 3);
  p(0, 1) = 1.0;
  p(1, 2) = 1.0;
  Matd np = normalize_adjacency(p);
  CHECK(np(0, 0) == Catch::Approx(0.5).margin(1e-15));
  CHECK(np(2, 2) == Catch::Approx(0.5).margin(1e-15));
  CHECK(np(1, 1) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(np(0, 1) == Catch::Approx(1.0 / std::sqrt(6.0)).margin(1e-15));
  CHECK(np(1, 0) == np(0, 1));
  CHECK(np(0, 2) == 0.0);
}

TEST_CASE("normalized adjacency matches the brute-force oracle on random trees") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + int(rng() % 19);
    Matd a(n, n);
    for (int i = 1; i < n; ++i) a(int(rng() % i), i) = 1.0;
    Matd got = normalize_adjacency(a);
    Matd want = brute_force_norm(a);
    for (size_t k = 0; k < got.data.size(); ++k)
      CHECK(std::abs(got.data[k] - want.data[k]) < 1e-12);
  }
}

TEST_CASE("graph permutation relabels consistently and validates input") {
  Compiled c = compile_fixture("toy_gripper");
  std::vector<int> perm = {4, 2, 0, 3, 1};
  HandGraph p = permute_graph(c.graph, perm);
  CHECK(p.wrist_node == perm[c.graph.wrist_node]);
  for (int i = 0; i < c.graph.node_count; ++i) {
    CHECK(p.types[perm[i]] == c.graph.types[i]);
    CHECK(p.fingers[perm[i]] == c.graph.fingers[i]);
    if (c.graph.parent[i] >= 0)
      CHECK(p.parent[perm[i]] == perm[c.graph.parent[i]]);
    for (int j = 0; j < c.graph.node_count; ++j)
      CHECK(p.adjacency(perm[i], perm[j]) == c.graph.adjacency(i, j));
  }
  CHECK_THROWS_MATCHES(permute_graph(c.graph, {0, 1, 2}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::InvalidPermutation;
                       }));
  CHECK_THROWS_AS(permute_graph(c.graph, {0, 0, 1, 2, 3}), Error);
}
