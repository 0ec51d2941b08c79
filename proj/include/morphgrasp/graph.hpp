#pragma once

// Functional partitioning of URDF joints into semantic nodes and the
// morphology-aligned hand graph with its normalized adjacency.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "morphgrasp/core.hpp"
#include "morphgrasp/urdf.hpp"

namespace morphgrasp {

enum class NodeType { Fingertip, Distal, Middle, Proximal, Metacarpal, Wrist };

inline const char* node_type_name(NodeType t) {
  switch (t) {
    case NodeType::Fingertip: return "fingertip";
    case NodeType::Distal: return "distal";
    case NodeType::Middle: return "middle";
    case NodeType::Proximal: return "proximal";
    case NodeType::Metacarpal: return "metacarpal";
    case NodeType::Wrist: return "wrist";
  }
  return "?";
}

inline std::optional<NodeType> node_type_from_name(const std::string& s) {
  for (NodeType t : {NodeType::Fingertip, NodeType::Distal, NodeType::Middle,
                     NodeType::Proximal, NodeType::Metacarpal, NodeType::Wrist})
    if (s == node_type_name(t)) return t;
  return std::nullopt;
}

// Depth from the wrist along a root-to-leaf path; used to check that node
// types never reverse along a finger.
inline int node_type_rank(NodeType t) {
  switch (t) {
    case NodeType::Wrist: return 0;
    case NodeType::Metacarpal: return 1;
    case NodeType::Proximal: return 2;
    case NodeType::Middle: return 3;
    case NodeType::Distal: return 4;
    case NodeType::Fingertip: return 5;
  }
  return -1;
}

struct SemanticGroup {
  FingerLabel finger = FingerLabel::Wrist;
  NodeType type = NodeType::Wrist;
  std::vector<int> joints;   // member moving joints, chain order (<= 3)
  int anchor_joint = -1;     // first joint in chain order; -1 if link-anchored
  int anchor_link = -1;      // used when anchor_joint < 0
  int chain = -1;            // index into FingerChains, -1 for the wrist group
  int chain_pos = -1;        // position of the anchor joint within its chain
};

struct SemanticNodeAssignment {
  std::vector<SemanticGroup> groups;  // group g becomes node g
  std::vector<int> joint_to_node;     // per tree joint, -1 if unassigned
};

struct PartitionOverride {
  int joint;
  FingerLabel finger;
  NodeType type;
};

struct PartitionConfig {
  double merge_radius = 0.015;  // anchors closer than this share a node
  int max_group_size = 3;
};

inline SemanticNodeAssignment partition_functional(
    const KinematicTree& tree, const FingerChains& chains,
    const std::vector<PartitionOverride>& overrides = {},
    const PartitionConfig& cfg = {}) {
  SemanticNodeAssignment out;
  out.joint_to_node.assign(tree.joints.size(), -1);

  // Wrist group first; it is always node 0.
  SemanticGroup wrist;
  wrist.finger = FingerLabel::Wrist;
  wrist.type = NodeType::Wrist;
  wrist.anchor_link = chains.wrist_link >= 0 ? chains.wrist_link : tree.root_link;
  out.groups.push_back(wrist);

  {
    std::vector<char> seen(tree.joints.size(), 0);
    for (const auto& ov : overrides) {
      if (ov.joint < 0 || ov.joint >= int(tree.joints.size()) || seen[ov.joint])
        throw Error(ErrorCode::OverrideConflict,
                    "joint " + std::to_string(ov.joint));
      seen[ov.joint] = 1;
    }
  }
  std::map<int, std::pair<FingerLabel, NodeType>> ov_map;
  for (const auto& ov : overrides) ov_map[ov.joint] = {ov.finger, ov.type};

  for (size_t ci = 0; ci < chains.chains.size(); ++ci) {
    const FingerChain& chain = chains.chains[ci];
    std::vector<int> moving;
    for (int j : chain.joints)
      if (tree.joints[j].moves()) moving.push_back(j);

    // Greedy merge of co-located joints walking the chain outward.
    struct Group { std::vector<int> joints; Vec3 anchor; int pos; };
    std::vector<Group> groups;
    for (size_t k = 0; k < moving.size(); ++k) {
      int j = moving[k];
      Vec3 a = tree.joint_anchor(j);
      if (!groups.empty() &&
          int(groups.back().joints.size()) < cfg.max_group_size &&
          (a - groups.back().anchor).norm() <= cfg.merge_radius) {
        groups.back().joints.push_back(j);
      } else {
        groups.push_back({{j}, a, int(k)});
      }
    }

    // Types assigned from the distal end inward; middle and metacarpal are
    // skipped on short chains.
    auto chain_types = [](int k) {
      std::vector<NodeType> t;
      switch (k) {
        case 1: t = {NodeType::Distal}; break;
        case 2: t = {NodeType::Proximal, NodeType::Distal}; break;
        case 3: t = {NodeType::Proximal, NodeType::Middle, NodeType::Distal}; break;
        default:
          for (int i = 0; i < k - 3; ++i) t.push_back(NodeType::Metacarpal);
          t.push_back(NodeType::Proximal);
          t.push_back(NodeType::Middle);
          t.push_back(NodeType::Distal);
      }
      return t;
    };
    auto types = chain_types(int(groups.size()));
    for (size_t g = 0; g < groups.size(); ++g) {
      SemanticGroup sg;
      sg.finger = chain.label;
      sg.type = types[g];
      sg.joints = groups[g].joints;
      sg.anchor_joint = groups[g].joints.front();
      sg.chain = int(ci);
      sg.chain_pos = groups[g].pos;
      out.groups.push_back(sg);
    }

    // Jointless fingertip node anchored at the tip link of the chain.
    SemanticGroup tip;
    tip.finger = chain.label;
    tip.type = NodeType::Fingertip;
    tip.anchor_link = tree.joints[chain.joints.back()].child_link;
    tip.chain = int(ci);
    tip.chain_pos = int(chain.joints.size());
    out.groups.push_back(tip);
  }

  // Apply overrides: move each overridden joint into the group matching its
  // (finger, type), creating one when needed.
  for (const auto& [j, key] : ov_map) {
    for (auto& g : out.groups) {
      auto it = std::find(g.joints.begin(), g.joints.end(), j);
      if (it != g.joints.end()) g.joints.erase(it);
    }
    auto target = std::find_if(out.groups.begin(), out.groups.end(),
                               [&](const SemanticGroup& g) {
                                 return g.finger == key.first && g.type == key.second;
                               });
    if (target == out.groups.end()) {
      SemanticGroup g;
      g.finger = key.first;
      g.type = key.second;
      g.joints = {j};
      g.anchor_joint = j;
      out.groups.push_back(g);
    } else {
      if (int(target->joints.size()) >= cfg.max_group_size)
        throw Error(ErrorCode::TooManyJointsInGroup,
                    std::string(finger_label_name(key.first)) + "-" +
                        node_type_name(key.second));
      target->joints.push_back(j);
      std::sort(target->joints.begin(), target->joints.end());
    }
  }
  // Drop emptied joint groups and refresh anchors.
  std::vector<SemanticGroup> kept;
  for (auto& g : out.groups) {
    if (g.type != NodeType::Wrist && g.type != NodeType::Fingertip &&
        g.joints.empty())
      continue;
    if (!g.joints.empty()) g.anchor_joint = g.joints.front();
    kept.push_back(g);
  }
  out.groups = std::move(kept);

  for (size_t g = 0; g < out.groups.size(); ++g)
    for (int j : out.groups[g].joints) out.joint_to_node[j] = int(g);
  return out;
}

// ---------------------------------------------------------------------------

struct HandGraph {
  int node_count = 0;
  std::vector<NodeType> types;
  std::vector<FingerLabel> fingers;
  std::vector<std::vector<int>> node_joints;
  std::vector<int> anchor_joint;  // -1 when link-anchored
  std::vector<int> anchor_link;   // valid when anchor_joint < 0
  std::vector<int> parent;        // parent node, -1 for the wrist
  Matd adjacency;                 // A[i][j] = 1 iff i is the parent of j
  int wrist_node = 0;

  Vec3 anchor_position(const KinematicTree& tree,
                       const std::vector<Pose>& link_poses, int node) const {
    if (anchor_joint[node] >= 0) {
      const Joint& j = tree.joints[anchor_joint[node]];
      return link_poses[j.parent_link].apply(j.origin_xyz);
    }
    return link_poses[anchor_link[node]].translation;
  }
};

inline HandGraph build_graph(const KinematicTree& tree,
                             const SemanticNodeAssignment& assignment) {
  const int n = int(assignment.groups.size());
  HandGraph g;
  g.node_count = n;
  g.adjacency = Matd(n, n);
  g.parent.assign(n, -1);
  for (const auto& grp : assignment.groups) {
    g.types.push_back(grp.type);
    g.fingers.push_back(grp.finger);
    g.node_joints.push_back(grp.joints);
    g.anchor_joint.push_back(grp.anchor_joint);
    g.anchor_link.push_back(grp.anchor_link);
    if (grp.type == NodeType::Wrist) g.wrist_node = int(g.types.size()) - 1;
  }

  // Parent of a node: walk up the kinematic tree from the anchor until a
  // link owned by another group (or the wrist) is reached.
  auto owner_of_link = [&](int link) -> int {
    for (int ni = 0; ni < n; ++ni)
      for (int j : assignment.groups[ni].joints)
        if (tree.joints[j].child_link == link) return ni;
    return -1;
  };
  for (int ni = 0; ni < n; ++ni) {
    const SemanticGroup& grp = assignment.groups[ni];
    if (grp.type == NodeType::Wrist) continue;
    int link = grp.anchor_joint >= 0
                   ? tree.joints[grp.anchor_joint].parent_link
                   : grp.anchor_link;
    // A link-anchored fingertip starts its walk above its own anchor link.
    if (grp.anchor_joint < 0 && tree.links[link].parent_joint >= 0)
      link = tree.joints[tree.links[link].parent_joint].parent_link;
    int parent = -1;
    for (;;) {
      int owner = owner_of_link(link);
      if (owner >= 0 && owner != ni) { parent = owner; break; }
      if (link == g.anchor_link[g.wrist_node] || tree.links[link].parent_joint < 0) {
        parent = g.wrist_node;
        break;
      }
      link = tree.joints[tree.links[link].parent_joint].parent_link;
    }
    if (parent == ni || parent < 0)
      throw Error(ErrorCode::DisconnectedNode, std::to_string(ni));
    g.parent[ni] = parent;
    g.adjacency(parent, ni) = 1.0;
  }

  // Sanity: every non-wrist node found a parent and types never reverse.
  for (int ni = 0; ni < n; ++ni) {
    if (ni == g.wrist_node) continue;
    if (g.parent[ni] < 0)
      throw Error(ErrorCode::DisconnectedNode, std::to_string(ni));
    if (node_type_rank(g.types[ni]) < node_type_rank(g.types[g.parent[ni]]))
      throw Error(ErrorCode::InvalidConfig,
                  "node type order reversed at node " + std::to_string(ni));
  }
  return g;
}

// ---------------------------------------------------------------------------

// GCN normalized adjacency with self-loops. Message passing is undirected by
// default; the directed variant keeps the parent-indexed matrix as-is.
inline Matd normalize_adjacency(const Matd& a, bool symmetrize = true) {
  const int n = a.rows;
  Matd at(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double v = a(i, j);
      if (symmetrize) v = (a(i, j) != 0.0 || a(j, i) != 0.0) ? 1.0 : 0.0;
      at(i, j) = v;
    }
  for (int i = 0; i < n; ++i) at(i, i) += 1.0;
  std::vector<double> deg(n);
  for (int i = 0; i < n; ++i) {
    double d = 0;
    for (int j = 0; j < n; ++j) d += at(i, j);
    deg[i] = d;
  }
  // dividing by sqrt(d_i * d_j) keeps integer-degree entries exact (1/2, 1/3)
  Matd out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out(i, j) = at(i, j) / std::sqrt(deg[i] * deg[j]);
  return out;
}

inline HandGraph permute_graph(const HandGraph& g, const std::vector<int>& perm) {
  const int n = g.node_count;
  if (int(perm.size()) != n)
    throw Error(ErrorCode::InvalidPermutation, "size mismatch");
  std::vector<char> seen(n, 0);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[p])
      throw Error(ErrorCode::InvalidPermutation, "not a bijection");
    seen[p] = 1;
  }
  // perm[i] = new index of old node i
  HandGraph out;
  out.node_count = n;
  out.types.resize(n);
  out.fingers.resize(n);
  out.node_joints.resize(n);
  out.anchor_joint.resize(n);
  out.anchor_link.resize(n);
  out.parent.assign(n, -1);
  out.adjacency = Matd(n, n);
  for (int i = 0; i < n; ++i) {
    int ni = perm[i];
    out.types[ni] = g.types[i];
    out.fingers[ni] = g.fingers[i];
    out.node_joints[ni] = g.node_joints[i];
    out.anchor_joint[ni] = g.anchor_joint[i];
    out.anchor_link[ni] = g.anchor_link[i];
    if (g.parent[i] >= 0) out.parent[ni] = perm[g.parent[i]];
    for (int j = 0; j < n; ++j)
      out.adjacency(perm[i], perm[j]) = g.adjacency(i, j);
  }
  out.wrist_node = perm[g.wrist_node];
  return out;
}

}  // namespace morphgrasp
