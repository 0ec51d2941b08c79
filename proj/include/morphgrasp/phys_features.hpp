#pragma once

// Static URDF priors per semantic node: the node features of the
// physical-property graph.

#include <vector>

#include "morphgrasp/core.hpp"
#include "morphgrasp/graph.hpp"
#include "morphgrasp/kinematics.hpp"
#include "morphgrasp/primitive_map.hpp"

namespace morphgrasp {

// Row layout (27 columns):
//   [0..5]   normalized limits (flex lo/hi, abd lo/hi, rot lo/hi)
//   [6..14]  primitive axis directions in palm coords (flex, abd, rot)
//   [15..20] normalized velocity bounds, lower = -upper, same slot order
//   [21..23] per-axis damping
//   [24..26] parent-to-node link vector, palm coords, meters
inline constexpr int kPhysicalFeatureDim = 27;

struct PhysicalFeatureConfig {
  double limit_norm = std::numbers::pi;  // limits normalized by pi
  double velocity_ref = 10.0;            // rad/s
};

inline Matd build_physical_features(const KinematicTree& tree,
                                    const HandGraph& graph,
                                    const PrimitiveMapping& mapping,
                                    const PalmFrame& palm,
                                    const PhysicalFeatureConfig& cfg = {}) {
  if (mapping.node_count != graph.node_count)
    throw Error(ErrorCode::InconsistentHand,
                "mapping has " + std::to_string(mapping.node_count) +
                    " nodes, graph has " + std::to_string(graph.node_count));
  const int n = graph.node_count;
  Matd x(n, kPhysicalFeatureDim);

  auto zero_q = std::vector<double>(tree.dof(), 0.0);
  auto poses = forward_kinematics(tree, zero_q);

  auto clip1 = [](double v) { return std::clamp(v, -1.0, 1.0); };

  for (const auto& e : mapping.entries) {
    const Joint& j = tree.joints[e.joint];
    int p = int(e.primitive);
    x(e.node, 2 * p + 0) = clip1(j.lower / cfg.limit_norm);
    x(e.node, 2 * p + 1) = clip1(j.upper / cfg.limit_norm);
    // world direction of the joint axis at zero pose
    Mat3 rot = (poses[j.parent_link] * j.origin()).rotation;
    Vec3 axis = palm.coords(rot * j.axis);
    x(e.node, 6 + 3 * p + 0) = axis.x;
    x(e.node, 6 + 3 * p + 1) = axis.y;
    x(e.node, 6 + 3 * p + 2) = axis.z;
    double v = clip1(j.velocity / cfg.velocity_ref);
    x(e.node, 15 + 2 * p + 0) = -v;
    x(e.node, 15 + 2 * p + 1) = v;
    x(e.node, 21 + p) = j.damping;
  }

  // Wrist row: palm basis as the three axis slots, everything else zero.
  for (int p = 0; p < 3; ++p) x(graph.wrist_node, 6 + 3 * p + p) = 1.0;

  for (int ni = 0; ni < n; ++ni) {
    if (ni == graph.wrist_node) continue;
    Vec3 self = graph.anchor_position(tree, poses, ni);
    Vec3 par = graph.anchor_position(tree, poses, graph.parent[ni]);
    Vec3 l = palm.coords(self - par);
    x(ni, 24) = l.x;
    x(ni, 25) = l.y;
    x(ni, 26) = l.z;
  }
  return x;
}

}  // namespace morphgrasp
