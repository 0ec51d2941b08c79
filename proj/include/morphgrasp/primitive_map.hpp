#pragma once

// The hand-specific primitive-to-joint mapping: identification by unit
// excitation, the derived activation mask, and both directions of the
// indexing rule.

#include <set>
#include <string>
#include <vector>

#include "morphgrasp/core.hpp"
#include "morphgrasp/graph.hpp"
#include "morphgrasp/kinematics.hpp"

namespace morphgrasp {

struct MappingEntry {
  int joint = -1;   // tree joint index
  int node = -1;    // graph node index
  Primitive primitive = Primitive::Flex;
  int sign = +1;
  bool convention_sign = false;
};

struct PrimitiveMapping {
  std::string hand_id;
  int node_count = 0;
  std::vector<MappingEntry> entries;  // command order, one per actuated DoF

  int dof() const { return int(entries.size()); }
};

// N x 3 binary matrix, columns (FLEX, ABD, ROT).
using ActivationMask = Matd;

struct PrimitiveAction {
  Vec3 wrist_translation;  // m
  Vec3 wrist_rotation;     // rad
  Matd node;               // N_h x 3, columns (FLEX, ABD, ROT)
};

struct PhysicalAction {
  Vec3 wrist_translation;
  Vec3 wrist_rotation;
  std::vector<double> dq;  // length L_h, command order
};

struct IdentifyConfig {
  double delta = 0.1;          // excitation magnitude, rad
  double eps_lin_frac = 0.10;  // ROT gate as a fraction of the peak response
  double margin = 0.10;        // ambiguity margin
};

inline PrimitiveMapping identify_mapping(const KinematicTree& tree,
                                         const HandGraph& graph,
                                         const PalmFrame& palm,
                                         const IdentifyConfig& cfg = {}) {
  PrimitiveMapping map;
  map.hand_id = tree.name;
  map.node_count = graph.node_count;

  auto actuated = tree.actuated_joints();
  std::vector<ExcitationResponse> responses;
  responses.reserve(actuated.size());
  double peak = 0;
  for (int j : actuated) {
    responses.push_back(excite_joint(tree, graph, palm, j, cfg.delta));
    peak = std::max(peak, responses.back().linear_magnitude);
  }
  double eps_lin = cfg.eps_lin_frac * peak;

  std::set<std::pair<int, int>> used;
  for (size_t k = 0; k < actuated.size(); ++k) {
    const ExcitationResponse& resp = responses[k];
    Classification c =
        classify_primitive(resp, palm, resp.link_axis, eps_lin, cfg.margin);
    int node = -1;
    for (int ni = 0; ni < graph.node_count; ++ni)
      for (int mj : graph.node_joints[ni])
        if (mj == actuated[k]) node = ni;
    if (!used.insert({node, int(c.primitive)}).second)
      throw Error(ErrorCode::PrimitiveCollision,
                  "node " + std::to_string(node) + " primitive " +
                      primitive_name(c.primitive) + " claimed twice (joint '" +
                      tree.joints[actuated[k]].name + "')");
    map.entries.push_back({actuated[k], node, c.primitive, c.sign,
                           c.convention_sign});
  }
  return map;
}

inline ActivationMask derive_activation_mask(const PrimitiveMapping& mapping) {
  ActivationMask m(mapping.node_count, 3);
  for (const auto& e : mapping.entries) m(e.node, int(e.primitive)) = 1.0;
  return m;
}

inline PhysicalAction primitives_to_physical(const PrimitiveMapping& mapping,
                                             const PrimitiveAction& a) {
  if (a.node.rows != mapping.node_count || a.node.cols != 3)
    throw Error(ErrorCode::DimensionMismatch,
                "action has " + std::to_string(a.node.rows) + " rows, hand has " +
                    std::to_string(mapping.node_count) + " nodes");
  PhysicalAction out;
  out.wrist_translation = a.wrist_translation;
  out.wrist_rotation = a.wrist_rotation;
  out.dq.resize(mapping.entries.size());
  for (size_t j = 0; j < mapping.entries.size(); ++j) {
    const MappingEntry& e = mapping.entries[j];
    out.dq[j] = e.sign * a.node(e.node, int(e.primitive));
  }
  return out;
}

// Right inverse of the indexing rule; also packs joint-space signals (angles,
// velocities) into their primitive slots.
inline Matd embed_physical(const PrimitiveMapping& mapping,
                           const std::vector<double>& dq) {
  if (int(dq.size()) != mapping.dof())
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(dq.size()) + " vs L_h=" +
                    std::to_string(mapping.dof()));
  Matd out(mapping.node_count, 3);
  for (size_t j = 0; j < mapping.entries.size(); ++j) {
    const MappingEntry& e = mapping.entries[j];
    out(e.node, int(e.primitive)) = e.sign * dq[j];
  }
  return out;
}

}  // namespace morphgrasp
