#pragma once

// Forward kinematics over the parsed tree and the unit-excitation response
// analysis behind joint-to-primitive identification.

#include <cmath>
#include <optional>
#include <vector>

#include "morphgrasp/core.hpp"
#include "morphgrasp/graph.hpp"
#include "morphgrasp/urdf.hpp"

namespace morphgrasp {

// Orthonormal right-handed palm reference: n (palm-inward normal),
// a (abduction plane axis), t (finger-pointing axis); a = t x n.
struct PalmFrame {
  Vec3 origin;
  Vec3 normal{0, 0, 1};
  Vec3 lateral{1, 0, 0};
  Vec3 longitudinal{0, 1, 0};

  // Components of a world vector along (normal, lateral, longitudinal).
  Vec3 coords(const Vec3& v) const {
    return {v.dot(normal), v.dot(lateral), v.dot(longitudinal)};
  }
  Vec3 from_coords(const Vec3& c) const {
    return normal * c.x + lateral * c.y + longitudinal * c.z;
  }
};

inline PalmFrame make_palm_frame(const Vec3& origin, const Vec3& normal,
                                 const Vec3& longitudinal) {
  PalmFrame f;
  f.origin = origin;
  f.normal = normal.normalized();
  Vec3 t = longitudinal - f.normal * longitudinal.dot(f.normal);
  if (t.norm() < 1e-12)
    throw Error(ErrorCode::InvalidConfig, "palm longitudinal parallel to normal");
  f.longitudinal = t.normalized();
  f.lateral = f.longitudinal.cross(f.normal);
  return f;
}

// Geometric fallback when the fixture does not declare a palm frame: the
// longitudinal axis is the mean root-to-tip direction and the lateral axis
// follows the finger-root spread from thumb outward.
inline PalmFrame construct_palm_frame(const KinematicTree& tree,
                                      const FingerChains& chains) {
  Vec3 origin = tree.zero_pose(chains.wrist_link).translation;
  std::vector<Vec3> roots, tips;
  for (const auto& chain : chains.chains) {
    std::optional<Vec3> root;
    for (int j : chain.joints)
      if (tree.joints[j].moves()) {
        root = tree.joint_anchor(j);
        break;
      }
    if (!root) continue;
    roots.push_back(*root);
    tips.push_back(tree.zero_pose(tree.joints[chain.joints.back()].child_link)
                       .translation);
  }
  if (roots.empty())
    throw Error(ErrorCode::InvalidConfig, "no finger roots for palm frame");
  Vec3 t;
  for (size_t i = 0; i < roots.size(); ++i) t = t + (tips[i] - roots[i]);
  if (t.norm() < 1e-12)
    throw Error(ErrorCode::InvalidConfig, "degenerate finger direction");
  t = t.normalized();
  Vec3 spread = roots.size() > 1 ? roots.back() - roots.front() : Vec3{1, 0, 0};
  Vec3 a = spread - t * spread.dot(t);
  if (a.norm() < 1e-12)
    throw Error(ErrorCode::InvalidConfig, "degenerate finger spread");
  a = a.normalized();
  Vec3 n = a.cross(t);
  PalmFrame f;
  f.origin = origin;
  f.normal = n;
  f.lateral = a;
  f.longitudinal = t;
  return f;
}

// ---------------------------------------------------------------------------

// Per-link world poses at joint configuration q (length L_h, command order).
inline std::vector<Pose> forward_kinematics(const KinematicTree& tree,
                                            const std::vector<double>& q) {
  auto actuated = tree.actuated_joints();
  if (q.size() != actuated.size())
    throw Error(ErrorCode::DimensionMismatch,
                "q has " + std::to_string(q.size()) + " entries, tree has " +
                    std::to_string(actuated.size()) + " DoF");
  std::vector<int> qi(tree.joints.size(), -1);
  for (size_t k = 0; k < actuated.size(); ++k) qi[actuated[k]] = int(k);

  auto joint_angle = [&](int j) -> double {
    const Joint& jt = tree.joints[j];
    if (jt.actuated()) return q[qi[j]];
    if (jt.kind == JointKind::Mimic) {
      const MimicRef& m = *jt.mimic;
      double master = tree.joints[m.master].actuated() ? q[qi[m.master]] : 0.0;
      return m.multiplier * master + m.offset;
    }
    return 0.0;
  };

  std::vector<Pose> poses(tree.links.size());
  std::vector<char> done(tree.links.size(), 0);
  // Links are resolved parent-first; repeat passes handle arbitrary order.
  size_t remaining = tree.links.size();
  done[tree.root_link] = 1;
  poses[tree.root_link] = Pose::identity();
  --remaining;
  while (remaining > 0) {
    size_t before = remaining;
    for (size_t l = 0; l < tree.links.size(); ++l) {
      if (done[l]) continue;
      int pj = tree.links[l].parent_joint;
      int pl = tree.joints[pj].parent_link;
      if (!done[pl]) continue;
      const Joint& jt = tree.joints[pj];
      Pose p = poses[pl] * jt.origin();
      if (jt.moves()) {
        double ang = joint_angle(pj);
        p = p * Pose{Mat3::axis_angle(jt.axis, ang), Vec3{}};
      }
      poses[l] = p;
      done[l] = 1;
      --remaining;
    }
    if (remaining == before)
      throw Error(ErrorCode::CycleDetected, "unresolvable link ordering");
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Unit excitation

enum class Primitive { Flex, Abd, Rot };

inline const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::Flex: return "FLEX";
    case Primitive::Abd: return "ABD";
    case Primitive::Rot: return "ROT";
  }
  return "?";
}

inline std::optional<Primitive> primitive_from_name(const std::string& s) {
  for (Primitive p : {Primitive::Flex, Primitive::Abd, Primitive::Rot})
    if (s == primitive_name(p)) return p;
  return std::nullopt;
}

struct ExcitationResponse {
  int joint = -1;
  Vec3 displacement_dir;   // palm coords (normal, lateral, longitudinal)
  Vec3 rotation_axis;      // palm coords
  double linear_magnitude = 0;  // displacement per unit excitation, m/rad
  Vec3 link_axis;          // child-unit longitudinal direction, palm coords
  double lateral_offset = 0;    // child anchor along the lateral axis
};

// Child unit of a joint: the graph child of the node that owns it.
inline int child_unit_node(const HandGraph& graph, int owner) {
  int same_finger = -1, any = -1;
  for (int ni = 0; ni < graph.node_count; ++ni) {
    if (graph.parent[ni] != owner) continue;
    if (any < 0) any = ni;
    if (graph.fingers[ni] == graph.fingers[owner] && same_finger < 0)
      same_finger = ni;
  }
  return same_finger >= 0 ? same_finger : any;
}

inline ExcitationResponse excite_joint(const KinematicTree& tree,
                                       const HandGraph& graph,
                                       const PalmFrame& palm, int j,
                                       double delta = 0.1) {
  if (j < 0 || j >= int(tree.joints.size()) || !tree.joints[j].actuated())
    throw Error(ErrorCode::JointNotActuated, std::to_string(j));
  if (!(delta > 0))
    throw Error(ErrorCode::InvalidConfig, "excitation delta must be positive");

  int owner = -1;
  for (int ni = 0; ni < graph.node_count; ++ni)
    for (int mj : graph.node_joints[ni])
      if (mj == j) owner = ni;
  if (owner < 0)
    throw Error(ErrorCode::JointNotActuated,
                "joint " + std::to_string(j) + " not assigned to a node");
  int child = child_unit_node(graph, owner);
  if (child < 0) child = owner;

  auto actuated = tree.actuated_joints();
  std::vector<double> q0(actuated.size(), 0.0), q1 = q0;
  for (size_t k = 0; k < actuated.size(); ++k)
    if (actuated[k] == j) q1[k] = delta;

  auto poses0 = forward_kinematics(tree, q0);
  auto poses1 = forward_kinematics(tree, q1);

  Vec3 p0 = graph.anchor_position(tree, poses0, child);
  Vec3 p1 = graph.anchor_position(tree, poses1, child);
  Vec3 dp = p1 - p0;

  ExcitationResponse r;
  r.joint = j;
  r.linear_magnitude = dp.norm() / delta;
  r.displacement_dir = palm.coords(dp.normalized());

  int child_link = tree.joints[j].child_link;
  Mat3 rel = poses1[child_link].rotation * poses0[child_link].rotation.transpose();
  Vec3 axis = rel.log_axis();
  r.rotation_axis = palm.coords(axis.normalized());

  Vec3 anchor_j = tree.joint_anchor(j);
  Vec3 link_dir = p0 - anchor_j;
  r.link_axis = link_dir.norm() > 1e-12
                    ? palm.coords(link_dir.normalized())
                    : Vec3{0, 0, 1};  // default to longitudinal
  r.lateral_offset = (p0 - palm.origin).dot(palm.lateral);
  return r;
}

struct Classification {
  Primitive primitive;
  int sign;               // +1 / -1
  bool convention_sign;   // ABD on the middle-finger axis: sign is convention
};

// Dominant-response classification. eps_lin gates ROT detection and is
// expressed in the same units as linear_magnitude (typically 10% of the
// hand's largest linear response). Scores closer than `margin` are rejected.
inline Classification classify_primitive(const ExcitationResponse& resp,
                                         const PalmFrame& /*palm*/,
                                         const Vec3& link_axis, double eps_lin,
                                         double margin = 0.10) {
  double lin_weight =
      eps_lin > 0 ? std::min(1.0, resp.linear_magnitude / eps_lin) : 1.0;
  double flex = std::abs(resp.displacement_dir.x) * lin_weight;
  double abd = std::abs(resp.displacement_dir.y) * lin_weight;
  double rot = resp.linear_magnitude < eps_lin
                   ? std::abs(resp.rotation_axis.dot(link_axis))
                   : 0.0;

  struct Scored { Primitive p; double s; };
  Scored scored[3] = {{Primitive::Flex, flex}, {Primitive::Abd, abd},
                      {Primitive::Rot, rot}};
  std::sort(std::begin(scored), std::end(scored),
            [](const Scored& a, const Scored& b) { return a.s > b.s; });
  if (scored[0].s <= 0 || scored[1].s > (1.0 - margin) * scored[0].s)
    throw Error(ErrorCode::AmbiguousResponse,
                "joint " + std::to_string(resp.joint) + " scores " +
                    fmt_double(scored[0].s) + " vs " + fmt_double(scored[1].s));

  Classification out{scored[0].p, +1, false};
  switch (out.primitive) {
    case Primitive::Flex:
      out.sign = resp.displacement_dir.x >= 0 ? +1 : -1;
      break;
    case Primitive::Abd: {
      // positive ABD moves away from the middle-finger axis
      double away = resp.displacement_dir.y * resp.lateral_offset;
      if (std::abs(resp.lateral_offset) < 1e-6) {
        out.sign = resp.displacement_dir.y >= 0 ? +1 : -1;
        out.convention_sign = true;
      } else {
        out.sign = away >= 0 ? +1 : -1;
      }
      break;
    }
    case Primitive::Rot:
      out.sign = resp.rotation_axis.dot(link_axis) >= 0 ? +1 : -1;
      break;
  }
  return out;
}

}  // namespace morphgrasp
