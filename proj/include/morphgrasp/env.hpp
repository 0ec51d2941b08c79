#pragma once

// Deterministic kinematic grasp environment at desk scale. The hand moves by
// forward kinematics with first-order joint tracking, the object is a point
// cloud sampled once at reset, contacts are proximity tests at node anchors
// and the contact force is a penetration proxy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "morphgrasp/bundle.hpp"
#include "morphgrasp/magcn.hpp"

namespace morphgrasp {

enum class ObjectShape { Sphere, Box, Cylinder };

inline const char* object_shape_name(ObjectShape s) {
  switch (s) {
    case ObjectShape::Sphere: return "sphere";
    case ObjectShape::Box: return "box";
    case ObjectShape::Cylinder: return "cylinder";
  }
  return "?";
}

inline std::optional<ObjectShape> object_shape_from_name(const std::string& s) {
  if (s == "sphere") return ObjectShape::Sphere;
  if (s == "box") return ObjectShape::Box;
  if (s == "cylinder") return ObjectShape::Cylinder;
  return std::nullopt;
}

struct ObjectSpec {
  ObjectShape shape = ObjectShape::Sphere;
  // sphere: size.x = radius; box: half extents; cylinder: size.x = radius,
  // size.z = half height.
  Vec3 size{0.03, 0.03, 0.03};
};

struct RewardWeights {
  double w_dis = 0.3;
  double w_contact = 1.0;
  double w_force = 0.5;
  double w_reg = 1.5;
  double w_pen = 0.3;
};

struct RewardBreakdown {
  double r_dis = 0, r_contact = 0, r_force = 0, r_reg = 0, r_pen = 0;
  double total = 0;
  RewardWeights weights;
};

struct ObsScales {
  double dist = 0.1;        // m, node-to-surface displacement
  double angle = 1.0;       // rad
  double angle_rate = 10.0; // rad/s
  double force = 10.0;      // N
  double wrist_disp = 0.3;  // m, wrist-to-object displacement
  double lin_vel = 0.5;     // m/s
  double ang_vel = 5.0;     // rad/s
  double clip = 5.0;
};

struct SceneConfig {
  ObjectSpec object;
  int cloud_points = 512;
  double approach_distance = 0.30;  // m, wrist to object center at reset
  double contact_radius = 0.008;    // m
  double force_stiffness = 500.0;   // N/m
  double force_threshold = 1.0;     // f_0, N
  int explore_steps = 120;
  int lift_steps = 30;
  double control_hz = 20.0;
  double finger_tracking = 0.261;   // 1 - (1 - 0.015)^20
  double lift_speed = 0.02;         // m per control step, lift phase
  double success_height = 0.2;      // m
  int hold_steps = 40;              // attachment must persist this long
  int lift_channel = 12;            // x_global slot carrying the phase sign
  ActionScales action_bounds;       // per-step caps on executed increments
  RewardWeights reward;
  ObsScales scales;
};

struct StepRecord {
  int step = 0;
  RewardBreakdown reward;
  int contacts = 0;
  bool attached = false;
  double object_height = 0;
};

struct GraspScene {
  const HandBundle* hand = nullptr;
  SceneConfig cfg;

  Pose wrist;
  std::vector<double> q, qd;  // rad, rad/s, command order
  Pose object;
  std::vector<Vec3> cloud;    // object frame, fixed after reset

  int step_count = 0;
  bool attached = false;
  Pose attach_rel;            // object pose in wrist frame while attached
  double initial_height = 0;

  Pose prev_wrist, prev_object;
  std::vector<StepRecord> history;
  GaussianRng rng{0};

  bool lift_phase() const { return step_count >= cfg.explore_steps; }
  bool done() const {
    return step_count >= cfg.explore_steps + cfg.lift_steps;
  }
};

// ---------------------------------------------------------------------------
// Object surface sampling, all in the object frame.

inline Vec3 sample_surface_point(const ObjectSpec& obj, GaussianRng& rng) {
  switch (obj.shape) {
    case ObjectShape::Sphere: {
      Vec3 v{rng.normal(), rng.normal(), rng.normal()};
      double n = v.norm();
      if (n < 1e-12) return {obj.size.x, 0, 0};
      return v * (obj.size.x / n);
    }
    case ObjectShape::Box: {
      const Vec3& h = obj.size;
      double areas[3] = {h.y * h.z, h.x * h.z, h.x * h.y};
      double total = areas[0] + areas[1] + areas[2];
      double pick = rng.uniform() * total;
      int face = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
      double s = rng.uniform() < 0.5 ? -1.0 : 1.0;
      double u = (2 * rng.uniform() - 1), v = (2 * rng.uniform() - 1);
      if (face == 0) return {s * h.x, u * h.y, v * h.z};
      if (face == 1) return {u * h.x, s * h.y, v * h.z};
      return {u * h.x, v * h.y, s * h.z};
    }
    case ObjectShape::Cylinder: {
      double r = obj.size.x, hh = obj.size.z;
      double side = 2 * std::numbers::pi * r * 2 * hh;
      double caps = 2 * std::numbers::pi * r * r;
      double ang = 2 * std::numbers::pi * rng.uniform();
      if (rng.uniform() * (side + caps) < side) {
        return {r * std::cos(ang), r * std::sin(ang),
                (2 * rng.uniform() - 1) * hh};
      }
      double rad = r * std::sqrt(rng.uniform());
      double z = rng.uniform() < 0.5 ? -hh : hh;
      return {rad * std::cos(ang), rad * std::sin(ang), z};
    }
  }
  return {};
}

inline Mat3 random_rotation(GaussianRng& rng) {
  // uniform via a normalized quaternion
  double w = rng.normal(), x = rng.normal(), y = rng.normal(),
         z = rng.normal();
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n < 1e-12) return Mat3::identity();
  w /= n; x /= n; y /= n; z /= n;
  Mat3 r;
  r(0, 0) = 1 - 2 * (y * y + z * z);
  r(0, 1) = 2 * (x * y - w * z);
  r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z);
  r(1, 1) = 1 - 2 * (x * x + z * z);
  r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y);
  r(2, 1) = 2 * (y * z + w * x);
  r(2, 2) = 1 - 2 * (x * x + y * y);
  return r;
}

// Rotation taking unit vector a onto unit vector b.
inline Mat3 rotation_between(const Vec3& a, const Vec3& b) {
  Vec3 axis = a.cross(b);
  double s = axis.norm(), c = a.dot(b);
  if (s < 1e-12) {
    if (c > 0) return Mat3::identity();
    // pick any perpendicular axis for the half turn
    Vec3 perp = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 ax = a.cross(perp).normalized();
    return Mat3::axis_angle(ax, std::numbers::pi);
  }
  return Mat3::axis_angle(axis * (1.0 / s), std::atan2(s, c));
}

// ---------------------------------------------------------------------------

namespace detail {

// World positions of every node anchor for the current configuration.
inline std::vector<Vec3> node_anchors_world(const GraspScene& sc) {
  const HandBundle& h = *sc.hand;
  auto poses = forward_kinematics(h.tree, sc.q);
  std::vector<Vec3> out(h.node_count());
  for (int i = 0; i < h.node_count(); ++i)
    out[i] = sc.wrist.apply(h.graph.anchor_position(h.tree, poses, i));
  return out;
}

struct ContactProbe {
  Vec3 d;           // nearest cloud point minus anchor, world frame
  double dist = 0;
  bool contact = false;
  double force = 0;
};

inline ContactProbe probe_node(const GraspScene& sc, const Vec3& anchor) {
  ContactProbe p;
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_d;
  for (const Vec3& lp : sc.cloud) {
    Vec3 wp = sc.object.apply(lp);
    Vec3 d = wp - anchor;
    double dd = d.norm();
    if (dd < best) {
      best = dd;
      best_d = d;
    }
  }
  p.d = best_d;
  p.dist = best;
  p.contact = best < sc.cfg.contact_radius;
  p.force = sc.cfg.force_stiffness * std::max(0.0, sc.cfg.contact_radius - best);
  return p;
}

}  // namespace detail

struct Observation {
  StateGraph state;
  std::vector<double> node_dist;  // raw meters per node
  std::vector<int> contact;
  std::vector<double> force;      // raw N
};

inline Observation build_observation(const GraspScene& sc) {
  const HandBundle& h = *sc.hand;
  const int n = h.node_count();
  const ObsScales& s = sc.cfg.scales;
  double clipv = s.clip;
  auto clip = [&](double v) { return std::clamp(v, -clipv, clipv); };

  Observation obs;
  obs.state.x_node = Matd(n, kNodeFeatureDim);
  obs.state.a_hat = h.a_hat;
  obs.state.mask = h.mask;
  obs.state.x_physical = h.x_physical;
  obs.state.wrist_node = h.graph.wrist_node;
  obs.node_dist.resize(n);
  obs.contact.resize(n);
  obs.force.resize(n);

  auto anchors = detail::node_anchors_world(sc);
  const PalmFrame& palm = h.palm;
  Mat3 wr = sc.wrist.rotation;

  Matd theta = embed_physical(h.mapping, sc.q);
  Matd theta_dot = embed_physical(h.mapping, sc.qd);

  Matd& x = obs.state.x_node;
  for (int i = 0; i < n; ++i) {
    detail::ContactProbe p = detail::probe_node(sc, anchors[i]);
    obs.node_dist[i] = p.dist;
    obs.contact[i] = p.contact ? 1 : 0;
    obs.force[i] = p.force;
    // d_i in the (world-oriented) palm frame
    Vec3 dl = palm.coords(wr.transpose() * p.d);
    x(i, obs::kDist + 0) = clip(dl.x / s.dist);
    x(i, obs::kDist + 1) = clip(dl.y / s.dist);
    x(i, obs::kDist + 2) = clip(dl.z / s.dist);
    for (int pax = 0; pax < 3; ++pax) {
      x(i, obs::kTheta + pax) = clip(theta(i, pax) / s.angle);
      x(i, obs::kThetaDot + pax) = clip(theta_dot(i, pax) / s.angle_rate);
    }
    x(i, obs::kContact) = obs.contact[i];
    x(i, obs::kForce) = clip(p.force / s.force);
    x(i, obs::kFingerOneHot + int(h.graph.fingers[i])) = 1.0;
    x(i, obs::kTypeOneHot + int(h.graph.types[i])) = 1.0;
  }

  // global features: wrist-to-object displacement and finite-differenced
  // velocities, wrist frame for the displacement
  std::vector<double>& g = obs.state.x_global;
  g.assign(kGlobalFeatureDim, 0.0);
  double hz = sc.cfg.control_hz;
  Vec3 dp = wr.transpose() * (sc.object.translation - sc.wrist.translation);
  Vec3 vw = (sc.wrist.translation - sc.prev_wrist.translation) * hz;
  Vec3 ww = (sc.wrist.rotation * sc.prev_wrist.rotation.transpose()).log_axis() *
            (0.5 * hz);
  Vec3 vo = (sc.object.translation - sc.prev_object.translation) * hz;
  Vec3 wo = (sc.object.rotation * sc.prev_object.rotation.transpose()).log_axis() *
            (0.5 * hz);
  for (int k = 0; k < 3; ++k) {
    g[0 + k] = clip(dp[k] / s.wrist_disp);
    g[3 + k] = clip(vw[k] / s.lin_vel);
    g[6 + k] = clip(ww[k] / s.ang_vel);
    g[9 + k] = clip(vo[k] / s.lin_vel);
    g[12 + k] = clip(wo[k] / s.ang_vel);
  }
  // phase flag rides as the sign of one object-velocity slot
  double raw = std::abs(g[sc.cfg.lift_channel]);
  g[sc.cfg.lift_channel] = sc.lift_phase() ? -(raw + 1.0) : raw;
  return obs;
}

inline GraspScene reset(const HandBundle& hand, const SceneConfig& cfg,
                        uint64_t seed) {
  if (cfg.cloud_points <= 0 || cfg.approach_distance <= 0 ||
      cfg.explore_steps <= 0 || cfg.lift_steps <= 0)
    throw Error(ErrorCode::InvalidConfig, "bad scene config");
  GraspScene sc;
  sc.hand = &hand;
  sc.cfg = cfg;
  sc.rng = GaussianRng(seed);

  sc.object.translation = {0, 0, 0};
  sc.object.rotation = random_rotation(sc.rng);
  sc.cloud.resize(cfg.cloud_points);
  for (auto& p : sc.cloud) p = sample_surface_point(cfg.object, sc.rng);

  sc.q.assign(hand.dof(), 0.0);
  sc.qd.assign(hand.dof(), 0.0);

  // approach direction: random unit vector; the wrist sits behind the palm
  // reference so the palm origin lands at the configured distance
  Vec3 dir{sc.rng.normal(), sc.rng.normal(), sc.rng.normal()};
  double n = dir.norm();
  dir = n < 1e-12 ? Vec3{0, 0, 1} : dir * (1.0 / n);
  // rotate hand-local palm normal onto -dir so the palm faces the object
  sc.wrist.rotation = rotation_between(hand.palm.normal, dir * -1.0);
  Vec3 palm_world_off = sc.wrist.rotation * hand.palm.origin;
  sc.wrist.translation = dir * cfg.approach_distance - palm_world_off;

  sc.prev_wrist = sc.wrist;
  sc.prev_object = sc.object;
  sc.initial_height = sc.object.translation.z;
  return sc;
}

// Count contacts and decide attachment for the current configuration.
namespace detail {

struct ContactSummary {
  int total = 0;
  std::set<FingerLabel> fingers;  // non-wrist fingers in contact
  bool opposing = false;          // thumb or a wrist/palm-side contact
};

inline ContactSummary summarize_contacts(const GraspScene& sc) {
  ContactSummary cs;
  const HandBundle& h = *sc.hand;
  auto anchors = node_anchors_world(sc);
  for (int i = 0; i < h.node_count(); ++i) {
    if (!probe_node(sc, anchors[i]).contact) continue;
    ++cs.total;
    FingerLabel f = h.graph.fingers[i];
    if (f == FingerLabel::Wrist || h.graph.types[i] == NodeType::Wrist) {
      cs.opposing = true;
    } else {
      cs.fingers.insert(f);
      if (f == FingerLabel::Thumb) cs.opposing = true;
    }
  }
  return cs;
}

}  // namespace detail

inline RewardBreakdown compute_reward(const GraspScene& sc,
                                      const PrimitiveAction& action,
                                      const std::vector<double>& dq_executed,
                                      const Observation& obs) {
  RewardBreakdown r;
  r.weights = sc.cfg.reward;
  for (size_t i = 0; i < obs.node_dist.size(); ++i) {
    r.r_dis -= obs.node_dist[i];
    r.r_contact += obs.contact[i];
    double ex = std::max(0.0, obs.force[i] - sc.cfg.force_threshold);
    r.r_force -= ex * ex;
  }
  double reg = 0;
  for (double d : dq_executed) reg += d * d;
  r.r_reg = -std::sqrt(reg);
  const Matd& m = sc.hand->mask;
  double pen = 0;
  for (int i = 0; i < m.rows; ++i)
    for (int p = 0; p < 3; ++p) {
      double a = (1.0 - m(i, p)) * action.node(i, p);
      pen += a * a;
    }
  r.r_pen = -r.weights.w_pen * pen;
  r.total = r.weights.w_dis * r.r_dis + r.weights.w_contact * r.r_contact +
            r.weights.w_force * r.r_force + r.weights.w_reg * r.r_reg + r.r_pen;
  return r;
}

struct StepResult {
  Observation obs;
  RewardBreakdown reward;
  bool done = false;
};

inline StepResult step(GraspScene& sc, const PrimitiveAction& action) {
  const HandBundle& h = *sc.hand;
  if (action.node.rows != h.node_count() || action.node.cols != 3)
    throw Error(ErrorCode::DimensionMismatch,
                "action node matrix is " + std::to_string(action.node.rows) +
                    "x" + std::to_string(action.node.cols));

  sc.prev_wrist = sc.wrist;
  sc.prev_object = sc.object;
  std::vector<double> prev_q = sc.q;

  PhysicalAction phys = primitives_to_physical(h.mapping, action);

  // joint targets clamp to limits, first-order tracking toward them
  auto actuated = h.tree.actuated_joints();
  for (size_t k = 0; k < phys.dq.size(); ++k) {
    const Joint& j = h.tree.joints[actuated[k]];
    double target = std::clamp(sc.q[k] + phys.dq[k], j.lower, j.upper);
    sc.q[k] += sc.cfg.finger_tracking * (target - sc.q[k]);
    sc.q[k] = std::clamp(sc.q[k], j.lower, j.upper);
  }
  for (size_t k = 0; k < sc.q.size(); ++k)
    sc.qd[k] = (sc.q[k] - prev_q[k]) * sc.cfg.control_hz;

  // wrist increments are commanded in the wrist frame so the policy sees a
  // rotation-invariant task
  const ActionScales& cap = sc.cfg.action_bounds;
  if (!sc.lift_phase()) {
    Vec3 dp, dth;
    for (int k = 0; k < 3; ++k) {
      dp[k] = std::clamp(action.wrist_translation[k], -cap.wrist_translation,
                         cap.wrist_translation);
      dth[k] = std::clamp(action.wrist_rotation[k], -cap.wrist_rotation,
                          cap.wrist_rotation);
    }
    sc.wrist.translation = sc.wrist.translation + sc.wrist.rotation * dp;
    double ang = dth.norm();
    if (ang > 1e-15)
      sc.wrist.rotation =
          sc.wrist.rotation * Mat3::axis_angle(dth * (1.0 / ang), ang);
  } else {
    sc.wrist.translation.z += sc.cfg.lift_speed;
  }

  // attached object rides the wrist; the rule below may break the attachment
  if (sc.attached) sc.object = sc.wrist * sc.attach_rel;

  detail::ContactSummary cs = detail::summarize_contacts(sc);
  if (!sc.attached) {
    if (int(cs.fingers.size()) >= 2 && cs.opposing) {
      sc.attached = true;
      sc.attach_rel = sc.wrist.inverse() * sc.object;
    }
  } else if (cs.total < 2) {
    sc.attached = false;
  }

  ++sc.step_count;

  StepResult out;
  out.obs = build_observation(sc);
  out.reward = compute_reward(sc, action, phys.dq, out.obs);
  out.done = sc.done();

  StepRecord rec;
  rec.step = sc.step_count;
  rec.reward = out.reward;
  rec.contacts = cs.total;
  rec.attached = sc.attached;
  rec.object_height = sc.object.translation.z;
  sc.history.push_back(rec);
  return out;
}

inline bool evaluate_success(const GraspScene& sc) {
  if (sc.history.empty()) return false;
  const StepRecord& last = sc.history.back();
  double gain = last.object_height - sc.initial_height;
  if (gain < sc.cfg.success_height) return false;
  int held = 0;
  for (auto it = sc.history.rbegin();
       it != sc.history.rend() && held < sc.cfg.hold_steps; ++it, ++held)
    if (!it->attached) return false;
  return held >= sc.cfg.hold_steps;
}

// ---------------------------------------------------------------------------
// Episode logs, line-delimited, schema "episode/1".

inline void write_episode_log(const GraspScene& sc, std::ostream& os) {
  os << "{\"schema\": \"episode/1\", \"hand\": \""
     << detail::json_escape(sc.hand->name)
     << "\", \"steps\": " << sc.history.size()
     << ", \"success\": " << (evaluate_success(sc) ? "true" : "false")
     << "}\n";
  for (const StepRecord& r : sc.history) {
    os << "{\"step\": " << r.step << ", \"total\": " << fmt_double(r.reward.total)
       << ", \"r_dis\": " << fmt_double(r.reward.r_dis)
       << ", \"r_contact\": " << fmt_double(r.reward.r_contact)
       << ", \"r_force\": " << fmt_double(r.reward.r_force)
       << ", \"r_reg\": " << fmt_double(r.reward.r_reg)
       << ", \"r_pen\": " << fmt_double(r.reward.r_pen)
       << ", \"contacts\": " << r.contacts
       << ", \"attached\": " << (r.attached ? "true" : "false")
       << ", \"height\": " << fmt_double(r.object_height) << "}\n";
  }
}

inline void save_episode_log(const GraspScene& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_episode_log(sc, out);
}

}  // namespace morphgrasp
