#pragma once

// URDF parsing into a validated kinematic tree, finger-chain extraction and
// the canonical "kintree/1" dump format.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "morphgrasp/core.hpp"
#include "morphgrasp/xml.hpp"

namespace morphgrasp {

enum class JointKind { Revolute, Continuous, Fixed, Mimic };

inline const char* joint_kind_name(JointKind k) {
  switch (k) {
    case JointKind::Revolute: return "revolute";
    case JointKind::Continuous: return "continuous";
    case JointKind::Fixed: return "fixed";
    case JointKind::Mimic: return "mimic";
  }
  return "?";
}

struct MimicRef {
  int master = -1;       // joint index
  double multiplier = 1.0;
  double offset = 0.0;
};

struct Joint {
  std::string name;
  JointKind kind = JointKind::Fixed;
  int parent_link = -1;
  int child_link = -1;
  Vec3 origin_xyz;
  Vec3 origin_rpy;
  Vec3 axis{1, 0, 0};
  double lower = 0, upper = 0;   // rad
  double velocity = 0;           // rad/s
  double damping = 0;            // N*m*s/rad
  bool limits_synthesized = false;
  std::optional<MimicRef> mimic;

  bool moves() const { return kind != JointKind::Fixed; }
  bool actuated() const {
    return kind == JointKind::Revolute || kind == JointKind::Continuous;
  }
  Pose origin() const {
    return {Mat3::from_rpy(origin_rpy.x, origin_rpy.y, origin_rpy.z),
            origin_xyz};
  }
};

struct Link {
  std::string name;
  int parent_joint = -1;  // -1 for the root link
};

struct KinematicTree {
  std::string name;
  std::vector<Link> links;
  std::vector<Joint> joints;
  int root_link = -1;

  int link_index(const std::string& n) const {
    for (size_t i = 0; i < links.size(); ++i)
      if (links[i].name == n) return int(i);
    return -1;
  }
  int joint_index(const std::string& n) const {
    for (size_t i = 0; i < joints.size(); ++i)
      if (joints[i].name == n) return int(i);
    return -1;
  }

  // Actuated joints in declaration order; this is the command order L_h.
  std::vector<int> actuated_joints() const {
    std::vector<int> out;
    for (size_t j = 0; j < joints.size(); ++j)
      if (joints[j].actuated()) out.push_back(int(j));
    return out;
  }
  int dof() const { return int(actuated_joints().size()); }

  // Child joints of a link, in declaration order.
  std::vector<int> child_joints(int link) const {
    std::vector<int> out;
    for (size_t j = 0; j < joints.size(); ++j)
      if (joints[j].parent_link == link) out.push_back(int(j));
    return out;
  }

  // Zero-pose world transform of a link (chained joint origins).
  Pose zero_pose(int link) const {
    Pose p = Pose::identity();
    std::vector<int> path;
    for (int l = link; links[l].parent_joint >= 0;
         l = joints[links[l].parent_joint].parent_link)
      path.push_back(links[l].parent_joint);
    for (auto it = path.rbegin(); it != path.rend(); ++it)
      p = p * joints[*it].origin();
    return p;
  }

  // Anchor of a joint: position of its frame at zero pose.
  Vec3 joint_anchor(int j) const {
    return zero_pose(joints[j].parent_link).apply(joints[j].origin_xyz);
  }
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline Vec3 parse_vec3(const std::string& s, const std::string& ctx) {
  std::istringstream in(s);
  Vec3 v;
  if (!(in >> v.x >> v.y >> v.z))
    throw Error(ErrorCode::XmlSyntax, "bad 3-vector '" + s + "' in " + ctx);
  return v;
}

inline double parse_double(const std::string& s, const std::string& ctx) {
  try {
    size_t n = 0;
    double v = std::stod(s, &n);
    while (n < s.size() && std::isspace(static_cast<unsigned char>(s[n]))) ++n;
    if (n != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::XmlSyntax, "bad number '" + s + "' in " + ctx);
  }
}

}  // namespace detail

inline KinematicTree parse_urdf(const std::string& xml_text) {
  auto doc = xml::parse(xml_text);
  if (doc->name != "robot")
    throw Error(ErrorCode::XmlSyntax, "root element is <" + doc->name +
                                          ">, expected <robot>");
  KinematicTree tree;
  if (const auto* n = doc->attr("name")) tree.name = *n;

  for (const auto* le : doc->children_named("link")) {
    const auto* n = le->attr("name");
    if (!n) throw Error(ErrorCode::XmlSyntax, "<link> without name");
    if (tree.link_index(*n) >= 0)
      throw Error(ErrorCode::XmlSyntax, "duplicate link '" + *n + "'");
    tree.links.push_back({*n, -1});
  }

  for (const auto* je : doc->children_named("joint")) {
    Joint j;
    const auto* n = je->attr("name");
    if (!n) throw Error(ErrorCode::XmlSyntax, "<joint> without name");
    j.name = *n;
    const auto* type = je->attr("type");
    if (!type) throw Error(ErrorCode::XmlSyntax, "joint '" + j.name + "' without type");
    if (*type == "revolute") j.kind = JointKind::Revolute;
    else if (*type == "continuous") j.kind = JointKind::Continuous;
    else if (*type == "fixed") j.kind = JointKind::Fixed;
    else
      throw Error(ErrorCode::UnsupportedJointKind,
                  "joint '" + j.name + "' has kind '" + *type + "'");

    auto resolve_link = [&](const char* tag) {
      const auto* el = je->child(tag);
      const std::string* ln = el ? el->attr("link") : nullptr;
      if (!ln)
        throw Error(ErrorCode::XmlSyntax,
                    "joint '" + j.name + "' missing <" + tag + ">");
      int idx = tree.link_index(*ln);
      if (idx < 0)
        throw Error(ErrorCode::MissingLink,
                    "joint '" + j.name + "' references link '" + *ln + "'");
      return idx;
    };
    j.parent_link = resolve_link("parent");
    j.child_link = resolve_link("child");

    if (const auto* origin = je->child("origin")) {
      if (const auto* s = origin->attr("xyz"))
        j.origin_xyz = detail::parse_vec3(*s, "joint '" + j.name + "' origin");
      if (const auto* s = origin->attr("rpy"))
        j.origin_rpy = detail::parse_vec3(*s, "joint '" + j.name + "' origin");
    }
    if (const auto* axis = je->child("axis")) {
      if (const auto* s = axis->attr("xyz"))
        j.axis = detail::parse_vec3(*s, "joint '" + j.name + "' axis");
    }
    if (j.moves() && j.axis.norm() > 0) j.axis = j.axis.normalized();

    if (const auto* limit = je->child("limit")) {
      if (const auto* s = limit->attr("lower"))
        j.lower = detail::parse_double(*s, "limit of '" + j.name + "'");
      if (const auto* s = limit->attr("upper"))
        j.upper = detail::parse_double(*s, "limit of '" + j.name + "'");
      if (const auto* s = limit->attr("velocity"))
        j.velocity = detail::parse_double(*s, "limit of '" + j.name + "'");
    }
    if (j.kind == JointKind::Continuous) {
      j.lower = -std::numbers::pi;
      j.upper = std::numbers::pi;
      j.limits_synthesized = true;
    }
    if (const auto* dyn = je->child("dynamics")) {
      if (const auto* s = dyn->attr("damping"))
        j.damping = detail::parse_double(*s, "dynamics of '" + j.name + "'");
    }
    if (const auto* mim = je->child("mimic")) {
      MimicRef ref;
      const auto* master = mim->attr("joint");
      if (!master)
        throw Error(ErrorCode::XmlSyntax,
                    "mimic on '" + j.name + "' without joint attribute");
      // master resolved after all joints are read
      ref.master = -1;
      if (const auto* s = mim->attr("multiplier"))
        ref.multiplier = detail::parse_double(*s, "mimic of '" + j.name + "'");
      if (const auto* s = mim->attr("offset"))
        ref.offset = detail::parse_double(*s, "mimic of '" + j.name + "'");
      j.mimic = ref;
      j.kind = JointKind::Mimic;
    }
    tree.joints.push_back(std::move(j));
  }

  // Resolve mimic masters by name.
  for (const auto* je : doc->children_named("joint")) {
    const auto* mim = je->child("mimic");
    if (!mim) continue;
    int self = tree.joint_index(*je->attr("name"));
    int master = tree.joint_index(*mim->attr("joint"));
    if (master < 0)
      throw Error(ErrorCode::XmlSyntax,
                  "mimic master '" + *mim->attr("joint") + "' not found");
    tree.joints[self].mimic->master = master;
  }

  // Structure: each link has at most one parent joint, exactly one root,
  // no cycles.
  for (size_t j = 0; j < tree.joints.size(); ++j) {
    Link& child = tree.links[tree.joints[j].child_link];
    if (child.parent_joint >= 0)
      throw Error(ErrorCode::CycleDetected,
                  "link '" + child.name + "' has multiple parent joints");
    child.parent_joint = int(j);
  }
  std::vector<std::string> roots;
  for (size_t l = 0; l < tree.links.size(); ++l)
    if (tree.links[l].parent_joint < 0) {
      roots.push_back(tree.links[l].name);
      tree.root_link = int(l);
    }
  if (roots.empty())
    throw Error(ErrorCode::CycleDetected, "no root link (joint cycle)");
  if (roots.size() > 1) {
    std::string names;
    for (const auto& r : roots) names += (names.empty() ? "" : ", ") + r;
    throw Error(ErrorCode::MultipleRoots, names);
  }
  // Walk up from every link; revisiting more links than exist means a cycle.
  for (size_t l = 0; l < tree.links.size(); ++l) {
    int cur = int(l);
    size_t hops = 0;
    while (tree.links[cur].parent_joint >= 0) {
      cur = tree.joints[tree.links[cur].parent_joint].parent_link;
      if (++hops > tree.links.size())
        throw Error(ErrorCode::CycleDetected, "link '" + tree.links[l].name + "'");
    }
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct Diagnostic {
  enum class Severity { Warning, Error };
  Severity severity;
  std::string code;
  std::string element;
  std::string message;
};

inline std::vector<Diagnostic> validate_tree(const KinematicTree& tree) {
  std::vector<Diagnostic> out;
  auto err = [&](const std::string& code, const std::string& el,
                 const std::string& msg) {
    out.push_back({Diagnostic::Severity::Error, code, el, msg});
  };
  int roots = 0;
  for (const auto& l : tree.links)
    if (l.parent_joint < 0) ++roots;
  if (roots != 1)
    err("RootCount", tree.name, std::to_string(roots) + " root links");
  for (const auto& j : tree.joints) {
    if (j.moves()) {
      double n = j.axis.norm();
      if (n < 1e-12)
        err("DegenerateAxis", j.name, "axis has zero norm");
      else if (std::abs(n - 1.0) > 1e-9)
        err("DegenerateAxis", j.name, "axis is not unit norm");
    }
    if (j.kind == JointKind::Revolute && j.lower > j.upper)
      err("InvertedLimits", j.name, "lower > upper");
    if (j.kind == JointKind::Mimic) {
      if (!j.mimic || j.mimic->master < 0 ||
          j.mimic->master >= int(tree.joints.size()))
        err("BadMimic", j.name, "mimic master out of range");
      else if (!tree.joints[j.mimic->master].actuated())
        err("BadMimic", j.name, "mimic master is not actuated");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finger chains

enum class FingerLabel { Thumb, Index, Middle, Ring, Little, Wrist };

inline const char* finger_label_name(FingerLabel f) {
  switch (f) {
    case FingerLabel::Thumb: return "thumb";
    case FingerLabel::Index: return "index";
    case FingerLabel::Middle: return "middle";
    case FingerLabel::Ring: return "ring";
    case FingerLabel::Little: return "little";
    case FingerLabel::Wrist: return "wrist";
  }
  return "?";
}

inline std::optional<FingerLabel> finger_label_from_name(const std::string& s) {
  for (FingerLabel f : {FingerLabel::Thumb, FingerLabel::Index,
                        FingerLabel::Middle, FingerLabel::Ring,
                        FingerLabel::Little, FingerLabel::Wrist})
    if (s == finger_label_name(f)) return f;
  return std::nullopt;
}

struct ChainHints {
  // Maps the first link of a branch (child link of the first joint leaving
  // the wrist) to its finger label.
  std::map<std::string, FingerLabel> branch_labels;
  std::optional<std::string> wrist_link;
};

struct FingerChain {
  FingerLabel label;
  std::vector<int> joints;  // wrist outward, fixed joints included

  std::vector<int> actuated(const KinematicTree& tree) const {
    std::vector<int> out;
    for (int j : joints)
      if (tree.joints[j].actuated()) out.push_back(j);
    return out;
  }
};

struct FingerChains {
  std::vector<FingerChain> chains;
  int wrist_link = -1;
};

inline FingerChains resolve_chains(const KinematicTree& tree,
                                   const ChainHints& hints = {}) {
  FingerChains out;
  out.wrist_link = tree.root_link;
  if (hints.wrist_link) {
    int w = tree.link_index(*hints.wrist_link);
    if (w < 0)
      throw Error(ErrorCode::MissingLink, "wrist link '" + *hints.wrist_link + "'");
    out.wrist_link = w;
  }

  if (tree.dof() == 0)
    throw Error(ErrorCode::NoBranches, "tree has no actuated joints");

  struct Branch {
    int first_link;
    std::vector<int> joints;
  };
  std::vector<Branch> branches;
  for (int j0 : tree.child_joints(out.wrist_link)) {
    Branch b;
    b.first_link = tree.joints[j0].child_link;
    int cur = j0;
    for (;;) {
      b.joints.push_back(cur);
      auto kids = tree.child_joints(tree.joints[cur].child_link);
      if (kids.empty()) break;
      if (kids.size() > 1)
        throw Error(ErrorCode::BranchAtNonWrist,
                    tree.links[tree.joints[cur].child_link].name);
      cur = kids[0];
    }
    bool any_moving = std::any_of(b.joints.begin(), b.joints.end(),
                                  [&](int j) { return tree.joints[j].moves(); });
    if (any_moving) branches.push_back(std::move(b));
  }
  if (branches.empty())
    throw Error(ErrorCode::NoBranches, "no moving branch leaves the wrist");
  if (branches.size() > 5)
    throw Error(ErrorCode::InvalidConfig,
                std::to_string(branches.size()) + " branches exceed 5 fingers");

  std::vector<FingerLabel> labels(branches.size());
  bool hinted = !hints.branch_labels.empty();
  if (hinted) {
    for (size_t i = 0; i < branches.size(); ++i) {
      const std::string& first = tree.links[branches[i].first_link].name;
      auto it = hints.branch_labels.find(first);
      if (it == hints.branch_labels.end())
        throw Error(ErrorCode::InvalidConfig,
                    "no finger label hint for branch at link '" + first + "'");
      labels[i] = it->second;
    }
  } else {
    // Anchor of the first moving joint of each branch at zero pose.
    std::vector<Vec3> anchors(branches.size());
    for (size_t i = 0; i < branches.size(); ++i) {
      for (int j : branches[i].joints)
        if (tree.joints[j].moves()) {
          anchors[i] = tree.joint_anchor(j);
          break;
        }
    }
    // Thumb = most-opposed branch: the endpoint of the widest anchor pair
    // that lies farther from the centroid of the remaining anchors.
    // Remaining fingers ordered along the thumb-to-far-end direction.
    size_t ia = 0, ib = branches.size() > 1 ? 1 : 0;
    double best = -1;
    for (size_t a = 0; a < anchors.size(); ++a)
      for (size_t b = a + 1; b < anchors.size(); ++b) {
        double d = (anchors[a] - anchors[b]).norm();
        if (d > best) { best = d; ia = a; ib = b; }
      }
    auto rest_centroid = [&](size_t skip) {
      Vec3 c;
      int n = 0;
      for (size_t i = 0; i < anchors.size(); ++i)
        if (i != skip) { c = c + anchors[i]; ++n; }
      return n ? c * (1.0 / n) : Vec3{};
    };
    size_t thumb = ia;
    double da = (anchors[ia] - rest_centroid(ia)).norm();
    double db = (anchors[ib] - rest_centroid(ib)).norm();
    if (db > da + 1e-12) {
      thumb = ib;
    } else if (std::abs(db - da) <= 1e-12 && branches.size() > 1) {
      auto lex_less = [](const Vec3& a, const Vec3& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        return a.z < b.z;
      };
      thumb = lex_less(anchors[ib], anchors[ia]) ? ib : ia;
    }
    Vec3 dir = branches.size() > 1
                   ? (anchors[thumb == ia ? ib : ia] - anchors[thumb]).normalized()
                   : Vec3{1, 0, 0};
    std::vector<size_t> order;
    for (size_t i = 0; i < branches.size(); ++i)
      if (i != thumb) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return (anchors[a] - anchors[thumb]).dot(dir) <
             (anchors[b] - anchors[thumb]).dot(dir);
    });
    labels[thumb] = FingerLabel::Thumb;
    const FingerLabel seq[] = {FingerLabel::Index, FingerLabel::Middle,
                               FingerLabel::Ring, FingerLabel::Little};
    for (size_t k = 0; k < order.size(); ++k) labels[order[k]] = seq[k];
  }

  for (size_t i = 0; i < branches.size(); ++i)
    out.chains.push_back({labels[i], std::move(branches[i].joints)});
  // Canonical order: thumb, index, middle, ring, little.
  std::stable_sort(out.chains.begin(), out.chains.end(),
                   [](const FingerChain& a, const FingerChain& b) {
                     return int(a.label) < int(b.label);
                   });
  return out;
}

// ---------------------------------------------------------------------------
// Link-length scaling (URDF-prior sensitivity evaluations).

inline KinematicTree scale_links(const KinematicTree& tree, double s) {
  if (!(s > 0)) throw Error(ErrorCode::NonPositiveScale, fmt_double(s));
  KinematicTree out = tree;
  for (auto& j : out.joints) j.origin_xyz = j.origin_xyz * s;
  return out;
}

}  // namespace morphgrasp
