#pragma once

// The per-hand artifact bundle: everything downstream of the compiler
// (tree, graph, palm frame, mapping, mask, physical features) plus the
// versioned JSON formats kintree/1, handgraph/1, primmap/1, handbundle/1.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphgrasp/core.hpp"
#include "morphgrasp/graph.hpp"
#include "morphgrasp/kinematics.hpp"
#include "morphgrasp/phys_features.hpp"
#include "morphgrasp/primitive_map.hpp"
#include "morphgrasp/urdf.hpp"

namespace morphgrasp {

struct HandBundle {
  std::string name;
  KinematicTree tree;
  HandGraph graph;
  PalmFrame palm;
  PrimitiveMapping mapping;
  Matd mask;         // N x 3
  Matd x_physical;   // N x 27
  Matd a_hat;        // normalized adjacency, derived

  int node_count() const { return graph.node_count; }
  int dof() const { return mapping.dof(); }
};

struct CompileOptions {
  ChainHints hints;
  std::vector<PartitionOverride> overrides;
  std::optional<PalmFrame> palm;  // declared palm frame, else constructed
  PartitionConfig partition;
  IdentifyConfig identify;
  PhysicalFeatureConfig features;
};

inline HandBundle compile_hand(const KinematicTree& tree,
                               const CompileOptions& opt = {}) {
  HandBundle b;
  b.tree = tree;
  b.name = tree.name;
  FingerChains chains = resolve_chains(tree, opt.hints);
  b.palm = opt.palm ? *opt.palm : construct_palm_frame(tree, chains);
  auto assignment =
      partition_functional(tree, chains, opt.overrides, opt.partition);
  b.graph = build_graph(tree, assignment);
  b.mapping = identify_mapping(tree, b.graph, b.palm, opt.identify);
  b.mask = derive_activation_mask(b.mapping);
  b.x_physical =
      build_physical_features(tree, b.graph, b.mapping, b.palm, opt.features);
  b.a_hat = normalize_adjacency(b.graph.adjacency);
  return b;
}

// Rebuild the static priors from a link-scaled tree while leaving everything
// else (graph, mapping, env geometry) untouched.
inline Matd scaled_physical_features(const HandBundle& b, double link_scale,
                                     const PhysicalFeatureConfig& cfg = {}) {
  if (link_scale == 1.0) return b.x_physical;
  KinematicTree scaled = scale_links(b.tree, link_scale);
  return build_physical_features(scaled, b.graph, b.mapping, b.palm, cfg);
}

// ---------------------------------------------------------------------------
// kintree/1 — canonical dump, fixed field order, 17 significant digits.

namespace detail {

inline void json_vec3(std::ostream& os, const Vec3& v) {
  os << "[" << fmt_double(v.x) << "," << fmt_double(v.y) << ","
     << fmt_double(v.z) << "]";
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline std::string kintree_to_json(const KinematicTree& tree) {
  std::ostringstream os;
  os << "{\n  \"schema\": \"kintree/1\",\n";
  os << "  \"name\": \"" << detail::json_escape(tree.name) << "\",\n";
  os << "  \"root_link\": " << tree.root_link << ",\n  \"links\": [\n";
  for (size_t i = 0; i < tree.links.size(); ++i) {
    os << "    {\"name\": \"" << detail::json_escape(tree.links[i].name)
       << "\", \"parent_joint\": " << tree.links[i].parent_joint << "}"
       << (i + 1 < tree.links.size() ? ",\n" : "\n");
  }
  os << "  ],\n  \"joints\": [\n";
  for (size_t i = 0; i < tree.joints.size(); ++i) {
    const Joint& j = tree.joints[i];
    os << "    {\"name\": \"" << detail::json_escape(j.name) << "\", \"kind\": \""
       << joint_kind_name(j.kind) << "\", \"parent\": " << j.parent_link
       << ", \"child\": " << j.child_link << ", \"origin_xyz\": ";
    detail::json_vec3(os, j.origin_xyz);
    os << ", \"origin_rpy\": ";
    detail::json_vec3(os, j.origin_rpy);
    os << ", \"axis\": ";
    detail::json_vec3(os, j.axis);
    os << ", \"lower\": " << fmt_double(j.lower)
       << ", \"upper\": " << fmt_double(j.upper)
       << ", \"velocity\": " << fmt_double(j.velocity)
       << ", \"damping\": " << fmt_double(j.damping)
       << ", \"limits_synthesized\": " << (j.limits_synthesized ? "true" : "false");
    if (j.mimic) {
      os << ", \"mimic\": {\"master\": " << j.mimic->master
         << ", \"multiplier\": " << fmt_double(j.mimic->multiplier)
         << ", \"offset\": " << fmt_double(j.mimic->offset) << "}";
    } else {
      os << ", \"mimic\": null";
    }
    os << "}" << (i + 1 < tree.joints.size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
  return os.str();
}

inline KinematicTree kintree_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != std::string("kintree/1"))
    throw Error(ErrorCode::SchemaVersionMismatch, doc.value("schema", "<missing>"));
  KinematicTree tree;
  tree.name = doc.value("name", "");
  tree.root_link = doc.at("root_link");
  for (const auto& l : doc.at("links"))
    tree.links.push_back({l.at("name"), l.at("parent_joint")});
  auto vec3 = [](const nlohmann::json& a) {
    return Vec3{a[0], a[1], a[2]};
  };
  for (const auto& e : doc.at("joints")) {
    Joint j;
    j.name = e.at("name");
    std::string kind = e.at("kind");
    if (kind == "revolute") j.kind = JointKind::Revolute;
    else if (kind == "continuous") j.kind = JointKind::Continuous;
    else if (kind == "fixed") j.kind = JointKind::Fixed;
    else if (kind == "mimic") j.kind = JointKind::Mimic;
    else throw Error(ErrorCode::UnsupportedJointKind, kind);
    j.parent_link = e.at("parent");
    j.child_link = e.at("child");
    j.origin_xyz = vec3(e.at("origin_xyz"));
    j.origin_rpy = vec3(e.at("origin_rpy"));
    j.axis = vec3(e.at("axis"));
    j.lower = e.at("lower");
    j.upper = e.at("upper");
    j.velocity = e.at("velocity");
    j.damping = e.at("damping");
    j.limits_synthesized = e.at("limits_synthesized");
    if (!e.at("mimic").is_null()) {
      MimicRef m;
      m.master = e["mimic"].at("master");
      m.multiplier = e["mimic"].at("multiplier");
      m.offset = e["mimic"].at("offset");
      j.mimic = m;
    }
    tree.joints.push_back(std::move(j));
  }
  return tree;
}

// ---------------------------------------------------------------------------
// handgraph/1

inline nlohmann::json handgraph_to_json(const HandGraph& g) {
  nlohmann::json doc;
  doc["schema"] = "handgraph/1";
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < g.node_count; ++i) {
    nlohmann::json n;
    n["type"] = node_type_name(g.types[i]);
    n["finger"] = finger_label_name(g.fingers[i]);
    n["joints"] = g.node_joints[i];
    n["anchor_joint"] = g.anchor_joint[i];
    n["anchor_link"] = g.anchor_link[i];
    nodes.push_back(n);
  }
  doc["nodes"] = nodes;
  nlohmann::json edges = nlohmann::json::array();
  for (int i = 0; i < g.node_count; ++i)
    for (int j = 0; j < g.node_count; ++j)
      if (g.adjacency(i, j) != 0.0) edges.push_back({i, j});
  doc["edges"] = edges;
  doc["wrist_node"] = g.wrist_node;
  return doc;
}

inline HandGraph handgraph_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != std::string("handgraph/1"))
    throw Error(ErrorCode::SchemaVersionMismatch, doc.value("schema", "<missing>"));
  HandGraph g;
  for (const auto& n : doc.at("nodes")) {
    auto type = node_type_from_name(n.at("type"));
    auto finger = finger_label_from_name(n.at("finger"));
    if (!type || !finger)
      throw Error(ErrorCode::IoError, "bad node type/finger");
    g.types.push_back(*type);
    g.fingers.push_back(*finger);
    g.node_joints.push_back(n.at("joints").get<std::vector<int>>());
    g.anchor_joint.push_back(n.at("anchor_joint"));
    g.anchor_link.push_back(n.at("anchor_link"));
  }
  g.node_count = int(g.types.size());
  g.wrist_node = doc.at("wrist_node");
  g.adjacency = Matd(g.node_count, g.node_count);
  g.parent.assign(g.node_count, -1);
  for (const auto& e : doc.at("edges")) {
    int i = e[0], j = e[1];
    g.adjacency(i, j) = 1.0;
    g.parent[j] = i;
  }
  return g;
}

// ---------------------------------------------------------------------------
// primmap/1

inline nlohmann::json primmap_to_json(const PrimitiveMapping& m) {
  nlohmann::json doc;
  doc["schema"] = "primmap/1";
  doc["hand"] = m.hand_id;
  doc["n_nodes"] = m.node_count;
  doc["n_dof"] = m.dof();
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je;
    je["joint"] = e.joint;
    je["node"] = e.node;
    je["primitive"] = primitive_name(e.primitive);
    je["sign"] = e.sign;
    je["convention_sign"] = e.convention_sign;
    entries.push_back(je);
  }
  doc["entries"] = entries;
  return doc;
}

inline PrimitiveMapping primmap_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != std::string("primmap/1"))
    throw Error(ErrorCode::SchemaVersionMismatch, doc.value("schema", "<missing>"));
  PrimitiveMapping m;
  m.hand_id = doc.at("hand");
  m.node_count = doc.at("n_nodes");
  for (const auto& je : doc.at("entries")) {
    MappingEntry e;
    e.joint = je.at("joint");
    e.node = je.at("node");
    auto p = primitive_from_name(je.at("primitive"));
    if (!p) throw Error(ErrorCode::IoError, "bad primitive name");
    e.primitive = *p;
    e.sign = je.at("sign");
    e.convention_sign = je.value("convention_sign", false);
    m.entries.push_back(e);
  }
  if (int(doc.at("n_dof")) != m.dof())
    throw Error(ErrorCode::InconsistentHand, "n_dof mismatch");
  return m;
}

// ---------------------------------------------------------------------------
// handbundle/1

inline nlohmann::json matd_to_json(const Matd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Matd matd_from_json(const nlohmann::json& rows) {
  Matd m(int(rows.size()), rows.empty() ? 0 : int(rows[0].size()));
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
  return m;
}

inline nlohmann::json bundle_to_json(const HandBundle& b) {
  nlohmann::json doc;
  doc["schema"] = "handbundle/1";
  doc["name"] = b.name;
  doc["kintree"] = nlohmann::json::parse(kintree_to_json(b.tree));
  doc["handgraph"] = handgraph_to_json(b.graph);
  doc["primmap"] = primmap_to_json(b.mapping);
  nlohmann::json palm;
  auto v3 = [](const Vec3& v) { return nlohmann::json{v.x, v.y, v.z}; };
  palm["origin"] = v3(b.palm.origin);
  palm["normal"] = v3(b.palm.normal);
  palm["lateral"] = v3(b.palm.lateral);
  palm["longitudinal"] = v3(b.palm.longitudinal);
  doc["palm"] = palm;
  doc["mask"] = matd_to_json(b.mask);
  doc["x_physical"] = matd_to_json(b.x_physical);
  return doc;
}

inline HandBundle bundle_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != std::string("handbundle/1"))
    throw Error(ErrorCode::SchemaVersionMismatch, doc.value("schema", "<missing>"));
  HandBundle b;
  b.name = doc.at("name");
  b.tree = kintree_from_json(doc.at("kintree"));
  b.graph = handgraph_from_json(doc.at("handgraph"));
  b.mapping = primmap_from_json(doc.at("primmap"));
  auto v3 = [](const nlohmann::json& a) { return Vec3{a[0], a[1], a[2]}; };
  b.palm.origin = v3(doc.at("palm").at("origin"));
  b.palm.normal = v3(doc.at("palm").at("normal"));
  b.palm.lateral = v3(doc.at("palm").at("lateral"));
  b.palm.longitudinal = v3(doc.at("palm").at("longitudinal"));
  b.mask = matd_from_json(doc.at("mask"));
  b.x_physical = matd_from_json(doc.at("x_physical"));
  b.a_hat = normalize_adjacency(b.graph.adjacency);
  // cross-references must agree
  if (b.mapping.node_count != b.graph.node_count ||
      b.mask.rows != b.graph.node_count ||
      b.x_physical.rows != b.graph.node_count ||
      b.mapping.dof() != b.tree.dof())
    throw Error(ErrorCode::InconsistentHand, "bundle sections disagree");
  return b;
}

inline void save_bundle(const HandBundle& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << bundle_to_json(b).dump(2) << "\n";
}

inline HandBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path + ": " + e.what());
  }
  return bundle_from_json(doc);
}

}  // namespace morphgrasp
