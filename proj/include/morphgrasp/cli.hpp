#pragma once

// Command-line front end: compile, inspect, identify, train, eval, rollout,
// gradcheck. Kept header-only so the logic is testable without spawning a
// process.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morphgrasp/bundle.hpp"
#include "morphgrasp/env.hpp"
#include "morphgrasp/trainer.hpp"

namespace morphgrasp {

// ---------------------------------------------------------------------------
// Hand metadata files: palm frame, wrist link, finger labels, overrides.

inline CompileOptions load_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path + ": " + e.what());
  }
  CompileOptions opt;
  if (doc.contains("wrist_link"))
    opt.hints.wrist_link = doc["wrist_link"].get<std::string>();
  if (doc.contains("fingers"))
    for (auto& [link, label] : doc["fingers"].items()) {
      auto f = finger_label_from_name(label.get<std::string>());
      if (!f) throw Error(ErrorCode::InvalidConfig, "finger label " +
                                                        label.get<std::string>());
      opt.hints.branch_labels[link] = *f;
    }
  if (doc.contains("palm")) {
    auto v3 = [](const nlohmann::json& a) { return Vec3{a[0], a[1], a[2]}; };
    const auto& p = doc["palm"];
    opt.palm = make_palm_frame(v3(p.at("origin")), v3(p.at("normal")),
                               v3(p.at("longitudinal")));
  }
  if (doc.contains("merge_radius"))
    opt.partition.merge_radius = doc["merge_radius"].get<double>();
  return opt;
}

inline ObjectSpec parse_object(const std::string& text) {
  std::string name = text;
  std::string dims;
  if (auto pos = text.find(':'); pos != std::string::npos) {
    name = text.substr(0, pos);
    dims = text.substr(pos + 1);
  }
  auto shape = object_shape_from_name(name);
  if (!shape)
    throw Error(ErrorCode::InvalidConfig, "unknown object shape '" + name + "'");
  ObjectSpec spec;
  spec.shape = *shape;
  if (!dims.empty()) {
    std::vector<double> vals;
    std::stringstream ss(dims);
    std::string tok;
    while (std::getline(ss, tok, 'x')) vals.push_back(std::stod(tok));
    if (spec.shape == ObjectShape::Sphere && vals.size() == 1) {
      spec.size = {vals[0], vals[0], vals[0]};
    } else if (spec.shape == ObjectShape::Box && vals.size() == 3) {
      spec.size = {vals[0], vals[1], vals[2]};
    } else if (spec.shape == ObjectShape::Cylinder && vals.size() == 2) {
      spec.size = {vals[0], vals[0], vals[1]};
    } else {
      throw Error(ErrorCode::InvalidConfig, "bad object dims '" + dims + "'");
    }
  }
  return spec;
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient-check suite: every core op plus the full policy loss.

struct GradCheckResult {
  std::string name;
  double worst = 0;
  int instances = 0;
};

namespace detail {

inline Tensor random_tensor(int r, int c, GaussianRng& rng, double scale = 1.0,
                            double shift = 0.0) {
  Tensor t(r, c);
  for (double& v : t.data) v = rng.normal() * scale + shift;
  return t;
}

}  // namespace detail

// The gradient-audit surrogate loss: the whole network rebuilt on the tape
// with x_node routed through the checked leaf, Gaussian surrogate + value
// error on top, as in the PPO update. `kink_margin`, when given, receives
// the smallest |input| seen by any relu/leaky activation so callers can
// reject instances too close to a kink for central differences.
inline Tape::Var build_policy_loss(Tape& t, Tape::Var xid, PolicyNetwork& net,
                                   const StateGraph& s,
                                   const std::vector<double>& action,
                                   double ret, double* kink_margin) {
  const int n = s.x_node.rows;
  auto note = [&](Tape::Var v) {
    if (kink_margin)
      for (double x : t.value(v).data)
        *kink_margin = std::min(*kink_margin, std::abs(x));
    return v;
  };
  BoundNet b(net, t);
  Tape::Var a_hat = t.input(s.a_hat);
  Tape::Var ep = t.add_rowvec(
      t.matmul(t.leaky_relu(note(t.add_rowvec(
                   t.matmul(t.input(s.x_physical), b("phi_p.l0.w")),
                   b("phi_p.l0.b")))),
               b("phi_p.l1.w")),
      b("phi_p.l1.b"));
  Tensor xg(1, kGlobalFeatureDim);
  xg.data.assign(s.x_global.begin(), s.x_global.end());
  Tape::Var eg = t.leaky_relu(note(t.add_rowvec(
      t.matmul(t.input(xg), b("phi_g.l0.w")), b("phi_g.l0.b"))));
  Tape::Var h = xid;
  for (int l = 1; l <= kGcnLayers; ++l) {
    std::string base = "gcn." + std::to_string(l);
    Tape::Var z = t.concat_cols(h, ep);
    Tape::Var pre = t.matmul(t.matmul(a_hat, z), b(base + ".w"));
    h = t.relu(note(t.add_rowvec(
        t.mul_rowvec(t.layernorm(pre), b(base + ".ln.gain")),
        b(base + ".ln.bias"))));
  }
  Tape::Var dn = t.concat_cols(h, t.input(s.mask));
  Tape::Var node_out = t.tanh_(t.add_rowvec(
      t.matmul(t.leaky_relu(note(t.add_rowvec(t.matmul(dn, b("dec_node.l0.w")),
                                              b("dec_node.l0.b")))),
               b("dec_node.l1.w")),
      b("dec_node.l1.b")));
  Tape::Var gw = t.concat_cols(eg, t.row_select(h, s.wrist_node));
  Tape::Var wrist_out = t.tanh_(t.add_rowvec(
      t.matmul(t.leaky_relu(note(t.add_rowvec(t.matmul(gw, b("dec_wrist.l0.w")),
                                              b("dec_wrist.l0.b")))),
               b("dec_wrist.l1.w")),
      b("dec_wrist.l1.b")));
  Tape::Var value = t.add_rowvec(
      t.matmul(t.relu(note(t.add_rowvec(t.matmul(gw, b("critic.l0.w")),
                                        b("critic.l0.b")))),
               b("critic.l1.w")),
      b("critic.l1.b"));
  // Gaussian surrogate + value error, as in the PPO update
  Tensor aw(1, 6), an(n, 3);
  std::copy(action.begin(), action.begin() + 6, aw.data.begin());
  std::copy(action.begin() + 6, action.end(), an.data.begin());
  Tape::Var lsw = b("log_std.wrist");
  Tape::Var lsn = b("log_std.node");
  auto quad = [&](Tape::Var mean, Tape::Var ls, Tensor act) {
    Tape::Var diff = t.sub(t.input(std::move(act)), mean);
    Tape::Var z2 = t.mul_rowvec(diff, t.exp_(t.scale(ls, -1.0)));
    return t.scale(t.sum(t.mul(z2, z2)), -0.5);
  };
  Tape::Var logp = t.add(quad(wrist_out, lsw, aw), quad(node_out, lsn, an));
  Tape::Var verr = t.sub(value, t.input(Tensor(1, 1, ret)));
  return t.add(t.scale(logp, -1.0), t.mul(verr, verr));
}

inline std::vector<GradCheckResult> run_gradcheck(uint64_t seed,
                                                  int instances = 20) {
  GaussianRng rng(seed);
  std::vector<GradCheckResult> results;

  auto check = [&](const std::string& name, auto make_case) {
    GradCheckResult r;
    r.name = name;
    r.instances = instances;
    for (int i = 0; i < instances; ++i) r.worst = std::max(r.worst, make_case());
    results.push_back(r);
  };

  auto rnd = [&](int r, int c) { return detail::random_tensor(r, c, rng); };
  auto rows = [&]() { return 2 + int(rng.uniform() * 5); };
  auto cols = [&]() { return 2 + int(rng.uniform() * 5); };

  check("matmul", [&]() {
    int m = rows(), k = cols(), n = cols();
    Tensor b = rnd(k, n);
    return grad_check(
        [&](Tape& t, Tape::Var x) { return t.sum(t.matmul(x, t.input(b))); },
        rnd(m, k));
  });
  check("add", [&]() {
    int m = rows(), n = cols();
    Tensor b = rnd(m, n);
    return grad_check(
        [&](Tape& t, Tape::Var x) { return t.sum(t.add(x, t.input(b))); },
        rnd(m, n));
  });
  check("sub", [&]() {
    int m = rows(), n = cols();
    Tensor b = rnd(m, n);
    return grad_check(
        [&](Tape& t, Tape::Var x) { return t.sum(t.sub(t.input(b), x)); },
        rnd(m, n));
  });
  check("mul", [&]() {
    int m = rows(), n = cols();
    Tensor b = rnd(m, n);
    return grad_check(
        [&](Tape& t, Tape::Var x) { return t.sum(t.mul(x, x)); }, rnd(m, n));
  });
  check("add_rowvec", [&]() {
    int m = rows(), n = cols();
    Tensor b = rnd(1, n);
    return grad_check(
        [&](Tape& t, Tape::Var x) { return t.sum(t.add_rowvec(x, t.input(b))); },
        rnd(m, n));
  });
  check("mul_rowvec", [&]() {
    int m = rows(), n = cols();
    Tensor b = rnd(1, n);
    return grad_check(
        [&](Tape& t, Tape::Var x) { return t.sum(t.mul_rowvec(x, t.input(b))); },
        rnd(m, n));
  });
  check("scale", [&]() {
    return grad_check(
        [&](Tape& t, Tape::Var x) { return t.sum(t.scale(x, 1.7)); },
        rnd(rows(), cols()));
  });
  check("concat_cols", [&]() {
    int m = rows();
    Tensor b = rnd(m, cols());
    return grad_check(
        [&](Tape& t, Tape::Var x) {
          return t.sum(t.mul(t.concat_cols(x, t.input(b)),
                             t.concat_cols(x, t.input(b))));
        },
        rnd(m, cols()));
  });
  // keep inputs away from the relu/leaky kink at 0
  check("relu", [&]() {
    Tensor x = detail::random_tensor(rows(), cols(), rng);
    for (double& v : x.data) v += v >= 0 ? 0.05 : -0.05;
    return grad_check([&](Tape& t, Tape::Var v) { return t.sum(t.relu(v)); }, x);
  });
  check("leaky_relu", [&]() {
    Tensor x = detail::random_tensor(rows(), cols(), rng);
    for (double& v : x.data) v += v >= 0 ? 0.05 : -0.05;
    return grad_check(
        [&](Tape& t, Tape::Var v) { return t.sum(t.leaky_relu(v)); }, x);
  });
  check("tanh", [&]() {
    return grad_check(
        [&](Tape& t, Tape::Var v) { return t.sum(t.tanh_(v)); },
        rnd(rows(), cols()));
  });
  check("exp", [&]() {
    return grad_check(
        [&](Tape& t, Tape::Var v) { return t.sum(t.exp_(v)); },
        detail::random_tensor(rows(), cols(), rng, 0.5));
  });
  check("layernorm", [&]() {
    int m = rows(), n = 4 + cols();
    Tensor w = rnd(1, n);
    return grad_check(
        [&](Tape& t, Tape::Var v) {
          return t.sum(t.mul_rowvec(t.layernorm(v), t.input(w)));
        },
        rnd(m, n));
  });
  check("row_select", [&]() {
    int m = rows();
    return grad_check(
        [&](Tape& t, Tape::Var v) {
          return t.sum(t.mul(t.row_select(v, m / 2), t.row_select(v, m / 2)));
        },
        rnd(m, cols()));
  });
  check("mean", [&]() {
    return grad_check(
        [&](Tape& t, Tape::Var v) { return t.mean(t.mul(v, v)); },
        rnd(rows(), cols()));
  });
  check("clamp", [&]() {
    // values strictly inside (-2, 2); gradient passes through
    Tensor x = detail::random_tensor(rows(), cols(), rng, 0.5);
    for (double& v : x.data) v = std::clamp(v, -1.8, 1.8);
    return grad_check(
        [&](Tape& t, Tape::Var v) { return t.sum(t.clamp(v, -2.0, 2.0)); }, x);
  });
  check("min", [&]() {
    int m = rows(), n = cols();
    Tensor b = detail::random_tensor(m, n, rng, 1.0, 5.0);  // never the min
    return grad_check(
        [&](Tape& t, Tape::Var v) { return t.sum(t.min_(v, t.input(b))); },
        rnd(m, n));
  });

  check("block_matmul", [&]() {
    int n1 = rows(), n2 = rows(), c = cols();
    std::vector<Tensor> blocks{rnd(n1, n1), rnd(n2, n2)};
    std::vector<int> offsets{0, n1, n1 + n2};
    return grad_check(
        [&](Tape& t, Tape::Var x) {
          return t.sum(t.block_matmul(blocks, x, offsets));
        },
        rnd(n1 + n2, c));
  });
  check("row_gather", [&]() {
    int m = rows(), n = cols();
    std::vector<int> idx{0, m - 1, 0};  // repeats exercise accumulation
    return grad_check(
        [&](Tape& t, Tape::Var v) {
          Tape::Var g = t.row_gather(v, idx);
          return t.sum(t.mul(g, g));
        },
        rnd(m, n));
  });
  check("row_sum", [&]() {
    return grad_check(
        [&](Tape& t, Tape::Var v) {
          Tape::Var r = t.row_sum(v);
          return t.sum(t.mul(r, r));
        },
        rnd(rows(), cols()));
  });
  check("block_sum", [&]() {
    int n1 = rows(), n2 = rows(), c = cols();
    std::vector<int> offsets{0, n1, n1 + n2};
    return grad_check(
        [&](Tape& t, Tape::Var v) {
          Tape::Var r = t.block_sum(v, offsets);
          return t.sum(t.mul(r, r));
        },
        rnd(n1 + n2, c));
  });

  // Full policy loss: gradient through the whole network with respect to the
  // observation input exercises every layer's backward.
  {
    GradCheckResult r;
    r.name = "policy_loss";
    r.instances = instances;
    PolicyNetwork net;
    net.init_random(seed + 1);
    for (int i = 0; i < instances; ++i) {
      const int n = 2 + (i % 2);
      StateGraph s;
      std::vector<double> action(6 + 3 * n);
      double ret = 0;
      // central differences assume local smoothness: redraw any instance
      // whose relu/leaky inputs sit within the kink margin (checked on a
      // probe build before the gradient comparison, never after it)
      double kink_margin = 0;
      do {
        s.x_node = detail::random_tensor(n, kNodeFeatureDim, rng, 0.5);
        s.x_global.resize(kGlobalFeatureDim);
        for (auto& v : s.x_global) v = rng.normal() * 0.5;
        s.a_hat = Matd::identity(n);
        for (int a = 0; a < n; ++a)
          for (int b2 = 0; b2 < n; ++b2)
            s.a_hat(a, b2) = (a + b2) % 2 ? 0.2 : 0.5;
        s.mask = Matd(n, 3);
        for (auto& v : s.mask.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        s.x_physical = detail::random_tensor(n, kPhysicalFeatureDim, rng, 0.3);
        s.wrist_node = 0;
        for (auto& v : action) v = rng.normal() * 0.01;
        ret = rng.normal();
        Tape probe;
        kink_margin = 1e18;
        build_policy_loss(probe, probe.input(s.x_node), net, s, action, ret,
                          &kink_margin);
      } while (kink_margin < 1e-4);

      double worst = grad_check(
          [&](Tape& t, Tape::Var xid) {
            return build_policy_loss(t, xid, net, s, action, ret, nullptr);
          },
          s.x_node);
      r.worst = std::max(r.worst, worst);
    }
    results.push_back(r);
  }
  return results;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

inline void print_inspect(const HandBundle& b, std::ostream& os) {
  os << "hand: " << b.name << "\n";
  os << "nodes (N_h): " << b.node_count() << "\n";
  os << "actuated dof (L_h): " << b.dof() << "\n";
  os << "wrist node: " << b.graph.wrist_node << "\n\n";
  os << "node  type        finger  joints\n";
  for (int i = 0; i < b.node_count(); ++i) {
    char line[128];
    std::string joints;
    for (int j : b.graph.node_joints[i]) {
      if (!joints.empty()) joints += ",";
      joints += b.tree.joints[j].name;
    }
    std::snprintf(line, sizeof line, "%-5d %-11s %-7s %s\n", i,
                  node_type_name(b.graph.types[i]),
                  finger_label_name(b.graph.fingers[i]),
                  joints.empty() ? "-" : joints.c_str());
    os << line;
  }
  os << "\nmask (rows = nodes, cols = flex/abd/rot):\n";
  for (int i = 0; i < b.mask.rows; ++i) {
    for (int p = 0; p < 3; ++p) os << int(b.mask(i, p)) << (p < 2 ? " " : "\n");
  }
  os << "\nmapping (command order):\n";
  os << "joint                 node  primitive  sign\n";
  for (const auto& e : b.mapping.entries) {
    char line[128];
    std::snprintf(line, sizeof line, "%-21s %-5d %-10s %+d%s\n",
                  b.tree.joints[e.joint].name.c_str(), e.node,
                  primitive_name(e.primitive), e.sign,
                  e.convention_sign ? " (convention)" : "");
    os << line;
  }
}

inline int cli_run(int argc, const char* const* argv) {
  CLI::App app{"morphgrasp: morphology-aligned grasp policy toolkit"};
  app.require_subcommand(1);

  // compile
  auto* compile = app.add_subcommand("compile", "URDF to hand bundle");
  std::string c_urdf, c_out, c_meta;
  compile->add_option("urdf", c_urdf, "input URDF")->required();
  compile->add_option("-o,--output", c_out, "bundle output path")->required();
  compile->add_option("--meta", c_meta, "hand metadata json");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "summarize a bundle");
  std::string i_bundle;
  inspect->add_option("bundle", i_bundle, "bundle path")->required();

  // identify
  auto* identify = app.add_subcommand("identify", "print the primitive map");
  std::string id_bundle;
  identify->add_option("bundle", id_bundle, "bundle path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a policy");
  std::string t_hands, t_objects = "sphere", t_out, t_metrics;
  uint64_t t_seed = 0;
  int t_iters = 100, t_envs = 3, t_checkpoint = 0;
  train_cmd->add_option("--hands", t_hands, "comma list of bundles")->required();
  train_cmd->add_option("--objects", t_objects, "comma list of shapes");
  train_cmd->add_option("-o,--output", t_out, "weights output")->required();
  train_cmd->add_option("--metrics", t_metrics, "metrics log path");
  train_cmd->add_option("--seed", t_seed, "rng seed");
  train_cmd->add_option("--iterations", t_iters, "training iterations");
  train_cmd->add_option("--envs-per-pair", t_envs, "envs per (hand, object)");
  train_cmd->add_option("--checkpoint-every", t_checkpoint, "iterations");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy");
  std::string e_weights, e_hand, e_object = "sphere";
  double e_scale = 1.0;
  int e_trials = 10;
  uint64_t e_seed = 0;
  eval_cmd->add_option("--weights", e_weights, "weights file")->required();
  eval_cmd->add_option("--hand", e_hand, "bundle path")->required();
  eval_cmd->add_option("--object", e_object, "object shape");
  eval_cmd->add_option("--link-scale", e_scale, "URDF link-length scale");
  eval_cmd->add_option("--trials", e_trials, "episodes");
  eval_cmd->add_option("--seed", e_seed, "rng seed");

  // rollout
  auto* roll = app.add_subcommand("rollout", "record one episode");
  std::string r_weights, r_hand, r_record, r_object = "sphere";
  uint64_t r_seed = 0;
  roll->add_option("--weights", r_weights, "weights file")->required();
  roll->add_option("--hand", r_hand, "bundle path")->required();
  roll->add_option("--record", r_record, "episode log output")->required();
  roll->add_option("--object", r_object, "object shape");
  roll->add_option("--seed", r_seed, "rng seed");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit");
  uint64_t g_seed = 0;
  int g_instances = 20;
  gc->add_option("--seed", g_seed, "rng seed");
  gc->add_option("--instances", g_instances, "cases per op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*compile) {
      CompileOptions opt;
      if (!c_meta.empty()) opt = load_meta(c_meta);
      std::ifstream urdf_in(c_urdf);
      if (!urdf_in) throw Error(ErrorCode::IoError, "cannot read " + c_urdf);
      std::stringstream urdf_text;
      urdf_text << urdf_in.rdbuf();
      KinematicTree tree = parse_urdf(urdf_text.str());
      HandBundle b = compile_hand(tree, opt);
      save_bundle(b, c_out);
      std::cout << "compiled " << b.name << ": N_h=" << b.node_count()
                << " L_h=" << b.dof() << "\n";
    } else if (*inspect) {
      print_inspect(load_bundle(i_bundle), std::cout);
    } else if (*identify) {
      HandBundle b = load_bundle(id_bundle);
      std::cout << primmap_to_json(b.mapping).dump(2) << "\n";
    } else if (*train_cmd) {
      std::vector<HandBundle> bundles;
      for (const auto& p : split_csv(t_hands)) bundles.push_back(load_bundle(p));
      if (bundles.empty())
        throw Error(ErrorCode::InvalidConfig, "no hands given");
      std::vector<ObjectSpec> objects;
      for (const auto& o : split_csv(t_objects)) objects.push_back(parse_object(o));
      std::vector<HandTask> tasks;
      for (const auto& b : bundles) {
        HandTask task;
        task.hand = &b;
        task.objects = objects;
        tasks.push_back(task);
      }
      PolicyNetwork net;
      net.init_random(t_seed);
      TrainConfig cfg;
      cfg.iterations = t_iters;
      cfg.seed = t_seed;
      cfg.ppo.envs_per_pair = t_envs;
      cfg.checkpoint_every = t_checkpoint;
      if (t_checkpoint > 0 && !t_out.empty()) cfg.checkpoint_prefix = t_out;
      std::ofstream metrics_out;
      if (!t_metrics.empty()) {
        metrics_out.open(t_metrics);
        if (!metrics_out)
          throw Error(ErrorCode::IoError, "cannot write " + t_metrics);
      }
      auto metrics = train(net, tasks, cfg);
      if (metrics_out) {
        for (const auto& row : metrics) {
          metrics_out << "{\"iteration\": " << row.iteration << ", \"reward\": [";
          for (size_t h = 0; h < row.hand_mean_reward.size(); ++h)
            metrics_out << (h ? ", " : "")
                        << fmt_double(row.hand_mean_reward[h]);
          metrics_out << "], \"success\": [";
          for (size_t h = 0; h < row.hand_success_rate.size(); ++h)
            metrics_out << (h ? ", " : "")
                        << fmt_double(row.hand_success_rate[h]);
          metrics_out << "], \"policy_loss\": " << fmt_double(row.policy_loss)
                      << ", \"value_loss\": " << fmt_double(row.value_loss)
                      << ", \"kl\": " << fmt_double(row.approx_kl) << "}\n";
        }
      }
      save_weights(net, t_out);
      std::cout << "trained " << metrics.size() << " iterations, weights at "
                << t_out << "\n";
    } else if (*eval_cmd) {
      PolicyNetwork net;
      load_weights(net, e_weights);
      HandBundle b = load_bundle(e_hand);
      SceneConfig scene;
      scene.object = parse_object(e_object);
      EvalResult res = evaluate(net, b, scene, e_trials, e_seed, e_scale);
      std::cout << "trials: " << res.trials
                << "\nsuccess_rate: " << res.success_rate
                << "\nmean_step_reward: " << res.mean_reward << "\n";
    } else if (*roll) {
      PolicyNetwork net;
      load_weights(net, r_weights);
      HandBundle b = load_bundle(r_hand);
      SceneConfig scene;
      scene.object = parse_object(r_object);
      GraspScene sc = reset(b, scene, r_seed);
      Observation obs{build_observation(sc)};
      while (!sc.done()) {
        ForwardResult fwd = policy_forward_fast(net, obs.state);
        StepResult sr = step(sc, fwd.mean);
        obs = std::move(sr.obs);
      }
      save_episode_log(sc, r_record);
      std::cout << "episode recorded to " << r_record
                << " (success=" << (evaluate_success(sc) ? "true" : "false")
                << ")\n";
    } else if (*gc) {
      auto results = run_gradcheck(g_seed, g_instances);
      bool ok = true;
      for (const auto& r : results) {
        bool pass = r.worst < 1e-5;
        ok = ok && pass;
        char line[128];
        std::snprintf(line, sizeof line, "%-12s %3d cases  worst %.3e  %s\n",
                      r.name.c_str(), r.instances, r.worst,
                      pass ? "ok" : "FAIL");
        std::cout << line;
      }
      if (!ok) {
        std::cerr << "gradient check failed\n";
        return 1;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace morphgrasp
