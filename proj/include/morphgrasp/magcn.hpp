#pragma once

// The MAGCN policy/value network: node-wise physical-prior encoder, global
// encoder, 10-layer GCN with per-layer prior injection, mask-conditioned
// node decoder, wrist decoder and critic head. Weight shapes are independent
// of the node count, so one weight file drives every hand.

#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphgrasp/core.hpp"
#include "morphgrasp/phys_features.hpp"
#include "morphgrasp/primitive_map.hpp"
#include "morphgrasp/tensor.hpp"

namespace morphgrasp {

inline constexpr int kNodeFeatureDim = 23;
inline constexpr int kGlobalFeatureDim = 15;
inline constexpr int kGcnLayers = 10;
inline constexpr int kPhysEmbedDim = 32;
inline constexpr int kGcnWidth1 = 128;
inline constexpr int kGcnWidth = 256;
inline constexpr int kGlobalEmbedDim = 256;

struct ActionScales {
  double wrist_translation = 0.01;  // m per step
  double wrist_rotation = 0.02;     // rad per step
  double node = 0.1;                // rad per step
};

struct StateGraph {
  Matd x_node;                    // N x 23
  std::vector<double> x_global;   // 15
  Matd a_hat;                     // N x N normalized adjacency
  Matd mask;                      // N x 3 activation mask
  Matd x_physical;                // N x 27 static priors
  int wrist_node = 0;
};

// Column layout of x_node rows.
namespace obs {
inline constexpr int kDist = 0;        // d_i (3)
inline constexpr int kTheta = 3;       // theta_i (3)
inline constexpr int kThetaDot = 6;    // theta_dot_i (3)
inline constexpr int kContact = 9;     // c_i
inline constexpr int kForce = 10;      // f_i
inline constexpr int kFingerOneHot = 11;  // 6
inline constexpr int kTypeOneHot = 17;    // 6
}  // namespace obs

class PolicyNetwork {
 public:
  ActionScales scales;
  double log_std_min = -5.0, log_std_max = 1.0;

  PolicyNetwork() { build_params(); }

  static PolicyNetwork randomized(uint64_t seed) {
    PolicyNetwork net;
    net.init_random(seed);
    return net;
  }

  Param& param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw Error(ErrorCode::MissingParameter, name);
    return params_[it->second];
  }
  const Param& param(const std::string& name) const {
    return const_cast<PolicyNetwork*>(this)->param(name);
  }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  void init_random(uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&](Param& p, double std) {
      std::normal_distribution<double> dist(0.0, std);
      for (double& v : p.value.data) v = dist(rng);
    };
    for (Param& p : params_) {
      bool is_bias = p.name.ends_with(".b") || p.name.ends_with(".bias");
      bool is_gain = p.name.ends_with(".gain");
      bool is_logstd = p.name.starts_with("log_std.");
      if (is_bias) {
        std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
      } else if (is_gain) {
        std::fill(p.value.data.begin(), p.value.data.end(), 1.0);
      } else if (is_logstd) {
        // exploration noise must start inside the executed action caps:
        // e^-5.0 ~ 0.007 < 0.01 m (wrist), e^-3.5 ~ 0.03 < 0.1 rad (node);
        // wider noise gets clamped by the env, so its log-prob would
        // describe motion that never happened
        double v = p.name == "log_std.wrist" ? -5.0 : -3.5;
        std::fill(p.value.data.begin(), p.value.data.end(), v);
      } else {
        double std = std::sqrt(2.0 / p.value.rows);
        // near-zero initial action means and values
        if (p.name == "dec_node.l1.w" || p.name == "dec_wrist.l1.w" ||
            p.name == "critic.l1.w")
          std *= 0.01;
        fill(p, std);
      }
    }
  }

 private:
  void build_params() {
    auto add = [&](const std::string& name, int r, int c) {
      index_[name] = params_.size();
      params_.emplace_back(name, r, c);
    };
    add("phi_p.l0.w", kPhysicalFeatureDim, kPhysEmbedDim);
    add("phi_p.l0.b", 1, kPhysEmbedDim);
    add("phi_p.l1.w", kPhysEmbedDim, kPhysEmbedDim);
    add("phi_p.l1.b", 1, kPhysEmbedDim);
    add("phi_g.l0.w", kGlobalFeatureDim, kGlobalEmbedDim);
    add("phi_g.l0.b", 1, kGlobalEmbedDim);
    int in = kNodeFeatureDim + kPhysEmbedDim;
    int out = kGcnWidth1;
    for (int l = 1; l <= kGcnLayers; ++l) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "gcn.%d", l);
      add(std::string(buf) + ".w", in, out);
      add(std::string(buf) + ".ln.gain", 1, out);
      add(std::string(buf) + ".ln.bias", 1, out);
      in = out + kPhysEmbedDim;
      out = kGcnWidth;
    }
    add("dec_node.l0.w", kGcnWidth + 3, 128);
    add("dec_node.l0.b", 1, 128);
    add("dec_node.l1.w", 128, 3);
    add("dec_node.l1.b", 1, 3);
    add("dec_wrist.l0.w", kGcnWidth + kGlobalEmbedDim, 128);
    add("dec_wrist.l0.b", 1, 128);
    add("dec_wrist.l1.w", 128, 6);
    add("dec_wrist.l1.b", 1, 6);
    add("critic.l0.w", kGcnWidth + kGlobalEmbedDim, 128);
    add("critic.l0.b", 1, 128);
    add("critic.l1.w", 128, 1);
    add("critic.l1.b", 1, 1);
    add("log_std.wrist", 1, 6);
    add("log_std.node", 1, 3);
  }

  std::vector<Param> params_;
  std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// Forward pass on a tape. Parameters are bound once per tape and shared
// across samples so multiple states can contribute to a single loss.

struct BoundNet {
  PolicyNetwork* net;
  Tape* tape;
  std::map<std::string, Tape::Var> vars;

  BoundNet(PolicyNetwork& n, Tape& t) : net(&n), tape(&t) {}

  Tape::Var operator()(const std::string& name) {
    auto it = vars.find(name);
    if (it != vars.end()) return it->second;
    Tape::Var v = tape->param(net->param(name));
    vars.emplace(name, v);
    return v;
  }
};

struct ForwardVars {
  Tape::Var node_mean;   // N x 3, scaled units
  Tape::Var wrist_mean;  // 1 x 6, scaled units
  Tape::Var value;       // 1 x 1
  Tape::Var log_std_wrist;  // 1 x 6, clamped
  Tape::Var log_std_node;   // 1 x 3, clamped
};

inline ForwardVars policy_forward_vars(BoundNet& b, const StateGraph& s) {
  Tape& t = *b.tape;
  const int n = s.x_node.rows;
  if (n < 1 || s.x_node.cols != kNodeFeatureDim)
    throw Error(ErrorCode::ShapeMismatch, "x_node");
  if (int(s.x_global.size()) != kGlobalFeatureDim)
    throw Error(ErrorCode::ShapeMismatch, "x_global");
  if (s.a_hat.rows != n || s.a_hat.cols != n)
    throw Error(ErrorCode::ShapeMismatch, "a_hat");
  if (s.mask.rows != n || s.mask.cols != 3)
    throw Error(ErrorCode::ShapeMismatch, "mask");
  if (s.x_physical.rows != n || s.x_physical.cols != kPhysicalFeatureDim)
    throw Error(ErrorCode::MissingParameter,
                "MissingPhysicalFeatures: x_physical is " +
                    std::to_string(s.x_physical.rows) + " rows");

  auto linear = [&](Tape::Var x, const std::string& prefix) {
    return t.add_rowvec(t.matmul(x, b(prefix + ".w")), b(prefix + ".b"));
  };

  // physical embedding
  Tape::Var xp = t.input(s.x_physical);
  Tape::Var ep = linear(t.leaky_relu(linear(xp, "phi_p.l0")), "phi_p.l1");

  // global embedding
  Tensor xg(1, kGlobalFeatureDim);
  xg.data.assign(s.x_global.begin(), s.x_global.end());
  Tape::Var eg = t.leaky_relu(linear(t.input(xg), "phi_g.l0"));

  // GCN with layer-wise injection: H = relu(Ln(A [H|Ep] W))
  Tape::Var a_hat = t.input(s.a_hat);
  Tape::Var h = t.input(s.x_node);
  for (int l = 1; l <= kGcnLayers; ++l) {
    std::string base = "gcn." + std::to_string(l);
    Tape::Var z = t.concat_cols(h, ep);
    Tape::Var pre = t.matmul(t.matmul(a_hat, z), b(base + ".w"));
    Tape::Var ln = t.add_rowvec(
        t.mul_rowvec(t.layernorm(pre), b(base + ".ln.gain")),
        b(base + ".ln.bias"));
    h = t.relu(ln);
  }
  Tape::Var e_node = h;

  // mask-conditioned node decoder
  Tape::Var dn = t.concat_cols(e_node, t.input(s.mask));
  Tape::Var node_out =
      t.tanh_(linear(t.leaky_relu(linear(dn, "dec_node.l0")), "dec_node.l1"));
  Tape::Var node_mean = t.scale(node_out, b.net->scales.node);

  // wrist decoder and critic share [E_g | e_wrist]
  Tape::Var e_wrist = t.row_select(e_node, s.wrist_node);
  Tape::Var gw = t.concat_cols(eg, e_wrist);
  Tape::Var wrist_out = t.tanh_(
      linear(t.leaky_relu(linear(gw, "dec_wrist.l0")), "dec_wrist.l1"));
  Tensor wscale(1, 6);
  for (int i = 0; i < 3; ++i) {
    wscale(0, i) = b.net->scales.wrist_translation;
    wscale(0, 3 + i) = b.net->scales.wrist_rotation;
  }
  Tape::Var wrist_mean = t.mul_rowvec(wrist_out, t.input(wscale));

  Tape::Var value =
      linear(t.relu(linear(gw, "critic.l0")), "critic.l1");

  ForwardVars out;
  out.node_mean = node_mean;
  out.wrist_mean = wrist_mean;
  out.value = value;
  out.log_std_wrist =
      t.clamp(b("log_std.wrist"), b.net->log_std_min, b.net->log_std_max);
  out.log_std_node =
      t.clamp(b("log_std.node"), b.net->log_std_min, b.net->log_std_max);
  return out;
}

// Flat action layout: [wrist(6) | node primitives row-major (3N)].
struct ForwardResult {
  PrimitiveAction mean;
  std::vector<double> log_std;  // 6 + 3N
  double value = 0;

  std::vector<double> mean_flat() const {
    std::vector<double> out;
    out.reserve(6 + mean.node.data.size());
    for (int i = 0; i < 3; ++i) out.push_back(mean.wrist_translation[i]);
    for (int i = 0; i < 3; ++i) out.push_back(mean.wrist_rotation[i]);
    out.insert(out.end(), mean.node.data.begin(), mean.node.data.end());
    return out;
  }
};

inline PrimitiveAction action_from_flat(const std::vector<double>& flat, int n) {
  PrimitiveAction a;
  for (int i = 0; i < 3; ++i) a.wrist_translation[i] = flat[i];
  for (int i = 0; i < 3; ++i) a.wrist_rotation[i] = flat[3 + i];
  a.node = Matd(n, 3);
  std::copy(flat.begin() + 6, flat.end(), a.node.data.begin());
  return a;
}

inline ForwardResult policy_forward(PolicyNetwork& net, const StateGraph& s) {
  Tape tape;
  BoundNet b(net, tape);
  ForwardVars v = policy_forward_vars(b, s);
  ForwardResult out;
  const Tensor& nm = tape.value(v.node_mean);
  const Tensor& wm = tape.value(v.wrist_mean);
  out.mean.node = nm;
  for (int i = 0; i < 3; ++i) out.mean.wrist_translation[i] = wm(0, i);
  for (int i = 0; i < 3; ++i) out.mean.wrist_rotation[i] = wm(0, 3 + i);
  out.value = tape.value(v.value)(0, 0);
  const Tensor& lw = tape.value(v.log_std_wrist);
  const Tensor& ln = tape.value(v.log_std_node);
  out.log_std.assign(6 + size_t(nm.rows) * 3, 0.0);
  for (int i = 0; i < 6; ++i) out.log_std[i] = lw(0, i);
  for (int i = 0; i < nm.rows; ++i)
    for (int p = 0; p < 3; ++p) out.log_std[6 + 3 * i + p] = ln(0, p);
  return out;
}

// ---------------------------------------------------------------------------
// Batched forward pass: several state graphs are stacked row-wise so every
// dense layer runs as one GEMM and the graph convolution runs block-diagonal.
// Semantically identical to policy_forward_vars applied per sample.

struct BatchForwardVars {
  Tape::Var node_mean;      // sum(N_s) x 3
  Tape::Var wrist_mean;     // S x 6
  Tape::Var value;          // S x 1
  Tape::Var log_std_wrist;  // 1 x 6, clamped
  Tape::Var log_std_node;   // 1 x 3, clamped
  std::vector<int> offsets;  // S+1 row offsets into the node stack
};

inline BatchForwardVars policy_forward_batch_vars(
    BoundNet& b, const std::vector<const StateGraph*>& batch) {
  Tape& t = *b.tape;
  const int S = int(batch.size());
  if (S == 0) throw Error(ErrorCode::ShapeMismatch, "empty batch");

  std::vector<int> offsets(1, 0);
  std::vector<int> wrist_rows;
  for (const StateGraph* s : batch) {
    const int n = s->x_node.rows;
    if (n < 1 || s->x_node.cols != kNodeFeatureDim)
      throw Error(ErrorCode::ShapeMismatch, "x_node");
    if (int(s->x_global.size()) != kGlobalFeatureDim)
      throw Error(ErrorCode::ShapeMismatch, "x_global");
    if (s->a_hat.rows != n || s->a_hat.cols != n)
      throw Error(ErrorCode::ShapeMismatch, "a_hat");
    if (s->mask.rows != n || s->mask.cols != 3)
      throw Error(ErrorCode::ShapeMismatch, "mask");
    if (s->x_physical.rows != n || s->x_physical.cols != kPhysicalFeatureDim)
      throw Error(ErrorCode::MissingParameter,
                  "MissingPhysicalFeatures: x_physical is " +
                      std::to_string(s->x_physical.rows) + " rows");
    wrist_rows.push_back(offsets.back() + s->wrist_node);
    offsets.push_back(offsets.back() + n);
  }
  const int total = offsets.back();

  auto stack_nodes = [&](auto&& field, int cols) {
    Tensor out(total, cols);
    for (int s = 0; s < S; ++s) {
      const Matd& m = field(*batch[s]);
      std::copy(m.data.begin(), m.data.end(),
                out.data.begin() + size_t(offsets[s]) * cols);
    }
    return out;
  };

  auto linear = [&](Tape::Var x, const std::string& prefix) {
    return t.add_rowvec(t.matmul(x, b(prefix + ".w")), b(prefix + ".b"));
  };

  Tape::Var xp = t.input(stack_nodes(
      [](const StateGraph& s) -> const Matd& { return s.x_physical; },
      kPhysicalFeatureDim));
  Tape::Var ep = linear(t.leaky_relu(linear(xp, "phi_p.l0")), "phi_p.l1");

  Tensor xg(S, kGlobalFeatureDim);
  for (int s = 0; s < S; ++s)
    std::copy(batch[s]->x_global.begin(), batch[s]->x_global.end(),
              xg.data.begin() + size_t(s) * kGlobalFeatureDim);
  Tape::Var eg = t.leaky_relu(linear(t.input(xg), "phi_g.l0"));

  std::vector<Tensor> blocks;
  blocks.reserve(S);
  for (const StateGraph* s : batch) blocks.push_back(Tensor(s->a_hat));

  Tape::Var h = t.input(stack_nodes(
      [](const StateGraph& s) -> const Matd& { return s.x_node; },
      kNodeFeatureDim));
  for (int l = 1; l <= kGcnLayers; ++l) {
    std::string base = "gcn." + std::to_string(l);
    Tape::Var z = t.concat_cols(h, ep);
    Tape::Var pre =
        t.matmul(t.block_matmul(blocks, z, offsets), b(base + ".w"));
    Tape::Var ln = t.add_rowvec(
        t.mul_rowvec(t.layernorm(pre), b(base + ".ln.gain")),
        b(base + ".ln.bias"));
    h = t.relu(ln);
  }
  Tape::Var e_node = h;

  Tape::Var dn = t.concat_cols(
      e_node, t.input(stack_nodes(
                  [](const StateGraph& s) -> const Matd& { return s.mask; },
                  3)));
  Tape::Var node_out =
      t.tanh_(linear(t.leaky_relu(linear(dn, "dec_node.l0")), "dec_node.l1"));
  Tape::Var node_mean = t.scale(node_out, b.net->scales.node);

  Tape::Var e_wrist = t.row_gather(e_node, wrist_rows);
  Tape::Var gw = t.concat_cols(eg, e_wrist);
  Tape::Var wrist_out = t.tanh_(
      linear(t.leaky_relu(linear(gw, "dec_wrist.l0")), "dec_wrist.l1"));
  Tensor wscale(1, 6);
  for (int i = 0; i < 3; ++i) {
    wscale(0, i) = b.net->scales.wrist_translation;
    wscale(0, 3 + i) = b.net->scales.wrist_rotation;
  }
  Tape::Var wrist_mean = t.mul_rowvec(wrist_out, t.input(wscale));

  Tape::Var value = linear(t.relu(linear(gw, "critic.l0")), "critic.l1");

  BatchForwardVars out;
  out.node_mean = node_mean;
  out.wrist_mean = wrist_mean;
  out.value = value;
  out.log_std_wrist =
      t.clamp(b("log_std.wrist"), b.net->log_std_min, b.net->log_std_max);
  out.log_std_node =
      t.clamp(b("log_std.node"), b.net->log_std_min, b.net->log_std_max);
  out.offsets = std::move(offsets);
  return out;
}

// ---------------------------------------------------------------------------
// Tape-free forward pass for rollouts. Produces the same numbers as
// policy_forward without recording gradients.

inline ForwardResult policy_forward_fast(const PolicyNetwork& net,
                                         const StateGraph& s) {
  using EMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int n = s.x_node.rows;
  auto M = [&](const std::string& name) {
    const Matd& v = net.param(name).value;
    return Eigen::Map<const EMat>(v.data.data(), v.rows, v.cols);
  };
  auto linear = [&](const EMat& x, const std::string& p) -> EMat {
    EMat out = x * M(p + ".w");
    out.rowwise() += M(p + ".b").row(0);
    return out;
  };
  auto lrelu = [](EMat m) -> EMat {
    return m.array().max(m.array() * 0.01).matrix();
  };
  auto relu_ = [](EMat m) -> EMat { return m.array().max(0.0).matrix(); };

  EMat xp = Eigen::Map<const EMat>(s.x_physical.data.data(), n,
                                   kPhysicalFeatureDim);
  EMat ep = linear(lrelu(linear(xp, "phi_p.l0")), "phi_p.l1");

  EMat xg = Eigen::Map<const EMat>(s.x_global.data(), 1, kGlobalFeatureDim);
  EMat eg = lrelu(linear(xg, "phi_g.l0"));

  EMat a = Eigen::Map<const EMat>(s.a_hat.data.data(), n, n);
  EMat h = Eigen::Map<const EMat>(s.x_node.data.data(), n, kNodeFeatureDim);
  for (int l = 1; l <= kGcnLayers; ++l) {
    std::string base = "gcn." + std::to_string(l);
    EMat z(n, h.cols() + ep.cols());
    z << h, ep;
    EMat pre = (a * z) * M(base + ".w");
    // row-wise layer norm, matching Tape::layernorm
    for (int i = 0; i < n; ++i) {
      double mean = pre.row(i).mean();
      double var = (pre.row(i).array() - mean).square().mean();
      pre.row(i) = (pre.row(i).array() - mean) / std::sqrt(var + 1e-5);
    }
    pre = pre.array().rowwise() * M(base + ".ln.gain").row(0).array();
    pre.rowwise() += M(base + ".ln.bias").row(0);
    h = relu_(pre);
  }

  EMat dn(n, h.cols() + 3);
  dn << h, Eigen::Map<const EMat>(s.mask.data.data(), n, 3);
  EMat node_mean =
      linear(lrelu(linear(dn, "dec_node.l0")), "dec_node.l1").array().tanh() *
      net.scales.node;

  EMat gw(1, eg.cols() + h.cols());
  gw << eg, h.row(s.wrist_node);
  EMat wrist =
      linear(lrelu(linear(gw, "dec_wrist.l0")), "dec_wrist.l1").array().tanh();
  for (int i = 0; i < 3; ++i) {
    wrist(0, i) *= net.scales.wrist_translation;
    wrist(0, 3 + i) *= net.scales.wrist_rotation;
  }
  double value = linear(relu_(linear(gw, "critic.l0")), "critic.l1")(0, 0);

  auto clamp_ls = [&](double v) {
    return std::clamp(v, net.log_std_min, net.log_std_max);
  };
  ForwardResult out;
  out.mean.node = Matd(n, 3);
  Eigen::Map<EMat>(out.mean.node.data.data(), n, 3) = node_mean;
  for (int i = 0; i < 3; ++i) out.mean.wrist_translation[i] = wrist(0, i);
  for (int i = 0; i < 3; ++i) out.mean.wrist_rotation[i] = wrist(0, 3 + i);
  out.value = value;
  const Matd& lw = net.param("log_std.wrist").value;
  const Matd& ln = net.param("log_std.node").value;
  out.log_std.assign(6 + size_t(n) * 3, 0.0);
  for (int i = 0; i < 6; ++i) out.log_std[i] = clamp_ls(lw(0, i));
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < 3; ++p) out.log_std[6 + 3 * i + p] = clamp_ls(ln(0, p));
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian sampling. Box-Muller on a dedicated engine keeps sampling
// bit-reproducible for a given seed independent of the standard library.

class GaussianRng {
 public:
  explicit GaussianRng(uint64_t seed) : engine_(seed) {}

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0, u2 = 0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }
  uint64_t raw() { return engine_(); }
  double uniform() {
    return double(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0;
};

struct SampledAction {
  std::vector<double> flat;  // 6 + 3N
  double log_prob = 0;
};

inline double gaussian_log_prob(const std::vector<double>& x,
                                const std::vector<double>& mean,
                                const std::vector<double>& log_std) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double lp = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    double z = (x[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -log_std[i] - 0.5 * kLog2Pi - 0.5 * z * z;
  }
  return lp;
}

inline SampledAction sample_action(const ForwardResult& fwd, GaussianRng& rng) {
  std::vector<double> mean = fwd.mean_flat();
  SampledAction out;
  out.flat.resize(mean.size());
  for (size_t i = 0; i < mean.size(); ++i)
    out.flat[i] = mean[i] + std::exp(fwd.log_std[i]) * rng.normal();
  out.log_prob = gaussian_log_prob(out.flat, mean, fwd.log_std);
  return out;
}

// ---------------------------------------------------------------------------
// Weight files, schema "weights/1".

inline nlohmann::json weights_to_json(const PolicyNetwork& net) {
  nlohmann::json doc;
  doc["schema"] = "weights/1";
  nlohmann::json params = nlohmann::json::array();
  for (const Param& p : net.params()) {
    nlohmann::json e;
    e["name"] = p.name;
    e["shape"] = {p.value.rows, p.value.cols};
    e["data"] = base64_encode_doubles(p.value.data);
    params.push_back(e);
  }
  doc["params"] = params;
  return doc;
}

inline void weights_from_json(const nlohmann::json& doc, PolicyNetwork& net) {
  if (!doc.contains("schema") || doc["schema"] != "weights/1")
    throw Error(ErrorCode::SchemaVersionMismatch,
                doc.value("schema", std::string("<missing>")));
  std::map<std::string, bool> seen;
  for (const Param& p : net.params()) seen[p.name] = false;
  for (const auto& e : doc.at("params")) {
    std::string name = e.at("name");
    auto it = seen.find(name);
    if (it == seen.end())
      throw Error(ErrorCode::MissingParameter, "unknown parameter " + name);
    Param& p = net.param(name);
    int r = e.at("shape")[0], c = e.at("shape")[1];
    if (r != p.value.rows || c != p.value.cols)
      throw Error(ErrorCode::ShapeMismatch,
                  name + " is (" + std::to_string(r) + "," + std::to_string(c) +
                      "), expected (" + std::to_string(p.value.rows) + "," +
                      std::to_string(p.value.cols) + ")");
    std::vector<double> data = base64_decode_doubles(e.at("data"));
    if (data.size() != p.value.data.size())
      throw Error(ErrorCode::ShapeMismatch, name + " payload size");
    p.value.data.assign(data.begin(), data.end());
    it->second = true;
  }
  for (const auto& [name, ok] : seen)
    if (!ok) throw Error(ErrorCode::MissingParameter, name);
}

inline void save_weights(const PolicyNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << weights_to_json(net).dump(2) << "\n";
}

inline void load_weights(PolicyNetwork& net, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path + ": " + e.what());
  }
  weights_from_json(doc, net);
}

}  // namespace morphgrasp
