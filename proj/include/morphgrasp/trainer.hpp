#pragma once

// PPO with GAE over the grasp environment. One shared PolicyNetwork is
// updated from interleaved rollouts across every (hand, object, repeat)
// environment; evaluation runs deterministic mean-action trials.

#include <atomic>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <thread>
#include <vector>

#include "morphgrasp/env.hpp"
#include "morphgrasp/magcn.hpp"

namespace morphgrasp {

struct PpoConfig {
  double gamma = 0.996;
  double lam = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatches = 4;
  double learning_rate = 5e-4;
  double max_grad_norm = 0.5;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  int envs_per_pair = 3;  // N_repeat
};

struct Transition {
  StateGraph state;
  std::vector<double> action;  // flat, 6 + 3N
  double log_prob = 0;
  double reward = 0;
  double value = 0;
  bool done = false;
  double advantage = 0;
  double ret = 0;
};

struct RolloutBatch {
  std::vector<Transition> transitions;
};

// Standard GAE recursion per trajectory; terminal steps bootstrap zero.
inline void compute_gae(RolloutBatch& batch, double gamma, double lam) {
  auto& tr = batch.transitions;
  double adv = 0;
  for (int t = int(tr.size()) - 1; t >= 0; --t) {
    double next_value = 0, next_nonterminal = 0;
    if (!tr[t].done && t + 1 < int(tr.size())) {
      next_value = tr[t + 1].value;
      next_nonterminal = 1.0;
    }
    double delta =
        tr[t].reward + gamma * next_value * next_nonterminal - tr[t].value;
    adv = delta + gamma * lam * next_nonterminal * adv;
    if (tr[t].done) adv = delta;
    tr[t].advantage = adv;
    tr[t].ret = adv + tr[t].value;
  }
}

// ---------------------------------------------------------------------------
// Adam with global-norm gradient clipping.

struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m, v;

  void init(const PolicyNetwork& net) {
    m.clear();
    v.clear();
    for (const Param& p : net.params()) {
      m.emplace_back(p.value.rows, p.value.cols);
      v.emplace_back(p.value.rows, p.value.cols);
    }
  }

  void apply(PolicyNetwork& net, double max_grad_norm) {
    auto& params = net.params();
    if (m.size() != params.size()) init(net);
    double sq = 0;
    for (const Param& p : params)
      for (double g : p.grad.data) sq += g * g;
    double norm = std::sqrt(sq);
    double scale = (max_grad_norm > 0 && norm > max_grad_norm)
                       ? max_grad_norm / norm
                       : 1.0;
    ++step;
    double bc1 = 1.0 - std::pow(beta1, double(step));
    double bc2 = 1.0 - std::pow(beta2, double(step));
    for (size_t i = 0; i < params.size(); ++i) {
      Param& p = params[i];
      for (size_t k = 0; k < p.value.data.size(); ++k) {
        double g = p.grad.data[k] * scale;
        m[i].data[k] = beta1 * m[i].data[k] + (1 - beta1) * g;
        v[i].data[k] = beta2 * v[i].data[k] + (1 - beta2) * g * g;
        double mh = m[i].data[k] / bc1, vh = v[i].data[k] / bc2;
        p.value.data[k] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// PPO update. Returns the mean losses over all minibatches of the last epoch.

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double approx_kl = 0;
};

namespace detail {

// Differentiable log-density of the stored action under the current policy,
// plus the entropy term, on the caller's tape.
struct LogProbVars {
  Tape::Var log_prob;  // 1 x 1
  Tape::Var entropy;   // 1 x 1
};

inline LogProbVars action_log_prob_vars(Tape& t, const ForwardVars& fv,
                                        const Transition& tr) {
  const int n = tr.state.x_node.rows;
  Tensor aw(1, 6), an(n, 3);
  std::copy(tr.action.begin(), tr.action.begin() + 6, aw.data.begin());
  std::copy(tr.action.begin() + 6, tr.action.end(), an.data.begin());

  constexpr double kLog2Pi = 1.8378770664093454836;
  auto gauss_term = [&](Tape::Var mean_v, Tape::Var log_std_v, Tensor action,
                        int rows) {
    Tape::Var diff = t.sub(t.input(std::move(action)), mean_v);
    Tape::Var z = t.mul_rowvec(diff, t.exp_(t.scale(log_std_v, -1.0)));
    Tape::Var quad = t.scale(t.sum(t.mul(z, z)), -0.5);
    Tape::Var lds = t.scale(t.sum(log_std_v), -double(rows));
    return t.add(quad, t.add(lds, t.input(Tensor(
                                      1, 1, -0.5 * kLog2Pi * 3 * rows *
                                                (rows == 1 ? 2 : 1)))));
  };
  // wrist: 6 dims in one row; nodes: 3 dims in each of n rows
  Tape::Var lp_w = gauss_term(fv.wrist_mean, fv.log_std_wrist, aw, 1);
  Tape::Var lp_n = gauss_term(fv.node_mean, fv.log_std_node, an, n);

  LogProbVars out;
  out.log_prob = t.add(lp_w, lp_n);
  // entropy of the diagonal Gaussian: sum(log_std) + D/2 (1 + log 2 pi)
  double d = 6.0 + 3.0 * n;
  Tape::Var ent_sum = t.add(t.sum(fv.log_std_wrist),
                            t.scale(t.sum(fv.log_std_node), double(n)));
  out.entropy = t.add(
      ent_sum, t.input(Tensor(1, 1, 0.5 * d * (1.0 + kLog2Pi))));
  return out;
}

}  // namespace detail

inline UpdateStats ppo_update(PolicyNetwork& net, AdamState& adam,
                              RolloutBatch& batch, const PpoConfig& cfg,
                              uint64_t seed) {
  auto& tr = batch.transitions;
  const int total = int(tr.size());
  if (total == 0) throw Error(ErrorCode::InvalidConfig, "empty batch");

  // advantage normalization over the whole batch
  double mean = 0, var = 0;
  for (const auto& x : tr) mean += x.advantage;
  mean /= total;
  for (const auto& x : tr) var += (x.advantage - mean) * (x.advantage - mean);
  double stddev = std::sqrt(var / total) + 1e-8;
  std::vector<double> adv(total);
  for (int i = 0; i < total; ++i) adv[i] = (tr[i].advantage - mean) / stddev;

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  GaussianRng shuffle_rng(seed);

  UpdateStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the scene rng for reproducibility
    for (int i = total - 1; i > 0; --i) {
      int j = int(shuffle_rng.uniform() * (i + 1));
      if (j > i) j = i;
      std::swap(order[i], order[j]);
    }
    stats = UpdateStats{};
    int n_mb = std::min(cfg.minibatches, total);
    for (int mb = 0; mb < n_mb; ++mb) {
      int lo = mb * total / n_mb, hi = (mb + 1) * total / n_mb;
      int count = hi - lo;
      if (count == 0) continue;

      Tape tape;
      BoundNet bound(net, tape);

      // Stack the minibatch: one batched forward, then a vectorized
      // Gaussian log-density over the per-sample row blocks.
      std::vector<const StateGraph*> states;
      states.reserve(count);
      for (int k = lo; k < hi; ++k)
        states.push_back(&tr[order[k]].state);
      BatchForwardVars fv = policy_forward_batch_vars(bound, states);

      constexpr double kLog2Pi = 1.8378770664093454836;
      Tensor aw(count, 6), an(fv.offsets.back(), 3);
      Tensor old_lp(count, 1), adv_v(count, 1), ret_v(count, 1);
      Tensor ones(count, 1), nvec(count, 1), lp_const(count, 1),
          ent_const(count, 1);
      for (int i = 0; i < count; ++i) {
        const Transition& x = tr[order[lo + i]];
        const int n = x.state.x_node.rows;
        std::copy(x.action.begin(), x.action.begin() + 6,
                  aw.data.begin() + size_t(i) * 6);
        std::copy(x.action.begin() + 6, x.action.end(),
                  an.data.begin() + size_t(fv.offsets[i]) * 3);
        old_lp(i, 0) = x.log_prob;
        adv_v(i, 0) = adv[order[lo + i]];
        ret_v(i, 0) = x.ret;
        ones(i, 0) = 1.0;
        nvec(i, 0) = double(n);
        lp_const(i, 0) = -0.5 * kLog2Pi * (6.0 + 3.0 * n);
        ent_const(i, 0) = 0.5 * (6.0 + 3.0 * n) * (1.0 + kLog2Pi);
      }

      auto quad_of = [&](Tape::Var mean_v, Tape::Var log_std_v,
                         Tensor action) {
        Tape::Var diff = tape.sub(tape.input(std::move(action)), mean_v);
        Tape::Var z =
            tape.mul_rowvec(diff, tape.exp_(tape.scale(log_std_v, -1.0)));
        return tape.mul(z, z);
      };
      Tape::Var q_w = tape.row_sum(quad_of(fv.wrist_mean, fv.log_std_wrist,
                                           std::move(aw)));
      Tape::Var q_n = tape.block_sum(
          quad_of(fv.node_mean, fv.log_std_node, std::move(an)), fv.offsets);
      Tape::Var quad = tape.scale(tape.add(q_w, q_n), -0.5);

      Tape::Var ones_v = tape.input(std::move(ones));
      Tape::Var nvec_v = tape.input(std::move(nvec));
      Tape::Var sum_lsw = tape.sum(fv.log_std_wrist);
      Tape::Var sum_lsn = tape.sum(fv.log_std_node);
      Tape::Var lds = tape.scale(
          tape.add(tape.matmul(ones_v, sum_lsw),
                   tape.mul(nvec_v, tape.matmul(ones_v, sum_lsn))),
          -1.0);
      Tape::Var logp = tape.add(tape.add(quad, lds),
                                tape.input(std::move(lp_const)));

      Tape::Var adv_in = tape.input(std::move(adv_v));
      Tape::Var ratio =
          tape.exp_(tape.sub(logp, tape.input(std::move(old_lp))));
      Tape::Var surr1 = tape.mul(ratio, adv_in);
      Tape::Var surr2 = tape.mul(
          tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_in);
      Tape::Var pol_loss =
          tape.scale(tape.sum(tape.min_(surr1, surr2)), -1.0 / count);

      Tape::Var verr = tape.sub(fv.value, tape.input(std::move(ret_v)));
      Tape::Var val_loss =
          tape.scale(tape.sum(tape.mul(verr, verr)), 1.0 / count);

      Tape::Var ent_vec = tape.add(
          tape.add(tape.matmul(ones_v, sum_lsw),
                   tape.mul(nvec_v, tape.matmul(ones_v, sum_lsn))),
          tape.input(std::move(ent_const)));
      Tape::Var entropy = tape.scale(tape.sum(ent_vec), 1.0 / count);

      Tape::Var loss = tape.add(
          pol_loss, tape.add(tape.scale(val_loss, cfg.value_coef),
                             tape.scale(entropy, -cfg.entropy_coef)));
      tape.check_finite(loss, "ppo loss");

      for (Param& p : net.params()) p.zero_grad();
      tape.backward(loss);
      adam.lr = cfg.learning_rate;
      adam.apply(net, cfg.max_grad_norm);

      double mb_kl = 0;
      const Tensor& lp_now = tape.value(logp);
      for (int i = 0; i < count; ++i)
        mb_kl += tr[order[lo + i]].log_prob - lp_now(i, 0);
      stats.policy_loss += tape.value(pol_loss)(0, 0) / n_mb;
      stats.value_loss += tape.value(val_loss)(0, 0) / n_mb;
      stats.entropy += tape.value(entropy)(0, 0) / n_mb;
      stats.approx_kl += mb_kl / count / n_mb;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Rollout collection. Scenes run independently; the network is read-only.

struct EnvSlot {
  const HandBundle* hand = nullptr;
  SceneConfig scene;
  uint64_t seed = 0;
};

struct RolloutSummary {
  double mean_reward = 0;   // mean per-step reward across envs
  double success_rate = 0;  // fraction of successful episodes
};

inline int thread_budget() {
  if (const char* s = std::getenv("MORPHGRASP_THREADS")) {
    int v = std::atoi(s);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

// One full episode per slot; appends transitions in slot order.
inline RolloutSummary collect_rollouts(PolicyNetwork& net,
                                       const std::vector<EnvSlot>& slots,
                                       RolloutBatch& batch,
                                       std::vector<GraspScene>* scenes_out =
                                           nullptr) {
  const int n_envs = int(slots.size());
  std::vector<std::vector<Transition>> per_env(n_envs);
  std::vector<GraspScene> scenes(n_envs);
  std::vector<double> reward_sum(n_envs, 0.0);
  std::vector<int> successes(n_envs, 0);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int e = next.fetch_add(1);
      if (e >= n_envs) return;
      GraspScene sc = reset(*slots[e].hand, slots[e].scene, slots[e].seed);
      GaussianRng action_rng(slots[e].seed ^ 0x9e3779b97f4a7c15ull);
      Observation obs{build_observation(sc)};
      while (!sc.done()) {
        ForwardResult fwd = policy_forward_fast(net, obs.state);
        SampledAction sa = sample_action(fwd, action_rng);
        PrimitiveAction act =
            action_from_flat(sa.flat, sc.hand->node_count());
        Transition t;
        t.state = obs.state;
        t.action = sa.flat;
        t.log_prob = sa.log_prob;
        t.value = fwd.value;
        StepResult sr = step(sc, act);
        t.reward = sr.reward.total;
        t.done = sr.done;
        reward_sum[e] += sr.reward.total;
        per_env[e].push_back(std::move(t));
        obs = std::move(sr.obs);
      }
      successes[e] = evaluate_success(sc) ? 1 : 0;
      scenes[e] = std::move(sc);
    }
  };
  int n_threads = std::min(thread_budget(), n_envs);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  RolloutSummary sum;
  long steps = 0;
  for (int e = 0; e < n_envs; ++e) {
    steps += long(per_env[e].size());
    sum.mean_reward += reward_sum[e];
    sum.success_rate += successes[e];
    for (auto& t : per_env[e]) batch.transitions.push_back(std::move(t));
  }
  if (steps > 0) sum.mean_reward /= double(steps);
  if (n_envs > 0) sum.success_rate /= double(n_envs);
  if (scenes_out) *scenes_out = std::move(scenes);
  return sum;
}

// ---------------------------------------------------------------------------
// Training loop.

struct HandTask {
  const HandBundle* hand = nullptr;
  std::vector<ObjectSpec> objects;
  SceneConfig scene;  // object field overridden per object
};

struct TrainConfig {
  PpoConfig ppo;
  int iterations = 100;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables
  std::string checkpoint_prefix;
  // return true to stop early (receives the metrics row just produced)
  std::function<bool(const struct MetricsRow&)> stop;
};

struct MetricsRow {
  int iteration = 0;
  std::vector<double> hand_mean_reward;
  std::vector<double> hand_success_rate;
  double policy_loss = 0;
  double value_loss = 0;
  double approx_kl = 0;
};

inline std::vector<MetricsRow> train(PolicyNetwork& net,
                                     const std::vector<HandTask>& tasks,
                                     const TrainConfig& cfg) {
  if (tasks.empty()) throw Error(ErrorCode::InvalidConfig, "no hands");
  AdamState adam;
  adam.init(net);
  std::vector<MetricsRow> metrics;

  for (int it = 0; it < cfg.iterations; ++it) {
    MetricsRow row;
    row.iteration = it;
    RolloutBatch batch;
    for (size_t h = 0; h < tasks.size(); ++h) {
      const HandTask& task = tasks[h];
      std::vector<EnvSlot> slots;
      for (size_t o = 0; o < task.objects.size(); ++o)
        for (int r = 0; r < cfg.ppo.envs_per_pair; ++r) {
          EnvSlot slot;
          slot.hand = task.hand;
          slot.scene = task.scene;
          slot.scene.object = task.objects[o];
          slot.seed = cfg.seed + 1000003ull * uint64_t(it) +
                      10007ull * uint64_t(h) + 101ull * uint64_t(o) +
                      uint64_t(r);
          slots.push_back(slot);
        }
      RolloutBatch hand_batch;
      RolloutSummary sum = collect_rollouts(net, slots, hand_batch);
      row.hand_mean_reward.push_back(sum.mean_reward);
      row.hand_success_rate.push_back(sum.success_rate);
      for (auto& t : hand_batch.transitions)
        batch.transitions.push_back(std::move(t));
    }
    compute_gae(batch, cfg.ppo.gamma, cfg.ppo.lam);
    UpdateStats st = ppo_update(net, adam, batch, cfg.ppo,
                                cfg.seed + 7919ull * uint64_t(it));
    row.policy_loss = st.policy_loss;
    row.value_loss = st.value_loss;
    row.approx_kl = st.approx_kl;
    metrics.push_back(row);

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
        (it + 1) % cfg.checkpoint_every == 0)
      save_weights(net, cfg.checkpoint_prefix + "_" + std::to_string(it + 1) +
                            ".json");
    if (cfg.stop && cfg.stop(row)) break;
  }
  return metrics;
}

// ---------------------------------------------------------------------------
// Deterministic evaluation. link_scale rebuilds the static priors from a
// scaled tree while the scene geometry stays nominal.

struct EvalResult {
  double success_rate = 0;
  double mean_reward = 0;  // mean per-step reward
  int trials = 0;
};

inline EvalResult evaluate(PolicyNetwork& net, const HandBundle& hand,
                           const SceneConfig& scene_cfg, int trials,
                           uint64_t seed, double link_scale = 1.0) {
  if (trials <= 0) throw Error(ErrorCode::InvalidConfig, "trials <= 0");
  HandBundle scaled = hand;
  if (link_scale != 1.0)
    scaled.x_physical = scaled_physical_features(hand, link_scale);

  EvalResult res;
  res.trials = trials;
  long steps = 0;
  for (int trial = 0; trial < trials; ++trial) {
    GraspScene sc = reset(scaled, scene_cfg, seed + uint64_t(trial));
    Observation obs{build_observation(sc)};
    while (!sc.done()) {
      ForwardResult fwd = policy_forward_fast(net, obs.state);
      StepResult sr = step(sc, fwd.mean);
      res.mean_reward += sr.reward.total;
      ++steps;
      obs = std::move(sr.obs);
    }
    if (evaluate_success(sc)) res.success_rate += 1.0;
  }
  res.success_rate /= trials;
  if (steps > 0) res.mean_reward /= double(steps);
  return res;
}

}  // namespace morphgrasp
