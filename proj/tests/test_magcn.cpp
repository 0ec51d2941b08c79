#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <random>

#include "morphgrasp/graph.hpp"
#include "morphgrasp/magcn.hpp"

using namespace morphgrasp;

namespace {

StateGraph random_state(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  StateGraph s;
  s.x_node = Matd(n, kNodeFeatureDim);
  for (double& v : s.x_node.data) v = g(rng);
  s.x_global.resize(kGlobalFeatureDim);
  for (double& v : s.x_global) v = g(rng);
  Matd a(n, n);
  for (int i = 1; i < n; ++i) a(int(rng() % i), i) = 1.0;  // random tree
  s.a_hat = normalize_adjacency(a);
  s.mask = Matd(n, 3);
  for (double& v : s.mask.data) v = (rng() % 2) ? 1.0 : 0.0;
  s.x_physical = Matd(n, kPhysicalFeatureDim);
  for (double& v : s.x_physical.data) v = g(rng);
  s.wrist_node = int(rng() % n);
  return s;
}

StateGraph permute_state(const StateGraph& s, const std::vector<int>& perm) {
  const int n = s.x_node.rows;
  StateGraph p = s;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < kNodeFeatureDim; ++j)
      p.x_node(perm[i], j) = s.x_node(i, j);
    for (int j = 0; j < 3; ++j) p.mask(perm[i], j) = s.mask(i, j);
    for (int j = 0; j < kPhysicalFeatureDim; ++j)
      p.x_physical(perm[i], j) = s.x_physical(i, j);
    for (int j = 0; j < n; ++j) p.a_hat(perm[i], perm[j]) = s.a_hat(i, j);
  }
  p.wrist_node = perm[s.wrist_node];
  return p;
}

}  // namespace

TEST_CASE("one weight set drives hands of different sizes") {
  PolicyNetwork net = PolicyNetwork::randomized(5);
  for (int n : {5, 7, 17}) {
    INFO("n = " << n);
    StateGraph s = random_state(n, 100 + n);
    ForwardResult r = policy_forward(net, s);
    CHECK(r.mean.node.rows == n);
    CHECK(r.mean.node.cols == 3);
    CHECK(r.log_std.size() == size_t(6 + 3 * n));
    for (double v : r.mean.node.data) CHECK(std::abs(v) <= net.scales.node);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(r.mean.wrist_translation[i]) <=
            net.scales.wrist_translation);
      CHECK(std::abs(r.mean.wrist_rotation[i]) <= net.scales.wrist_rotation);
    }
  }
}

TEST_CASE("the network is equivariant to node relabeling") {
  PolicyNetwork net = PolicyNetwork::randomized(17);
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 3 + int(rng() % 15);
    StateGraph s = random_state(n, 1000 + trial);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    StateGraph ps = permute_state(s, perm);

    ForwardResult a = policy_forward(net, s);
    ForwardResult b = policy_forward(net, ps);
    // node outputs permute with the nodes
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(b.mean.node(perm[i], j) - a.mean.node(i, j)) < 1e-9);
    // wrist action and value are invariant
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(b.mean.wrist_translation[i] - a.mean.wrist_translation[i]) <
            1e-9);
      CHECK(std::abs(b.mean.wrist_rotation[i] - a.mean.wrist_rotation[i]) <
            1e-9);
    }
    CHECK(std::abs(b.value - a.value) < 1e-9);
  }
}

TEST_CASE("the tape-free forward matches the tape forward") {
  PolicyNetwork net = PolicyNetwork::randomized(7);
  for (int n : {5, 7, 17}) {
    StateGraph s = random_state(n, 300 + n);
    ForwardResult tape = policy_forward(net, s);
    ForwardResult fast = policy_forward_fast(net, s);
    for (size_t k = 0; k < tape.mean.node.data.size(); ++k)
      CHECK(std::abs(fast.mean.node.data[k] - tape.mean.node.data[k]) < 1e-14);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(fast.mean.wrist_translation[i] -
                     tape.mean.wrist_translation[i]) < 1e-14);
      CHECK(std::abs(fast.mean.wrist_rotation[i] - tape.mean.wrist_rotation[i]) <
            1e-14);
    }
    CHECK(std::abs(fast.value - tape.value) < 1e-12);
    CHECK(fast.log_std == tape.log_std);
  }
}

TEST_CASE("the batched forward matches per-sample evaluation") {
  PolicyNetwork net = PolicyNetwork::randomized(8);
  StateGraph s1 = random_state(7, 501);
  StateGraph s2 = random_state(5, 502);
  StateGraph s3 = random_state(9, 503);
  std::vector<const StateGraph*> batch = {&s1, &s2, &s3};

  Tape tape;
  BoundNet b(net, tape);
  BatchForwardVars fv = policy_forward_batch_vars(b, batch);
  REQUIRE(fv.offsets == std::vector<int>({0, 7, 12, 21}));
  const Tensor& nm = tape.value(fv.node_mean);
  const Tensor& wm = tape.value(fv.wrist_mean);
  const Tensor& val = tape.value(fv.value);

  for (int si = 0; si < 3; ++si) {
    ForwardResult r = policy_forward(net, *batch[si]);
    int lo = fv.offsets[si];
    for (int i = 0; i < r.mean.node.rows; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(nm(lo + i, j) - r.mean.node(i, j)) < 1e-12);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(wm(si, i) - r.mean.wrist_translation[i]) < 1e-12);
      CHECK(std::abs(wm(si, 3 + i) - r.mean.wrist_rotation[i]) < 1e-12);
    }
    CHECK(std::abs(val(si, 0) - r.value) < 1e-10);
  }
}

TEST_CASE("log-std outputs honor the clamp range") {
  PolicyNetwork net = PolicyNetwork::randomized(9);
  for (double& v : net.param("log_std.wrist").value.data) v = -20.0;
  for (double& v : net.param("log_std.node").value.data) v = 20.0;
  StateGraph s = random_state(4, 600);
  ForwardResult r = policy_forward(net, s);
  for (int i = 0; i < 6; ++i) CHECK(r.log_std[i] == net.log_std_min);
  for (size_t i = 6; i < r.log_std.size(); ++i)
    CHECK(r.log_std[i] == net.log_std_max);
}

TEST_CASE("sampling is seeded and self-consistent") {
  PolicyNetwork net = PolicyNetwork::randomized(10);
  StateGraph s = random_state(6, 700);
  ForwardResult fwd = policy_forward(net, s);
  GaussianRng r1(12345), r2(12345), r3(999);
  SampledAction a = sample_action(fwd, r1);
  SampledAction b = sample_action(fwd, r2);
  SampledAction c = sample_action(fwd, r3);
  CHECK(a.flat == b.flat);
  CHECK(a.log_prob == b.log_prob);
  CHECK(a.flat != c.flat);
  // the stored log-prob is the Gaussian density of the drawn point
  double lp = gaussian_log_prob(a.flat, fwd.mean_flat(), fwd.log_std);
  CHECK(a.log_prob == Catch::Approx(lp));
}

TEST_CASE("weights round-trip through files and validate their schema") {
  PolicyNetwork net = PolicyNetwork::randomized(11);
  std::string path = "test_weights_roundtrip.json";
  save_weights(net, path);
  PolicyNetwork loaded;
  load_weights(loaded, path);
  REQUIRE(loaded.params().size() == net.params().size());
  for (size_t i = 0; i < net.params().size(); ++i) {
    CHECK(loaded.params()[i].name == net.params()[i].name);
    CHECK(loaded.params()[i].value.data == net.params()[i].value.data);
  }
  std::remove(path.c_str());

  nlohmann::json doc = weights_to_json(net);
  nlohmann::json wrong_schema = doc;
  wrong_schema["schema"] = "weights/2";
  PolicyNetwork sink;
  CHECK_THROWS_MATCHES(weights_from_json(wrong_schema, sink), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::SchemaVersionMismatch;
                       }));
  nlohmann::json missing = doc;
  missing["params"].erase(0);
  CHECK_THROWS_MATCHES(weights_from_json(missing, sink), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::MissingParameter;
                       }));
  nlohmann::json bad_shape = doc;
  bad_shape["params"][0]["shape"] = {1, 1};
  CHECK_THROWS_MATCHES(weights_from_json(bad_shape, sink), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::ShapeMismatch;
                       }));
}

TEST_CASE("initialization is deterministic in the seed") {
  PolicyNetwork a = PolicyNetwork::randomized(77);
  PolicyNetwork b = PolicyNetwork::randomized(77);
  PolicyNetwork c = PolicyNetwork::randomized(78);
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < a.params().size(); ++i) {
    if (a.params()[i].value.data != b.params()[i].value.data) all_equal = false;
    if (a.params()[i].value.data != c.params()[i].value.data) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
  CHECK(a.param("log_std.wrist").value(0, 0) == -5.0);
  CHECK(a.param("log_std.node").value(0, 0) == -3.5);
  CHECK(a.param("phi_p.l0.b").value(0, 5) == 0.0);
  CHECK(a.param("gcn.3.ln.gain").value(0, 17) == 1.0);
}
