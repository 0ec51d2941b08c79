#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "morphgrasp/tensor.hpp"

using namespace morphgrasp;

namespace {

Tensor randn(int r, int c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(r, c);
  for (double& v : t.data) v = n(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul matches a hand-computed product") {
  Tape tape;
  Tensor a(2, 3), b(3, 2);
  a.data = {1, 2, 3, 4, 5, 6};
  b.data = {7, 8, 9, 10, 11, 12};
  auto c = tape.matmul(tape.input(a), tape.input(b));
  CHECK(tape.value(c)(0, 0) == 58.0);
  CHECK(tape.value(c)(0, 1) == 64.0);
  CHECK(tape.value(c)(1, 0) == 139.0);
  CHECK(tape.value(c)(1, 1) == 154.0);
  CHECK_THROWS_MATCHES(tape.matmul(tape.input(a), tape.input(a)), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::ShapeMismatch;
                       }));
}

TEST_CASE("elementwise and broadcast ops compute the expected values") {
  Tape tape;
  Tensor a(2, 2), b(2, 2), row(1, 2);
  a.data = {1, -2, 3, -4};
  b.data = {5, 6, 7, 8};
  row.data = {10, 100};
  auto va = tape.input(a), vb = tape.input(b), vr = tape.input(row);
  CHECK(tape.value(tape.add(va, vb)).data == AlignedVecd{6, 4, 10, 4});
  CHECK(tape.value(tape.sub(va, vb)).data ==
        AlignedVecd{-4, -8, -4, -12});
  CHECK(tape.value(tape.mul(va, vb)).data ==
        AlignedVecd{5, -12, 21, -32});
  CHECK(tape.value(tape.add_rowvec(va, vr)).data ==
        AlignedVecd{11, 98, 13, 96});
  CHECK(tape.value(tape.mul_rowvec(va, vr)).data ==
        AlignedVecd{10, -200, 30, -400});
  CHECK(tape.value(tape.scale(va, -2.0)).data ==
        AlignedVecd{-2, 4, -6, 8});
  CHECK(tape.value(tape.concat_cols(va, vb)).data ==
        AlignedVecd{1, -2, 5, 6, 3, -4, 7, 8});
  CHECK(tape.value(tape.relu(va)).data == AlignedVecd{1, 0, 3, 0});
  CHECK(tape.value(tape.leaky_relu(va)).data ==
        AlignedVecd{1, -0.02, 3, -0.04});
  CHECK(tape.value(tape.clamp(va, -3, 2)).data ==
        AlignedVecd{1, -2, 2, -3});
  CHECK(tape.value(tape.min_(va, vb)).data ==
        AlignedVecd{1, -2, 3, -4});
  CHECK(tape.value(tape.sum(va))(0, 0) == -2.0);
  CHECK(tape.value(tape.mean(va))(0, 0) == -0.5);
  CHECK(tape.value(tape.row_select(va, 1)).data == AlignedVecd{3, -4});
  CHECK(tape.value(tape.row_sum(va)).data == AlignedVecd{-1, -1});
  CHECK(tape.value(tape.tanh_(va))(0, 0) == Catch::Approx(std::tanh(1.0)));
  CHECK(tape.value(tape.exp_(va))(0, 1) == Catch::Approx(std::exp(-2.0)));
}

TEST_CASE("block ops agree with their dense equivalents") {
  Tape tape;
  Tensor x = randn(5, 3, 7);
  Tensor b0 = randn(2, 2, 8), b1 = randn(3, 3, 9);
  std::vector<int> off = {0, 2, 5};
  auto vx = tape.input(x);
  auto y = tape.block_matmul({b0, b1}, vx, off);

  // dense oracle: embed the blocks into a 5 x 5 block-diagonal matrix
  Tensor big(5, 5);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) big(i, j) = b0(i, j);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) big(2 + i, 2 + j) = b1(i, j);
  auto want = tape.matmul(tape.input(big), tape.input(x));
  for (size_t k = 0; k < x.data.size(); ++k)
    CHECK(tape.value(y).data[k] == Catch::Approx(tape.value(want).data[k]));

  // block_sum equals per-block accumulation
  auto bs = tape.block_sum(vx, off);
  double s0 = 0, s1 = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) s0 += x(i, j);
  for (int i = 2; i < 5; ++i)
    for (int j = 0; j < 3; ++j) s1 += x(i, j);
  CHECK(tape.value(bs)(0, 0) == Catch::Approx(s0));
  CHECK(tape.value(bs)(1, 0) == Catch::Approx(s1));

  // row_gather copies rows, repeats allowed
  auto g = tape.row_gather(vx, {4, 0, 0});
  for (int j = 0; j < 3; ++j) {
    CHECK(tape.value(g)(0, j) == x(4, j));
    CHECK(tape.value(g)(1, j) == x(0, j));
    CHECK(tape.value(g)(2, j) == x(0, j));
  }
  CHECK_THROWS_AS(tape.row_gather(vx, {5}), Error);
  CHECK_THROWS_AS(tape.block_sum(vx, {0, 3}), Error);
}

TEST_CASE("layernorm rows have zero mean and unit variance") {
  Tape tape;
  Tensor x = randn(4, 64, 11);
  auto y = tape.layernorm(tape.input(x));
  const Tensor& v = tape.value(y);
  for (int i = 0; i < 4; ++i) {
    double mu = 0, var = 0;
    for (int j = 0; j < 64; ++j) mu += v(i, j);
    mu /= 64;
    for (int j = 0; j < 64; ++j) var += (v(i, j) - mu) * (v(i, j) - mu);
    var /= 64;
    CHECK(std::abs(mu) < 1e-12);
    CHECK(var == Catch::Approx(1.0).margin(1e-4));  // eps shifts it slightly
  }
}

TEST_CASE("gradients of composite expressions pass a finite-difference check") {
  auto check = [](const std::function<Tape::Var(Tape&, Tape::Var)>& f, int r,
                  int c, unsigned seed) {
    double worst = grad_check(f, randn(r, c, seed));
    CHECK(worst < 1e-5);
  };
  Tensor w = randn(3, 4, 21);
  check([&](Tape& t, Tape::Var x) {
    return t.sum(t.tanh_(t.matmul(x, t.input(w))));
  }, 5, 3, 22);
  // weight the layernorm output so every input keeps an O(1) gradient;
  // otherwise near-zero entries inflate the relative finite-difference error
  Tensor w2 = randn(4, 6, 29), w3 = randn(4, 6, 30);
  check([&](Tape& t, Tape::Var x) {
    auto y = t.layernorm(t.mul(x, t.input(w2)));
    return t.sum(t.mul(y, t.input(w3)));
  }, 4, 6, 23);
  check([&](Tape& t, Tape::Var x) {
    auto g = t.row_gather(x, {0, 2, 0});
    return t.sum(t.mul(g, g));
  }, 4, 3, 24);
  Tensor b0 = randn(2, 2, 25), b1 = randn(2, 2, 26);
  check([&](Tape& t, Tape::Var x) {
    auto y = t.block_matmul({b0, b1}, x, {0, 2, 4});
    return t.sum(t.mul(y, y));
  }, 4, 3, 27);
  check([&](Tape& t, Tape::Var x) {
    auto r = t.row_sum(x);
    auto b = t.block_sum(x, {0, 1, 3});
    return t.add(t.sum(t.mul(r, r)), t.sum(t.mul(b, b)));
  }, 3, 4, 28);
}

TEST_CASE("parameters accumulate gradients and backward is deterministic") {
  Param p("w", 2, 2);
  p.value.data = {0.5, -0.25, 1.5, 2.0};
  Tensor x = randn(2, 2, 31);

  auto run = [&]() {
    Tape tape;
    auto loss = tape.sum(tape.mul(tape.param(p), tape.input(x)));
    tape.backward(loss);
  };
  p.zero_grad();
  run();
  for (size_t k = 0; k < 4; ++k) CHECK(p.grad.data[k] == x.data[k]);
  run();  // accumulates without zeroing
  for (size_t k = 0; k < 4; ++k) CHECK(p.grad.data[k] == 2.0 * x.data[k]);

  // two identical runs produce bit-identical gradients
  p.zero_grad();
  run();
  Tensor g1 = p.grad;
  p.zero_grad();
  run();
  for (size_t k = 0; k < 4; ++k) CHECK(p.grad.data[k] == g1.data[k]);
}

TEST_CASE("backward demands a scalar loss and check_finite flags NaN") {
  Tape tape;
  auto v = tape.input(randn(2, 2, 41));
  CHECK_THROWS_MATCHES(tape.backward(v), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::NotScalarLoss;
                       }));
  Tensor bad(1, 2);
  bad.data = {1.0, std::nan("")};
  auto vb = tape.input(bad);
  CHECK_THROWS_MATCHES(tape.check_finite(vb, "test"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::NaNDetected;
                       }));
  tape.check_finite(v, "ok");  // finite input passes
}
