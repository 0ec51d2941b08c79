#pragma once

// Dense 64-bit tensors with tape-based reverse-mode differentiation.
// A tape is single-threaded; ops record in creation order and the backward
// pass replays them in exact reverse order, which fixes the accumulation
// order and keeps runs bit-identical.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "morphgrasp/core.hpp"

namespace morphgrasp {

using Tensor = Matd;

using EigenMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
using EigenCMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

inline EigenCMap emap(const Tensor& t) {
  return EigenCMap(t.data.data(), t.rows, t.cols);
}
inline EigenMap emap(Tensor& t) { return EigenMap(t.data.data(), t.rows, t.cols); }

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape {
 public:
  using Var = int;

  const Tensor& value(Var id) const { return nodes_[id].value; }
  const Tensor& grad(Var id) const { return nodes_[id].grad; }
  size_t size() const { return nodes_.size(); }

  Var input(Tensor v) { return make(std::move(v), nullptr); }

  Var param(Param& p) {
    Var id = make(p.value, nullptr);
    Param* pp = &p;
    nodes_[id].backward = [this, id, pp]() {
      emap(pp->grad) += emap(nodes_[id].grad);
    };
    return id;
  }

  Var matmul(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.cols != B.rows)
      throw Error(ErrorCode::ShapeMismatch,
                  shape_str(A) + " x " + shape_str(B));
    Tensor out(A.rows, B.cols);
    emap(out) = emap(A) * emap(B);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, b]() {
      emap(nodes_[a].grad) +=
          emap(nodes_[id].grad) * emap(nodes_[b].value).transpose();
      emap(nodes_[b].grad) +=
          emap(nodes_[a].value).transpose() * emap(nodes_[id].grad);
    };
    return id;
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor out = nodes_[a].value;
    emap(out) += emap(nodes_[b].value);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, b]() {
      emap(nodes_[a].grad) += emap(nodes_[id].grad);
      emap(nodes_[b].grad) += emap(nodes_[id].grad);
    };
    return id;
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor out = nodes_[a].value;
    emap(out) -= emap(nodes_[b].value);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, b]() {
      emap(nodes_[a].grad) += emap(nodes_[id].grad);
      emap(nodes_[b].grad) -= emap(nodes_[id].grad);
    };
    return id;
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor out = nodes_[a].value;
    emap(out).array() *= emap(nodes_[b].value).array();
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, b]() {
      emap(nodes_[a].grad).array() +=
          emap(nodes_[id].grad).array() * emap(nodes_[b].value).array();
      emap(nodes_[b].grad).array() +=
          emap(nodes_[id].grad).array() * emap(nodes_[a].value).array();
    };
    return id;
  }

  // Broadcast a 1 x C row over all rows of a.
  Var add_rowvec(Var a, Var row) {
    check_rowvec(a, row, "add_rowvec");
    Tensor out = nodes_[a].value;
    emap(out).rowwise() += Eigen::RowVectorXd::Map(
        nodes_[row].value.data.data(), nodes_[row].value.cols);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, row]() {
      emap(nodes_[a].grad) += emap(nodes_[id].grad);
      Eigen::RowVectorXd::Map(nodes_[row].grad.data.data(),
                              nodes_[row].grad.cols) +=
          emap(nodes_[id].grad).colwise().sum();
    };
    return id;
  }

  Var mul_rowvec(Var a, Var row) {
    check_rowvec(a, row, "mul_rowvec");
    const Tensor& A = nodes_[a].value;
    const Tensor& R = nodes_[row].value;
    Tensor out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out(i, j) = A(i, j) * R(0, j);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, row]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& A = nodes_[a].value;
      const Tensor& R = nodes_[row].value;
      for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) {
          nodes_[a].grad(i, j) += g(i, j) * R(0, j);
          nodes_[row].grad(0, j) += g(i, j) * A(i, j);
        }
    };
    return id;
  }

  Var scale(Var a, double c) {
    Tensor out = nodes_[a].value;
    emap(out) *= c;
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, c]() {
      emap(nodes_[a].grad) += c * emap(nodes_[id].grad);
    };
    return id;
  }

  Var concat_cols(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.rows != B.rows)
      throw Error(ErrorCode::ShapeMismatch,
                  shape_str(A) + " | " + shape_str(B));
    Tensor out(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) out(i, j) = A(i, j);
      for (int j = 0; j < B.cols; ++j) out(i, A.cols + j) = B(i, j);
    }
    int ac = A.cols, bc = B.cols;
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, b, ac, bc]() {
      const Tensor& g = nodes_[id].grad;
      for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < ac; ++j) nodes_[a].grad(i, j) += g(i, j);
        for (int j = 0; j < bc; ++j) nodes_[b].grad(i, j) += g(i, ac + j);
      }
    };
    return id;
  }

  // Block-diagonal product: rows of x are partitioned by offsets and each
  // block is premultiplied by its own (constant) square matrix.
  Var block_matmul(std::vector<Tensor> blocks, Var x,
                   std::vector<int> offsets) {
    const Tensor& X = nodes_[x].value;
    if (offsets.size() != blocks.size() + 1 || offsets.back() != X.rows)
      throw Error(ErrorCode::ShapeMismatch, "block_matmul partition");
    Tensor out(X.rows, X.cols);
    for (size_t s = 0; s < blocks.size(); ++s) {
      int lo = offsets[s], n = offsets[s + 1] - lo;
      if (blocks[s].rows != n || blocks[s].cols != n)
        throw Error(ErrorCode::ShapeMismatch, "block_matmul block");
      EigenMap(out.data.data() + size_t(lo) * X.cols, n, X.cols) =
          emap(blocks[s]) *
          EigenCMap(X.data.data() + size_t(lo) * X.cols, n, X.cols);
    }
    Var id = make(std::move(out), nullptr);
    auto bl = std::make_shared<std::vector<Tensor>>(std::move(blocks));
    auto off = std::make_shared<std::vector<int>>(std::move(offsets));
    nodes_[id].backward = [this, id, x, bl, off]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& gx = nodes_[x].grad;
      for (size_t s = 0; s + 1 < off->size(); ++s) {
        int lo = (*off)[s], n = (*off)[s + 1] - lo;
        EigenMap(gx.data.data() + size_t(lo) * g.cols, n, g.cols) +=
            emap((*bl)[s]).transpose() *
            EigenCMap(g.data.data() + size_t(lo) * g.cols, n, g.cols);
      }
    };
    return id;
  }

  // Gather the given rows into a new matrix, one output row per index.
  Var row_gather(Var a, std::vector<int> rows) {
    const Tensor& A = nodes_[a].value;
    Tensor out(int(rows.size()), A.cols);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= A.rows)
        throw Error(ErrorCode::ShapeMismatch, "row_gather index");
      for (int j = 0; j < A.cols; ++j) out(int(i), j) = A(rows[i], j);
    }
    Var id = make(std::move(out), nullptr);
    auto idx = std::make_shared<std::vector<int>>(std::move(rows));
    nodes_[id].backward = [this, id, a, idx]() {
      const Tensor& g = nodes_[id].grad;
      for (size_t i = 0; i < idx->size(); ++i)
        for (int j = 0; j < g.cols; ++j)
          nodes_[a].grad((*idx)[i], j) += g(int(i), j);
    };
    return id;
  }

  // Per-row total: out(i, 0) = sum_j x(i, j).
  Var row_sum(Var a) {
    const Tensor& A = nodes_[a].value;
    Tensor out(A.rows, 1);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out(i, 0) += A(i, j);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = nodes_[a].grad;
      for (int i = 0; i < ga.rows; ++i)
        for (int j = 0; j < ga.cols; ++j) ga(i, j) += g(i, 0);
    };
    return id;
  }

  // Sum over every entry of each row block: out(s, 0) = sum of block s.
  Var block_sum(Var a, std::vector<int> offsets) {
    const Tensor& A = nodes_[a].value;
    if (offsets.empty() || offsets.back() != A.rows)
      throw Error(ErrorCode::ShapeMismatch, "block_sum partition");
    Tensor out(int(offsets.size()) - 1, 1);
    for (size_t s = 0; s + 1 < offsets.size(); ++s)
      for (int i = offsets[s]; i < offsets[s + 1]; ++i)
        for (int j = 0; j < A.cols; ++j) out(int(s), 0) += A(i, j);
    Var id = make(std::move(out), nullptr);
    auto off = std::make_shared<std::vector<int>>(std::move(offsets));
    nodes_[id].backward = [this, id, a, off]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = nodes_[a].grad;
      for (size_t s = 0; s + 1 < off->size(); ++s)
        for (int i = (*off)[s]; i < (*off)[s + 1]; ++i)
          for (int j = 0; j < ga.cols; ++j) ga(i, j) += g(int(s), 0);
    };
    return id;
  }

  Var relu(Var a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = v > 0 ? v : 0.0;
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& x = nodes_[a].value;
      for (size_t k = 0; k < g.data.size(); ++k)
        if (x.data[k] > 0) nodes_[a].grad.data[k] += g.data[k];
    };
    return id;
  }

  Var leaky_relu(Var a, double slope = 0.01) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = v > 0 ? v : slope * v;
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, slope]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& x = nodes_[a].value;
      for (size_t k = 0; k < g.data.size(); ++k)
        nodes_[a].grad.data[k] += g.data[k] * (x.data[k] > 0 ? 1.0 : slope);
    };
    return id;
  }

  Var tanh_(Var a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::tanh(v);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& y = nodes_[id].value;
      for (size_t k = 0; k < g.data.size(); ++k)
        nodes_[a].grad.data[k] += g.data[k] * (1.0 - y.data[k] * y.data[k]);
    };
    return id;
  }

  Var exp_(Var a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::exp(v);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& y = nodes_[id].value;
      for (size_t k = 0; k < g.data.size(); ++k)
        nodes_[a].grad.data[k] += g.data[k] * y.data[k];
    };
    return id;
  }

  // Row-wise normalization to zero mean / unit variance (pre-gain/bias).
  Var layernorm(Var a, double eps = 1e-5) {
    const Tensor& X = nodes_[a].value;
    Tensor out(X.rows, X.cols);
    Tensor inv_std(X.rows, 1);
    for (int i = 0; i < X.rows; ++i) {
      double mu = 0;
      for (int j = 0; j < X.cols; ++j) mu += X(i, j);
      mu /= X.cols;
      double var = 0;
      for (int j = 0; j < X.cols; ++j) {
        double d = X(i, j) - mu;
        var += d * d;
      }
      var /= X.cols;
      double s = 1.0 / std::sqrt(var + eps);
      inv_std(i, 0) = s;
      for (int j = 0; j < X.cols; ++j) out(i, j) = (X(i, j) - mu) * s;
    }
    Var id = make(std::move(out), nullptr);
    auto istd = std::make_shared<Tensor>(std::move(inv_std));
    nodes_[id].backward = [this, id, a, istd]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& y = nodes_[id].value;
      const int c = g.cols;
      for (int i = 0; i < g.rows; ++i) {
        double gsum = 0, gysum = 0;
        for (int j = 0; j < c; ++j) {
          gsum += g(i, j);
          gysum += g(i, j) * y(i, j);
        }
        double s = (*istd)(i, 0);
        for (int j = 0; j < c; ++j)
          nodes_[a].grad(i, j) +=
              s * (g(i, j) - gsum / c - y(i, j) * gysum / c);
      }
    };
    return id;
  }

  Var row_select(Var a, int row) {
    const Tensor& A = nodes_[a].value;
    if (row < 0 || row >= A.rows)
      throw Error(ErrorCode::ShapeMismatch,
                  "row " + std::to_string(row) + " of " + shape_str(A));
    Tensor out(1, A.cols);
    for (int j = 0; j < A.cols; ++j) out(0, j) = A(row, j);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, row]() {
      for (int j = 0; j < nodes_[id].grad.cols; ++j)
        nodes_[a].grad(row, j) += nodes_[id].grad(0, j);
    };
    return id;
  }

  Var sum(Var a) {
    double s = 0;
    for (double v : nodes_[a].value.data) s += v;
    Tensor out(1, 1);
    out(0, 0) = s;
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a]() {
      double g = nodes_[id].grad(0, 0);
      for (double& v : nodes_[a].grad.data) v += g;
    };
    return id;
  }

  Var mean(Var a) {
    size_t n = nodes_[a].value.data.size();
    return scale(sum(a), 1.0 / double(n));
  }

  Var clamp(Var a, double lo, double hi) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::clamp(v, lo, hi);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, lo, hi]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& x = nodes_[a].value;
      for (size_t k = 0; k < g.data.size(); ++k)
        if (x.data[k] > lo && x.data[k] < hi)
          nodes_[a].grad.data[k] += g.data[k];
    };
    return id;
  }

  Var min_(Var a, Var b) {
    check_same_shape(a, b, "min");
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    Tensor out(A.rows, A.cols);
    for (size_t k = 0; k < out.data.size(); ++k)
      out.data[k] = std::min(A.data[k], B.data[k]);
    Var id = make(std::move(out), nullptr);
    nodes_[id].backward = [this, id, a, b]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& A = nodes_[a].value;
      const Tensor& B = nodes_[b].value;
      for (size_t k = 0; k < g.data.size(); ++k) {
        if (A.data[k] <= B.data[k])
          nodes_[a].grad.data[k] += g.data[k];
        else
          nodes_[b].grad.data[k] += g.data[k];
      }
    };
    return id;
  }

  void check_finite(Var a, const std::string& ctx) const {
    for (double v : nodes_[a].value.data)
      if (!std::isfinite(v)) throw Error(ErrorCode::NaNDetected, ctx);
  }

  void backward(Var loss) {
    const Tensor& L = nodes_[loss].value;
    if (L.rows != 1 || L.cols != 1)
      throw Error(ErrorCode::NotScalarLoss, shape_str(L));
    nodes_[loss].grad(0, 0) = 1.0;
    for (int i = loss; i >= 0; --i)
      if (nodes_[i].backward) nodes_[i].backward();
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> backward;
  };

  static std::string shape_str(const Tensor& t) {
    return "(" + std::to_string(t.rows) + "," + std::to_string(t.cols) + ")";
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.rows != B.rows || A.cols != B.cols)
      throw Error(ErrorCode::ShapeMismatch,
                  std::string(op) + " " + shape_str(A) + " vs " + shape_str(B));
  }
  void check_rowvec(Var a, Var row, const char* op) const {
    const Tensor& A = nodes_[a].value;
    const Tensor& R = nodes_[row].value;
    if (R.rows != 1 || R.cols != A.cols)
      throw Error(ErrorCode::ShapeMismatch,
                  std::string(op) + " " + shape_str(A) + " vs " + shape_str(R));
  }

  Var make(Tensor value, std::function<void()> bw) {
    Node n;
    n.grad = Tensor(value.rows, value.cols);
    n.value = std::move(value);
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Finite-difference instrument. f builds a loss from an input leaf; returns
// the worst relative error between analytic and central-difference gradients.
inline double grad_check(const std::function<Tape::Var(Tape&, Tape::Var)>& f,
                         const Tensor& x, double h = 1e-6) {
  Tape tape;
  Tape::Var xid = tape.input(x);
  Tape::Var loss = f(tape, xid);
  tape.backward(loss);
  Tensor analytic = tape.grad(xid);

  double worst = 0;
  for (size_t k = 0; k < x.data.size(); ++k) {
    auto eval = [&](double v) {
      Tensor xp = x;
      xp.data[k] = v;
      Tape t2;
      Tape::Var id = t2.input(xp);
      return t2.value(f(t2, id))(0, 0);
    };
    double fd = (eval(x.data[k] + h) - eval(x.data[k] - h)) / (2 * h);
    double a = analytic.data[k];
    double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace morphgrasp
