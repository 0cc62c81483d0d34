#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ftaed/errors.hpp"

namespace ftaed::ad {

// Row-major float32 matrix. This is the public value type; the tape keeps
// double working copies internally so finite-difference probes stay clean.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}
  Tensor(int r, int c, std::vector<float> d) : rows(r), cols(c), data(std::move(d)) {}

  std::size_t size() const { return data.size(); }
  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

inline Tensor tensor_from(int rows, int cols, std::initializer_list<float> vals) {
  Tensor t(rows, cols);
  if (vals.size() != t.size())
    fail(ErrorKind::ShapeMismatch, "initializer size does not match shape");
  std::copy(vals.begin(), vals.end(), t.data.begin());
  return t;
}

enum class Op {
  Leaf,
  MatMul,
  Add,
  Mul,
  ReLU,
  Sigmoid,
  Tanh,
  GatherRows,
  ScatterAddRows,
  SegmentSoftmax,
  MeanPoolRows,
  Dropout,
  Mse,
};

class Tape;

// Handle to a tape node plus the shape it is viewed as. reshape() returns a
// handle with a different shape over the same storage, so reshaping costs
// nothing and is not an operation on the tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

inline Var reshape(Var v, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != v.size())
    fail(ErrorKind::ShapeMismatch,
         "reshape element count mismatch: " + std::to_string(v.rows) + "x" +
             std::to_string(v.cols) + " -> " + std::to_string(rows) + "x" +
             std::to_string(cols));
  return {v.tape, v.id, rows, cols};
}

namespace detail {

// C[m x n] += A[m x k] * B[k x n]. Tiled over columns so the B row tile and
// the C block stay cache resident; inner loop is a unit-stride axpy.
inline void matmul_acc(const double* A, const double* B, double* C, int m,
                       int k, int n) {
  constexpr int kTile = 1024;
  for (int j0 = 0; j0 < n; j0 += kTile) {
    const int j1 = std::min(n, j0 + kTile);
    for (int kk = 0; kk < k; ++kk) {
      const double* Bk = B + static_cast<std::size_t>(kk) * n;
      for (int i = 0; i < m; ++i) {
        const double a = A[static_cast<std::size_t>(i) * k + kk];
        if (a == 0.0) continue;
        double* Ci = C + static_cast<std::size_t>(i) * n;
        for (int j = j0; j < j1; ++j) Ci[j] += a * Bk[j];
      }
    }
  }
}

// C[k x n] += A^T * B with A[m x k], B[m x n]. Same tiling as matmul_acc;
// A is read row by row so no transpose is materialized.
inline void matmul_tn_acc(const double* A, const double* B, double* C, int m,
                          int k, int n) {
  constexpr int kTile = 1024;
  for (int j0 = 0; j0 < n; j0 += kTile) {
    const int j1 = std::min(n, j0 + kTile);
    for (int r = 0; r < m; ++r) {
      const double* Br = B + static_cast<std::size_t>(r) * n;
      const double* Ar = A + static_cast<std::size_t>(r) * k;
      for (int i = 0; i < k; ++i) {
        const double a = Ar[i];
        if (a == 0.0) continue;
        double* Ci = C + static_cast<std::size_t>(i) * n;
        for (int j = j0; j < j1; ++j) Ci[j] += a * Br[j];
      }
    }
  }
}

inline void transpose_into(std::vector<double>& out, const double* A, int rows,
                           int cols) {
  out.resize(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(j) * rows + i] =
          A[static_cast<std::size_t>(i) * cols + j];
}

inline std::vector<double> transposed(const double* A, int rows, int cols) {
  std::vector<double> t;
  transpose_into(t, A, rows, cols);
  return t;
}

}  // namespace detail

// Append-only computation graph. Forward values are computed and held in
// double; float32 Tensors are produced at the boundary (value/grad). Node
// inputs always have smaller ids, so reverse id order is a valid backward
// schedule and results are bit-reproducible.
class Tape {
 public:
  Var leaf(const Tensor& t, bool requires_grad = false) {
    Node n = make_node();
    n.op = Op::Leaf;
    n.rows = t.rows;
    n.cols = t.cols;
    n.x.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) n.x[i] = t.data[i];
    n.needs_grad = requires_grad;
    return push(std::move(n));
  }

  // Leaf from doubles, kept at full precision. Finite-difference probing
  // goes through here so the step size is not quantized away.
  Var leaf_d(const double* v, int rows, int cols, bool requires_grad = false) {
    Node n = make_node();
    n.op = Op::Leaf;
    n.rows = rows;
    n.cols = cols;
    n.x.assign(v, v + static_cast<std::size_t>(rows) * cols);
    n.needs_grad = requires_grad;
    return push(std::move(n));
  }

  Var scalar(double v) {
    Node n = make_node();
    n.op = Op::Leaf;
    n.rows = 1;
    n.cols = 1;
    n.x.assign(1, v);
    return push(std::move(n));
  }

  // Drops the graph but keeps the heap blocks behind node storage, so a
  // rebuilt graph of the same shape allocates nothing. Vars from before the
  // reset must not be used afterwards.
  void reset() {
    recycled_.erase(recycled_.begin(), recycled_.begin() + rcursor_);
    for (auto& n : nodes_) recycled_.push_back(std::move(n));
    nodes_.clear();
    rcursor_ = 0;
  }

  Var matmul(Var a, Var b) {
    check_tape(a);
    check_tape(b);
    if (a.cols != b.rows)
      fail(ErrorKind::ShapeMismatch,
           "matmul " + shape_str(a) + " x " + shape_str(b));
    Node n = binary(Op::MatMul, a, b, a.rows, b.cols);
    detail::matmul_acc(xdata(a), xdata(b), n.x.data(), a.rows, a.cols, b.cols);
    return push(std::move(n));
  }

  // Elementwise add; b may also be a [1 x c] row that is added to every row
  // of a (bias broadcast).
  Var add(Var a, Var b) {
    check_tape(a);
    check_tape(b);
    const bool same = a.rows == b.rows && a.cols == b.cols;
    const bool bias = b.rows == 1 && b.cols == a.cols;
    if (!same && !bias)
      fail(ErrorKind::ShapeMismatch,
           "add " + shape_str(a) + " + " + shape_str(b));
    Node n = binary(Op::Add, a, b, a.rows, a.cols);
    const double* xa = xdata(a);
    const double* xb = xdata(b);
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < a.cols; ++j)
        n.x[idx(i, j, a.cols)] =
            xa[idx(i, j, a.cols)] + xb[same ? idx(i, j, a.cols) : j];
    return push(std::move(n));
  }

  // Elementwise product; b may also be [r x 1] (scales each row of a) or
  // [1 x 1] (scales everything).
  Var mul(Var a, Var b) {
    check_tape(a);
    check_tape(b);
    const bool same = a.rows == b.rows && a.cols == b.cols;
    const bool col = b.rows == a.rows && b.cols == 1;
    const bool sca = b.rows == 1 && b.cols == 1;
    if (!same && !col && !sca)
      fail(ErrorKind::ShapeMismatch,
           "mul " + shape_str(a) + " * " + shape_str(b));
    Node n = binary(Op::Mul, a, b, a.rows, a.cols);
    const double* xa = xdata(a);
    const double* xb = xdata(b);
    for (int i = 0; i < a.rows; ++i) {
      const double bi = col ? xb[i] : xb[0];
      for (int j = 0; j < a.cols; ++j) {
        const std::size_t p = idx(i, j, a.cols);
        n.x[p] = xa[p] * (same ? xb[p] : bi);
      }
    }
    return push(std::move(n));
  }

  Var relu(Var a) {
    Node n = unary(Op::ReLU, a);
    const double* xa = xdata(a);
    for (std::size_t i = 0; i < n.x.size(); ++i) n.x[i] = xa[i] > 0.0 ? xa[i] : 0.0;
    return push(std::move(n));
  }

  Var sigmoid(Var a) {
    Node n = unary(Op::Sigmoid, a);
    const double* xa = xdata(a);
    for (std::size_t i = 0; i < n.x.size(); ++i) n.x[i] = 1.0 / (1.0 + std::exp(-xa[i]));
    return push(std::move(n));
  }

  Var tanh_op(Var a) {
    Node n = unary(Op::Tanh, a);
    const double* xa = xdata(a);
    for (std::size_t i = 0; i < n.x.size(); ++i) n.x[i] = std::tanh(xa[i]);
    return push(std::move(n));
  }

  // out[i, :] = a[index[i], :]
  Var gather_rows(Var a, const std::vector<int>& index) {
    check_tape(a);
    for (int r : index)
      if (r < 0 || r >= a.rows)
        fail(ErrorKind::OutOfBounds, "gather row " + std::to_string(r) +
                                         " of " + std::to_string(a.rows));
    Node n = unary_shaped(Op::GatherRows, a, static_cast<int>(index.size()), a.cols);
    n.aux = index;
    const double* xa = xdata(a);
    for (std::size_t i = 0; i < index.size(); ++i)
      std::copy(xa + static_cast<std::size_t>(index[i]) * a.cols,
                xa + static_cast<std::size_t>(index[i] + 1) * a.cols,
                n.x.begin() + static_cast<std::size_t>(i) * a.cols);
    return push(std::move(n));
  }

  // out[index[i], :] += a[i, :], with out having out_rows rows. Rows of out
  // that no index touches stay zero.
  Var scatter_add_rows(Var a, const std::vector<int>& index, int out_rows) {
    check_tape(a);
    if (static_cast<int>(index.size()) != a.rows)
      fail(ErrorKind::ShapeMismatch, "scatter index count " +
                                         std::to_string(index.size()) +
                                         " != rows " + std::to_string(a.rows));
    for (int r : index)
      if (r < 0 || r >= out_rows)
        fail(ErrorKind::OutOfBounds, "scatter row " + std::to_string(r) +
                                         " of " + std::to_string(out_rows));
    Node n = unary_shaped(Op::ScatterAddRows, a, out_rows, a.cols);
    n.aux = index;
    const double* xa = xdata(a);
    for (std::size_t i = 0; i < index.size(); ++i) {
      double* dst = n.x.data() + static_cast<std::size_t>(index[i]) * a.cols;
      const double* src = xa + i * a.cols;
      for (int j = 0; j < a.cols; ++j) dst[j] += src[j];
    }
    return push(std::move(n));
  }

  // Softmax over contiguous row segments, independently per column.
  // offsets is CSR style: offsets[0] = 0, offsets.back() = a.rows, strictly
  // increasing (empty segments are not allowed).
  Var segment_softmax(Var a, const std::vector<int>& offsets) {
    check_tape(a);
    if (offsets.size() < 2 || offsets.front() != 0 ||
        offsets.back() != a.rows)
      fail(ErrorKind::InvalidSegment, "segment offsets must span all rows");
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
      if (offsets[s] >= offsets[s + 1])
        fail(ErrorKind::InvalidSegment, "segment offsets must be increasing");
    Node n = unary(Op::SegmentSoftmax, a);
    n.aux = offsets;
    const double* xa = xdata(a);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const int r0 = offsets[s], r1 = offsets[s + 1];
      for (int j = 0; j < a.cols; ++j) {
        double m = xa[idx(r0, j, a.cols)];
        for (int r = r0 + 1; r < r1; ++r)
          m = std::max(m, xa[idx(r, j, a.cols)]);
        double z = 0.0;
        for (int r = r0; r < r1; ++r) {
          const double e = std::exp(xa[idx(r, j, a.cols)] - m);
          n.x[idx(r, j, a.cols)] = e;
          z += e;
        }
        for (int r = r0; r < r1; ++r) n.x[idx(r, j, a.cols)] /= z;
      }
    }
    return push(std::move(n));
  }

  // [r x c] -> [1 x c] column means.
  Var mean_pool_rows(Var a) {
    check_tape(a);
    if (a.rows < 1) fail(ErrorKind::EmptyInput, "mean pool of empty tensor");
    Node n = unary_shaped(Op::MeanPoolRows, a, 1, a.cols);
    const double* xa = xdata(a);
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < a.cols; ++j) n.x[j] += xa[idx(i, j, a.cols)];
    for (int j = 0; j < a.cols; ++j) n.x[j] /= a.rows;
    return push(std::move(n));
  }

  // Inverted dropout: kept entries are scaled by 1/(1-p) so expectations
  // match evaluation mode. The keep mask is drawn once from the given seed
  // and reused by backward.
  Var dropout(Var a, double p, std::uint64_t seed) {
    check_tape(a);
    if (!(p >= 0.0 && p < 1.0))
      fail(ErrorKind::OutOfRangeValue, "dropout p must be in [0, 1)");
    Node n = unary(Op::Dropout, a);
    n.p = p;
    n.mask.resize(n.x.size(), 1);
    const double* xa = xdata(a);
    if (p == 0.0) {
      std::copy(xa, xa + n.x.size(), n.x.begin());
      return push(std::move(n));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < n.x.size(); ++i) {
      if (u(rng) < p) {
        n.mask[i] = 0;
        n.x[i] = 0.0;
      } else {
        n.x[i] = xa[i] * scale;
      }
    }
    return push(std::move(n));
  }

  // Mean over all elements of (a - b)^2; result is [1 x 1].
  Var mse(Var a, Var b) {
    check_tape(a);
    check_tape(b);
    if (a.rows != b.rows || a.cols != b.cols)
      fail(ErrorKind::ShapeMismatch,
           "mse " + shape_str(a) + " vs " + shape_str(b));
    Node n = binary(Op::Mse, a, b, 1, 1);
    const double* xa = xdata(a);
    const double* xb = xdata(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = xa[i] - xb[i];
      acc += d * d;
    }
    n.x[0] = acc / static_cast<double>(a.size());
    return push(std::move(n));
  }

  // Reverse sweep from a scalar loss. Gradients accumulate in creation
  // order reversed; only subgraphs that lead to a grad-requiring leaf are
  // visited.
  void backward(Var loss) {
    check_tape(loss);
    if (loss.size() != 1)
      fail(ErrorKind::NonScalarLoss,
           "backward needs a scalar, got " + shape_str(loss));
    for (auto& n : nodes_) {
      n.g.assign(n.x.size(), 0.0);
    }
    nodes_[loss.id].g[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.op == Op::Leaf) continue;
      step_backward(n);
    }
  }

  Tensor value(Var v) const {
    const auto& x = nodes_.at(v.id).x;
    Tensor t(v.rows, v.cols);
    for (std::size_t i = 0; i < x.size(); ++i) t.data[i] = static_cast<float>(x[i]);
    return t;
  }

  double value_scalar(Var v) const {
    if (v.size() != 1) fail(ErrorKind::NonScalarLoss, "not a scalar");
    return nodes_.at(v.id).x[0];
  }

  Tensor grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    Tensor t(v.rows, v.cols);
    if (n.g.size() == t.size())
      for (std::size_t i = 0; i < n.g.size(); ++i)
        t.data[i] = static_cast<float>(n.g[i]);
    return t;
  }

  const std::vector<double>& shadow(Var v) const { return nodes_.at(v.id).x; }
  const std::vector<double>& grad_shadow(Var v) const { return nodes_.at(v.id).g; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct InRef {
    int id = -1;
    int rows = 0;
    int cols = 0;
  };
  struct Node {
    Op op = Op::Leaf;
    InRef in[2];
    int n_in = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> x;
    std::vector<double> g;
    std::vector<int> aux;
    std::vector<std::uint8_t> mask;
    double p = 0.0;
    bool needs_grad = false;
  };

  static std::size_t idx(int r, int c, int cols) {
    return static_cast<std::size_t>(r) * cols + c;
  }
  static std::string shape_str(Var v) {
    return "[" + std::to_string(v.rows) + "x" + std::to_string(v.cols) + "]";
  }

  void check_tape(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      fail(ErrorKind::ShapeMismatch, "variable does not belong to this tape");
  }

  const double* xdata(Var v) const { return nodes_[v.id].x.data(); }

  // Fresh node that adopts the storage of the node built at the same
  // position before the last reset(). Position-keyed reuse means sizes line
  // up exactly when the same graph is rebuilt, which is the hot path.
  Node make_node() {
    Node n;
    if (rcursor_ < recycled_.size()) {
      Node& r = recycled_[rcursor_++];
      n.x = std::move(r.x);
      n.g = std::move(r.g);
      n.aux = std::move(r.aux);
      n.mask = std::move(r.mask);
      n.x.clear();
      n.g.clear();
      n.aux.clear();
      n.mask.clear();
    }
    return n;
  }

  Node unary(Op op, Var a) { return unary_shaped(op, a, a.rows, a.cols); }

  Node unary_shaped(Op op, Var a, int rows, int cols) {
    check_tape(a);
    Node n = make_node();
    n.op = op;
    n.in[0] = {a.id, a.rows, a.cols};
    n.n_in = 1;
    n.rows = rows;
    n.cols = cols;
    n.x.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    n.needs_grad = nodes_[a.id].needs_grad;
    return n;
  }

  Node binary(Op op, Var a, Var b, int rows, int cols) {
    Node n = make_node();
    n.op = op;
    n.in[0] = {a.id, a.rows, a.cols};
    n.in[1] = {b.id, b.rows, b.cols};
    n.n_in = 2;
    n.rows = rows;
    n.cols = cols;
    n.x.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    return n;
  }

  Var push(Node&& n) {
    const int rows = n.rows, cols = n.cols;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1, rows, cols};
  }

  void step_backward(Node& n) {
    const InRef& a = n.in[0];
    Node& na = nodes_[a.id];
    const bool ga = na.needs_grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const InRef& b = n.in[1];
        Node& nb = nodes_[b.id];
        if (ga) {
          detail::transpose_into(tscratch_, nb.x.data(), b.rows, b.cols);
          detail::matmul_acc(n.g.data(), tscratch_.data(), na.g.data(),
                             n.rows, b.cols, b.rows);
        }
        if (nb.needs_grad)
          detail::matmul_tn_acc(na.x.data(), n.g.data(), nb.g.data(), a.rows,
                                a.cols, n.cols);
        break;
      }
      case Op::Add: {
        const InRef& b = n.in[1];
        Node& nb = nodes_[b.id];
        const bool same = b.rows == a.rows;
        if (ga)
          for (std::size_t i = 0; i < n.g.size(); ++i) na.g[i] += n.g[i];
        if (nb.needs_grad) {
          if (same) {
            for (std::size_t i = 0; i < n.g.size(); ++i) nb.g[i] += n.g[i];
          } else {
            for (int i = 0; i < n.rows; ++i)
              for (int j = 0; j < n.cols; ++j)
                nb.g[j] += n.g[idx(i, j, n.cols)];
          }
        }
        break;
      }
      case Op::Mul: {
        const InRef& b = n.in[1];
        Node& nb = nodes_[b.id];
        const bool same = b.rows == a.rows && b.cols == a.cols;
        const bool col = b.cols == 1 && b.rows == a.rows;
        for (int i = 0; i < n.rows; ++i) {
          for (int j = 0; j < n.cols; ++j) {
            const std::size_t p = idx(i, j, n.cols);
            const std::size_t pb = same ? p : (col ? static_cast<std::size_t>(i) : 0);
            if (ga) na.g[p] += n.g[p] * nb.x[pb];
            if (nb.needs_grad) nb.g[pb] += n.g[p] * na.x[p];
          }
        }
        break;
      }
      case Op::ReLU:
        if (ga)
          for (std::size_t i = 0; i < n.g.size(); ++i)
            if (na.x[i] > 0.0) na.g[i] += n.g[i];
        break;
      case Op::Sigmoid:
        if (ga)
          for (std::size_t i = 0; i < n.g.size(); ++i)
            na.g[i] += n.g[i] * n.x[i] * (1.0 - n.x[i]);
        break;
      case Op::Tanh:
        if (ga)
          for (std::size_t i = 0; i < n.g.size(); ++i)
            na.g[i] += n.g[i] * (1.0 - n.x[i] * n.x[i]);
        break;
      case Op::GatherRows:
        if (ga)
          for (std::size_t i = 0; i < n.aux.size(); ++i) {
            double* dst = na.g.data() + static_cast<std::size_t>(n.aux[i]) * n.cols;
            const double* src = n.g.data() + i * n.cols;
            for (int j = 0; j < n.cols; ++j) dst[j] += src[j];
          }
        break;
      case Op::ScatterAddRows:
        if (ga)
          for (std::size_t i = 0; i < n.aux.size(); ++i) {
            const double* src = n.g.data() + static_cast<std::size_t>(n.aux[i]) * n.cols;
            double* dst = na.g.data() + i * n.cols;
            for (int j = 0; j < n.cols; ++j) dst[j] += src[j];
          }
        break;
      case Op::SegmentSoftmax:
        if (ga) {
          const auto& off = n.aux;
          for (std::size_t s = 0; s + 1 < off.size(); ++s) {
            const int r0 = off[s], r1 = off[s + 1];
            for (int j = 0; j < n.cols; ++j) {
              double dot = 0.0;
              for (int r = r0; r < r1; ++r)
                dot += n.g[idx(r, j, n.cols)] * n.x[idx(r, j, n.cols)];
              for (int r = r0; r < r1; ++r)
                na.g[idx(r, j, n.cols)] +=
                    n.x[idx(r, j, n.cols)] * (n.g[idx(r, j, n.cols)] - dot);
            }
          }
        }
        break;
      case Op::MeanPoolRows:
        if (ga) {
          const double inv = 1.0 / a.rows;
          for (int i = 0; i < a.rows; ++i)
            for (int j = 0; j < n.cols; ++j)
              na.g[idx(i, j, n.cols)] += n.g[j] * inv;
        }
        break;
      case Op::Dropout:
        if (ga) {
          const double scale = n.p == 0.0 ? 1.0 : 1.0 / (1.0 - n.p);
          for (std::size_t i = 0; i < n.g.size(); ++i)
            if (n.mask[i]) na.g[i] += n.g[i] * scale;
        }
        break;
      case Op::Mse: {
        const InRef& b = n.in[1];
        Node& nb = nodes_[b.id];
        const double c = 2.0 * n.g[0] / static_cast<double>(na.x.size());
        for (std::size_t i = 0; i < na.x.size(); ++i) {
          const double d = c * (na.x[i] - nb.x[i]);
          if (ga) na.g[i] += d;
          if (nb.needs_grad) nb.g[i] -= d;
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<Node> recycled_;
  std::size_t rcursor_ = 0;
  std::vector<double> tscratch_;
};

// ---------------------------------------------------------------------------
// Composed helpers (no new primitives)
// ---------------------------------------------------------------------------

// max(x, 0) + slope * min(x, 0), built as relu(x) - slope * relu(-x).
inline Var leaky_relu(Tape& tape, Var x, double slope) {
  Var neg1 = tape.scalar(-1.0);
  Var pos = tape.relu(x);
  Var nx = tape.mul(x, neg1);
  Var np = tape.relu(nx);
  Var scaled = tape.mul(np, tape.scalar(slope));
  return tape.add(pos, tape.mul(scaled, neg1));
}

inline Var linear(Tape& tape, Var x, Var w, Var b) {
  return tape.add(tape.matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

// Builds the graph through `build`, runs backward, then probes every input
// element with a central difference and returns the worst relative error.
// Inputs are held in double so the probe step is exact. Throws
// NonFiniteProbe if any probe evaluates to a non-finite loss.
inline double grad_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    const std::vector<Tensor>& inputs, double h = 1e-5) {
  std::vector<std::vector<double>> xs;
  xs.reserve(inputs.size());
  for (const auto& t : inputs) {
    std::vector<double> v(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = t.data[i];
    xs.push_back(std::move(v));
  }

  Tape tape;  // reset per probe; storage is recycled
  auto eval = [&](bool with_grad,
                  std::vector<std::vector<double>>* grads) -> double {
    tape.reset();
    std::vector<Var> vars;
    for (std::size_t i = 0; i < xs.size(); ++i)
      vars.push_back(tape.leaf_d(xs[i].data(), inputs[i].rows, inputs[i].cols,
                                 with_grad));
    Var loss = build(tape, vars);
    if (loss.size() != 1)
      fail(ErrorKind::NonScalarLoss, "grad_check target must be scalar");
    const double y = tape.value_scalar(loss);
    if (with_grad) {
      tape.backward(loss);
      grads->clear();
      for (auto v : vars) grads->push_back(tape.grad_shadow(v));
    }
    return y;
  };

  std::vector<std::vector<double>> analytic;
  eval(true, &analytic);

  double worst = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (std::size_t i = 0; i < xs[t].size(); ++i) {
      const double keep = xs[t][i];
      xs[t][i] = keep + h;
      const double fp = eval(false, nullptr);
      xs[t][i] = keep - h;
      const double fm = eval(false, nullptr);
      xs[t][i] = keep;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        fail(ErrorKind::NonFiniteProbe,
             "finite-difference probe produced a non-finite loss");
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[t][i];
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1.0});
      worst = std::max(worst, std::fabs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace ftaed::ad
