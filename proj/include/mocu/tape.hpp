#ifndef MOCU_TAPE_HPP
#define MOCU_TAPE_HPP

// Reverse-mode automatic differentiation on batched 2-D arrays. A Tape owns
// the computation graph of one loss evaluation; backward() fills gradient
// buffers in one reverse sweep. Two custom nodes tie the graph to the exact
// kinematics: fkFlat (pose of each batch row, with analytic per-joint
// Jacobians) and plantOut (full sensed output, Jacobians from forward-mode
// duals). Everything is 64-bit.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocu/kinematics.hpp"

namespace mocu {

struct Array {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Array() = default;
  Array(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c, 0.0) {}

  double& at(int r, int c) { return data[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[std::size_t(r) * cols + c]; }
  std::size_t size() const { return data.size(); }
};

// C(n,m) += A(n,k) B(k,m)
inline void mmAB(const double* A, const double* B, double* C, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* a = A + std::size_t(i) * k;
    double* c = C + std::size_t(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = a[p];
      if (av == 0.0) continue;
      const double* b = B + std::size_t(p) * m;
      for (int j = 0; j < m; ++j) c[j] += av * b[j];
    }
  }
}

// C(n,k) += A(n,m) B(k,m)^T
inline void mmABt(const double* A, const double* B, double* C, int n, int m, int k) {
  for (int i = 0; i < n; ++i) {
    const double* a = A + std::size_t(i) * m;
    double* c = C + std::size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* b = B + std::size_t(p) * m;
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += a[j] * b[j];
      c[p] += s;
    }
  }
}

// C(k,m) += A(n,k)^T B(n,m)
inline void mmAtB(const double* A, const double* B, double* C, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* a = A + std::size_t(i) * k;
    const double* b = B + std::size_t(i) * m;
    for (int p = 0; p < k; ++p) {
      const double ap = a[p];
      if (ap == 0.0) continue;
      double* c = C + std::size_t(p) * m;
      for (int j = 0; j < m; ++j) c[j] += ap * b[j];
    }
  }
}

inline double geluFn(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)); }

inline double geluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
  const double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;
  return cdf + x * pdf;
}

class Tape {
  enum class Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    AddRow,
    SubRowConst,
    RowConstMinus,
    Relu,
    Gelu,
    Sin,
    Cos,
    Scale,
    ConcatCols,
    SliceCols,
    Bmm33TN,
    Bmv3TN,
    Mse,
    ScalarAdd,
    ScalarScale,
    FkFlat,
    PlantOut,
  };

  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    Array val;
    Array grad;
    double c0 = 0.0;
    int i0 = 0;
    int i1 = 0;
    std::vector<int> ins;         // ConcatCols inputs
    std::vector<double> payload;  // row constants or cached Jacobians
    const RobotSpec* spec = nullptr;
  };

 public:
  int leaf(Array v) {
    Node n;
    n.val = std::move(v);
    return push(std::move(n));
  }

  int constant(Array v) { return leaf(std::move(v)); }

  int matmul(int a, int b) {
    requireCols(a, -1);
    if (val(a).cols != val(b).rows) throw std::invalid_argument("matmul: inner dims differ");
    Node n = binary(Op::MatMul, a, b, val(a).rows, val(b).cols);
    mmAB(val(a).data.data(), val(b).data.data(), n.val.data.data(), val(a).rows, val(a).cols,
         val(b).cols);
    return push(std::move(n));
  }

  int add(int a, int b) { return addsub(Op::Add, a, b); }
  int sub(int a, int b) { return addsub(Op::Sub, a, b); }

  // broadcast add of a (1,m) leaf over every row (bias)
  int addRow(int a, int row) {
    if (val(row).rows != 1 || val(row).cols != val(a).cols)
      throw std::invalid_argument("addRow: row shape mismatch");
    Node n = binary(Op::AddRow, a, row, val(a).rows, val(a).cols);
    const Array& x = val(a);
    const Array& r = val(row);
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < x.cols; ++j) n.val.at(i, j) = x.at(i, j) + r.data[j];
    return push(std::move(n));
  }

  int subRowConst(int a, std::vector<double> row) { return rowConstOp(Op::SubRowConst, a, std::move(row)); }
  int rowConstMinus(std::vector<double> row, int a) { return rowConstOp(Op::RowConstMinus, a, std::move(row)); }

  int relu(int a) { return unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; }); }
  int gelu(int a) { return unary(Op::Gelu, a, geluFn); }
  int sin(int a) {
    return unary(Op::Sin, a, [](double x) { return std::sin(x); });
  }
  int cos(int a) {
    return unary(Op::Cos, a, [](double x) { return std::cos(x); });
  }

  int scale(int a, double c) {
    Node n = unaryShell(Op::Scale, a);
    n.c0 = c;
    const Array& x = val(a);
    for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = x.data[i] * c;
    return push(std::move(n));
  }

  int concatCols(const std::vector<int>& xs) {
    if (xs.empty()) throw std::invalid_argument("concatCols: no inputs");
    int rows = val(xs[0]).rows, cols = 0;
    for (int id : xs) {
      if (val(id).rows != rows) throw std::invalid_argument("concatCols: row mismatch");
      cols += val(id).cols;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.ins = xs;
    n.val = Array(rows, cols);
    int off = 0;
    for (int id : xs) {
      const Array& x = val(id);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < x.cols; ++j) n.val.at(i, off + j) = x.at(i, j);
      off += x.cols;
    }
    return push(std::move(n));
  }

  int sliceCols(int a, int c0, int c1) {
    const Array& x = val(a);
    if (c0 < 0 || c1 > x.cols || c0 >= c1) throw std::invalid_argument("sliceCols: bad range");
    Node n;
    n.op = Op::SliceCols;
    n.a = a;
    n.i0 = c0;
    n.i1 = c1;
    n.val = Array(x.rows, c1 - c0);
    for (int i = 0; i < x.rows; ++i)
      for (int j = c0; j < c1; ++j) n.val.at(i, j - c0) = x.at(i, j);
    return push(std::move(n));
  }

  // per-row 3x3 products: rows hold row-major 3x3; out = A^T B
  int bmm33tn(int a, int b) {
    requireCols(a, 9);
    requireCols(b, 9);
    requireSameRows(a, b);
    Node n = binary(Op::Bmm33TN, a, b, val(a).rows, 9);
    for (int r = 0; r < val(a).rows; ++r) {
      const double* A = val(a).data.data() + r * 9;
      const double* B = val(b).data.data() + r * 9;
      double* C = n.val.data.data() + r * 9;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double s = 0.0;
          for (int k = 0; k < 3; ++k) s += A[k * 3 + i] * B[k * 3 + j];
          C[i * 3 + j] = s;
        }
    }
    return push(std::move(n));
  }

  // per-row matrix-transpose-vector: rows of a hold 3x3, rows of v hold 3; out = A^T v
  int bmv3tn(int a, int v) {
    requireCols(a, 9);
    requireCols(v, 3);
    requireSameRows(a, v);
    Node n = binary(Op::Bmv3TN, a, v, val(a).rows, 3);
    for (int r = 0; r < val(a).rows; ++r) {
      const double* A = val(a).data.data() + r * 9;
      const double* x = val(v).data.data() + r * 3;
      double* y = n.val.data.data() + r * 3;
      for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += A[k * 3 + i] * x[k];
        y[i] = s;
      }
    }
    return push(std::move(n));
  }

  // mean over all entries of (a-b)^2; b = -1 reads as a zero target
  int mse(int a, int b) {
    if (b >= 0 && (val(a).rows != val(b).rows || val(a).cols != val(b).cols))
      throw std::invalid_argument("mse: shape mismatch");
    Node n;
    n.op = Op::Mse;
    n.a = a;
    n.b = b;
    n.val = Array(1, 1);
    const Array& x = val(a);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x.data[i] - (b >= 0 ? val(b).data[i] : 0.0);
      s += d * d;
    }
    n.val.data[0] = s / double(x.size());
    return push(std::move(n));
  }

  int scalarAdd(int a, int b) {
    requireScalar(a);
    requireScalar(b);
    Node n = binary(Op::ScalarAdd, a, b, 1, 1);
    n.val.data[0] = val(a).data[0] + val(b).data[0];
    return push(std::move(n));
  }

  int scalarScale(int a, double c) {
    requireScalar(a);
    Node n;
    n.op = Op::ScalarScale;
    n.a = a;
    n.c0 = c;
    n.val = Array(1, 1);
    n.val.data[0] = val(a).data[0] * c;
    return push(std::move(n));
  }

  // pose of each batch row: q (r,6) -> [R row-major | translation] (r,12)
  int fkFlat(int q, const RobotSpec* spec) {
    requireCols(q, 6);
    Node n;
    n.op = Op::FkFlat;
    n.a = q;
    n.spec = spec;
    const int rows = val(q).rows;
    n.val = Array(rows, 12);
    n.payload.resize(std::size_t(rows) * 12 * 6);
    for (int r = 0; r < rows; ++r) {
      std::array<double, 6> qr;
      for (int i = 0; i < 6; ++i) qr[i] = val(q).at(r, i);
      const Pose F = forwardKinematics(*spec, qr);
      double* out = n.val.data.data() + r * 12;
      flattenPose(F, out);
      const auto P = fkPartials(*spec, qr);
      double* J = n.payload.data() + std::size_t(r) * 72;  // (12,6) row-major
      for (int i = 0; i < 6; ++i) {
        double col[12];
        flattenPose(P[i], col);
        for (int k = 0; k < 12; ++k) J[k * 6 + i] = col[k];
      }
    }
    return push(std::move(n));
  }

  // full plant output of each batch row, x = [q, qd] (r,12), u (r,6) -> y (r,6)
  int plantOut(int x, int u, const RobotSpec* spec) {
    requireCols(x, 12);
    requireCols(u, 6);
    requireSameRows(x, u);
    Node n;
    n.op = Op::PlantOut;
    n.a = x;
    n.b = u;
    n.spec = spec;
    const int rows = val(x).rows;
    n.val = Array(rows, 6);
    n.payload.resize(std::size_t(rows) * 6 * 18);
    using D = Dual<18>;
    for (int r = 0; r < rows; ++r) {
      std::array<D, 6> q, qd, uu;
      for (int i = 0; i < 6; ++i) {
        q[i] = D::seed(val(x).at(r, i), i);
        qd[i] = D::seed(val(x).at(r, 6 + i), 6 + i);
        uu[i] = D::seed(val(u).at(r, i), 12 + i);
      }
      const std::array<D, 6> y = plantOutputT<D>(*spec, q, qd, uu);
      double* J = n.payload.data() + std::size_t(r) * 108;  // (6,18) row-major
      for (int i = 0; i < 6; ++i) {
        n.val.at(r, i) = y[i].a;
        for (int k = 0; k < 18; ++k) J[i * 18 + k] = y[i].d[k];
      }
    }
    return push(std::move(n));
  }

  const Array& val(int id) const { return nodes_[id].val; }
  const Array& grad(int id) const { return nodes_[id].grad; }

  std::size_t nodeCount() const { return nodes_.size(); }

  // reverse sweep seeding d(root)/d(root) = 1; root must be scalar
  void backward(int root) {
    requireScalar(root);
    for (auto& n : nodes_) n.grad = Array();
    ensureGrad(root);
    nodes_[root].grad.data[0] = 1.0;
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.data.empty()) continue;
      propagate(id, n);
    }
  }

 private:
  static void flattenPose(const Mat4<double>& F, double* out) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out[i * 3 + j] = F(i, j);
    for (int i = 0; i < 3; ++i) out[9 + i] = F(i, 3);
  }

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  Node binary(Op op, int a, int b, int rows, int cols) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = Array(rows, cols);
    return n;
  }

  Node unaryShell(Op op, int a) {
    Node n;
    n.op = op;
    n.a = a;
    n.val = Array(val(a).rows, val(a).cols);
    return n;
  }

  template <class F>
  int unary(Op op, int a, F f) {
    Node n = unaryShell(op, a);
    const Array& x = val(a);
    for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = f(x.data[i]);
    return push(std::move(n));
  }

  int addsub(Op op, int a, int b) {
    if (val(a).rows != val(b).rows || val(a).cols != val(b).cols)
      throw std::invalid_argument("add/sub: shape mismatch");
    Node n = binary(op, a, b, val(a).rows, val(a).cols);
    const double s = (op == Op::Sub) ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n.val.size(); ++i)
      n.val.data[i] = val(a).data[i] + s * val(b).data[i];
    return push(std::move(n));
  }

  int rowConstOp(Op op, int a, std::vector<double> row) {
    if (int(row.size()) != val(a).cols) throw std::invalid_argument("row const: width mismatch");
    Node n = unaryShell(op, a);
    n.payload = std::move(row);
    const Array& x = val(a);
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < x.cols; ++j)
        n.val.at(i, j) = (op == Op::SubRowConst) ? x.at(i, j) - n.payload[j]
                                                 : n.payload[j] - x.at(i, j);
    return push(std::move(n));
  }

  void requireScalar(int id) const {
    if (val(id).rows != 1 || val(id).cols != 1) throw std::invalid_argument("scalar expected");
  }

  void requireCols(int id, int c) const {
    if (c >= 0 && val(id).cols != c)
      throw std::invalid_argument("expected " + std::to_string(c) + " columns");
  }

  void requireSameRows(int a, int b) const {
    if (val(a).rows != val(b).rows) throw std::invalid_argument("row count mismatch");
  }

  Array& ensureGrad(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Array(n.val.rows, n.val.cols);
    return n.grad;
  }

  void propagate(int id, Node& n) {
    const Array& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const Array& A = val(n.a);
        const Array& B = val(n.b);
        mmABt(g.data.data(), B.data.data(), ensureGrad(n.a).data.data(), A.rows, B.cols, A.cols);
        mmAtB(A.data.data(), g.data.data(), ensureGrad(n.b).data.data(), A.rows, A.cols, B.cols);
        break;
      }
      case Op::Add:
      case Op::Sub: {
        Array& ga = ensureGrad(n.a);
        Array& gb = ensureGrad(n.b);
        const double s = (n.op == Op::Sub) ? -1.0 : 1.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] += s * g.data[i];
        }
        break;
      }
      case Op::AddRow: {
        Array& ga = ensureGrad(n.a);
        Array& gr = ensureGrad(n.b);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) {
            ga.at(i, j) += g.at(i, j);
            gr.data[j] += g.at(i, j);
          }
        break;
      }
      case Op::SubRowConst: {
        Array& ga = ensureGrad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        break;
      }
      case Op::RowConstMinus: {
        Array& ga = ensureGrad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] -= g.data[i];
        break;
      }
      case Op::Relu: {
        Array& ga = ensureGrad(n.a);
        const Array& x = val(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x.data[i] > 0.0) ga.data[i] += g.data[i];
        break;
      }
      case Op::Gelu: {
        Array& ga = ensureGrad(n.a);
        const Array& x = val(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * geluGrad(x.data[i]);
        break;
      }
      case Op::Sin: {
        Array& ga = ensureGrad(n.a);
        const Array& x = val(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data[i] += g.data[i] * std::cos(x.data[i]);
        break;
      }
      case Op::Cos: {
        Array& ga = ensureGrad(n.a);
        const Array& x = val(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data[i] -= g.data[i] * std::sin(x.data[i]);
        break;
      }
      case Op::Scale: {
        Array& ga = ensureGrad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * n.c0;
        break;
      }
      case Op::ConcatCols: {
        int off = 0;
        for (int id2 : n.ins) {
          Array& gi = ensureGrad(id2);
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < gi.cols; ++j) gi.at(i, j) += g.at(i, off + j);
          off += gi.cols;
        }
        break;
      }
      case Op::SliceCols: {
        Array& ga = ensureGrad(n.a);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) ga.at(i, n.i0 + j) += g.at(i, j);
        break;
      }
      case Op::Bmm33TN: {
        Array& ga = ensureGrad(n.a);
        Array& gb = ensureGrad(n.b);
        for (int r = 0; r < g.rows; ++r) {
          const double* A = val(n.a).data.data() + r * 9;
          const double* B = val(n.b).data.data() + r * 9;
          const double* G = g.data.data() + r * 9;
          double* dA = ga.data.data() + r * 9;
          double* dB = gb.data.data() + r * 9;
          // C = A^T B, dA = B G^T, dB = A G
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              double sa = 0.0, sb = 0.0;
              for (int k = 0; k < 3; ++k) {
                sa += B[i * 3 + k] * G[j * 3 + k];
                sb += A[i * 3 + k] * G[k * 3 + j];
              }
              dA[i * 3 + j] += sa;
              dB[i * 3 + j] += sb;
            }
        }
        break;
      }
      case Op::Bmv3TN: {
        Array& ga = ensureGrad(n.a);
        Array& gv = ensureGrad(n.b);
        for (int r = 0; r < g.rows; ++r) {
          const double* A = val(n.a).data.data() + r * 9;
          const double* x = val(n.b).data.data() + r * 3;
          const double* G = g.data.data() + r * 3;
          double* dA = ga.data.data() + r * 9;
          double* dv = gv.data.data() + r * 3;
          // y = A^T x, dA = x y_bar^T, dx = A y_bar
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              dA[i * 3 + j] += x[i] * G[j];
              dv[i] += A[i * 3 + j] * G[j];
            }
        }
        break;
      }
      case Op::Mse: {
        Array& ga = ensureGrad(n.a);
        const Array& x = val(n.a);
        const double w = 2.0 * g.data[0] / double(x.size());
        if (n.b >= 0) {
          Array& gb = ensureGrad(n.b);
          const Array& y = val(n.b);
          for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = w * (x.data[i] - y.data[i]);
            ga.data[i] += d;
            gb.data[i] -= d;
          }
        } else {
          for (std::size_t i = 0; i < x.size(); ++i) ga.data[i] += w * x.data[i];
        }
        break;
      }
      case Op::ScalarAdd: {
        ensureGrad(n.a).data[0] += g.data[0];
        ensureGrad(n.b).data[0] += g.data[0];
        break;
      }
      case Op::ScalarScale: {
        ensureGrad(n.a).data[0] += g.data[0] * n.c0;
        break;
      }
      case Op::FkFlat: {
        Array& gq = ensureGrad(n.a);
        for (int r = 0; r < g.rows; ++r) {
          const double* J = n.payload.data() + std::size_t(r) * 72;
          const double* G = g.data.data() + r * 12;
          double* dq = gq.data.data() + r * 6;
          for (int k = 0; k < 12; ++k)
            for (int i = 0; i < 6; ++i) dq[i] += G[k] * J[k * 6 + i];
        }
        break;
      }
      case Op::PlantOut: {
        Array& gx = ensureGrad(n.a);
        Array& gu = ensureGrad(n.b);
        for (int r = 0; r < g.rows; ++r) {
          const double* J = n.payload.data() + std::size_t(r) * 108;
          const double* G = g.data.data() + r * 6;
          double* dx = gx.data.data() + r * 12;
          double* du = gu.data.data() + r * 6;
          for (int i = 0; i < 6; ++i) {
            const double gi = G[i];
            if (gi == 0.0) continue;
            const double* Ji = J + i * 18;
            for (int k = 0; k < 12; ++k) dx[k] += gi * Ji[k];
            for (int k = 0; k < 6; ++k) du[k] += gi * Ji[12 + k];
          }
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace mocu

#endif
