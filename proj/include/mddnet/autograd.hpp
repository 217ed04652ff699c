#pragma once

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every intermediate matrix together with a closure that
// pushes the incoming gradient to its parents. Nodes are appended in
// topological order, so a reverse sweep over an index range is a valid
// backward pass. Sweeping sub-ranges lets callers splice in operations that
// couple several tapes (batch normalization across a batch).

#include "mddnet/core.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <numbers>
#include <utility>

namespace mddnet {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;
  using BackwardFn = std::function<void(Tape&, const Mat&)>;

  Var constant(Mat value) { return push(std::move(value), false, nullptr); }
  Var leaf(Mat value) { return push(std::move(value), true, nullptr); }

  Var push(Mat value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool has_grad(Var v) const { return nodes_[v.id].has_grad; }

  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  Mat grad_or_zero(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.has_grad) return n.grad;
    return Mat::Zero(n.value.rows(), n.value.cols());
  }

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad.resize(n.value.rows(), n.value.cols());
      n.grad.noalias() = g;
      n.has_grad = true;
    } else {
      n.grad.noalias() += g;
    }
  }

  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse sweep over node ids in (stop, from].
  void propagate(int from, int stop = -1) {
    for (int i = from; i > stop; --i) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  void backward(Var root, const Mat& seed) {
    accumulate(root, seed);
    propagate(root.id);
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad.resize(0, 0);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  // deque keeps references to earlier nodes valid while new ones are pushed.
  std::deque<Node> nodes_;
};

namespace ag {

template <typename T>
bool any_grad(const Tape<T>& t, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (t.requires_grad(v)) return true;
  return false;
}

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require_shape(A.cols() == B.rows(), "matmul inner dimensions differ");
  Matrix<T> C;
  C.noalias() = A * B;
  return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape<T>& tp, const Matrix<T>& G) {
    if (tp.requires_grad(a)) tp.accumulate(a, G * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * G);
  });
}

// A * B^T
template <typename T>
Var matmul_nt(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require_shape(A.cols() == B.cols(), "matmul_nt inner dimensions differ");
  Matrix<T> C;
  C.noalias() = A * B.transpose();
  return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape<T>& tp, const Matrix<T>& G) {
    if (tp.requires_grad(a)) tp.accumulate(a, G * tp.value(b));
    if (tp.requires_grad(b)) tp.accumulate(b, G.transpose() * tp.value(a));
  });
}

template <typename T>
Var transpose(Tape<T>& t, Var a) {
  Matrix<T> C = t.value(a).transpose();
  return t.push(std::move(C), t.requires_grad(a),
                [a](Tape<T>& tp, const Matrix<T>& G) { tp.accumulate(a, G.transpose()); });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  require_shape(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(),
                "add operands differ in shape");
  Matrix<T> C = t.value(a) + t.value(b);
  return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape<T>& tp, const Matrix<T>& G) {
    tp.accumulate(a, G);
    tp.accumulate(b, G);
  });
}

template <typename T>
Var hadamard(Tape<T>& t, Var a, Var b) {
  require_shape(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(),
                "hadamard operands differ in shape");
  Matrix<T> C = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape<T>& tp, const Matrix<T>& G) {
    if (tp.requires_grad(a)) tp.accumulate(a, G.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, G.cwiseProduct(tp.value(a)));
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T s) {
  Matrix<T> C = t.value(a) * s;
  return t.push(std::move(C), t.requires_grad(a),
                [a, s](Tape<T>& tp, const Matrix<T>& G) { tp.accumulate(a, G * s); });
}

// x + b, b a 1×c row broadcast over rows.
template <typename T>
Var add_row(Tape<T>& t, Var x, Var b) {
  require_shape(t.value(b).rows() == 1 && t.value(b).cols() == t.value(x).cols(), "add_row width mismatch");
  Matrix<T> C = t.value(x).rowwise() + t.value(b).row(0);
  return t.push(std::move(C), any_grad(t, {x, b}), [x, b](Tape<T>& tp, const Matrix<T>& G) {
    tp.accumulate(x, G);
    if (tp.requires_grad(b)) tp.accumulate(b, G.colwise().sum());
  });
}

// x ⊙ g, g a 1×c row broadcast over rows.
template <typename T>
Var mul_row(Tape<T>& t, Var x, Var g) {
  require_shape(t.value(g).rows() == 1 && t.value(g).cols() == t.value(x).cols(), "mul_row width mismatch");
  Matrix<T> C = t.value(x).array().rowwise() * t.value(g).row(0).array();
  return t.push(std::move(C), any_grad(t, {x, g}), [x, g](Tape<T>& tp, const Matrix<T>& G) {
    if (tp.requires_grad(x))
      tp.accumulate(x, (G.array().rowwise() * tp.value(g).row(0).array()).matrix());
    if (tp.requires_grad(g)) tp.accumulate(g, G.cwiseProduct(tp.value(x)).colwise().sum());
  });
}

// Zeroes padded rows.
template <typename T>
Var mask_rows(Tape<T>& t, Var x, const Mask& mask) {
  require_shape(static_cast<Eigen::Index>(mask.size()) == t.value(x).rows(), "mask length differs from rows");
  Matrix<T> C = t.value(x);
  for (Eigen::Index i = 0; i < C.rows(); ++i)
    if (!mask[i]) C.row(i).setZero();
  return t.push(std::move(C), t.requires_grad(x), [x, mask](Tape<T>& tp, const Matrix<T>& G) {
    Matrix<T> g = G;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      if (!mask[i]) g.row(i).setZero();
    tp.accumulate(x, g);
  });
}

/// Optional per-thread callback that sees every softmax output and its column
/// mask. Used by invariant tests; unset in normal runs.
template <typename T>
inline thread_local std::function<void(const Matrix<T>&, const Mask&)> softmax_observer;

// Softmax of s·A along each row, restricted to columns whose mask flag is set.
// Masked columns get probability 0; a row with no admissible column is all zeros.
template <typename T>
Var masked_softmax_rows(Tape<T>& t, Var a, const Mask& col_mask, T s = T(1)) {
  const auto& A = t.value(a);
  const bool masked = !col_mask.empty();
  require_shape(!masked || static_cast<Eigen::Index>(col_mask.size()) == A.cols(), "softmax mask length mismatch");
  Eigen::Array<T, 1, Eigen::Dynamic> bias = Eigen::Array<T, 1, Eigen::Dynamic>::Zero(A.cols());
  bool any_real = !masked;
  if (masked)
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (col_mask[j])
        any_real = true;
      else
        bias(j) = -std::numeric_limits<T>::infinity();
    }
  Matrix<T> Y(A.rows(), A.cols());
  if (!any_real) {
    Y.setZero();
  } else {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      auto logits = (A.row(i).array() * s + bias).eval();
      const T mx = logits.maxCoeff();
      auto e = (logits - mx).exp().eval();
      Y.row(i) = (e / e.sum()).matrix();
    }
    // Vectorized exp can return denormals instead of 0 for -inf inputs.
    if (masked)
      for (Eigen::Index j = 0; j < A.cols(); ++j)
        if (!col_mask[j]) Y.col(j).setZero();
  }
  if (softmax_observer<T>) softmax_observer<T>(Y, col_mask);
  Var y_id{t.size()};
  return t.push(std::move(Y), t.requires_grad(a), [a, y_id, s](Tape<T>& tp, const Matrix<T>& G) {
    const auto& Yv = tp.value(y_id);
    Eigen::Matrix<T, Eigen::Dynamic, 1> dots = G.cwiseProduct(Yv).rowwise().sum();
    Matrix<T> dA = (Yv.array() * (G.colwise() - dots).array()) * s;
    tp.accumulate(a, dA);
  });
}

// Per-row normalization over `groups` equal contiguous channel groups, no affine.
template <typename T>
Var group_normalize_rows(Tape<T>& t, Var x, int groups, T eps) {
  const auto& X = t.value(x);
  const Eigen::Index c = X.cols();
  require_shape(groups > 0 && c % groups == 0, "group count must divide channel count");
  const Eigen::Index gs = c / groups;
  Matrix<T> Y(X.rows(), c);
  Matrix<T> inv_std(X.rows(), groups);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int g = 0; g < groups; ++g) {
      auto seg = X.row(i).segment(g * gs, gs);
      T mean = seg.mean();
      T var = (seg.array() - mean).square().mean();
      T is = T(1) / std::sqrt(var + eps);
      inv_std(i, g) = is;
      Y.row(i).segment(g * gs, gs) = (seg.array() - mean) * is;
    }
  }
  Var y_id{t.size()};
  return t.push(std::move(Y), t.requires_grad(x),
                [x, y_id, groups, gs, inv_std = std::move(inv_std)](Tape<T>& tp, const Matrix<T>& G) {
                  const auto& Yv = tp.value(y_id);
                  Matrix<T> dX(G.rows(), G.cols());
                  for (Eigen::Index i = 0; i < G.rows(); ++i) {
                    for (int g = 0; g < groups; ++g) {
                      auto gy = G.row(i).segment(g * gs, gs).array();
                      auto yh = Yv.row(i).segment(g * gs, gs).array();
                      T mg = gy.mean();
                      T mgy = (gy * yh).mean();
                      dX.row(i).segment(g * gs, gs) = (gy - mg - yh * mgy) * inv_std(i, g);
                    }
                  }
                  tp.accumulate(x, dX);
                });
}

namespace detail {

// Elementwise map with value and derivative given as array functions.
template <typename T, typename F, typename DF>
Var unary(Tape<T>& t, Var a, F f, DF df) {
  Matrix<T> C = f(t.value(a).array());
  return t.push(std::move(C), t.requires_grad(a), [a, df](Tape<T>& tp, const Matrix<T>& G) {
    Matrix<T> d = df(tp.value(a).array());
    tp.accumulate(a, G.cwiseProduct(d));
  });
}

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluK = static_cast<T>(0.044715);

}  // namespace detail

// tanh approximation of GELU.
template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::tanh(detail::kGeluC<T> * (x + detail::kGeluK<T> * x * x * x)));
}

template <typename T>
Var gelu(Tape<T>& t, Var a) {
  using detail::kGeluC;
  using detail::kGeluK;
  return detail::unary(
      t, a,
      [](const auto& x) -> Matrix<T> {
        return (T(0.5) * x * (T(1) + (kGeluC<T> * (x + kGeluK<T> * x.cube())).tanh())).matrix();
      },
      [](const auto& x) -> Matrix<T> {
        auto th = (kGeluC<T> * (x + kGeluK<T> * x.cube())).tanh().eval();
        return (T(0.5) * (T(1) + th) +
                T(0.5) * x * (T(1) - th.square()) * kGeluC<T> * (T(1) + T(3) * kGeluK<T> * x.square()))
            .matrix();
      });
}

template <typename T>
Var silu(Tape<T>& t, Var a) {
  return detail::unary(
      t, a, [](const auto& x) -> Matrix<T> { return (x / (T(1) + (-x).exp())).matrix(); },
      [](const auto& x) -> Matrix<T> {
        auto sg = (T(1) / (T(1) + (-x).exp())).eval();
        return (sg * (T(1) + x * (T(1) - sg))).matrix();
      });
}

template <typename T>
Var tanh(Tape<T>& t, Var a) {
  return detail::unary(
      t, a, [](const auto& x) -> Matrix<T> { return x.tanh().matrix(); },
      [](const auto& x) -> Matrix<T> { return (T(1) - x.tanh().square()).matrix(); });
}

template <typename T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.value(parts.front()).cols();
  bool rg = false;
  for (Var p : parts) {
    require_shape(t.value(p).cols() == cols, "concat_rows width mismatch");
    rows += t.value(p).rows();
    rg = rg || t.requires_grad(p);
  }
  Matrix<T> C(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    C.middleRows(off, t.value(p).rows()) = t.value(p);
    off += t.value(p).rows();
  }
  return t.push(std::move(C), rg, [parts](Tape<T>& tp, const Matrix<T>& G) {
    Eigen::Index o = 0;
    for (Var p : parts) {
      const Eigen::Index r = tp.value(p).rows();
      if (tp.requires_grad(p)) tp.accumulate(p, G.middleRows(o, r));
      o += r;
    }
  });
}

template <typename T>
Var concat_cols(Tape<T>& t, const std::vector<Var>& parts) {
  Eigen::Index cols = 0;
  const Eigen::Index rows = t.value(parts.front()).rows();
  bool rg = false;
  for (Var p : parts) {
    require_shape(t.value(p).rows() == rows, "concat_cols height mismatch");
    cols += t.value(p).cols();
    rg = rg || t.requires_grad(p);
  }
  Matrix<T> C(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    C.middleCols(off, t.value(p).cols()) = t.value(p);
    off += t.value(p).cols();
  }
  return t.push(std::move(C), rg, [parts](Tape<T>& tp, const Matrix<T>& G) {
    Eigen::Index o = 0;
    for (Var p : parts) {
      const Eigen::Index c = tp.value(p).cols();
      if (tp.requires_grad(p)) tp.accumulate(p, G.middleCols(o, c));
      o += c;
    }
  });
}

template <typename T>
Var slice_cols(Tape<T>& t, Var a, Eigen::Index start, Eigen::Index count) {
  Matrix<T> C = t.value(a).middleCols(start, count);
  return t.push(std::move(C), t.requires_grad(a), [a, start, count](Tape<T>& tp, const Matrix<T>& G) {
    Matrix<T> g = Matrix<T>::Zero(tp.value(a).rows(), tp.value(a).cols());
    g.middleCols(start, count) = G;
    tp.accumulate(a, g);
  });
}

// out(x) = Σ_j S(x,j) · V(x + j − (N−1)/2), neighbours outside [0,t) or padded
// contributing nothing. S is t×N, V is t×D.
template <typename T>
Var neighborhood_aggregate(Tape<T>& t, Var s, Var v, const Mask& mask) {
  const auto& S = t.value(s);
  const auto& V = t.value(v);
  const Eigen::Index n = V.rows();
  const Eigen::Index window = S.cols();
  require_shape(S.rows() == n, "neighborhood weights and values differ in length");
  require_shape(window % 2 == 1, "neighborhood window must be odd");
  const Eigen::Index half = (window - 1) / 2;
  auto admissible = [n, mask](Eigen::Index j) { return j >= 0 && j < n && (mask.empty() || mask[j]); };
  Matrix<T> out = Matrix<T>::Zero(n, V.cols());
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index k = 0; k < window; ++k) {
      const Eigen::Index j = x + k - half;
      if (admissible(j)) out.row(x).noalias() += S(x, k) * V.row(j);
    }
  return t.push(std::move(out), any_grad(t, {s, v}), [s, v, half, admissible](Tape<T>& tp, const Matrix<T>& G) {
    const auto& Sv = tp.value(s);
    const auto& Vv = tp.value(v);
    const Eigen::Index nn = Vv.rows();
    Matrix<T> dS = Matrix<T>::Zero(Sv.rows(), Sv.cols());
    Matrix<T> dV = Matrix<T>::Zero(Vv.rows(), Vv.cols());
    for (Eigen::Index x = 0; x < nn; ++x)
      for (Eigen::Index k = 0; k < Sv.cols(); ++k) {
        const Eigen::Index j = x + k - half;
        if (!admissible(j)) continue;
        dS(x, k) = G.row(x).dot(Vv.row(j));
        dV.row(j).noalias() += Sv(x, k) * G.row(x);
      }
    if (tp.requires_grad(s)) tp.accumulate(s, dS);
    if (tp.requires_grad(v)) tp.accumulate(v, dV);
  });
}

// Stride-1 average pooling over rows with a symmetric window; edge windows
// average only the rows that exist, so length and constant rows are preserved.
template <typename T>
Var avg_pool_same(Tape<T>& t, Var a, int window) {
  require_shape(window >= 1 && window % 2 == 1, "pooling window must be odd and positive");
  const auto& A = t.value(a);
  const Eigen::Index n = A.rows();
  const Eigen::Index h = window / 2;
  Matrix<T> C(n, A.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - h), hi = std::min<Eigen::Index>(n - 1, i + h);
    C.row(i) = A.middleRows(lo, hi - lo + 1).colwise().mean();
  }
  return t.push(std::move(C), t.requires_grad(a), [a, h](Tape<T>& tp, const Matrix<T>& G) {
    const Eigen::Index nn = G.rows();
    Matrix<T> g = Matrix<T>::Zero(nn, G.cols());
    for (Eigen::Index i = 0; i < nn; ++i) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, i - h), hi = std::min<Eigen::Index>(nn - 1, i + h);
      const T w = T(1) / static_cast<T>(hi - lo + 1);
      for (Eigen::Index j = lo; j <= hi; ++j) g.row(j) += w * G.row(i);
    }
    tp.accumulate(a, g);
  });
}

// Non-overlapping average pooling over rows with stride s; the last window
// may be partial and averages its members only.
template <typename T>
Var avg_pool_stride(Tape<T>& t, Var a, int stride) {
  require_shape(stride >= 1, "stride must be positive");
  if (stride == 1) return a;
  const auto& A = t.value(a);
  const Eigen::Index n = A.rows();
  const Eigen::Index m = (n + stride - 1) / stride;
  Matrix<T> C(m, A.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index lo = k * stride, cnt = std::min<Eigen::Index>(stride, n - lo);
    C.row(k) = A.middleRows(lo, cnt).colwise().mean();
  }
  return t.push(std::move(C), t.requires_grad(a), [a, stride](Tape<T>& tp, const Matrix<T>& G) {
    const Eigen::Index nn = tp.value(a).rows();
    Matrix<T> g(nn, G.cols());
    for (Eigen::Index k = 0; k < G.rows(); ++k) {
      const Eigen::Index lo = k * stride, cnt = std::min<Eigen::Index>(stride, nn - lo);
      for (Eigen::Index j = lo; j < lo + cnt; ++j) g.row(j) = G.row(k) / static_cast<T>(cnt);
    }
    tp.accumulate(a, g);
  });
}

}  // namespace ag
}  // namespace mddnet
