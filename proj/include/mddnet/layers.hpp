#pragma once

#include "mddnet/config.hpp"
#include "mddnet/params.hpp"

#include <string>

namespace mddnet {

/// Weight (in×out) and optional bias (1×out) of a pointwise projection.
struct LinearIdx {
  std::size_t w = 0;
  std::size_t b = 0;
  bool has_bias = false;
};

template <typename T>
LinearIdx register_linear(ParameterSet<T>& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
                          bool bias) {
  LinearIdx l;
  l.w = ps.add(name + ".w", in, out, ParamKind::Weight);
  if (bias) {
    l.b = ps.add(name + ".b", 1, out, ParamKind::Bias);
    l.has_bias = true;
  }
  return l;
}

template <typename T>
Var linear(ParamBinder<T>& pb, Var x, const LinearIdx& l) {
  Var y = ag::matmul(pb.tape(), x, pb(l.w));
  if (l.has_bias) y = ag::add_row(pb.tape(), y, pb(l.b));
  return y;
}

struct NormIdx {
  std::size_t gamma = 0;
  std::size_t beta = 0;
};

template <typename T>
NormIdx register_norm(ParameterSet<T>& ps, const std::string& name, Eigen::Index width) {
  return NormIdx{ps.add(name + ".gamma", 1, width, ParamKind::NormScale),
                 ps.add(name + ".beta", 1, width, ParamKind::NormShift)};
}

/// Per-row normalization over `groups` channel groups followed by a per-channel affine.
template <typename T>
Var group_norm(ParamBinder<T>& pb, Var x, const NormIdx& n, int groups, T eps) {
  auto& t = pb.tape();
  Var h = ag::group_normalize_rows(t, x, groups, eps);
  h = ag::mul_row(t, h, pb(n.gamma));
  return ag::add_row(t, h, pb(n.beta));
}

template <typename T>
Var layer_norm(ParamBinder<T>& pb, Var x, const NormIdx& n, T eps) {
  return group_norm(pb, x, n, 1, eps);
}

template <typename T>
Var relu(Tape<T>& t, Var a) {
  Matrix<T> C = t.value(a).cwiseMax(T(0));
  return t.push(std::move(C), t.requires_grad(a), [a](Tape<T>& tp, const Matrix<T>& G) {
    tp.accumulate(a, G.cwiseProduct((tp.value(a).array() > T(0)).template cast<T>().matrix()));
  });
}

template <typename T>
Var activate(Tape<T>& t, Var x, Activation act) {
  return act == Activation::Gelu ? ag::gelu(t, x) : relu(t, x);
}

/// Row-wise masked softmax attention: softmax(Q Kᵀ · scale) V over admissible keys.
template <typename T>
Var attend(Tape<T>& t, Var q, Var k, Var v, const Mask& key_mask, T scale) {
  Var logits = ag::matmul_nt(t, q, k);
  Var w = ag::masked_softmax_rows(t, logits, key_mask, scale);
  return ag::matmul(t, w, v);
}

}  // namespace mddnet
