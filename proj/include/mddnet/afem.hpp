#pragma once

// Acoustic feature extraction: content attention with a time-axis softmax on
// keys, relative-position attention over a local window, and a batch-normalized
// pointwise projection of the positional branch.

#include "mddnet/layers.hpp"

namespace mddnet {

struct AfemIdx {
  std::size_t w_q = 0, w_k = 0, w_v = 0;
  std::size_t rel_pos = 0;  // N × d_a_in, row j is offset j − (N−1)/2
  std::size_t w_o = 0;
  NormIdx bn;
  std::size_t running_mean = 0, running_var = 0;
};

template <typename T>
AfemIdx register_afem(ParameterSet<T>& ps, const ModelConfig& c, const std::string& prefix = "afem") {
  AfemIdx a;
  a.w_q = ps.add(prefix + ".w_q", c.d_a_in, c.d_a_in, ParamKind::Weight);
  a.w_k = ps.add(prefix + ".w_k", c.d_a_in, c.d_a_in, ParamKind::Weight);
  a.w_v = ps.add(prefix + ".w_v", c.d_a_in, c.d_a, ParamKind::Weight);
  a.rel_pos = ps.add(prefix + ".rel_pos", c.rel_window, c.d_a_in, ParamKind::Weight);
  a.w_o = ps.add(prefix + ".w_o", c.d_a, c.d_a, ParamKind::Weight);
  a.bn = register_norm(ps, prefix + ".bn", c.d_a);
  a.running_mean = ps.add(prefix + ".bn.running_mean", 1, c.d_a, ParamKind::Buffer);
  a.running_var = ps.add(prefix + ".bn.running_var", 1, c.d_a, ParamKind::Buffer);
  ps.value(a.running_var).setOnes();
  return a;
}

struct AfemProjections {
  Var q, k, v;
};

template <typename T>
AfemProjections afem_project(ParamBinder<T>& pb, const AfemIdx& a, Var x) {
  auto& t = pb.tape();
  return {ag::matmul(t, x, pb(a.w_q)), ag::matmul(t, x, pb(a.w_k)), ag::matmul(t, x, pb(a.w_v))};
}

/// Q · softmax_time(Kᵀ) · V; each key channel's weights sum to one over real steps.
template <typename T>
Var content_attention(Tape<T>& t, const AfemProjections& p, const Mask& mask) {
  Var kt = ag::transpose(t, p.k);
  Var rho = ag::masked_softmax_rows(t, kt, mask);
  Var context = ag::matmul(t, rho, p.v);  // d_a_in × D_A global context vectors
  return ag::matmul(t, p.q, context);
}

/// out(x) = Σ_δ (Q(x)·r_δ) V(x+δ) over the relative window.
template <typename T>
Var positional_attention(ParamBinder<T>& pb, const AfemIdx& a, const AfemProjections& p, const Mask& mask) {
  auto& t = pb.tape();
  Var s = ag::matmul_nt(t, p.q, pb(a.rel_pos));
  return ag::neighborhood_aggregate(t, s, p.v, mask);
}

/// Batch normalization over the batch × time axes (real rows only), applied
/// outside the per-sample tapes because it couples samples.
template <typename T>
struct BatchNormPass {
  std::vector<Matrix<T>> xhat;
  std::vector<Mask> masks;
  RowVector<T> inv_std;
  RowVector<T> gamma;
  std::size_t count = 0;
  bool train = false;

  std::vector<Matrix<T>> forward(const std::vector<const Matrix<T>*>& xs, const std::vector<Mask>& ms,
                                 ParameterSet<T>& ps, const NormIdx& idx, std::size_t mean_i, std::size_t var_i,
                                 bool training, T momentum, T eps) {
    train = training;
    masks = ms;
    const Eigen::Index d = xs.front()->cols();
    gamma = ps.value(idx.gamma).row(0);
    const RowVector<T> beta = ps.value(idx.beta).row(0);
    RowVector<T> mean = RowVector<T>::Zero(d), var = RowVector<T>::Zero(d);
    count = 0;
    if (train) {
      for (std::size_t b = 0; b < xs.size(); ++b)
        for (Eigen::Index i = 0; i < xs[b]->rows(); ++i)
          if (ms[b][i]) {
            mean += xs[b]->row(i);
            ++count;
          }
      if (count == 0) throw Error(ErrorCode::EmptyDataset, "batch normalization over a batch with no real frames");
      mean /= static_cast<T>(count);
      for (std::size_t b = 0; b < xs.size(); ++b)
        for (Eigen::Index i = 0; i < xs[b]->rows(); ++i)
          if (ms[b][i]) var += (xs[b]->row(i) - mean).array().square().matrix();
      var /= static_cast<T>(count);
      auto rm = ps.value(mean_i).row(0);
      auto rv = ps.value(var_i).row(0);
      const T unbiased = count > 1 ? static_cast<T>(count) / static_cast<T>(count - 1) : T(1);
      rm = (T(1) - momentum) * rm + momentum * mean;
      rv = (T(1) - momentum) * rv + momentum * unbiased * var;
    } else {
      mean = ps.value(mean_i).row(0);
      var = ps.value(var_i).row(0);
    }
    inv_std = (var.array() + eps).rsqrt().matrix();
    std::vector<Matrix<T>> out;
    xhat.clear();
    for (std::size_t b = 0; b < xs.size(); ++b) {
      Matrix<T> h = (xs[b]->rowwise() - mean).array().rowwise() * inv_std.array();
      for (Eigen::Index i = 0; i < h.rows(); ++i)
        if (!ms[b][i]) h.row(i).setZero();
      Matrix<T> y = (h.array().rowwise() * gamma.array()).rowwise() + beta.array();
      for (Eigen::Index i = 0; i < y.rows(); ++i)
        if (!ms[b][i]) y.row(i).setZero();
      xhat.push_back(std::move(h));
      out.push_back(std::move(y));
    }
    return out;
  }

  /// Returns dL/dx per sample; adds dL/dgamma and dL/dbeta into grads.
  std::vector<Matrix<T>> backward(const std::vector<Matrix<T>>& dys, Gradients<T>& grads, const NormIdx& idx) const {
    const Eigen::Index d = gamma.cols();
    RowVector<T> dgamma = RowVector<T>::Zero(d), dbeta = RowVector<T>::Zero(d);
    RowVector<T> sum_dxhat = RowVector<T>::Zero(d), sum_dxhat_xhat = RowVector<T>::Zero(d);
    std::vector<Matrix<T>> dxhat(dys.size());
    for (std::size_t b = 0; b < dys.size(); ++b) {
      Matrix<T> g = dys[b];
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        if (!masks[b][i]) g.row(i).setZero();
      dgamma += g.cwiseProduct(xhat[b]).colwise().sum();
      dbeta += g.colwise().sum();
      dxhat[b] = g.array().rowwise() * gamma.array();
      sum_dxhat += dxhat[b].colwise().sum();
      sum_dxhat_xhat += dxhat[b].cwiseProduct(xhat[b]).colwise().sum();
    }
    grads[idx.gamma].row(0) += dgamma;
    grads[idx.beta].row(0) += dbeta;
    std::vector<Matrix<T>> dx(dys.size());
    const T n = static_cast<T>(count);
    for (std::size_t b = 0; b < dys.size(); ++b) {
      if (train) {
        Matrix<T> centred = (dxhat[b].rowwise() - sum_dxhat / n) -
                            Matrix<T>(xhat[b].array().rowwise() * (sum_dxhat_xhat / n).array());
        dx[b] = centred.array().rowwise() * inv_std.array();
      } else {
        dx[b] = dxhat[b].array().rowwise() * inv_std.array();
      }
      for (Eigen::Index i = 0; i < dx[b].rows(); ++i)
        if (!masks[b][i]) dx[b].row(i).setZero();
    }
    return dx;
  }
};

}  // namespace mddnet
