#pragma once

// Mutual transformer fusion: audio-queried and video-queried cross-attention
// layers, a joint encoder layer over the sequence-concatenated modalities, and
// assembly of the pooled streams into one token matrix. Also the add /
// multiply / concat baselines used by the ablation.

#include "mddnet/layers.hpp"

#include <cmath>

namespace mddnet {

struct MutualLayerIdx {
  std::size_t w_q = 0, w_k = 0, w_v = 0;
  NormIdx ln_inner;
  std::size_t beta = 0;  // D_m × D_m
  std::size_t bias = 0;  // 1 × D_m, added outside the activation
  NormIdx ln_out;
};

struct JointLayerIdx {
  std::size_t w_q = 0, w_k = 0, w_v = 0;
  LinearIdx attn_out;
  NormIdx ln1;
  LinearIdx ff_in, ff_out;
  NormIdx ln2;
};

struct MtFusionIdx {
  LinearIdx proj_a, proj_v;
  std::vector<MutualLayerIdx> av, va;
  std::vector<JointLayerIdx> joint;
  LinearIdx z_av, z_va, z_fav;
};

struct BaselineFusionIdx {
  LinearIdx proj_a, proj_v;
  LinearIdx proj_cat;  // concat mode only
};

template <typename T>
MutualLayerIdx register_mutual_layer(ParameterSet<T>& ps, Eigen::Index dm, const std::string& name) {
  MutualLayerIdx m;
  m.w_q = ps.add(name + ".w_q", dm, dm, ParamKind::Weight);
  m.w_k = ps.add(name + ".w_k", dm, dm, ParamKind::Weight);
  m.w_v = ps.add(name + ".w_v", dm, dm, ParamKind::Weight);
  m.ln_inner = register_norm(ps, name + ".ln_inner", dm);
  m.beta = ps.add(name + ".beta", dm, dm, ParamKind::Weight);
  m.bias = ps.add(name + ".b", 1, dm, ParamKind::Bias);
  m.ln_out = register_norm(ps, name + ".ln_out", dm);
  return m;
}

template <typename T>
JointLayerIdx register_joint_layer(ParameterSet<T>& ps, Eigen::Index dm, int ff_ratio, const std::string& name) {
  JointLayerIdx j;
  j.w_q = ps.add(name + ".w_q", dm, dm, ParamKind::Weight);
  j.w_k = ps.add(name + ".w_k", dm, dm, ParamKind::Weight);
  j.w_v = ps.add(name + ".w_v", dm, dm, ParamKind::Weight);
  j.attn_out = register_linear(ps, name + ".attn_out", dm, dm, true);
  j.ln1 = register_norm(ps, name + ".ln1", dm);
  j.ff_in = register_linear(ps, name + ".ff_in", dm, dm * ff_ratio, true);
  j.ff_out = register_linear(ps, name + ".ff_out", dm * ff_ratio, dm, true);
  j.ln2 = register_norm(ps, name + ".ln2", dm);
  return j;
}

template <typename T>
MtFusionIdx register_mt_fusion(ParameterSet<T>& ps, const ModelConfig& c, const std::string& prefix = "fusion") {
  MtFusionIdx f;
  const Eigen::Index dm = c.d_m(), dz = c.d_z();
  f.proj_a = register_linear(ps, prefix + ".proj_a", c.d_a, dm, true);
  f.proj_v = register_linear(ps, prefix + ".proj_v", c.d_v, dm, true);
  for (int l = 0; l < c.mt_depth; ++l) {
    f.av.push_back(register_mutual_layer(ps, dm, prefix + ".mc_av" + std::to_string(l)));
    f.va.push_back(register_mutual_layer(ps, dm, prefix + ".mc_va" + std::to_string(l)));
  }
  for (int l = 0; l < c.joint_depth; ++l)
    f.joint.push_back(register_joint_layer(ps, dm, c.joint_ff_ratio, prefix + ".joint" + std::to_string(l)));
  f.z_av = register_linear(ps, prefix + ".z_av", dm, dz, true);
  f.z_va = register_linear(ps, prefix + ".z_va", dm, dz, true);
  f.z_fav = register_linear(ps, prefix + ".z_fav", dm, dz, true);
  return f;
}

template <typename T>
BaselineFusionIdx register_baseline_fusion(ParameterSet<T>& ps, const ModelConfig& c, FusionMode mode,
                                           const std::string& prefix = "fusion") {
  BaselineFusionIdx b;
  const Eigen::Index dz = c.d_z();
  b.proj_a = register_linear(ps, prefix + ".base_a", c.d_a, dz, true);
  b.proj_v = register_linear(ps, prefix + ".base_v", c.d_v, dz, true);
  if (mode == FusionMode::Concat) b.proj_cat = register_linear(ps, prefix + ".base_cat", 2 * dz, dz, true);
  return b;
}

/// softmax(Q Kᵀ / √d_K) V with queries from xq and keys/values from xkv.
template <typename T>
Var cross_attention(ParamBinder<T>& pb, const MutualLayerIdx& m, Var xq, Var xkv, const Mask& kv_mask) {
  auto& t = pb.tape();
  Var q = ag::matmul(t, xq, pb(m.w_q));
  Var k = ag::matmul(t, xkv, pb(m.w_k));
  Var v = ag::matmul(t, xkv, pb(m.w_v));
  const T scale = T(1) / std::sqrt(static_cast<T>(t.value(k).cols()));
  return attend(t, q, k, v, kv_mask, scale);
}

/// L(xq + σ(L(xq + f_attn(xq, xkv))·β) + b).
template <typename T>
Var mutual_layer(ParamBinder<T>& pb, const MutualLayerIdx& m, Var xq, Var xkv, const Mask& kv_mask,
                 const ModelConfig& c) {
  auto& t = pb.tape();
  const T eps = static_cast<T>(c.norm_eps);
  Var inner = layer_norm(pb, ag::add(t, xq, cross_attention(pb, m, xq, xkv, kv_mask)), m.ln_inner, eps);
  Var act = activate(t, ag::matmul(t, inner, pb(m.beta)), c.activation);
  Var sum = ag::add_row(t, ag::add(t, xq, act), pb(m.bias));
  return layer_norm(pb, sum, m.ln_out, eps);
}

/// Stacked mutual layers followed by the projection to D_Z.
template <typename T>
Var mutual_block(ParamBinder<T>& pb, const std::vector<MutualLayerIdx>& layers, const LinearIdx& to_z, Var xq,
                 Var xkv, const Mask& kv_mask, const ModelConfig& c) {
  Var h = xq;
  for (const auto& l : layers) h = mutual_layer(pb, l, h, xkv, kv_mask, c);
  return linear(pb, h, to_z);
}

/// Post-norm transformer encoder layer: self-attention + FFN, each residual.
template <typename T>
Var joint_layer(ParamBinder<T>& pb, const JointLayerIdx& j, Var x, const Mask& mask, const ModelConfig& c) {
  auto& t = pb.tape();
  const T eps = static_cast<T>(c.norm_eps);
  Var q = ag::matmul(t, x, pb(j.w_q));
  Var k = ag::matmul(t, x, pb(j.w_k));
  Var v = ag::matmul(t, x, pb(j.w_v));
  const T scale = T(1) / std::sqrt(static_cast<T>(t.value(k).cols()));
  Var attn = linear(pb, attend(t, q, k, v, mask, scale), j.attn_out);
  Var h = layer_norm(pb, ag::add(t, x, attn), j.ln1, eps);
  Var ff = linear(pb, activate(t, linear(pb, h, j.ff_in), c.activation), j.ff_out);
  return layer_norm(pb, ag::add(t, h, ff), j.ln2, eps);
}

/// Joint fusion over [xa_m; xv_m] (sequence concatenation of the D_m-projected streams).
template <typename T>
Var joint_fusion(ParamBinder<T>& pb, const MtFusionIdx& f, Var xa_m, Var xv_m, const Mask& joint_mask,
                 const ModelConfig& c) {
  Var h = ag::concat_rows(pb.tape(), {xa_m, xv_m});
  for (const auto& l : f.joint) h = joint_layer(pb, l, h, joint_mask, c);
  return linear(pb, h, f.z_fav);
}

struct FusedVars {
  Var mc_av, mc_va, mc_fav;
  Var z;
  Mask z_mask;
};

/// Stride-1 average pooling of each stream, then sequence concatenation.
template <typename T>
Var fuse(Tape<T>& t, Var mc_av, Var mc_va, Var mc_fav, int pool_window) {
  const auto width = t.value(mc_av).cols();
  require_shape(t.value(mc_va).cols() == width && t.value(mc_fav).cols() == width, "fused streams differ in width");
  return ag::concat_rows(t, {ag::avg_pool_same(t, mc_av, pool_window), ag::avg_pool_same(t, mc_va, pool_window),
                             ag::avg_pool_same(t, mc_fav, pool_window)});
}

template <typename T>
FusedVars mt_fusion_forward(ParamBinder<T>& pb, const MtFusionIdx& f, Var xa, const Mask& ma, Var xv, const Mask& mv,
                            const ModelConfig& c) {
  FusedVars out;
  Var a = linear(pb, xa, f.proj_a);
  Var v = linear(pb, xv, f.proj_v);
  out.mc_av = mutual_block(pb, f.av, f.z_av, a, v, mv, c);
  out.mc_va = mutual_block(pb, f.va, f.z_va, v, a, ma, c);
  const Mask joint_mask = concat_masks({&ma, &mv});
  out.mc_fav = joint_fusion(pb, f, a, v, joint_mask, c);
  out.z = fuse(pb.tape(), out.mc_av, out.mc_va, out.mc_fav, c.pool_window);
  out.z_mask = concat_masks({&ma, &mv, &ma, &mv});
  return out;
}

struct BaselineVars {
  Var z;
  Mask z_mask;
};

template <typename T>
BaselineVars baseline_fuse(ParamBinder<T>& pb, const BaselineFusionIdx& b, Var xa, const Mask& ma, Var xv,
                           const Mask& mv, FusionMode mode) {
  auto& t = pb.tape();
  require_shape(t.value(xa).rows() == t.value(xv).rows(), "baseline fusion needs equal stream lengths");
  Var pa = linear(pb, xa, b.proj_a);
  Var pv = linear(pb, xv, b.proj_v);
  BaselineVars out;
  out.z_mask.resize(ma.size());
  for (std::size_t i = 0; i < ma.size(); ++i) out.z_mask[i] = (ma[i] && mv[i]) ? 1 : 0;
  switch (mode) {
    case FusionMode::Add: out.z = ag::add(t, pa, pv); break;
    case FusionMode::Multiply: out.z = ag::hadamard(t, pa, pv); break;
    case FusionMode::Concat: out.z = linear(pb, ag::concat_cols(t, {pa, pv}), b.proj_cat); break;
    default: throw Error(ErrorCode::UnknownMode, "baseline fusion does not handle mode " + to_string(mode));
  }
  return out;
}

}  // namespace mddnet
