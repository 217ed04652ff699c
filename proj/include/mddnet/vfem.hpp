#pragma once

// Visual feature extraction: pointwise patch embedding followed by four stages
// of self-attention blocks, each stage ending in temporal average pooling.

#include "mddnet/layers.hpp"

#include <cmath>

namespace mddnet {

struct PatchEmbedIdx {
  LinearIdx in;
  NormIdx gn;
  LinearIdx out;
};

struct HmhsaBlockIdx {
  std::size_t w_q = 0, w_k = 0, w_v = 0, w_p = 0;
  bool pre_norm = true;
  NormIdx ln;
  LinearIdx mlp_in, mlp_out;
};

struct VfemIdx {
  PatchEmbedIdx embed;
  std::vector<std::vector<HmhsaBlockIdx>> stages;
};

template <typename T>
HmhsaBlockIdx register_hmhsa_block(ParameterSet<T>& ps, const ModelConfig& c, const std::string& name) {
  HmhsaBlockIdx b;
  const Eigen::Index d = c.d_v;
  b.w_q = ps.add(name + ".w_q", d, d, ParamKind::Weight);
  b.w_k = ps.add(name + ".w_k", d, d, ParamKind::Weight);
  b.w_v = ps.add(name + ".w_v", d, d, ParamKind::Weight);
  b.w_p = ps.add(name + ".w_p", d, d, ParamKind::Weight);
  b.pre_norm = c.vfem_pre_mlp_norm;
  if (b.pre_norm) b.ln = register_norm(ps, name + ".ln", d);
  b.mlp_in = register_linear(ps, name + ".mlp_in", d, d * c.vfem_mlp_ratio, true);
  b.mlp_out = register_linear(ps, name + ".mlp_out", d * c.vfem_mlp_ratio, d, true);
  return b;
}

template <typename T>
VfemIdx register_vfem(ParameterSet<T>& ps, const ModelConfig& c, const std::string& prefix = "vfem") {
  VfemIdx v;
  v.embed.in = register_linear(ps, prefix + ".embed.in", c.d_v_in, c.d_v, true);
  v.embed.gn = register_norm(ps, prefix + ".embed.gn", c.d_v);
  v.embed.out = register_linear(ps, prefix + ".embed.out", c.d_v, c.d_v, true);
  for (std::size_t s = 0; s < c.vfem_depths.size(); ++s) {
    std::vector<HmhsaBlockIdx> blocks;
    for (int l = 0; l < c.vfem_depths[s]; ++l)
      blocks.push_back(register_hmhsa_block(ps, c, prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(l)));
    v.stages.push_back(std::move(blocks));
  }
  return v;
}

/// W2(SiLU(GroupNorm(W1 x))) applied to every time step.
template <typename T>
Var patch_embed(ParamBinder<T>& pb, const PatchEmbedIdx& e, Var x, const ModelConfig& c) {
  auto& t = pb.tape();
  Var h = linear(pb, x, e.in);
  h = group_norm(pb, h, e.gn, c.vfem_groups, static_cast<T>(c.norm_eps));
  h = ag::silu(t, h);
  return linear(pb, h, e.out);
}

/// Multi-head scaled dot-product self-attention over admissible keys, heads concatenated.
template <typename T>
Var multi_head_self_attention(ParamBinder<T>& pb, const HmhsaBlockIdx& b, Var x, const Mask& mask, int heads) {
  auto& t = pb.tape();
  Var q = ag::matmul(t, x, pb(b.w_q));
  Var k = ag::matmul(t, x, pb(b.w_k));
  Var v = ag::matmul(t, x, pb(b.w_v));
  const Eigen::Index d = t.value(q).cols();
  const Eigen::Index dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  if (heads == 1) return attend(t, q, k, v, mask, scale);
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    outs.push_back(attend(t, ag::slice_cols(t, q, h * dh, dh), ag::slice_cols(t, k, h * dh, dh),
                          ag::slice_cols(t, v, h * dh, dh), mask, scale));
  }
  return ag::concat_cols(t, outs);
}

/// M' = MHSA(E)·β_p + E; out = mlp(LN(M')) + M'.
template <typename T>
Var hmhsa_block(ParamBinder<T>& pb, const HmhsaBlockIdx& b, Var e, const Mask& mask, const ModelConfig& c) {
  auto& t = pb.tape();
  Var m = multi_head_self_attention(pb, b, e, mask, c.vfem_heads);
  Var mp = ag::add(t, ag::matmul(t, m, pb(b.w_p)), e);
  Var h = b.pre_norm ? layer_norm(pb, mp, b.ln, static_cast<T>(c.norm_eps)) : mp;
  h = activate(t, linear(pb, h, b.mlp_in), c.activation);
  h = linear(pb, h, b.mlp_out);
  return ag::add(t, h, mp);
}

/// A pooled window is real if any of its members is.
inline Mask downsample_mask(const Mask& m, int stride) {
  if (stride == 1) return m;
  Mask out((m.size() + stride - 1) / stride, 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out[i / stride] = 1;
  return out;
}

template <typename T>
Var downsample(Tape<T>& t, Var e, int stride) {
  return ag::avg_pool_stride(t, e, stride);
}

struct VfemOutput {
  Var out;
  Mask mask;
};

template <typename T>
VfemOutput vfem_forward(ParamBinder<T>& pb, const VfemIdx& v, Var x, const Mask& mask, const ModelConfig& c) {
  auto& t = pb.tape();
  Var e = patch_embed(pb, v.embed, x, c);
  Mask m = mask;
  for (std::size_t s = 0; s < v.stages.size(); ++s) {
    for (const auto& block : v.stages[s]) e = hmhsa_block(pb, block, e, m, c);
    e = downsample(t, e, c.vfem_strides[s]);
    m = downsample_mask(m, c.vfem_strides[s]);
  }
  return {e, m};
}

}  // namespace mddnet
