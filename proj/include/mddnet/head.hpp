#pragma once

// Attention-pooled detection layer and the composite training loss
// (smoothed BCE + focal + L2).

#include "mddnet/layers.hpp"

#include <algorithm>
#include <cmath>

namespace mddnet {

inline constexpr int kDepressionIndex = 1;
inline constexpr double kProbClamp = 1e-7;

struct HeadIdx {
  LinearIdx score_hidden;  // D_Z → h
  std::size_t score_out = 0;  // h × 1
  LinearIdx classifier;    // D_Z → 2
};

template <typename T>
HeadIdx register_head(ParameterSet<T>& ps, const ModelConfig& c, const std::string& prefix = "head") {
  HeadIdx h;
  h.score_hidden = register_linear(ps, prefix + ".score_hidden", c.d_z(), c.head_hidden, true);
  h.score_out = ps.add(prefix + ".score_out.w", c.head_hidden, 1, ParamKind::Weight);
  h.classifier = register_linear(ps, prefix + ".classifier", c.d_z(), 2, true);
  return h;
}

struct DetectVars {
  Var alpha;   // 1 × tokens
  Var pooled;  // 1 × D_Z
  Var logits;  // 1 × 2
  Var p;       // 1 × 2, (Normal, Depression)
};

/// α = softmax over tokens of F(z); pooled = αᵀz; p = softmax(classifier(pooled)).
template <typename T>
DetectVars detect(ParamBinder<T>& pb, const HeadIdx& h, Var z, const Mask& token_mask) {
  auto& t = pb.tape();
  DetectVars d;
  Var s = ag::tanh(t, linear(pb, z, h.score_hidden));
  s = ag::matmul(t, s, pb(h.score_out));
  d.alpha = ag::masked_softmax_rows(t, ag::transpose(t, s), token_mask);
  d.pooled = ag::matmul(t, d.alpha, z);
  d.logits = linear(pb, d.pooled, h.classifier);
  d.p = ag::masked_softmax_rows(t, d.logits, Mask{});
  return d;
}

/// Algorithm rule: Depression iff p1 > 0.5 strictly.
inline Label decide(double p_depression) { return p_depression > 0.5 ? Label::Depression : Label::Normal; }

// ---------------------------------------------------------------------------
// Loss

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

inline double smoothed_target(double y, double eps_smooth) { return y * (1.0 - eps_smooth) + 0.5 * eps_smooth; }

/// Per-sample smoothed binary cross-entropy on the clamped depression probability.
inline double bce_smoothed(double p1, double y, double eps_smooth) {
  const double p = clamp_prob(p1);
  const double ys = smoothed_target(y, eps_smooth);
  return -(ys * std::log(p) + (1.0 - ys) * std::log(1.0 - p));
}

inline double focal_modulator(double p1, double y, const LossConfig& c) {
  const double p = clamp_prob(p1);
  const double base = c.symmetric_focal ? (y > 0.5 ? 1.0 - p : p) : 1.0 - p;
  return c.phi * std::pow(base, c.gamma);
}

/// φ·(1−p1)^γ·BCE, or the class-symmetric (1−p_t)^γ variant when enabled.
inline double focal(double p1, double y, const LossConfig& c) {
  return focal_modulator(p1, y, c) * bce_smoothed(p1, y, c.eps_smooth);
}

inline double focal(double p1, double y, double phi, double gamma, double eps_smooth) {
  LossConfig c;
  c.phi = phi;
  c.gamma = gamma;
  c.eps_smooth = eps_smooth;
  return focal(p1, y, c);
}

template <typename T>
double l2_penalty(const ParameterSet<T>& ps, double lambda) {
  double s = 0;
  for (const auto& p : ps)
    if (is_regularized(p.kind)) s += static_cast<double>(p.value.squaredNorm());
  return lambda * s;
}

/// Adds ∂L2/∂θ = 2λθ into grads.
template <typename T>
void add_l2_gradient(const ParameterSet<T>& ps, double lambda, Gradients<T>& grads) {
  if (lambda == 0) return;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (is_regularized(ps[i].kind)) grads[i] += static_cast<T>(2 * lambda) * ps.value(i);
}

struct SampleLoss {
  double bce = 0;
  double focal = 0;
  double d_p1 = 0;  // ∂(bce + focal)/∂p1
};

inline SampleLoss sample_loss(double p1, double y, const LossConfig& c) {
  SampleLoss s;
  s.bce = bce_smoothed(p1, y, c.eps_smooth);
  const double mod = focal_modulator(p1, y, c);
  s.focal = mod * s.bce;
  if (p1 <= kProbClamp || p1 >= 1.0 - kProbClamp) return s;  // clamped: flat
  const double ys = smoothed_target(y, c.eps_smooth);
  const double dbce = -ys / p1 + (1.0 - ys) / (1.0 - p1);
  double dmod = 0;
  if (c.gamma != 0 && c.phi != 0) {
    const bool positive_side = !c.symmetric_focal || y > 0.5;
    const double base = positive_side ? 1.0 - p1 : p1;
    const double dbase = positive_side ? -1.0 : 1.0;
    dmod = c.phi * c.gamma * std::pow(base, c.gamma - 1.0) * dbase;
  }
  s.d_p1 = dbce + dmod * s.bce + mod * dbce;
  return s;
}

struct LossBreakdown {
  double bce = 0;
  double focal = 0;
  double l2 = 0;
  double total() const { return bce + focal + l2; }
};

/// Batch-mean BCE and focal terms plus the L2 term.
template <typename T>
LossBreakdown total_loss(const std::vector<double>& p1, const std::vector<double>& y, const ParameterSet<T>& ps,
                         const LossConfig& c) {
  LossBreakdown b;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    auto s = sample_loss(p1[i], y[i], c);
    b.bce += s.bce;
    b.focal += s.focal;
  }
  if (!p1.empty()) {
    b.bce /= static_cast<double>(p1.size());
    b.focal /= static_cast<double>(p1.size());
  }
  b.l2 = l2_penalty(ps, c.lambda);
  return b;
}

}  // namespace mddnet
