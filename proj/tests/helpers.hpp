#pragma once

#include "mddnet/mddnet.hpp"

#include <functional>
#include <random>

namespace testing_util {

using mddnet::Matrix;
using mddnet::Tape;
using mddnet::Var;

inline Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline mddnet::Mask random_mask(std::size_t n, std::mt19937_64& rng, double keep = 0.7) {
  std::bernoulli_distribution b(keep);
  mddnet::Mask m(n);
  for (auto& v : m) v = b(rng) ? 1 : 0;
  m[0] = 1;
  return m;
}

using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// Worst relative error between tape gradients and five-point central
/// differences of L = Σ W ⊙ f(inputs) with a random W.
inline double op_gradient_error(std::vector<Matrix<double>> inputs, const Builder& build, std::uint64_t seed = 1,
                                double eps = 1e-4) {
  std::mt19937_64 rng(seed);
  Matrix<double> w;
  auto loss = [&](const std::vector<Matrix<double>>& in) {
    Tape<double> t;
    std::vector<Var> vs;
    for (const auto& m : in) vs.push_back(t.leaf(m));
    Var out = build(t, vs);
    if (w.size() == 0) w = random_matrix(t.value(out).rows(), t.value(out).cols(), rng);
    return t.value(out).cwiseProduct(w).sum();
  };
  loss(inputs);
  Tape<double> t;
  std::vector<Var> vs;
  for (const auto& m : inputs) vs.push_back(t.leaf(m));
  Var out = build(t, vs);
  t.backward(out, w);
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix<double> g = t.grad_or_zero(vs[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k].data()[i];
      auto at = [&](double delta) {
        inputs[k].data()[i] = orig + delta;
        const double l = loss(inputs);
        inputs[k].data()[i] = orig;
        return l;
      };
      const double num = (-at(2 * eps) + 8 * at(eps) - 8 * at(-eps) + at(-2 * eps)) / (12 * eps);
      worst = std::max(worst, std::abs(num - g.data()[i]) / std::max({std::abs(num), std::abs(g.data()[i]), 1e-4}));
    }
  }
  return worst;
}

/// A model small enough for sub-second training epochs.
inline mddnet::TrainConfig tiny_config() {
  mddnet::TrainConfig c;
  c.model.d_a = 4;
  c.model.d_v = 6;
  c.model.seq_len = 16;
  c.model.vfem_depths = {1, 0, 1, 0};
  c.model.vfem_heads = 2;
  c.model.vfem_groups = 2;
  c.model.head_hidden = 4;
  c.model.joint_ff_ratio = 2;
  c.model.vfem_mlp_ratio = 2;
  c.epochs = 4;
  c.patience = 2;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.seed = 3;
  return c;
}

inline std::vector<mddnet::VlogSample> tiny_samples(int n, int t = 16, std::uint64_t seed = 11) {
  mddnet::SynthConfig s;
  s.n_samples = n;
  s.t = t;
  s.seed = seed;
  return mddnet::synth_samples(s);
}

}  // namespace testing_util
