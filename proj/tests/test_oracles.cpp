#include "helpers.hpp"
#include "naive.hpp"

#include <gtest/gtest.h>

using namespace mddnet;
using testing_util::random_matrix;

namespace {

constexpr double kOracleTol = 1e-6;

void randomize(ParameterSet<double>& ps, std::mt19937_64& rng) {
  for (auto& p : ps) p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.5);
}

std::vector<double> row0(const Matrix<double>& m) {
  return std::vector<double>(m.data(), m.data() + m.cols());
}

ModelConfig small_model() {
  ModelConfig c;
  c.d_a_in = 6;
  c.d_a = 4;
  c.d_v = 6;
  c.rel_window = 3;
  c.vfem_heads = 2;
  c.vfem_mlp_ratio = 2;
  return c;
}

const std::vector<Mask> kMasks{{1, 1, 1, 1, 1}, {1, 1, 1, 0, 0}, {1, 0, 1, 1, 0}};

}  // namespace

TEST(Oracle, ContentAttention) {
  std::mt19937_64 rng(21);
  const auto c = small_model();
  for (const auto& mask : kMasks) {
    ParameterSet<double> ps;
    const auto a = register_afem(ps, c);
    randomize(ps, rng);
    const Matrix<double> x = random_matrix(5, c.d_a_in, rng);
    Tape<double> t;
    ParamBinder<double> pb(t, ps);
    const auto proj = afem_project(pb, a, t.constant(x));
    const auto& got = t.value(content_attention(t, proj, mask));
    const auto expect = naive::content_attention(naive::from_eigen(x), naive::from_eigen(ps.value(a.w_q)),
                                                 naive::from_eigen(ps.value(a.w_k)),
                                                 naive::from_eigen(ps.value(a.w_v)), mask);
    EXPECT_LT(naive::max_abs_diff(expect, got), kOracleTol);
  }
}

TEST(Oracle, PositionalAttention) {
  std::mt19937_64 rng(22);
  for (int window : {3, 5}) {
    auto c = small_model();
    c.rel_window = window;
    for (const auto& mask : kMasks) {
      ParameterSet<double> ps;
      const auto a = register_afem(ps, c);
      randomize(ps, rng);
      const Matrix<double> x = random_matrix(5, c.d_a_in, rng);
      Tape<double> t;
      ParamBinder<double> pb(t, ps);
      const auto proj = afem_project(pb, a, t.constant(x));
      const auto& got = t.value(positional_attention(pb, a, proj, mask));
      const auto expect =
          naive::positional_attention(naive::from_eigen(x), naive::from_eigen(ps.value(a.w_q)),
                                      naive::from_eigen(ps.value(a.w_v)), naive::from_eigen(ps.value(a.rel_pos)), mask);
      EXPECT_LT(naive::max_abs_diff(expect, got), kOracleTol) << "window " << window;
    }
  }
}

TEST(Oracle, HmhsaBlock) {
  std::mt19937_64 rng(23);
  for (int heads : {1, 2, 3}) {
    auto c = small_model();
    c.vfem_heads = heads;
    for (const auto& mask : kMasks) {
      ParameterSet<double> ps;
      const auto b = register_hmhsa_block(ps, c, "blk");
      randomize(ps, rng);
      const Matrix<double> e = random_matrix(5, c.d_v, rng);
      Tape<double> t;
      ParamBinder<double> pb(t, ps);
      const auto& got = t.value(hmhsa_block(pb, b, t.constant(e), mask, c));
      naive::HmhsaWeights w;
      w.wq = naive::from_eigen(ps.value(b.w_q));
      w.wk = naive::from_eigen(ps.value(b.w_k));
      w.wv = naive::from_eigen(ps.value(b.w_v));
      w.wp = naive::from_eigen(ps.value(b.w_p));
      w.ln_g = row0(ps.value(b.ln.gamma));
      w.ln_b = row0(ps.value(b.ln.beta));
      w.w1 = naive::from_eigen(ps.value(b.mlp_in.w));
      w.b1 = row0(ps.value(b.mlp_in.b));
      w.w2 = naive::from_eigen(ps.value(b.mlp_out.w));
      w.b2 = row0(ps.value(b.mlp_out.b));
      const auto expect = naive::hmhsa_block(naive::from_eigen(e), w, heads, mask, c.norm_eps);
      EXPECT_LT(naive::max_abs_diff(expect, got), kOracleTol) << "heads " << heads;
    }
  }
}

TEST(Oracle, CrossAttention) {
  std::mt19937_64 rng(24);
  const int dm = 5;
  for (const auto& mask : kMasks) {
    ParameterSet<double> ps;
    const auto m = register_mutual_layer(ps, dm, "mc");
    randomize(ps, rng);
    const Matrix<double> xq = random_matrix(4, dm, rng);
    const Matrix<double> xkv = random_matrix(5, dm, rng);
    Tape<double> t;
    ParamBinder<double> pb(t, ps);
    const auto& got = t.value(cross_attention(pb, m, t.constant(xq), t.constant(xkv), mask));
    const auto expect = naive::cross_attention(naive::from_eigen(xq), naive::from_eigen(xkv),
                                               naive::from_eigen(ps.value(m.w_q)), naive::from_eigen(ps.value(m.w_k)),
                                               naive::from_eigen(ps.value(m.w_v)), mask);
    EXPECT_LT(naive::max_abs_diff(expect, got), kOracleTol);
  }
}
