// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `mddnet_acceptance 1 4 9`.

#include "helpers.hpp"
#include "naive.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

using namespace mddnet;
using testing_util::random_mask;
using testing_util::random_matrix;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// 1 ------------------------------------------------------------------------
Outcome shapes() {
  Outcome o;
  const auto t0 = Clock::now();
  ModelConfig c;
  MddNet<float> net(c);
  net.initialize(1);
  std::mt19937_64 rng(1);
  ModelInput<float> in;
  in.acoustic = random_matrix(256, 25, rng).cast<float>();
  in.visual = random_matrix(256, 136, rng).cast<float>();
  in.mask = full_mask(256);
  auto fp = net.forward({&in}, false);
  const auto& s = fp.samples[0];
  auto is = [&](Var v, Eigen::Index r, Eigen::Index cols) {
    return fp.value(0, v).rows() == r && fp.value(0, v).cols() == cols;
  };
  o.require(is(s.afem_out, 256, 71), "X_A^o 256x71");
  o.require(is(s.vfem_out, 256, 139), "X_V^o 256x139");
  o.require(s.fused && is(s.fused->mc_fav, 512, 420), "MC_fAV 512x420");
  o.require(is(s.z, 1024, 420), "Z 1024x420");
  o.require(fp.probabilities(0).rows() == 1 && fp.probabilities(0).cols() == 2, "p in R^2");
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "runtime < 10 s");
  o.detail << "X_A^o 256x71, X_V^o 256x139, MC_fAV 512x420, Z 1024x420, p 1x2 in " << secs << " s";
  return o;
}

// 2 ------------------------------------------------------------------------
void randomize(ParameterSet<double>& ps, std::mt19937_64& rng) {
  for (auto& p : ps) p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.5);
}

std::vector<double> row0(const Matrix<double>& m) { return std::vector<double>(m.data(), m.data() + m.cols()); }

Outcome oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const std::vector<Mask> masks{{1, 1, 1, 1, 1}, {1, 1, 1, 0, 0}, {1, 0, 1, 1, 0}};
  ModelConfig c;
  c.d_a_in = 6;
  c.d_a = 4;
  c.d_v = 6;
  c.rel_window = 3;
  c.vfem_heads = 2;
  c.vfem_mlp_ratio = 2;
  double content = 0, positional = 0, hmhsa = 0, cross = 0;
  for (int trial = 0; trial < 5; ++trial)
    for (const auto& mask : masks) {
      {
        ParameterSet<double> ps;
        const auto a = register_afem(ps, c);
        randomize(ps, rng);
        const Matrix<double> x = random_matrix(5, c.d_a_in, rng);
        Tape<double> t;
        ParamBinder<double> pb(t, ps);
        const auto proj = afem_project(pb, a, t.constant(x));
        const auto xs = naive::from_eigen(x), wq = naive::from_eigen(ps.value(a.w_q)),
                   wk = naive::from_eigen(ps.value(a.w_k)), wv = naive::from_eigen(ps.value(a.w_v));
        content = std::max(content, naive::max_abs_diff(naive::content_attention(xs, wq, wk, wv, mask),
                                                        t.value(content_attention(t, proj, mask))));
        positional = std::max(
            positional,
            naive::max_abs_diff(naive::positional_attention(xs, wq, wv, naive::from_eigen(ps.value(a.rel_pos)), mask),
                                t.value(positional_attention(pb, a, proj, mask))));
      }
      {
        ParameterSet<double> ps;
        const auto b = register_hmhsa_block(ps, c, "blk");
        randomize(ps, rng);
        const Matrix<double> e = random_matrix(5, c.d_v, rng);
        Tape<double> t;
        ParamBinder<double> pb(t, ps);
        naive::HmhsaWeights w{naive::from_eigen(ps.value(b.w_q)),      naive::from_eigen(ps.value(b.w_k)),
                              naive::from_eigen(ps.value(b.w_v)),      naive::from_eigen(ps.value(b.w_p)),
                              row0(ps.value(b.ln.gamma)),              row0(ps.value(b.ln.beta)),
                              naive::from_eigen(ps.value(b.mlp_in.w)), naive::from_eigen(ps.value(b.mlp_out.w)),
                              row0(ps.value(b.mlp_in.b)),              row0(ps.value(b.mlp_out.b))};
        hmhsa = std::max(hmhsa, naive::max_abs_diff(naive::hmhsa_block(naive::from_eigen(e), w, 2, mask, c.norm_eps),
                                                    t.value(hmhsa_block(pb, b, t.constant(e), mask, c))));
      }
      {
        ParameterSet<double> ps;
        const auto m = register_mutual_layer(ps, 5, "mc");
        randomize(ps, rng);
        const Matrix<double> xq = random_matrix(4, 5, rng), xkv = random_matrix(5, 5, rng);
        Tape<double> t;
        ParamBinder<double> pb(t, ps);
        cross = std::max(cross, naive::max_abs_diff(
                                    naive::cross_attention(naive::from_eigen(xq), naive::from_eigen(xkv),
                                                           naive::from_eigen(ps.value(m.w_q)),
                                                           naive::from_eigen(ps.value(m.w_k)),
                                                           naive::from_eigen(ps.value(m.w_v)), mask),
                                    t.value(cross_attention(pb, m, t.constant(xq), t.constant(xkv), mask))));
      }
    }
  o.require(content < 1e-6, "content attention");
  o.require(positional < 1e-6, "positional attention");
  o.require(hmhsa < 1e-6, "H-MHSA block");
  o.require(cross < 1e-6, "cross-attention");
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "runtime < 30 s");
  o.detail << "max abs diff content " << content << ", positional " << positional << ", H-MHSA " << hmhsa
           << ", cross " << cross << " in " << secs << " s";
  return o;
}

// 3 ------------------------------------------------------------------------
Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  auto cfg = testing_util::tiny_config();
  cfg.model.seq_len = 12;
  const auto data = testing_util::tiny_samples(2, 12);
  double worst = 0;
  std::string worst_name;
  struct Case {
    ModelMode mode;
    FusionMode fusion;
  };
  for (auto [mode, fusion] : {Case{ModelMode::Mdd, FusionMode::MutualTransformer}, Case{ModelMode::Mdd, FusionMode::Add},
                              Case{ModelMode::Mdd, FusionMode::Multiply}, Case{ModelMode::Mdd, FusionMode::Concat},
                              Case{ModelMode::AfemOnly, FusionMode::MutualTransformer},
                              Case{ModelMode::VfemOnly, FusionMode::MutualTransformer}}) {
    auto c = cfg;
    c.model.mode = mode;
    c.model.fusion = fusion;
    const auto rep = grad_check(c, data, 1e-5, 20);
    if (rep.max_rel_err > worst) {
      worst = rep.max_rel_err;
      worst_name = to_string(mode) + "/" + to_string(fusion) + ":" + rep.worst;
    }
  }
  const auto broken = grad_check(cfg, data, 1e-5, 20, [](Gradients<double>& g) {
    for (auto& m : g) m *= 1.05;
  });
  o.require(worst < 1e-4, "max relative error < 1e-4");
  o.require(broken.max_rel_err > 1e-2, "broken fixture detected");
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, "runtime < 5 min");
  o.detail << "max rel err " << worst << " (" << worst_name << "), broken fixture " << broken.max_rel_err << " in "
           << secs << " s";
  return o;
}

// 4 ------------------------------------------------------------------------
Outcome loss_identities() {
  Outcome o;
  double focal_gap = 0;
  for (double p : {0.01, 0.2, 0.5, 0.8, 0.99})
    for (double y : {0.0, 1.0}) focal_gap = std::max(focal_gap, std::abs(focal(p, y, 1.0, 0.0, 0.1) - bce_smoothed(p, y, 0.1)));
  const double bce = bce_smoothed(0.8, 1.0, 0.1);
  ParameterSet<double> ps;
  const auto w = ps.add("w", 1, 2, ParamKind::Weight);
  ps.value(w) << 3, 4;
  const double l2 = l2_penalty(ps, 1.0);
  LossConfig lc;
  const auto parts = total_loss({0.2, 0.7, 0.9}, {0, 1, 0}, ps, lc);
  const double sum_gap = std::abs(parts.total() - (parts.bce + parts.focal + parts.l2));
  o.require(focal_gap < 1e-12, "focal(gamma=0) == BCE");
  o.require(std::abs(bce - 0.2924) <= 1e-4, "BCE 0.2924");
  o.require(l2 == 25.0, "L2 == 25");
  o.require(sum_gap == 0.0, "total == sum of parts");
  o.detail << "focal-BCE gap " << focal_gap << ", BCE " << bce << ", L2 " << l2 << ", total-parts gap " << sum_gap;
  return o;
}

// 5 ------------------------------------------------------------------------
Outcome softmax_invariants() {
  Outcome o;
  std::size_t calls = 0;
  double worst = 0;
  ag::softmax_observer<double> = [&](const Matrix<double>& y, const Mask& m) {
    ++calls;
    if (!m.empty() && count_real(m) == 0) return;
    for (Eigen::Index i = 0; i < y.rows(); ++i) worst = std::max(worst, std::abs(y.row(i).sum() - 1.0));
  };
  std::mt19937_64 rng(55);
  for (auto mode : {ModelMode::Mdd, ModelMode::AfemOnly, ModelMode::VfemOnly})
    for (int trial = 0; trial < 5; ++trial) {
      auto c = testing_util::tiny_config().model;
      c.mode = mode;
      c.vfem_heads = 3;
      MddNet<double> net(c);
      net.initialize(static_cast<std::uint64_t>(trial));
      for (auto& p : net.params())
        if (p.kind == ParamKind::Weight) p.value *= 3.0;
      std::vector<ModelInput<double>> inputs(3);
      for (auto& in : inputs) {
        in.acoustic = random_matrix(16, c.d_a_in, rng, 2.0);
        in.visual = random_matrix(16, c.d_v_in, rng, 2.0);
        in.mask = random_mask(16, rng, 0.6);
      }
      net.forward(pointers(inputs), trial % 2 == 0);
    }
  ag::softmax_observer<double> = nullptr;
  o.require(calls > 0, "softmax calls observed");
  o.require(worst <= 1e-6, "row sums within 1e-6");
  o.detail << calls << " softmax evaluations, max |row sum - 1| " << worst;
  return o;
}

// 6 and 7 ------------------------------------------------------------------
struct SyntheticSplits {
  std::vector<VlogSample> train, val, test;
};

SyntheticSplits synthetic_splits() {
  SynthConfig sc;  // n=400, t=256, signal 3, noise 1, seed 7
  const auto all = synth_samples(sc);
  DatasetManifest m;
  for (const auto& s : all) {
    ManifestEntry e;
    e.id = s.id;
    e.label = s.label;
    e.length = static_cast<int>(s.length());
    m.samples.push_back(e);
  }
  m = make_splits(m, SplitRatios{}, 0);
  SyntheticSplits d;
  for (const auto& s : all) {
    const auto r = m.split->at(s.id);
    (r == SplitRole::Train ? d.train : r == SplitRole::Val ? d.val : d.test).push_back(s);
  }
  return d;
}

TrainConfig reduced_config() {
  TrainConfig c;
  c.model.d_a = 32;
  c.model.d_v = 48;
  c.epochs = 50;
  c.patience = 15;
  return c;
}

Outcome end_to_end() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto d = synthetic_splits();
  double f1[3] = {0, 0, 0};
  const ModelMode modes[3] = {ModelMode::Mdd, ModelMode::AfemOnly, ModelMode::VfemOnly};
  for (int i = 0; i < 3; ++i) {
    auto c = reduced_config();
    c.model.mode = modes[i];
    const auto r = train_and_test(c, d.train, d.val, d.test).report;
    f1[i] = r.test->f1;
    log::info(to_string(modes[i]), " test F1 ", f1[i], " after ", r.epochs_run(), " epochs");
  }
  const double secs = seconds_since(t0);
  o.require(f1[0] >= 0.90, "mdd/mt F1 >= 0.90");
  o.require(f1[0] >= f1[1] + 0.05, "beats afem_only by 0.05");
  o.require(f1[0] >= f1[2] + 0.05, "beats vfem_only by 0.05");
  o.require(secs < 1200.0, "runtime < 20 min");
  o.detail << "test F1 mdd/mt " << f1[0] << ", afem_only " << f1[1] << ", vfem_only " << f1[2] << " in " << secs
           << " s";
  return o;
}

Outcome ablation() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto d = synthetic_splits();
  const auto table = ablate(reduced_config(), d.train, d.val, d.test);
  const double secs = seconds_since(t0);
  o.require(table.rows.size() == 4, "4 rows");
  bool complete = true;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (!r.test) {
      complete = false;
      continue;
    }
    for (double v : {r.test->accuracy, r.test->precision, r.test->recall, r.test->f1})
      if (!std::isfinite(v)) complete = false;
    o.require(table.common_hash(i) == table.common_hash(0), "identical batch hash for " + r.fusion);
  }
  o.require(complete, "no NaN metrics");
  o.require(secs < 3600.0, "runtime < 1 h");
  o.detail << "rows";
  for (const auto& r : table.rows) o.detail << ' ' << r.fusion << "(F1 " << (r.test ? r.test->f1 : NAN) << ')';
  o.detail << ", hash " << hex(table.common_hash(0)) << " in " << secs << " s";
  return o;
}

// 8 ------------------------------------------------------------------------
Outcome protocol() {
  Outcome o;
  auto cfg = testing_util::tiny_config();
  cfg.epochs = 60;
  cfg.patience = 15;
  const auto data = testing_util::tiny_samples(8);
  const std::vector<VlogSample> tr(data.begin(), data.begin() + 6), va(data.begin() + 6, data.end());
  TrainHooks hooks;
  hooks.val_override = [](int epoch, double) { return epoch <= 5 ? 1.0 - 0.1 * epoch : 2.0; };
  const auto r = train(cfg, tr, va, hooks).report;
  o.require(r.epochs_run() == 20 && r.best_epoch == 5, "stop at epoch 20 after best epoch 5");

  DatasetManifest m;
  for (int i = 0; i < 961; ++i) {
    ManifestEntry e;
    e.id = "v" + std::to_string(i);
    e.label = i < 555 ? Label::Depression : Label::Normal;
    e.length = 1;
    m.samples.push_back(e);
  }
  const auto split = make_splits(m, SplitRatios{}, 0);
  const auto ntr = split.ids_with_role(SplitRole::Train).size(), nva = split.ids_with_role(SplitRole::Val).size(),
             nte = split.ids_with_role(SplitRole::Test).size();
  o.require(ntr == 672 && nva == 96 && nte == 193, "672/96/193 split");
  const auto folds = make_folds(m, 10, 0);
  std::size_t total = 0;
  std::set<std::size_t> sizes;
  for (int f = 0; f < 10; ++f) {
    const auto n = folds.ids_in_fold(f).size();
    sizes.insert(n);
    total += n;
  }
  o.require(total == 961 && sizes == std::set<std::size_t>{96, 97}, "fold sizes {96,97} summing to 961");
  o.detail << "early stop at epoch " << r.epochs_run() << " (best " << r.best_epoch << "), split " << ntr << '/'
           << nva << '/' << nte << ", fold sizes";
  for (auto s : sizes) o.detail << ' ' << s;
  o.detail << " total " << total;
  return o;
}

// 9 ------------------------------------------------------------------------
Outcome metrics() {
  Outcome o;
  Confusion c;
  c.tp = 5;
  c.fp = 2;
  c.fn = 3;
  c.tn = 10;
  const auto m = compute_metrics(c);
  o.require(std::abs(m.precision - 0.7143) <= 1e-4, "precision");
  o.require(std::abs(m.recall - 0.6250) <= 1e-4, "recall");
  o.require(std::abs(m.f1 - 0.6667) <= 1e-4, "F1");
  o.require(std::abs(m.accuracy - 0.75) <= 1e-4, "accuracy");
  o.detail << "Pr " << m.precision << ", Rc " << m.recall << ", F1 " << m.f1 << ", Acc " << m.accuracy;
  return o;
}

// 10 -----------------------------------------------------------------------
Outcome tsne_check() {
  Outcome o;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> x(100, 10);
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    labels.push_back(i % 2);
    for (int j = 0; j < 10; ++j) x(i, j) = n(rng) + (j == 0 && i % 2 ? 20.0 : 0.0);
  }
  TsneConfig cfg;
  const auto r = tsne(x, cfg);
  const double agree = nearest_neighbor_agreement(r.y, labels);
  const double worst = *std::max_element(r.entropy_error.begin(), r.entropy_error.end());
  o.require(agree > 0.95, "1-NN agreement > 95%");
  o.require(worst < 1e-4, "entropy error < 1e-4 per point");
  o.detail << "1-NN agreement " << agree << ", max entropy error " << worst;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  log::set_level(log::Level::Info);
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "shape suite", shapes},
      {2, "oracle equivalence", oracles},
      {3, "gradient suite", gradients},
      {4, "loss identities", loss_identities},
      {5, "normalization invariants", softmax_invariants},
      {6, "end-to-end synthetic experiment", end_to_end},
      {7, "ablation harness", ablation},
      {8, "protocol fidelity", protocol},
      {9, "metrics", metrics},
      {10, "t-SNE", tsne_check},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail.str()
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
