#pragma once

// Training loop, early stopping, evaluation, k-fold orchestration, the fusion
// ablation runner and the finite-difference gradient check.

#include "mddnet/checkpoint.hpp"
#include "mddnet/log.hpp"
#include "mddnet/metrics.hpp"
#include "mddnet/model.hpp"

#include <chrono>
#include <functional>
#include <future>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>

namespace mddnet {

// ---------------------------------------------------------------------------
// Batching

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

/// Hash of an ordered batch of sample ids; ids are separated so that
/// {"ab","c"} and {"a","bc"} differ.
inline std::uint64_t batch_hash(const std::vector<std::string>& ids, std::uint64_t h = kFnvOffset) {
  for (const auto& id : ids) h = fnv1a("\x1f", fnv1a(id, h));
  return fnv1a("\x1e", h);
}

inline std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Yields the per-epoch visiting order of a training set. The order depends
/// only on the seed and the training-set size, never on the model.
class DataOrder {
 public:
  DataOrder(std::size_t n, std::uint64_t seed) : rng_(seed ^ 0x5deece66dULL), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }
  const std::vector<std::size_t>& next_epoch() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    return order_;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
};

/// Aligns every sample to seq_len and converts to the model scalar.
template <typename T>
std::vector<ModelInput<T>> prepare_inputs(const std::vector<VlogSample>& samples, int seq_len) {
  std::vector<ModelInput<T>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(to_model_input<T>(align_to_length(s, seq_len)));
  return out;
}

template <typename T>
std::vector<const ModelInput<T>*> pointers(const std::vector<ModelInput<T>>& v) {
  std::vector<const ModelInput<T>*> p;
  p.reserve(v.size());
  for (const auto& x : v) p.push_back(&x);
  return p;
}

/// Loads all manifest samples with the given role.
inline std::vector<VlogSample> load_role(const DatasetManifest& m, SplitRole role, const ModelConfig& c) {
  std::vector<VlogSample> out;
  for (const auto& id : m.ids_with_role(role)) out.push_back(load_sample(m, id, c.d_a_in, c.d_v_in));
  return out;
}

inline std::vector<VlogSample> load_all(const DatasetManifest& m, const ModelConfig& c) {
  std::vector<VlogSample> out;
  for (const auto& e : m.samples) out.push_back(load_sample(m, e.id, c.d_a_in, c.d_v_in));
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

/// Adam with weight decay added to the gradient (coupled), over trainable arrays.
template <typename T>
class Adam {
 public:
  Adam(const ParameterSet<T>& ps, const TrainConfig& c)
      : lr_(c.lr), b1_(c.beta1), b2_(c.beta2), eps_(c.adam_eps), wd_(c.weight_decay), m_(ps.zeros_like()),
        v_(ps.zeros_like()) {}

  void step(ParameterSet<T>& ps, Gradients<T>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const T alpha = static_cast<T>(lr_ / c1);
    const T rc2 = static_cast<T>(1.0 / std::sqrt(c2));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!is_trainable(ps[i].kind)) continue;
      auto& w = ps.value(i);
      if (wd_ != 0) g[i] += static_cast<T>(wd_) * w;
      m_[i] = static_cast<T>(b1_) * m_[i] + static_cast<T>(1 - b1_) * g[i];
      v_[i] = static_cast<T>(b2_) * v_[i] + static_cast<T>(1 - b2_) * g[i].cwiseAbs2();
      w.array() -= alpha * m_[i].array() / ((v_[i].array().sqrt() * rc2) + static_cast<T>(eps_));
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_, wd_;
  Gradients<T> m_, v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Early stopping

class EarlyStopping {
 public:
  EarlyStopping(int patience, bool higher_is_better) : patience_(patience), higher_(higher_is_better) {}

  /// Records one epoch's validation value; returns true if it is a new best.
  bool update(int epoch, double value) {
    const bool better = best_epoch_ == 0 || (higher_ ? value > best_ : value < best_);
    if (better) {
      best_ = value;
      best_epoch_ = epoch;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return better;
  }

  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  int stale_epochs() const { return stale_; }

 private:
  int patience_;
  bool higher_;
  double best_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
};

// ---------------------------------------------------------------------------
// Reports

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_f1 = 0;
  std::uint64_t batch_hash = 0;
};

struct EvalResult {
  Metrics metrics;
  LossBreakdown loss;
  std::vector<std::string> ids;
  std::vector<double> p_depression;
  std::vector<Label> labels;
};

struct RunReport {
  std::string mode;
  std::string fusion;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0;
  bool stopped_early = false;
  std::optional<Metrics> val;
  std::optional<Metrics> test;
  std::optional<double> test_loss;
  std::vector<RunReport> folds;
  std::map<std::string, MeanStd> aggregate;

  int epochs_run() const { return static_cast<int>(history.size()); }

  /// Hash over the batch sequences of the first `epochs` epochs (all if negative).
  std::uint64_t sequence_hash(int epochs = -1) const {
    std::uint64_t h = kFnvOffset;
    const int n = epochs < 0 ? epochs_run() : std::min(epochs, epochs_run());
    for (int e = 0; e < n; ++e) h = fnv1a(hex(history[static_cast<std::size_t>(e)].batch_hash), h);
    return h;
  }
};

inline json to_json(const RunReport& r) {
  json j;
  j["mode"] = r.mode;
  j["fusion"] = r.fusion;
  json hist = json::array();
  for (const auto& e : r.history)
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_loss", e.val_loss},
                    {"val_f1", e.val_f1},
                    {"batch_hash", hex(e.batch_hash)}});
  j["history"] = hist;
  j["best_epoch"] = r.best_epoch;
  j["best_val_loss"] = r.best_val_loss;
  j["stopped_early"] = r.stopped_early;
  j["epochs_run"] = r.epochs_run();
  if (!r.history.empty()) j["sequence_hash"] = hex(r.sequence_hash());
  if (r.val) j["val_metrics"] = to_json(*r.val);
  if (r.test) j["test_metrics"] = to_json(*r.test);
  if (r.test_loss) j["test_loss"] = *r.test_loss;
  if (!r.folds.empty()) {
    json folds = json::array();
    for (const auto& f : r.folds) folds.push_back(to_json(f));
    j["folds"] = folds;
    json agg;
    for (const auto& [k, v] : r.aggregate) agg[k] = {{"mean", v.mean}, {"std", v.std}, {"min", v.min}, {"max", v.max}};
    j["aggregate"] = agg;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Eval-mode pass over `inputs`; loss is the total loss with batch means taken
/// over the whole set.
template <typename T>
EvalResult evaluate(MddNet<T>& model, const std::vector<ModelInput<T>>& inputs, const LossConfig& loss,
                    std::size_t batch_size = 8) {
  if (inputs.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to evaluate");
  EvalResult r;
  r.p_depression = model.predict(pointers(inputs), batch_size);
  std::vector<double> ys;
  std::vector<Label> pred;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    r.ids.push_back(inputs[i].id);
    r.labels.push_back(inputs[i].label);
    ys.push_back(inputs[i].label == Label::Depression ? 1.0 : 0.0);
    pred.push_back(decide(r.p_depression[i]));
  }
  r.loss = total_loss(r.p_depression, ys, model.params(), loss);
  r.metrics = compute_metrics(confusion_from(r.labels, pred));
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct TrainHooks {
  /// Replaces the validation value used for early stopping (scripted runs).
  std::function<double(int epoch, double measured)> val_override;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  MddNet<float> model;
  RunReport report;
};

inline void check_train_inputs(const TrainConfig& cfg, const std::vector<VlogSample>& train_set,
                               const std::vector<VlogSample>& val_set) {
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training split is empty");
  if (val_set.empty()) throw Error(ErrorCode::EmptyDataset, "validation split is empty");
}

/// Trains from a fresh seeded initialization, restoring the best validation
/// epoch's parameters before returning.
inline TrainResult train(const TrainConfig& cfg, const std::vector<VlogSample>& train_set,
                         const std::vector<VlogSample>& val_set, const TrainHooks& hooks = {}) {
  check_train_inputs(cfg, train_set, val_set);
  const auto train_in = prepare_inputs<float>(train_set, cfg.model.seq_len);
  const auto val_in = prepare_inputs<float>(val_set, cfg.model.seq_len);

  MddNet<float> model(cfg.model);
  model.initialize(cfg.seed);
  Adam<float> opt(model.params(), cfg);
  DataOrder order(train_in.size(), cfg.seed);
  EarlyStopping stopper(cfg.patience, cfg.early_stop == EarlyStopMetric::F1);
  std::vector<Matrix<float>> best;

  RunReport rep;
  rep.mode = to_string(cfg.model.mode);
  rep.fusion = to_string(cfg.model.fusion);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& idx = order.next_epoch();
    EpochRecord rec;
    rec.epoch = epoch;
    std::uint64_t h = kFnvOffset;
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < idx.size(); lo += bs) {
      const std::size_t hi = std::min(idx.size(), lo + bs);
      std::vector<const ModelInput<float>*> batch;
      std::vector<std::string> ids;
      std::vector<double> p1, ys, d(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        batch.push_back(&train_in[idx[k]]);
        ids.push_back(train_in[idx[k]].id);
        ys.push_back(train_in[idx[k]].label == Label::Depression ? 1.0 : 0.0);
      }
      h = batch_hash(ids, h);
      auto fp = model.forward(batch, true);
      for (std::size_t i = 0; i < fp.size(); ++i) p1.push_back(static_cast<double>(fp.p_depression(i)));
      const auto lb = total_loss(p1, ys, model.params(), cfg.loss);
      if (!std::isfinite(lb.total()))
        throw Error(ErrorCode::DivergedLoss, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                 ", batch " + std::to_string(batches) + " (bce " +
                                                 std::to_string(lb.bce) + ", focal " + std::to_string(lb.focal) +
                                                 ", l2 " + std::to_string(lb.l2) + ")");
      for (std::size_t i = 0; i < p1.size(); ++i)
        d[i] = sample_loss(p1[i], ys[i], cfg.loss).d_p1 / static_cast<double>(p1.size());
      auto grads = fp.backward(d);
      add_l2_gradient(model.params(), cfg.loss.lambda, grads);
      opt.step(model.params(), grads);
      loss_sum += lb.total();
      ++batches;
    }
    rec.batch_hash = h;
    rec.train_loss = loss_sum / static_cast<double>(batches);

    const auto ev = evaluate(model, val_in, cfg.loss, bs);
    rec.val_loss = ev.loss.total();
    rec.val_f1 = ev.metrics.f1;
    double monitored = cfg.early_stop == EarlyStopMetric::F1 ? rec.val_f1 : rec.val_loss;
    if (hooks.val_override) monitored = hooks.val_override(epoch, monitored);
    if (stopper.update(epoch, monitored)) {
      best.clear();
      for (const auto& p : model.params()) best.push_back(p.value);
      rep.best_val_loss = rec.val_loss;
      rep.val = ev.metrics;
    }
    rep.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log::info(rep.mode, "/", rep.fusion, " epoch ", epoch, " train ", rec.train_loss, " val ", rec.val_loss, " f1 ",
              rec.val_f1, " (", secs, " s)");
    if (stopper.should_stop()) {
      rep.stopped_early = epoch < cfg.epochs;
      break;
    }
  }

  rep.best_epoch = stopper.best_epoch();
  for (std::size_t i = 0; i < best.size(); ++i) model.params().value(i) = best[i];
  return {std::move(model), std::move(rep)};
}

/// Trains, then scores the restored best model on the test set.
inline TrainResult train_and_test(const TrainConfig& cfg, const std::vector<VlogSample>& train_set,
                                  const std::vector<VlogSample>& val_set, const std::vector<VlogSample>& test_set,
                                  const TrainHooks& hooks = {}) {
  auto res = train(cfg, train_set, val_set, hooks);
  if (!test_set.empty()) {
    const auto ev = evaluate(res.model, prepare_inputs<float>(test_set, cfg.model.seq_len), cfg.loss,
                             static_cast<std::size_t>(cfg.batch_size));
    res.report.test = ev.metrics;
    res.report.test_loss = ev.loss.total();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Cross-validation

inline std::map<std::string, MeanStd> aggregate_metrics(const std::vector<RunReport>& folds) {
  std::vector<double> acc, pr, rc, f1;
  for (const auto& f : folds) {
    if (!f.test) continue;
    acc.push_back(f.test->accuracy);
    pr.push_back(f.test->precision);
    rc.push_back(f.test->recall);
    f1.push_back(f.test->f1);
  }
  return {{"acc", mean_std(acc)}, {"precision", mean_std(pr)}, {"recall", mean_std(rc)}, {"f1", mean_std(f1)}};
}

/// Fold i is the test set and fold (i+1) mod k the validation set; the rest train.
inline RunReport cross_validate(const TrainConfig& cfg, const std::vector<VlogSample>& samples,
                                const std::map<std::string, int>& folds, int k) {
  if (k < 2) throw Error(ErrorCode::TooFewSamples, "cross-validation needs k >= 2");
  if (samples.size() < static_cast<std::size_t>(k))
    throw Error(ErrorCode::TooFewSamples, std::to_string(samples.size()) + " samples for " + std::to_string(k) + " folds");
  std::vector<std::vector<VlogSample>> by_fold(static_cast<std::size_t>(k));
  for (const auto& s : samples) {
    auto it = folds.find(s.id);
    if (it == folds.end() || it->second < 0 || it->second >= k)
      throw Error(ErrorCode::MalformedManifest, "sample '" + s.id + "' has no fold in [0," + std::to_string(k) + ")");
    by_fold[static_cast<std::size_t>(it->second)].push_back(s);
  }
  for (int f = 0; f < k; ++f)
    if (by_fold[static_cast<std::size_t>(f)].empty())
      throw Error(ErrorCode::TooFewSamples, "fold " + std::to_string(f) + " is empty");

  auto run_fold = [&](int f) {
    const int vf = (f + 1) % k;
    std::vector<VlogSample> tr;
    for (int g = 0; g < k; ++g)
      if (g != f && g != vf) tr.insert(tr.end(), by_fold[static_cast<std::size_t>(g)].begin(), by_fold[static_cast<std::size_t>(g)].end());
    log::info("fold ", f, ": train ", tr.size(), ", val ", by_fold[static_cast<std::size_t>(vf)].size(), ", test ",
              by_fold[static_cast<std::size_t>(f)].size());
    return train_and_test(cfg, tr, by_fold[static_cast<std::size_t>(vf)], by_fold[static_cast<std::size_t>(f)]).report;
  };

  RunReport rep;
  rep.mode = to_string(cfg.model.mode);
  rep.fusion = to_string(cfg.model.fusion);
  rep.folds.resize(static_cast<std::size_t>(k));
  const int jobs = std::max(1, cfg.jobs);
  for (int lo = 0; lo < k; lo += jobs) {
    std::vector<std::future<RunReport>> running;
    for (int f = lo; f < std::min(k, lo + jobs); ++f) running.push_back(std::async(std::launch::async, run_fold, f));
    for (int f = lo; f < std::min(k, lo + jobs); ++f) rep.folds[static_cast<std::size_t>(f)] = running[static_cast<std::size_t>(f - lo)].get();
  }
  rep.aggregate = aggregate_metrics(rep.folds);
  return rep;
}

// ---------------------------------------------------------------------------
// Fusion ablation

inline const std::array<FusionMode, 4>& ablation_fusions() {
  static const std::array<FusionMode, 4> f{FusionMode::Add, FusionMode::Multiply, FusionMode::Concat,
                                           FusionMode::MutualTransformer};
  return f;
}

struct AblationTable {
  std::vector<RunReport> rows;
  /// Hash of the batch sequence shared by every row, over the epochs all rows ran.
  std::uint64_t common_hash(std::size_t row) const {
    int common = std::numeric_limits<int>::max();
    for (const auto& r : rows) common = std::min(common, r.epochs_run());
    return rows[row].sequence_hash(common);
  }
};

/// Trains the multimodal model once per fusion mode; everything else is held fixed.
inline AblationTable ablate(const TrainConfig& cfg, const std::vector<VlogSample>& train_set,
                            const std::vector<VlogSample>& val_set, const std::vector<VlogSample>& test_set) {
  AblationTable t;
  for (FusionMode f : ablation_fusions()) {
    TrainConfig c = cfg;
    c.model.mode = ModelMode::Mdd;
    c.model.fusion = f;
    t.rows.push_back(train_and_test(c, train_set, val_set, test_set).report);
  }
  return t;
}

inline std::string ablation_csv(const AblationTable& t) {
  std::ostringstream os;
  os << "fusion,acc,precision,recall,f1,best_epoch,epochs_run,batch_hash\n";
  os << std::setprecision(6) << std::fixed;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const Metrics m = r.test.value_or(Metrics{});
    os << r.fusion << ',' << m.accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << r.best_epoch
       << ',' << r.epochs_run() << ',' << hex(t.common_hash(i)) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0;
  double analytic = 0;  // at the worst coordinate
  double numeric = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> arrays;
  double max_rel_err = 0;
  std::string worst;
  double loss = 0;
};

inline json to_json(const GradCheckReport& r) {
  json arr = json::array();
  for (const auto& a : r.arrays)
    arr.push_back({{"name", a.name},
                   {"checked", a.checked},
                   {"max_rel_err", a.max_rel_err},
                   {"analytic", a.analytic},
                   {"numeric", a.numeric}});
  return {{"max_rel_err", r.max_rel_err}, {"worst", r.worst}, {"loss", r.loss}, {"arrays", arr}};
}

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

/// Total training loss of a batch at the current parameters, in train mode.
/// Running statistics are restored afterwards so repeated calls see the same model.
inline double batch_loss(MddNet<double>& model, const std::vector<ModelInput<double>>& batch, const LossConfig& lc) {
  std::vector<Matrix<double>> saved;
  for (const auto& p : model.params())
    if (p.kind == ParamKind::Buffer) saved.push_back(p.value);
  auto fp = model.forward(pointers(batch), true);
  std::vector<double> p1, ys;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    p1.push_back(fp.p_depression(i));
    ys.push_back(batch[i].label == Label::Depression ? 1.0 : 0.0);
  }
  std::size_t k = 0;
  for (auto& p : model.params())
    if (p.kind == ParamKind::Buffer) p.value = saved[k++];
  return total_loss(p1, ys, model.params(), lc).total();
}

/// Compares analytic gradients of the total loss with central differences on
/// up to `max_coords` seeded coordinates of every trainable array.
inline GradCheckReport grad_check(const TrainConfig& cfg, const std::vector<VlogSample>& samples, double epsilon = 1e-5,
                                  std::size_t max_coords = 20,
                                  const std::function<void(Gradients<double>&)>& corrupt = {}) {
  cfg.validate();
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "grad_check needs at least one sample");
  MddNet<double> model(cfg.model);
  model.initialize(cfg.seed);
  const auto batch = prepare_inputs<double>(samples, cfg.model.seq_len);

  GradCheckReport rep;
  Gradients<double> grads;
  {
    std::vector<Matrix<double>> saved;
    for (const auto& p : model.params())
      if (p.kind == ParamKind::Buffer) saved.push_back(p.value);
    auto fp = model.forward(pointers(batch), true);
    std::vector<double> p1, ys, d;
    for (std::size_t i = 0; i < fp.size(); ++i) {
      p1.push_back(fp.p_depression(i));
      ys.push_back(batch[i].label == Label::Depression ? 1.0 : 0.0);
    }
    for (std::size_t i = 0; i < p1.size(); ++i)
      d.push_back(sample_loss(p1[i], ys[i], cfg.loss).d_p1 / static_cast<double>(p1.size()));
    rep.loss = total_loss(p1, ys, model.params(), cfg.loss).total();
    grads = fp.backward(d);
    add_l2_gradient(model.params(), cfg.loss.lambda, grads);
    std::size_t k = 0;
    for (auto& p : model.params())
      if (p.kind == ParamKind::Buffer) p.value = saved[k++];
  }
  if (corrupt) corrupt(grads);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto& p = model.params()[i];
    if (!is_trainable(p.kind)) continue;
    const auto n = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }
    GradCheckEntry e;
    e.name = p.name;
    for (std::size_t c : coords) {
      double& w = p.value.data()[c];
      const double w0 = w;
      w = w0 + epsilon;
      const double lp = batch_loss(model, batch, cfg.loss);
      w = w0 - epsilon;
      const double lm = batch_loss(model, batch, cfg.loss);
      w = w0;
      const double num = (lp - lm) / (2 * epsilon);
      const double ana = grads[i].data()[c];
      const double err = relative_error(ana, num);
      if (err > e.max_rel_err || e.checked == 0) {
        e.max_rel_err = err;
        e.analytic = ana;
        e.numeric = num;
      }
      ++e.checked;
    }
    if (e.max_rel_err > rep.max_rel_err || rep.worst.empty()) {
      rep.max_rel_err = e.max_rel_err;
      rep.worst = e.name;
    }
    rep.arrays.push_back(std::move(e));
  }
  return rep;
}

}  // namespace mddnet
