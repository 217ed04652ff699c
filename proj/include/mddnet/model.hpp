#pragma once

// Full network assembly. Each sample gets its own tape; the AFEM batch
// normalization is the only cross-sample coupling and is spliced between two
// reverse sweeps of every tape.

#include "mddnet/afem.hpp"
#include "mddnet/data.hpp"
#include "mddnet/fusion.hpp"
#include "mddnet/head.hpp"
#include "mddnet/vfem.hpp"

#include <memory>
#include <optional>

namespace mddnet {

template <typename T>
struct ModelInput {
  std::string id;
  Label label = Label::Normal;
  Matrix<T> acoustic;
  Matrix<T> visual;
  Mask mask;
};

template <typename T>
ModelInput<T> to_model_input(const VlogSample& s) {
  ModelInput<T> in;
  in.id = s.id;
  in.label = s.label;
  in.acoustic = s.acoustic.cast<T>();
  in.visual = s.visual.cast<T>();
  in.mask = s.mask.empty() ? full_mask(static_cast<std::size_t>(s.acoustic.rows())) : s.mask;
  return in;
}

template <typename T>
class MddNet;

template <typename T>
class ForwardPass {
 public:
  struct Sample {
    std::unique_ptr<Tape<T>> tape;
    std::unique_ptr<ParamBinder<T>> binder;
    Mask mask;
    AfemProjections afem_proj;
    Var content;
    Var pos_proj;  // positional branch after W_o, input of the batch norm
    int boundary = -1;
    Var bn_out;    // leaf carrying the batch-norm output
    Var afem_out;
    Var vfem_out;
    Mask vfem_mask;
    std::optional<FusedVars> fused;
    Var z;
    Mask z_mask;
    DetectVars det;
  };

  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }

  const Matrix<T>& value(std::size_t i, Var v) const { return samples[i].tape->value(v); }
  T p_depression(std::size_t i) const { return value(i, samples[i].det.p)(0, kDepressionIndex); }
  const Matrix<T>& probabilities(std::size_t i) const { return value(i, samples[i].det.p); }
  const Matrix<T>& alpha(std::size_t i) const { return value(i, samples[i].det.alpha); }
  const Matrix<T>& pooled(std::size_t i) const { return value(i, samples[i].det.pooled); }
  const Matrix<T>& z(std::size_t i) const { return value(i, samples[i].z); }

  /// Back-propagates per-sample ∂L/∂p1 to every parameter array.
  Gradients<T> backward(const std::vector<double>& d_p1) {
    require_shape(d_p1.size() == samples.size(), "one loss gradient per sample required");
    Gradients<T> grads = params_->zeros_like();
    std::vector<Matrix<T>> d_bn(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto& s = samples[i];
      Matrix<T> seed = Matrix<T>::Zero(1, 2);
      seed(0, kDepressionIndex) = static_cast<T>(d_p1[i]);
      s.tape->accumulate(s.det.p, seed);
      s.tape->propagate(s.tape->size() - 1, s.boundary);
      if (has_bn_) d_bn[i] = s.tape->grad_or_zero(s.bn_out);
    }
    if (has_bn_) {
      auto d_pos = bn_.backward(d_bn, grads, afem_bn_);
      for (std::size_t i = 0; i < samples.size(); ++i) samples[i].tape->accumulate(samples[i].pos_proj, d_pos[i]);
    }
    for (auto& s : samples) {
      if (s.boundary >= 0) s.tape->propagate(s.boundary, -1);
      s.binder->collect(grads);
    }
    return grads;
  }

 private:
  friend class MddNet<T>;
  const ParameterSet<T>* params_ = nullptr;
  bool has_bn_ = false;
  BatchNormPass<T> bn_;
  NormIdx afem_bn_;
};

template <typename T>
class MddNet {
 public:
  explicit MddNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const bool audio = cfg_.mode != ModelMode::VfemOnly;
    const bool video = cfg_.mode != ModelMode::AfemOnly;
    if (audio) afem_ = register_afem(params_, cfg_);
    if (video) vfem_ = register_vfem(params_, cfg_);
    if (cfg_.mode == ModelMode::Mdd) {
      if (cfg_.fusion == FusionMode::MutualTransformer)
        mt_ = register_mt_fusion(params_, cfg_);
      else
        baseline_ = register_baseline_fusion(params_, cfg_, cfg_.fusion);
    } else {
      unimodal_ = register_linear(params_, "unimodal.proj", audio ? cfg_.d_a : cfg_.d_v, cfg_.d_z(), true);
    }
    head_ = register_head(params_, cfg_);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  void initialize(std::uint64_t seed) {
    params_.initialize(seed);
    if (afem_) {
      params_.value(afem_->running_mean).setZero();
      params_.value(afem_->running_var).setOnes();
    }
  }

  const std::optional<AfemIdx>& afem() const { return afem_; }
  const std::optional<VfemIdx>& vfem() const { return vfem_; }
  const std::optional<MtFusionIdx>& mt() const { return mt_; }
  const HeadIdx& head() const { return head_; }

  /// Runs the batch. In train mode the batch-norm running statistics update.
  ForwardPass<T> forward(const std::vector<const ModelInput<T>*>& batch, bool train) {
    require_shape(!batch.empty(), "empty batch");
    ForwardPass<T> fp;
    fp.params_ = &params_;
    fp.samples.resize(batch.size());
    const bool audio = afem_.has_value();

    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& in = *batch[i];
      require_shape(in.acoustic.cols() == cfg_.d_a_in, "acoustic width differs from d_a_in");
      require_shape(in.visual.cols() == cfg_.d_v_in, "visual width differs from d_v_in");
      require_shape(in.acoustic.rows() == in.visual.rows(), "acoustic and visual lengths differ");
      require_shape(static_cast<Eigen::Index>(in.mask.size()) == in.acoustic.rows(), "mask length differs");
      require_finite(in.acoustic, in.id + " acoustic");
      require_finite(in.visual, in.id + " visual");
      auto& s = fp.samples[i];
      s.tape = std::make_unique<Tape<T>>();
      s.binder = std::make_unique<ParamBinder<T>>(*s.tape, params_);
      s.mask = in.mask;
      if (audio) {
        Var x = s.tape->constant(in.acoustic);
        s.afem_proj = afem_project(*s.binder, *afem_, x);
        Var pos = positional_attention(*s.binder, *afem_, s.afem_proj, s.mask);
        s.pos_proj = ag::matmul(*s.tape, pos, (*s.binder)(afem_->w_o));
        s.boundary = s.tape->size() - 1;
      }
    }

    if (audio) {
      fp.has_bn_ = true;
      fp.afem_bn_ = afem_->bn;
      std::vector<const Matrix<T>*> xs;
      std::vector<Mask> ms;
      for (auto& s : fp.samples) {
        xs.push_back(&s.tape->value(s.pos_proj));
        ms.push_back(s.mask);
      }
      auto ys = fp.bn_.forward(xs, ms, params_, afem_->bn, afem_->running_mean, afem_->running_var, train,
                               static_cast<T>(cfg_.bn_momentum), static_cast<T>(cfg_.norm_eps));
      for (std::size_t i = 0; i < fp.samples.size(); ++i) {
        auto& s = fp.samples[i];
        s.bn_out = s.tape->leaf(std::move(ys[i]));
        s.content = content_attention(*s.tape, s.afem_proj, s.mask);
        s.afem_out = ag::add(*s.tape, s.content, s.bn_out);
      }
    }

    for (std::size_t i = 0; i < batch.size(); ++i) finish_sample(fp.samples[i], *batch[i]);
    return fp;
  }

  /// Eval-mode probabilities of Depression, in chunks of batch_size.
  std::vector<double> predict(const std::vector<const ModelInput<T>*>& inputs, std::size_t batch_size = 8) {
    std::vector<double> out;
    out.reserve(inputs.size());
    for (std::size_t lo = 0; lo < inputs.size(); lo += batch_size) {
      std::vector<const ModelInput<T>*> chunk(inputs.begin() + lo,
                                              inputs.begin() + std::min(inputs.size(), lo + batch_size));
      auto fp = forward(chunk, false);
      for (std::size_t i = 0; i < fp.size(); ++i) out.push_back(static_cast<double>(fp.p_depression(i)));
    }
    return out;
  }

 private:
  void finish_sample(typename ForwardPass<T>::Sample& s, const ModelInput<T>& in) {
    auto& pb = *s.binder;
    auto& t = *s.tape;
    if (vfem_) {
      Var x = t.constant(in.visual);
      auto vo = vfem_forward(pb, *vfem_, x, s.mask, cfg_);
      s.vfem_out = vo.out;
      s.vfem_mask = vo.mask;
    }
    switch (cfg_.mode) {
      case ModelMode::Mdd:
        if (mt_) {
          s.fused = mt_fusion_forward(pb, *mt_, s.afem_out, s.mask, s.vfem_out, s.vfem_mask, cfg_);
          s.z = s.fused->z;
          s.z_mask = s.fused->z_mask;
        } else {
          auto b = baseline_fuse(pb, *baseline_, s.afem_out, s.mask, s.vfem_out, s.vfem_mask, cfg_.fusion);
          s.z = b.z;
          s.z_mask = b.z_mask;
        }
        break;
      case ModelMode::AfemOnly:
        s.z = linear(pb, s.afem_out, *unimodal_);
        s.z_mask = s.mask;
        break;
      case ModelMode::VfemOnly:
        s.z = linear(pb, s.vfem_out, *unimodal_);
        s.z_mask = s.vfem_mask;
        break;
    }
    s.det = detect(pb, head_, s.z, s.z_mask);
  }

  ModelConfig cfg_;
  ParameterSet<T> params_;
  std::optional<AfemIdx> afem_;
  std::optional<VfemIdx> vfem_;
  std::optional<MtFusionIdx> mt_;
  std::optional<BaselineFusionIdx> baseline_;
  std::optional<LinearIdx> unimodal_;
  HeadIdx head_;
};

}  // namespace mddnet
