#pragma once

#include "mddnet/autograd.hpp"

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace mddnet {

enum class ParamKind {
  Weight,  // projection matrices, relative position embeddings
  Bias,
  NormScale,
  NormShift,
  Buffer,  // running statistics; never trained
};

inline bool is_trainable(ParamKind k) { return k != ParamKind::Buffer; }

// L2 covers projections and biases; normalization affines and buffers are exempt.
inline bool is_regularized(ParamKind k) { return k == ParamKind::Weight || k == ParamKind::Bias; }

template <typename T>
struct Parameter {
  std::string name;
  ParamKind kind = ParamKind::Weight;
  Matrix<T> value;
};

/// Named, ordered collection of every array a model owns.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, ParamKind kind) {
    if (index_.count(name)) throw Error(ErrorCode::InvalidConfig, "duplicate parameter name " + name);
    Parameter<T> p;
    p.name = name;
    p.kind = kind;
    p.value = Matrix<T>::Zero(rows, cols);
    if (kind == ParamKind::NormScale) p.value.setOnes();
    index_.emplace(name, entries_.size());
    entries_.push_back(std::move(p));
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  Parameter<T>& operator[](std::size_t i) { return entries_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return entries_[i]; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::ShapeMismatch, "unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Matrix<T>& value(std::size_t i) { return entries_[i].value; }
  const Matrix<T>& value(std::size_t i) const { return entries_[i].value; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Xavier-uniform weights, zero biases and shifts, unit scales.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : entries_) {
      switch (p.kind) {
        case ParamKind::Weight: {
          const T fan = static_cast<T>(p.value.rows() + p.value.cols());
          const T bound = std::sqrt(T(6) / fan);
          std::uniform_real_distribution<double> u(-bound, bound);
          for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(u(rng));
          break;
        }
        case ParamKind::NormScale: p.value.setOnes(); break;
        case ParamKind::Bias:
        case ParamKind::NormShift: p.value.setZero(); break;
        case ParamKind::Buffer: break;
      }
    }
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : entries_) {
      auto i = out.add(p.name, p.value.rows(), p.value.cols(), p.kind);
      out.value(i) = p.value.template cast<U>();
    }
    return out;
  }

  /// Fresh zero arrays matching every entry, for gradients or optimizer state.
  std::vector<Matrix<T>> zeros_like() const {
    std::vector<Matrix<T>> z;
    z.reserve(entries_.size());
    for (const auto& p : entries_) z.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    return z;
  }

 private:
  std::vector<Parameter<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
using Gradients = std::vector<Matrix<T>>;

/// Binds parameters into one tape, creating each leaf at most once.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ParameterSet<T>& params) : tape_(tape), params_(params) {}

  Var operator()(std::size_t index) {
    auto it = bound_.find(index);
    if (it != bound_.end()) return it->second;
    Var v = tape_.leaf(params_.value(index));
    bound_.emplace(index, v);
    return v;
  }

  /// Adds this tape's parameter gradients into `grads`.
  void collect(Gradients<T>& grads) const {
    for (const auto& [index, v] : bound_)
      if (tape_.has_grad(v)) grads[index] += tape_.grad(v);
  }

  Tape<T>& tape() { return tape_; }
  const ParameterSet<T>& params() const { return params_; }

 private:
  Tape<T>& tape_;
  const ParameterSet<T>& params_;
  std::unordered_map<std::size_t, Var> bound_;
};

}  // namespace mddnet
