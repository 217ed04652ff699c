#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mddnet {

// Rows are time steps (or tokens), columns are channels.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Per-row flags: 1 marks a real time step, 0 marks padding.
using Mask = std::vector<std::uint8_t>;

inline Mask full_mask(std::size_t n) { return Mask(n, 1); }

inline std::size_t count_real(const Mask& m) {
  std::size_t c = 0;
  for (auto v : m) c += v ? 1 : 0;
  return c;
}

inline Mask concat_masks(const std::vector<const Mask*>& parts) {
  Mask out;
  for (const Mask* m : parts) out.insert(out.end(), m->begin(), m->end());
  return out;
}

enum class ErrorCode {
  MalformedManifest,
  MissingFile,
  DuplicateId,
  ShapeMismatch,
  NonFiniteValue,
  EmptyDataset,
  TooFewSamples,
  IoError,
  UnknownMode,
  DivergedLoss,
  PerplexityTooLarge,
  InvalidConfig,
};

inline std::string_view error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedManifest: return "MALFORMED_MANIFEST";
    case ErrorCode::MissingFile: return "MISSING_FILE";
    case ErrorCode::DuplicateId: return "DUPLICATE_ID";
    case ErrorCode::ShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::NonFiniteValue: return "NON_FINITE_VALUE";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::TooFewSamples: return "TOO_FEW_SAMPLES";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::UnknownMode: return "UNKNOWN_MODE";
    case ErrorCode::DivergedLoss: return "DIVERGED_LOSS";
    case ErrorCode::PerplexityTooLarge: return "PERPLEXITY_TOO_LARGE";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) throw Error(ErrorCode::NonFiniteValue, std::string(what) + " contains NaN or Inf");
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

}  // namespace mddnet
