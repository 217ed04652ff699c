#pragma once

// Exact t-SNE of pooled fused features and token-attention heatmaps.

#include "mddnet/model.hpp"

#include <fstream>
#include <iomanip>

namespace mddnet {

struct TsneConfig {
  double perplexity = 30;
  int iterations = 1000;
  double learning_rate = 200;
  double exaggeration = 12;
  int exaggeration_iters = 250;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  double entropy_tol = 1e-10;
  int max_bisection = 200;
  std::uint64_t seed = 0;
};

struct TsneResult {
  Matrix<double> y;                  // m × 2
  double kl = 0;                     // KL(P‖Q) at the final iteration
  double kl_after_exaggeration = 0;  // first iteration without exaggeration
  std::vector<double> entropy_error; // |H(P_i) − log perplexity| per point
  Matrix<double> p;                  // symmetric joint affinities
};

inline Matrix<double> squared_distances(const Matrix<double>& x) {
  const Eigen::VectorXd n = x.rowwise().squaredNorm();
  Matrix<double> d = (-2.0 * x * x.transpose()).colwise() + n;
  d.rowwise() += n.transpose();
  return d.cwiseMax(0.0);
}

struct ConditionalRow {
  Eigen::RowVectorXd p;
  double entropy = 0;
};

/// Gaussian conditional P(j|i) over the off-diagonal entries of one distance
/// row, with the precision bisected until the entropy equals log(perplexity).
inline ConditionalRow calibrate_row(const Eigen::RowVectorXd& d, Eigen::Index self, double perplexity,
                                    const TsneConfig& c) {
  const double target = std::log(perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  ConditionalRow r;
  double dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < d.size(); ++j)
    if (j != self) dmin = std::min(dmin, d(j));
  for (int it = 0; it < c.max_bisection; ++it) {
    // Shift by the nearest distance so exp never underflows to all zeros.
    r.p = (-(d.array() - dmin) * beta).exp();
    r.p(self) = 0;
    const double sum = r.p.sum();
    const double dp = (r.p.array() * (d.array() - dmin)).sum() / sum;
    r.entropy = std::log(sum) + beta * dp;
    r.p /= sum;
    const double diff = r.entropy - target;
    if (std::abs(diff) < c.entropy_tol) break;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
    } else {
      hi = beta;
      beta = (beta + lo) / 2;
    }
  }
  return r;
}

inline TsneResult tsne(const Matrix<double>& x, const TsneConfig& c) {
  const Eigen::Index m = x.rows();
  if (m < 2) throw Error(ErrorCode::TooFewSamples, "t-SNE needs at least 2 points");
  if (m > 5000) throw Error(ErrorCode::InvalidConfig, "exact t-SNE is limited to 5000 points");
  if (x.cols() < 2) throw Error(ErrorCode::ShapeMismatch, "t-SNE input needs at least 2 columns");
  if (!(c.perplexity > 0) || c.perplexity >= static_cast<double>(m - 1) / 3.0)
    throw Error(ErrorCode::PerplexityTooLarge, "perplexity " + std::to_string(c.perplexity) + " must be below (m-1)/3 = " +
                                                   std::to_string(static_cast<double>(m - 1) / 3.0));
  if (c.iterations < c.exaggeration_iters)
    throw Error(ErrorCode::InvalidConfig, "t-SNE iterations must be >= " + std::to_string(c.exaggeration_iters));
  require_finite(x, "t-SNE input");

  TsneResult res;
  const Matrix<double> d = squared_distances(x);
  Matrix<double> pc(m, m);
  res.entropy_error.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    auto row = calibrate_row(d.row(i), i, c.perplexity, c);
    pc.row(i) = row.p;
    res.entropy_error[static_cast<std::size_t>(i)] = std::abs(row.entropy - std::log(c.perplexity));
  }
  res.p = (pc + pc.transpose()) / (2.0 * static_cast<double>(m));
  const Matrix<double> p = res.p.cwiseMax(1e-12);

  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  Matrix<double> y(m, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
  Matrix<double> update = Matrix<double>::Zero(m, 2), gains = Matrix<double>::Ones(m, 2);

  auto kl_of = [&](const Matrix<double>& num, double z) {
    double kl = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j) {
          const double q = std::max(num(i, j) / z, 1e-12);
          kl += p(i, j) * std::log(p(i, j) / q);
        }
    return kl;
  };

  for (int it = 0; it < c.iterations; ++it) {
    const bool exaggerate = it < c.exaggeration_iters;
    const double mom = exaggerate ? c.momentum_initial : c.momentum_final;
    Matrix<double> num = (squared_distances(y).array() + 1.0).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();
    if (it == c.exaggeration_iters) res.kl_after_exaggeration = kl_of(num, z);
    const Matrix<double> pq = (exaggerate ? c.exaggeration : 1.0) * p.array() - (num.array() / z).max(1e-12);
    const Matrix<double> w = pq.cwiseProduct(num);
    // dC/dy_i = 4 Σ_j w_ij (y_i − y_j)
    Matrix<double> grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      double& g = gains.data()[i];
      g = (grad.data()[i] > 0) != (update.data()[i] > 0) ? g + 0.2 : g * 0.8;
      g = std::max(g, 0.01);
    }
    update = mom * update - c.learning_rate * gains.cwiseProduct(grad);
    y += update;
    y.rowwise() -= y.colwise().mean();
  }
  Matrix<double> num = (squared_distances(y).array() + 1.0).inverse().matrix();
  num.diagonal().setZero();
  res.kl = kl_of(num, num.sum());
  res.y = std::move(y);
  return res;
}

/// Fraction of points whose nearest other point (Euclidean) shares their label.
inline double nearest_neighbor_agreement(const Matrix<double>& y, const std::vector<int>& labels) {
  const Matrix<double> d = squared_distances(y);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      if (j != i && (best < 0 || d(i, j) < d(i, best))) best = j;
    if (labels[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(y.rows());
}

// ---------------------------------------------------------------------------
// Embeddings and attention weights

/// αᵀZ from the detection layer, evaluated in eval mode.
template <typename T>
RowVector<T> pooled_embedding(MddNet<T>& model, const ModelInput<T>& in) {
  auto fp = model.forward({&in}, false);
  return fp.pooled(0).row(0);
}

template <typename T>
Matrix<double> pooled_embeddings(MddNet<T>& model, const std::vector<ModelInput<T>>& inputs,
                                 std::size_t batch_size = 8) {
  Matrix<double> out(static_cast<Eigen::Index>(inputs.size()), model.config().d_z());
  for (std::size_t lo = 0; lo < inputs.size(); lo += batch_size) {
    std::vector<const ModelInput<T>*> chunk;
    for (std::size_t i = lo; i < std::min(inputs.size(), lo + batch_size); ++i) chunk.push_back(&inputs[i]);
    auto fp = model.forward(chunk, false);
    for (std::size_t i = 0; i < fp.size(); ++i)
      out.row(static_cast<Eigen::Index>(lo + i)) = fp.pooled(i).row(0).template cast<double>();
  }
  return out;
}

struct AttentionRow {
  std::string id;
  Label label = Label::Normal;
  Label predicted = Label::Normal;
  double p_depression = 0;
  RowVector<double> alpha;
};

/// Token-attention vectors for each sample, ordered Normal-predicted first,
/// then Depression-predicted, input order kept within each group.
template <typename T>
std::vector<AttentionRow> attention_rows(MddNet<T>& model, const std::vector<ModelInput<T>>& inputs,
                                         std::size_t batch_size = 8) {
  std::vector<AttentionRow> rows;
  for (std::size_t lo = 0; lo < inputs.size(); lo += batch_size) {
    std::vector<const ModelInput<T>*> chunk;
    for (std::size_t i = lo; i < std::min(inputs.size(), lo + batch_size); ++i) chunk.push_back(&inputs[i]);
    auto fp = model.forward(chunk, false);
    for (std::size_t i = 0; i < fp.size(); ++i) {
      AttentionRow r;
      r.id = chunk[i]->id;
      r.label = chunk[i]->label;
      r.p_depression = static_cast<double>(fp.p_depression(i));
      r.predicted = decide(r.p_depression);
      r.alpha = fp.alpha(i).row(0).template cast<double>();
      rows.push_back(std::move(r));
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const AttentionRow& a, const AttentionRow& b) { return a.predicted < b.predicted; });
  return rows;
}

inline void write_attention_csv(const std::vector<AttentionRow>& rows, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const Eigen::Index n = rows.empty() ? 0 : rows.front().alpha.size();
  os << "id,label,predicted,p_depression";
  for (Eigen::Index j = 0; j < n; ++j) os << ",a" << j;
  os << '\n' << std::setprecision(9);
  for (const auto& r : rows) {
    os << r.id << ',' << to_string(r.label) << ',' << to_string(r.predicted) << ',' << r.p_depression;
    for (Eigen::Index j = 0; j < r.alpha.size(); ++j) os << ',' << r.alpha(j);
    os << '\n';
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

/// White (0) to dark blue (1).
inline std::string shade(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ch = [&](double hi, double lo) { return static_cast<int>(std::lround(hi + (lo - hi) * v)); };
  std::ostringstream os;
  os << "rgb(" << ch(255, 8) << ',' << ch(255, 48) << ',' << ch(255, 107) << ')';
  return os.str();
}

}  // namespace detail

/// One row per sample, one column per token; darker means a larger weight.
/// Each row is scaled by its own maximum. Adjacent cells with the same
/// quantized shade are merged to keep the file small.
inline void write_attention_svg(const std::vector<AttentionRow>& rows, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const int cell_h = 6, label_w = 150, top = 24;
  const Eigen::Index n = rows.empty() ? 0 : rows.front().alpha.size();
  const double cell_w = n > 0 ? std::max(1.0, 1024.0 / static_cast<double>(n)) : 1.0;
  const double width = label_w + cell_w * static_cast<double>(n) + 10;
  const double height = top + cell_h * static_cast<double>(rows.size()) + 10;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<text x=\"" << label_w << "\" y=\"14\">token attention (row-normalized), grouped by predicted class</text>\n";
  constexpr int levels = 64;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const double y = top + cell_h * static_cast<double>(r);
    if (r == 0 || rows[r - 1].predicted != row.predicted)
      os << "<text x=\"2\" y=\"" << y + cell_h << "\">" << to_string(row.predicted) << "</text>\n";
    const double mx = row.alpha.size() ? std::max(row.alpha.maxCoeff(), 1e-300) : 1.0;
    Eigen::Index j = 0;
    while (j < row.alpha.size()) {
      const int q = static_cast<int>(std::lround(row.alpha(j) / mx * levels));
      Eigen::Index k = j + 1;
      while (k < row.alpha.size() && static_cast<int>(std::lround(row.alpha(k) / mx * levels)) == q) ++k;
      if (q > 0)
        os << "<rect x=\"" << label_w + cell_w * static_cast<double>(j) << "\" y=\"" << y << "\" width=\""
           << cell_w * static_cast<double>(k - j) << "\" height=\"" << cell_h << "\" fill=\""
           << detail::shade(static_cast<double>(q) / levels) << "\"/>\n";
      j = k;
    }
    os << "<title>" << detail::svg_escape(row.id) << "</title>\n";
  }
  os << "</svg>\n";
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// Scatter of 2-D coordinates, coloured by label (0 Normal, 1 Depression).
inline void write_scatter_svg(const Matrix<double>& y, const std::vector<int>& labels, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const double size = 480, pad = 20;
  const Eigen::RowVector2d lo = y.colwise().minCoeff(), hi = y.colwise().maxCoeff();
  const Eigen::RowVector2d span = (hi - lo).cwiseMax(1e-12);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * pad << "\" height=\"" << size + 2 * pad
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double px = pad + (y(i, 0) - lo(0)) / span(0) * size;
    const double py = pad + (y(i, 1) - lo(1)) / span(1) * size;
    const bool dep = labels[static_cast<std::size_t>(i)] == 1;
    os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"" << (dep ? "#d62728" : "#1f77b4")
       << "\" fill-opacity=\"0.8\"/>\n";
  }
  os << "</svg>\n";
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mddnet
