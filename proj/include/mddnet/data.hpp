#pragma once

// Vlog samples, the on-disk feature and manifest formats, sequence alignment,
// stratified splits and folds, and the synthetic dataset generator.

#include "mddnet/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mddnet {

namespace fs = std::filesystem;

inline constexpr int kAcousticWidth = 25;
inline constexpr int kVisualWidth = 136;
inline constexpr int kDefaultSeqLen = 256;

enum class Label { Normal = 0, Depression = 1 };

inline std::string to_string(Label l) { return l == Label::Depression ? "Depression" : "Normal"; }

inline Label parse_label(const std::string& s) {
  if (s == "Depression") return Label::Depression;
  if (s == "Normal") return Label::Normal;
  throw Error(ErrorCode::MalformedManifest, "label must be Depression or Normal, got '" + s + "'");
}

struct VlogSample {
  std::string id;
  Label label = Label::Normal;
  Matrix<float> acoustic;  // t × 25
  Matrix<float> visual;    // t × 136
  Mask mask;               // t flags, 1 = real frame

  Eigen::Index length() const { return acoustic.rows(); }
};

enum class SplitRole { Train, Val, Test };

inline std::string to_string(SplitRole r) {
  switch (r) {
    case SplitRole::Train: return "train";
    case SplitRole::Val: return "val";
    case SplitRole::Test: return "test";
  }
  return "?";
}

inline SplitRole parse_split_role(const std::string& s) {
  if (s == "train") return SplitRole::Train;
  if (s == "val") return SplitRole::Val;
  if (s == "test") return SplitRole::Test;
  throw Error(ErrorCode::MalformedManifest, "split role must be train/val/test, got '" + s + "'");
}

struct ManifestEntry {
  std::string id;
  Label label = Label::Normal;
  std::string acoustic_path;  // relative to the manifest directory
  std::string visual_path;
  int length = 0;
};

struct DatasetManifest {
  fs::path root;  // directory the relative paths resolve against
  std::vector<ManifestEntry> samples;
  std::optional<std::map<std::string, SplitRole>> split;
  std::optional<std::map<std::string, int>> folds;

  std::size_t size() const { return samples.size(); }

  const ManifestEntry& entry(const std::string& id) const {
    for (const auto& e : samples)
      if (e.id == id) return e;
    throw Error(ErrorCode::MalformedManifest, "id '" + id + "' not in manifest");
  }

  std::size_t count(Label l) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [l](const ManifestEntry& e) { return e.label == l; }));
  }

  std::vector<std::string> ids_with_role(SplitRole r) const {
    std::vector<std::string> out;
    if (!split) return out;
    for (const auto& e : samples) {
      auto it = split->find(e.id);
      if (it != split->end() && it->second == r) out.push_back(e.id);
    }
    return out;
  }

  std::vector<std::string> ids_in_fold(int k) const {
    std::vector<std::string> out;
    if (!folds) return out;
    for (const auto& e : samples) {
      auto it = folds->find(e.id);
      if (it != folds->end() && it->second == k) out.push_back(e.id);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Feature files

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<unsigned char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

inline constexpr std::array<char, 4> kFeatureMagic{'M', 'D', 'D', 'F'};

/// Appends one MDDF block: magic, u32 rows, u32 cols, row-major float32, all little-endian.
inline void write_mddf_block(std::ostream& os, const Matrix<float>& m) {
  os.write(kFeatureMagic.data(), 4);
  detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_u32(os, std::bit_cast<std::uint32_t>(m.data()[i]));
}

/// Parses one MDDF block starting at `pos`; advances `pos` past it.
inline Matrix<float> read_mddf_block(const std::vector<unsigned char>& buf, std::size_t& pos, const std::string& what) {
  if (buf.size() < pos + 12 || !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), buf.begin() + pos))
    throw Error(ErrorCode::IoError, what + ": missing MDDF header");
  const std::uint32_t rows = detail::get_u32(&buf[pos + 4]);
  const std::uint32_t cols = detail::get_u32(&buf[pos + 8]);
  pos += 12;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (buf.size() < pos + 4 * n) throw Error(ErrorCode::IoError, what + ": truncated MDDF payload");
  Matrix<float> m(rows, cols);
  for (std::size_t i = 0; i < n; ++i) m.data()[i] = std::bit_cast<float>(detail::get_u32(&buf[pos + 4 * i]));
  pos += 4 * n;
  return m;
}

inline void write_features_binary(const fs::path& path, const Matrix<float>& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_mddf_block(os, m);
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline void write_features_csv(const fs::path& path, const Matrix<float>& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  std::array<char, 32> buf{};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), m(i, j));
      if (j) os << ',';
      os.write(buf.data(), end - buf.data());
    }
    os << '\n';
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline Matrix<float> parse_features_csv(const std::string& text, const std::string& what) {
  std::vector<float> values;
  Eigen::Index rows = 0, cols = -1;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Eigen::Index c = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      float v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw Error(ErrorCode::IoError, what + ": unparsable value on row " + std::to_string(rows));
      values.push_back(v);
      ++c;
      p = next;
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      if (*p != ',') throw Error(ErrorCode::IoError, what + ": expected ',' on row " + std::to_string(rows));
      ++p;
    }
    if (cols < 0) cols = c;
    if (c != cols) throw Error(ErrorCode::ShapeMismatch, what + ": ragged CSV row " + std::to_string(rows));
    ++rows;
  }
  if (cols < 0) cols = 0;
  Matrix<float> m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

/// Reads a feature matrix, detecting the binary encoding by its magic bytes.
inline Matrix<float> read_features(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, "feature file " + path.string() + " does not exist");
  auto buf = detail::read_all(path);
  if (buf.size() >= 4 && std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), buf.begin())) {
    std::size_t pos = 0;
    return read_mddf_block(buf, pos, path.string());
  }
  return parse_features_csv(std::string(buf.begin(), buf.end()), path.string());
}

// ---------------------------------------------------------------------------
// Manifest

inline DatasetManifest parse_manifest(const nlohmann::json& j, const fs::path& root, bool check_files = true) {
  auto bad = [](const std::string& m) { return Error(ErrorCode::MalformedManifest, m); };
  if (!j.is_object() || !j.contains("samples") || !j.at("samples").is_array())
    throw bad("manifest needs a 'samples' array");
  DatasetManifest m;
  m.root = root;
  std::set<std::string> seen;
  for (const auto& s : j.at("samples")) {
    if (!s.is_object()) throw bad("sample entries must be objects");
    ManifestEntry e;
    try {
      e.id = s.at("id").get<std::string>();
      e.label = parse_label(s.at("label").get<std::string>());
      e.acoustic_path = s.at("acoustic").get<std::string>();
      e.visual_path = s.at("visual").get<std::string>();
      e.length = s.at("length").get<int>();
    } catch (const nlohmann::json::exception& ex) {
      throw bad(std::string("sample entry: ") + ex.what());
    }
    if (e.length <= 0) throw bad("sample '" + e.id + "' has non-positive length");
    if (!seen.insert(e.id).second) throw Error(ErrorCode::DuplicateId, "duplicate sample id '" + e.id + "'");
    if (check_files) {
      for (const auto& rel : {e.acoustic_path, e.visual_path})
        if (!fs::exists(root / rel)) throw Error(ErrorCode::MissingFile, "missing feature file " + (root / rel).string());
    }
    m.samples.push_back(std::move(e));
  }
  if (j.contains("split") && !j.at("split").is_null()) {
    std::map<std::string, SplitRole> split;
    try {
      for (const auto& [id, role] : j.at("split").items()) split[id] = parse_split_role(role.get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      throw bad(std::string("split: ") + ex.what());
    }
    if (split.size() != seen.size()) throw bad("split must assign every sample exactly once");
    for (const auto& [id, role] : split)
      if (!seen.count(id)) throw bad("split names unknown id '" + id + "'");
    m.split = std::move(split);
  }
  if (j.contains("folds") && !j.at("folds").is_null()) {
    std::map<std::string, int> folds;
    try {
      for (const auto& [id, f] : j.at("folds").items()) folds[id] = f.get<int>();
    } catch (const nlohmann::json::exception& ex) {
      throw bad(std::string("folds: ") + ex.what());
    }
    for (const auto& [id, f] : folds) {
      if (!seen.count(id)) throw bad("folds names unknown id '" + id + "'");
      if (f < 0) throw bad("negative fold index for '" + id + "'");
    }
    if (folds.size() != seen.size()) throw bad("folds must assign every sample");
    m.folds = std::move(folds);
  }
  return m;
}

inline DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, "manifest " + path.string() + " does not exist");
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedManifest, std::string("invalid JSON: ") + ex.what());
  }
  return parse_manifest(j, path.parent_path());
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& e : m.samples)
    samples.push_back({{"id", e.id},
                       {"label", to_string(e.label)},
                       {"acoustic", e.acoustic_path},
                       {"visual", e.visual_path},
                       {"length", e.length}});
  nlohmann::json j{{"samples", samples}};
  if (m.split) {
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [id, r] : *m.split) s[id] = to_string(r);
    j["split"] = s;
  }
  if (m.folds) {
    nlohmann::json f = nlohmann::json::object();
    for (const auto& [id, k] : *m.folds) f[id] = k;
    j["folds"] = f;
  }
  return j;
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  os << manifest_to_json(m).dump(2) << '\n';
}

inline VlogSample load_sample(const DatasetManifest& m, const std::string& id, int acoustic_width = kAcousticWidth,
                              int visual_width = kVisualWidth) {
  const ManifestEntry& e = m.entry(id);
  VlogSample s;
  s.id = e.id;
  s.label = e.label;
  s.acoustic = read_features(m.root / e.acoustic_path);
  s.visual = read_features(m.root / e.visual_path);
  if (s.acoustic.cols() != acoustic_width)
    throw Error(ErrorCode::ShapeMismatch, id + ": acoustic width " + std::to_string(s.acoustic.cols()) +
                                              ", expected " + std::to_string(acoustic_width));
  if (s.visual.cols() != visual_width)
    throw Error(ErrorCode::ShapeMismatch,
                id + ": visual width " + std::to_string(s.visual.cols()) + ", expected " + std::to_string(visual_width));
  if (s.acoustic.rows() != s.visual.rows())
    throw Error(ErrorCode::ShapeMismatch, id + ": acoustic has " + std::to_string(s.acoustic.rows()) +
                                              " rows, visual has " + std::to_string(s.visual.rows()));
  if (s.acoustic.rows() != e.length)
    throw Error(ErrorCode::ShapeMismatch, id + ": manifest length " + std::to_string(e.length) + " but file has " +
                                              std::to_string(s.acoustic.rows()) + " rows");
  require_finite(s.acoustic, id + " acoustic features");
  require_finite(s.visual, id + " visual features");
  s.mask = full_mask(static_cast<std::size_t>(s.acoustic.rows()));
  return s;
}

/// Truncates to the first t_target rows or zero-pads at the end; the mask
/// follows the rows it describes.
inline VlogSample align_to_length(const VlogSample& s, int t_target) {
  if (t_target < 1) throw Error(ErrorCode::InvalidConfig, "t_target must be >= 1");
  VlogSample out;
  out.id = s.id;
  out.label = s.label;
  const Eigen::Index keep = std::min<Eigen::Index>(t_target, s.length());
  out.acoustic = Matrix<float>::Zero(t_target, s.acoustic.cols());
  out.visual = Matrix<float>::Zero(t_target, s.visual.cols());
  out.acoustic.topRows(keep) = s.acoustic.topRows(keep);
  out.visual.topRows(keep) = s.visual.topRows(keep);
  out.mask.assign(static_cast<std::size_t>(t_target), 0);
  for (Eigen::Index i = 0; i < keep; ++i) out.mask[i] = s.mask.empty() ? 1 : s.mask[i];
  return out;
}

// ---------------------------------------------------------------------------
// Splits and folds

struct SplitRatios {
  int train = 7;
  int val = 1;
  int test = 2;
};

namespace detail {

// Per-label id lists in manifest order, each shuffled with the given engine.
inline std::array<std::vector<std::string>, 2> shuffled_by_label(const DatasetManifest& m, std::mt19937_64& rng) {
  std::array<std::vector<std::string>, 2> by;
  for (const auto& e : m.samples) by[static_cast<int>(e.label)].push_back(e.id);
  for (auto& v : by) std::shuffle(v.begin(), v.end(), rng);
  return by;
}

// Splits `total` across classes proportional to `sizes` with largest remainders.
inline std::array<std::size_t, 2> apportion(std::size_t total, const std::array<std::size_t, 2>& sizes,
                                            std::size_t n) {
  std::array<std::size_t, 2> out{};
  std::array<double, 2> frac{};
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = n ? static_cast<double>(total) * static_cast<double>(sizes[c]) / static_cast<double>(n) : 0;
    out[c] = std::min(sizes[c], static_cast<std::size_t>(std::floor(exact)));
    frac[c] = exact - std::floor(exact);
    assigned += out[c];
  }
  while (assigned < total) {
    int best = -1;
    for (int c = 0; c < 2; ++c)
      if (out[c] < sizes[c] && (best < 0 || frac[c] > frac[best])) best = c;
    if (best < 0) break;
    ++out[best];
    frac[best] = -1;
    ++assigned;
  }
  return out;
}

}  // namespace detail

/// Label-stratified train/val/test assignment: floor(n·train/Σ) train,
/// floor(n·val/Σ) val, the remainder test.
inline DatasetManifest make_splits(const DatasetManifest& m, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
    throw Error(ErrorCode::InvalidConfig, "split ratios must be positive");
  if (m.samples.empty()) throw Error(ErrorCode::EmptyDataset, "cannot split an empty dataset");
  const std::size_t n = m.size();
  const std::size_t sum = static_cast<std::size_t>(ratios.train + ratios.val + ratios.test);
  const std::size_t n_train = n * static_cast<std::size_t>(ratios.train) / sum;
  const std::size_t n_val = n * static_cast<std::size_t>(ratios.val) / sum;

  std::mt19937_64 rng(seed);
  auto by = detail::shuffled_by_label(m, rng);
  const std::array<std::size_t, 2> sizes{by[0].size(), by[1].size()};
  const auto train_c = detail::apportion(n_train, sizes, n);
  const std::array<std::size_t, 2> rest{sizes[0] - train_c[0], sizes[1] - train_c[1]};
  auto val_c = detail::apportion(n_val, sizes, n);
  for (int c = 0; c < 2; ++c) val_c[c] = std::min(val_c[c], rest[c]);
  // Top up val if capping starved it.
  std::size_t val_total = val_c[0] + val_c[1];
  for (int c = 0; c < 2 && val_total < n_val; ++c)
    while (val_total < n_val && val_c[c] < rest[c]) ++val_c[c], ++val_total;

  DatasetManifest out = m;
  out.split.emplace();
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < by[c].size(); ++i) {
      SplitRole r = i < train_c[c] ? SplitRole::Train : (i < train_c[c] + val_c[c] ? SplitRole::Val : SplitRole::Test);
      (*out.split)[by[c][i]] = r;
    }
  return out;
}

/// Label-stratified k-fold assignment; fold sizes differ by at most one.
inline DatasetManifest make_folds(const DatasetManifest& m, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::TooFewSamples, "k-fold needs k >= 2, got " + std::to_string(k));
  if (m.size() < static_cast<std::size_t>(k))
    throw Error(ErrorCode::TooFewSamples,
                std::to_string(m.size()) + " samples cannot fill " + std::to_string(k) + " folds");
  std::mt19937_64 rng(seed);
  auto by = detail::shuffled_by_label(m, rng);
  DatasetManifest out = m;
  out.folds.emplace();
  std::size_t pos = 0;
  for (const auto& cls : by)
    for (const auto& id : cls) (*out.folds)[id] = static_cast<int>(pos++ % static_cast<std::size_t>(k));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

enum class FeatureEncoding { Binary, Csv };

struct SynthConfig {
  int n_samples = 400;
  int t = kDefaultSeqLen;
  double class_balance = 555.0 / 961.0;  // P(Depression)
  int latent_dim = 8;
  double signal_strength = 3.0;
  double noise_std = 1.0;
  std::uint64_t seed = 7;
  FeatureEncoding encoding = FeatureEncoding::Binary;

  // Latent path: AR(1) walk with this coefficient (unit stationary variance),
  // then a centred moving average of `latent_smooth` steps.
  double latent_ar = 0.5;
  int latent_smooth = 3;
  double band_fraction = 0.25;
  // Std of the per-sample band-locked latent amplitudes along both class
  // directions. Each modality alone cannot separate them from the label;
  // the two modalities together cancel them.
  double band_latent_std = 1.5;

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw Error(ErrorCode::InvalidConfig, msg);
    };
    need(n_samples > 0, "n_samples must be positive");
    need(t > 0, "t must be positive");
    need(class_balance > 0 && class_balance < 1, "class_balance must lie in (0,1)");
    need(latent_dim >= 2, "latent_dim must be >= 2");
    need(signal_strength >= 0, "signal_strength must be non-negative");
    need(noise_std > 0, "noise_std must be positive");
    need(latent_ar >= 0 && latent_ar < 1, "latent_ar must lie in [0,1)");
    need(latent_smooth >= 1, "latent_smooth must be >= 1");
    need(band_fraction > 0 && band_fraction <= 1, "band_fraction must lie in (0,1]");
    need(band_latent_std >= 0, "band_latent_std must be non-negative");
  }
};

/// Dataset-wide draws shared by every sample.
struct SynthDesign {
  Matrix<double> mix_a;      // k × 25
  Matrix<double> mix_v;      // k × 136
  RowVector<double> c_a;     // k, unit
  RowVector<double> c_v;     // k, unit, orthogonal to c_a
  RowVector<double> dir_a;   // 25, = c_a · mix_a
  RowVector<double> dir_v;   // 136, = c_v · mix_v
  std::vector<double> window;  // t, smooth bump on the class band
  int band_start = 0;
  int band_length = 0;
};

inline SynthDesign make_synth_design(const SynthConfig& cfg, std::mt19937_64& rng) {
  const int k = cfg.latent_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  SynthDesign d;
  auto gaussian = [&](Eigen::Index r, Eigen::Index c, double s) {
    Matrix<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * s;
    return m;
  };
  d.mix_a = gaussian(k, kAcousticWidth, 1.0 / std::sqrt(static_cast<double>(k)));
  d.mix_v = gaussian(k, kVisualWidth, 1.0 / std::sqrt(static_cast<double>(k)));

  // Orthonormal latent directions, so the class signal differs between modalities
  // while each modality alone sees it inside its own nuisance subspace.
  RowVector<double> ca = gaussian(1, k, 1.0).row(0);
  RowVector<double> cv = gaussian(1, k, 1.0).row(0);
  ca.normalize();
  cv -= cv.dot(ca) * ca;
  cv.normalize();
  d.c_a = ca;
  d.c_v = cv;
  d.dir_a = ca * d.mix_a;
  d.dir_v = cv * d.mix_v;

  d.band_length = std::max(1, static_cast<int>(std::lround(cfg.band_fraction * cfg.t)));
  std::uniform_int_distribution<int> start(0, cfg.t - d.band_length);
  d.band_start = start(rng);
  d.window.assign(static_cast<std::size_t>(cfg.t), 0.0);
  for (int i = 0; i < d.band_length; ++i) {
    const double s = std::sin(M_PI * (i + 0.5) / d.band_length);
    d.window[static_cast<std::size_t>(d.band_start + i)] = s * s;
  }
  return d;
}

/// Draws one sample (label, latent path, both modalities) from the engine.
inline VlogSample synth_sample(const SynthConfig& cfg, const SynthDesign& d, std::mt19937_64& rng, std::string id) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution depressed(cfg.class_balance);
  VlogSample s;
  s.id = std::move(id);
  s.label = depressed(rng) ? Label::Depression : Label::Normal;
  const int t = cfg.t, k = cfg.latent_dim;

  Matrix<double> walk(t, k);
  const double innov = std::sqrt(1.0 - cfg.latent_ar * cfg.latent_ar);
  for (int j = 0; j < k; ++j) walk(0, j) = normal(rng);
  for (int i = 1; i < t; ++i)
    for (int j = 0; j < k; ++j) walk(i, j) = cfg.latent_ar * walk(i - 1, j) + innov * normal(rng);
  Matrix<double> z(t, k);
  const int h = cfg.latent_smooth / 2;
  for (int i = 0; i < t; ++i) {
    const int lo = std::max(0, i - h), hi = std::min(t - 1, i - h + cfg.latent_smooth - 1);
    z.row(i) = walk.middleRows(lo, hi - lo + 1).colwise().mean();
  }
  const double r_a = normal(rng);
  const double r_v = normal(rng);
  const RowVector<double> band_dir = cfg.band_latent_std * (r_a * d.c_a + r_v * d.c_v);
  for (int i = 0; i < t; ++i) z.row(i) += d.window[static_cast<std::size_t>(i)] * band_dir;

  const double y = s.label == Label::Depression ? 1.0 : 0.0;
  Matrix<double> a = z * d.mix_a;
  Matrix<double> v = z * d.mix_v;
  for (int i = 0; i < t; ++i) {
    const double amp = y * cfg.signal_strength * d.window[static_cast<std::size_t>(i)];
    if (amp != 0.0) {
      a.row(i) += amp * d.dir_a;
      v.row(i) += amp * d.dir_v;
    }
  }
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] += cfg.noise_std * normal(rng);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += cfg.noise_std * normal(rng);
  s.acoustic = a.cast<float>();
  s.visual = v.cast<float>();
  s.mask = full_mask(static_cast<std::size_t>(t));
  return s;
}

/// Generates the whole dataset in memory.
inline std::vector<VlogSample> synth_samples(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const SynthDesign design = make_synth_design(cfg, rng);
  std::vector<VlogSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_samples));
  const int width = std::max(4, static_cast<int>(std::to_string(cfg.n_samples).size()));
  for (int i = 0; i < cfg.n_samples; ++i) {
    std::string num = std::to_string(i);
    out.push_back(synth_sample(cfg, design, rng, "v" + std::string(width - num.size(), '0') + num));
  }
  return out;
}

/// Writes feature files under out_dir/features and out_dir/manifest.json.
inline DatasetManifest synth_generate(const SynthConfig& cfg, const fs::path& out_dir) {
  auto samples = synth_samples(cfg);
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + (out_dir / "features").string() + ": " + ec.message());
  DatasetManifest m;
  m.root = out_dir;
  const std::string ext = cfg.encoding == FeatureEncoding::Binary ? ".mddf" : ".csv";
  for (const auto& s : samples) {
    ManifestEntry e;
    e.id = s.id;
    e.label = s.label;
    e.acoustic_path = "features/" + s.id + "_acoustic" + ext;
    e.visual_path = "features/" + s.id + "_visual" + ext;
    e.length = static_cast<int>(s.length());
    if (cfg.encoding == FeatureEncoding::Binary) {
      write_features_binary(out_dir / e.acoustic_path, s.acoustic);
      write_features_binary(out_dir / e.visual_path, s.visual);
    } else {
      write_features_csv(out_dir / e.acoustic_path, s.acoustic);
      write_features_csv(out_dir / e.visual_path, s.visual);
    }
    m.samples.push_back(std::move(e));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace mddnet
