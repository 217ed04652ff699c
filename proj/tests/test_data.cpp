#include "helpers.hpp"
#include "naive.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace mddnet;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("mddnet_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

DatasetManifest label_only_manifest(std::size_t depressed, std::size_t normal) {
  DatasetManifest m;
  for (std::size_t i = 0; i < depressed + normal; ++i) {
    ManifestEntry e;
    e.id = "s" + std::to_string(i);
    e.label = i < depressed ? Label::Depression : Label::Normal;
    e.length = 1;
    m.samples.push_back(e);
  }
  return m;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

}  // namespace

TEST(FeatureFiles, BinaryRoundTripIsExact) {
  TempDir dir;
  std::mt19937_64 rng(1);
  Matrix<float> m = testing_util::random_matrix(7, 25, rng).cast<float>();
  write_features_binary(dir.path() / "a.mddf", m);
  const auto back = read_features(dir.path() / "a.mddf");
  ASSERT_EQ(back.rows(), 7);
  ASSERT_EQ(back.cols(), 25);
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0f);
}

TEST(FeatureFiles, BinaryLayoutIsLittleEndianRowMajor) {
  TempDir dir;
  Matrix<float> m(1, 2);
  m << 1.0f, -2.0f;
  write_features_binary(dir.path() / "b.mddf", m);
  const auto bytes = detail::read_all(dir.path() / "b.mddf");
  ASSERT_EQ(bytes.size(), 12u + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MDDF");
  EXPECT_EQ(bytes[4], 1);   // rows
  EXPECT_EQ(bytes[8], 2);   // cols
  EXPECT_EQ(bytes[15], 0x3f);  // 1.0f = 0x3f800000
  EXPECT_EQ(bytes[19], 0xc0);  // -2.0f = 0xc0000000
}

TEST(FeatureFiles, CsvRoundTripAndDetection) {
  TempDir dir;
  std::mt19937_64 rng(2);
  Matrix<float> m = testing_util::random_matrix(4, 3, rng).cast<float>();
  write_features_csv(dir.path() / "a.csv", m);
  const auto back = read_features(dir.path() / "a.csv");
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0f);
}

TEST(FeatureFiles, RaggedCsvIsShapeMismatch) {
  TempDir dir;
  write_text(dir.path() / "r.csv", "1,2,3\n4,5\n");
  try {
    read_features(dir.path() / "r.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(FeatureFiles, MissingFile) {
  try {
    read_features("/nonexistent/x.mddf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

TEST(Manifest, ErrorsCarryCodes) {
  TempDir dir;
  auto code_of = [&](const nlohmann::json& j, bool check = false) {
    try {
      parse_manifest(j, dir.path(), check);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidConfig;  // sentinel: no error
  };
  using nlohmann::json;
  EXPECT_EQ(code_of(json::object()), ErrorCode::MalformedManifest);
  json entry{{"id", "a"}, {"label", "Depression"}, {"acoustic", "a.mddf"}, {"visual", "v.mddf"}, {"length", 3}};
  EXPECT_EQ(code_of({{"samples", {entry, entry}}}), ErrorCode::DuplicateId);
  EXPECT_EQ(code_of({{"samples", {entry}}}, true), ErrorCode::MissingFile);
  json bad_label = entry;
  bad_label["label"] = "Sad";
  EXPECT_EQ(code_of({{"samples", {bad_label}}}), ErrorCode::MalformedManifest);
  EXPECT_EQ(code_of({{"samples", {entry}}, {"split", {{"b", "train"}}}}), ErrorCode::MalformedManifest);
  EXPECT_EQ(code_of({{"samples", {entry}}, {"split", {{"a", "train"}}}}), ErrorCode::InvalidConfig);
}

TEST(Manifest, JsonRoundTrip) {
  auto m = make_folds(make_splits(label_only_manifest(3, 4), SplitRatios{}, 1), 2, 1);
  const auto back = parse_manifest(manifest_to_json(m), "", false);
  EXPECT_EQ(back.size(), m.size());
  EXPECT_EQ(*back.split, *m.split);
  EXPECT_EQ(*back.folds, *m.folds);
}

TEST(LoadSample, ValidatesWidthsLengthsAndFiniteness) {
  TempDir dir;
  auto write_pair = [&](const std::string& id, Matrix<float> a, Matrix<float> v) {
    write_features_binary(dir.path() / (id + "_a.mddf"), a);
    write_features_binary(dir.path() / (id + "_v.mddf"), v);
  };
  write_pair("ok", Matrix<float>::Zero(5, 25), Matrix<float>::Zero(5, 136));
  write_pair("wide", Matrix<float>::Zero(5, 24), Matrix<float>::Zero(5, 136));
  write_pair("uneven", Matrix<float>::Zero(5, 25), Matrix<float>::Zero(4, 136));
  Matrix<float> nan = Matrix<float>::Zero(5, 25);
  nan(2, 3) = std::numeric_limits<float>::quiet_NaN();
  write_pair("nan", nan, Matrix<float>::Zero(5, 136));
  nlohmann::json samples = nlohmann::json::array();
  for (std::string id : {"ok", "wide", "uneven", "nan"})
    samples.push_back({{"id", id}, {"label", "Normal"}, {"acoustic", id + "_a.mddf"}, {"visual", id + "_v.mddf"}, {"length", 5}});
  write_text(dir.path() / "manifest.json", nlohmann::json{{"samples", samples}}.dump());
  const auto m = load_manifest(dir.path() / "manifest.json");
  EXPECT_EQ(load_sample(m, "ok").length(), 5);
  auto code = [&](const std::string& id) {
    try {
      load_sample(m, id);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidConfig;
  };
  EXPECT_EQ(code("wide"), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code("uneven"), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code("nan"), ErrorCode::NonFiniteValue);
}

TEST(Align, TruncatesPadsAndIsIdempotent) {
  auto s = testing_util::tiny_samples(1, 10).front();
  const auto shorter = align_to_length(s, 6);
  EXPECT_EQ(shorter.length(), 6);
  EXPECT_EQ(count_real(shorter.mask), 6u);
  EXPECT_EQ(shorter.acoustic.row(5), s.acoustic.row(5));
  const auto longer = align_to_length(s, 14);
  EXPECT_EQ(longer.length(), 14);
  EXPECT_EQ(count_real(longer.mask), 10u);
  EXPECT_EQ(longer.visual.bottomRows(4).cwiseAbs().sum(), 0.0f);
  for (int t : {6, 10, 14}) {
    const auto once = align_to_length(s, t);
    const auto twice = align_to_length(once, t);
    EXPECT_EQ(once.mask, twice.mask);
    EXPECT_EQ(once.acoustic, twice.acoustic);
    EXPECT_EQ(once.visual, twice.visual);
  }
}

TEST(Splits, PaperSizedManifestSplitsTo672_96_193) {
  const auto m = make_splits(label_only_manifest(555, 406), SplitRatios{}, 0);
  EXPECT_EQ(m.ids_with_role(SplitRole::Train).size(), 672u);
  EXPECT_EQ(m.ids_with_role(SplitRole::Val).size(), 96u);
  EXPECT_EQ(m.ids_with_role(SplitRole::Test).size(), 193u);
}

TEST(Splits, PartitionAndStratification) {
  for (std::size_t dep : {5u, 40u, 555u})
    for (std::size_t nor : {3u, 41u, 406u}) {
      const auto base = label_only_manifest(dep, nor);
      const auto m = make_splits(base, SplitRatios{}, 7);
      std::size_t total = 0;
      const double global = static_cast<double>(dep) / static_cast<double>(dep + nor);
      for (auto role : {SplitRole::Train, SplitRole::Val, SplitRole::Test}) {
        const auto ids = m.ids_with_role(role);
        total += ids.size();
        std::size_t d = 0;
        for (const auto& id : ids) d += m.entry(id).label == Label::Depression ? 1 : 0;
        // Within one sample's worth of the global proportion.
        EXPECT_LE(std::abs(static_cast<double>(d) - global * static_cast<double>(ids.size())), 1.0 + 1e-9)
            << dep << "/" << nor << " role " << to_string(role);
      }
      EXPECT_EQ(total, dep + nor);
      EXPECT_EQ(m.split->size(), dep + nor);
    }
}

TEST(Splits, EmptyDatasetRejected) {
  try {
    make_splits(DatasetManifest{}, SplitRatios{}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(Folds, TenFoldsOf961AreSized96Or97) {
  const auto m = make_folds(label_only_manifest(555, 406), 10, 0);
  std::size_t total = 0;
  for (int f = 0; f < 10; ++f) {
    const auto n = m.ids_in_fold(f).size();
    EXPECT_TRUE(n == 96 || n == 97) << n;
    total += n;
  }
  EXPECT_EQ(total, 961u);
}

TEST(Folds, PartitionStratifiedAndTooFewSamples) {
  for (std::size_t n : {5u, 17u, 100u}) {
    const auto base = label_only_manifest(n / 2 + 1, n - n / 2 - 1);
    const auto m = make_folds(base, 5, 3);
    std::set<std::string> seen;
    for (int f = 0; f < 5; ++f) {
      const auto ids = m.ids_in_fold(f);
      std::size_t d = 0;
      for (const auto& id : ids) {
        EXPECT_TRUE(seen.insert(id).second);
        d += m.entry(id).label == Label::Depression ? 1 : 0;
      }
      const double global = static_cast<double>(base.count(Label::Depression)) / static_cast<double>(n);
      EXPECT_LE(std::abs(static_cast<double>(d) - global * static_cast<double>(ids.size())), 1.0 + 1e-9);
    }
    EXPECT_EQ(seen.size(), n);
  }
  try {
    make_folds(label_only_manifest(2, 1), 5, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
  }
}

TEST(Synth, GenerationIsByteReproducible) {
  TempDir a, b;
  SynthConfig c;
  c.n_samples = 6;
  c.t = 20;
  synth_generate(c, a.path());
  synth_generate(c, b.path());
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path());
    EXPECT_EQ(detail::read_all(entry.path()), detail::read_all(b.path() / rel)) << rel;
  }
}

TEST(Synth, ShapesLabelsAndManifestLoad) {
  TempDir dir;
  SynthConfig c;
  c.n_samples = 12;
  c.t = 32;
  c.encoding = FeatureEncoding::Csv;
  synth_generate(c, dir.path());
  const auto m = load_manifest(dir.path() / "manifest.json");
  ASSERT_EQ(m.size(), 12u);
  const auto s = load_sample(m, m.samples.front().id);
  EXPECT_EQ(s.acoustic.rows(), 32);
  EXPECT_EQ(s.acoustic.cols(), 25);
  EXPECT_EQ(s.visual.cols(), 136);
}

TEST(Synth, ZeroSignalGivesEqualClassMeans) {
  SynthConfig c;
  c.n_samples = 400;
  c.t = 64;
  c.signal_strength = 0;
  c.band_latent_std = 0;
  const auto samples = synth_samples(c);
  Eigen::RowVectorXd mean[2] = {Eigen::RowVectorXd::Zero(25), Eigen::RowVectorXd::Zero(25)};
  double count[2] = {0, 0};
  for (const auto& s : samples) {
    const int y = static_cast<int>(s.label);
    mean[y] += s.acoustic.cast<double>().colwise().mean();
    count[y] += 1;
  }
  // Per-sample time means have std well below 0.5 here; 5σ Monte-Carlo bound on the difference.
  const double diff = ((mean[0] / count[0]) - (mean[1] / count[1])).cwiseAbs().maxCoeff();
  EXPECT_LT(diff, 0.15);
}

TEST(Synth, TimeAveragedAcousticProbeExceeds80PercentTrainAccuracy) {
  SynthConfig c;  // n=400, t=256, signal 3, noise 1, seed 7
  const auto samples = synth_samples(c);
  Eigen::MatrixXd x(samples.size(), 25);
  Eigen::VectorXd y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = samples[i].acoustic.cast<double>().colwise().mean();
    y(static_cast<Eigen::Index>(i)) = samples[i].label == Label::Depression ? 1.0 : 0.0;
  }
  EXPECT_GT(naive::logistic_train_accuracy(x, y, 1e-4), 0.80);
}

TEST(Synth, InvalidConfigRejected) {
  SynthConfig c;
  c.class_balance = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = SynthConfig{};
  c.noise_std = 0;
  EXPECT_THROW(c.validate(), Error);
}
