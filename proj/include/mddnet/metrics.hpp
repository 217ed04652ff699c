#pragma once

#include "mddnet/data.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <vector>

namespace mddnet {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

/// Depression is the positive class. A metric whose denominator is zero is
/// reported as 0 and flagged.
struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  Confusion confusion;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

inline Metrics compute_metrics(const Confusion& c) {
  Metrics m;
  m.confusion = c;
  const auto total = c.total();
  m.accuracy = total ? static_cast<double>(c.tp + c.tn) / static_cast<double>(total) : 0.0;
  if (c.tp + c.fp)
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  else
    m.precision_undefined = true;
  if (c.tp + c.fn)
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  else
    m.recall_undefined = true;
  if (m.precision + m.recall > 0)
    m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.f1_undefined = true;
  return m;
}

inline Confusion confusion_from(const std::vector<Label>& truth, const std::vector<Label>& predicted) {
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == Label::Depression, p = predicted[i] == Label::Depression;
    if (t && p) ++c.tp;
    else if (!t && p) ++c.fp;
    else if (t && !p) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j{{"acc", m.accuracy},
                   {"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"confusion",
                    {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}}};
  nlohmann::json flags = nlohmann::json::array();
  if (m.precision_undefined) flags.push_back("precision_undefined");
  if (m.recall_undefined) flags.push_back("recall_undefined");
  if (m.f1_undefined) flags.push_back("f1_undefined");
  j["flags"] = flags;
  return j;
}

struct MeanStd {
  double mean = 0, std = 0, min = 0, max = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  double s = 0;
  r.min = r.max = v.front();
  for (double x : v) {
    s += x;
    r.min = std::min(r.min, x);
    r.max = std::max(r.max, x);
  }
  r.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace mddnet
