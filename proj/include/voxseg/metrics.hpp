#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/error.hpp"

namespace voxseg {

// Slice-wise dataset split: walking up the z axis in groups of five
// consecutive slices, the first three go to train, the fourth to
// validation, the fifth to test. A final partial group goes to train, so
// every volume keeps the 60/20/20 ratio as closely as slices allow.

enum class SplitRole { train, val, test };

inline SplitRole slice_role(int z) {
  switch (z % 5) {
    case 3: return SplitRole::val;
    case 4: return SplitRole::test;
    default: return SplitRole::train;
  }
}

struct SliceSplit {
  std::vector<int> train, val, test;

  const std::vector<int>& of(SplitRole r) const {
    switch (r) {
      case SplitRole::train: return train;
      case SplitRole::val: return val;
      default: return test;
    }
  }
};

/// Split an ordered list of labelled slice indices; the grouping walks the
/// list position, not the slice number, so sparsely labelled stacks split
/// the same way as dense ones.
inline SliceSplit split_slice_list(const std::vector<int>& slices) {
  if (slices.empty()) throw ContractError("cannot split an empty slice list");
  SliceSplit s;
  const int n = int(slices.size());
  const int full = n - n % 5;  // entries in complete groups of five
  for (int i = 0; i < n; ++i) {
    if (i >= full) {
      s.train.push_back(slices[std::size_t(i)]);
      continue;
    }
    switch (slice_role(i)) {
      case SplitRole::train: s.train.push_back(slices[std::size_t(i)]); break;
      case SplitRole::val: s.val.push_back(slices[std::size_t(i)]); break;
      case SplitRole::test: s.test.push_back(slices[std::size_t(i)]); break;
    }
  }
  return s;
}

inline SliceSplit split_slices(int nz) {
  if (nz < 1) throw ContractError("cannot split an empty stack");
  std::vector<int> all(static_cast<std::size_t>(nz));
  for (int z = 0; z < nz; ++z) all[std::size_t(z)] = z;
  return split_slice_list(all);
}

/// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  int n = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(int n_labels = 0)
      : n(n_labels), counts(std::size_t(n_labels) * std::size_t(n_labels), 0) {}

  std::uint64_t& at(int truth, int pred) { return counts[std::size_t(truth) * n + pred]; }
  std::uint64_t at(int truth, int pred) const { return counts[std::size_t(truth) * n + pred]; }
  void add(int truth, int pred) { ++at(truth, pred); }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::uint64_t diagonal() const {
    std::uint64_t t = 0;
    for (int i = 0; i < n; ++i) t += at(i, i);
    return t;
  }
};

inline ConfusionMatrix confusion(std::span<const std::uint8_t> truth,
                                 std::span<const std::uint8_t> pred, int n_labels) {
  if (truth.size() != pred.size())
    throw ContractError("truth and prediction lengths differ");
  ConfusionMatrix cm(n_labels);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_labels || pred[i] >= n_labels)
      throw ContractError("label id outside the declared label set");
    cm.add(truth[i], pred[i]);
  }
  return cm;
}

/// Intersection over union for one label; empty when the label appears in
/// neither truth nor prediction (IoU is undefined there, not zero).
inline std::optional<double> iou(const ConfusionMatrix& cm, int label) {
  const std::uint64_t tp = cm.at(label, label);
  std::uint64_t fp = 0, fn = 0;
  for (int i = 0; i < cm.n; ++i) {
    if (i == label) continue;
    fp += cm.at(i, label);
    fn += cm.at(label, i);
  }
  const std::uint64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return double(tp) / double(denom);
}

inline std::vector<std::optional<double>> per_label_iou(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out;
  for (int i = 0; i < cm.n; ++i) out.push_back(iou(cm, i));
  return out;
}

inline double overall_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t t = cm.total();
  if (t == 0) throw ContractError("accuracy of an empty confusion matrix");
  return double(cm.diagonal()) / double(t);
}

/// Mean IoU over the labels where it is defined.
inline std::optional<double> mean_iou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int k = 0;
  for (const auto& v : per_label_iou(cm))
    if (v) {
      sum += *v;
      ++k;
    }
  if (k == 0) return std::nullopt;
  return sum / double(k);
}

inline nlohmann::json report_to_json(const ConfusionMatrix& cm,
                                     const std::vector<std::string>& label_names) {
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < cm.n; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < cm.n; ++p) row.push_back(cm.at(t, p));
    rows.push_back(std::move(row));
  }
  nlohmann::json ious = nlohmann::json::object();
  const auto pli = per_label_iou(cm);
  for (int i = 0; i < cm.n; ++i) {
    if (pli[std::size_t(i)])
      ious[label_names[std::size_t(i)]] = *pli[std::size_t(i)];
    else
      ious[label_names[std::size_t(i)]] = nullptr;
  }
  nlohmann::json j{{"labels", label_names},
                   {"confusion", std::move(rows)},
                   {"iou", std::move(ious)},
                   {"overall_accuracy", overall_accuracy(cm)}};
  if (const auto mi = mean_iou(cm)) j["mean_iou"] = *mi;
  return j;
}

inline void render_report(const ConfusionMatrix& cm, const std::vector<std::string>& label_names,
                          std::ostream& os) {
  if (int(label_names.size()) != cm.n)
    throw ContractError("label name count does not match the confusion matrix");
  std::size_t w = 9;
  for (const auto& n : label_names) w = std::max(w, n.size() + 1);

  os << std::setw(int(w)) << "truth\\pred";
  for (const auto& n : label_names) os << std::setw(int(w)) << n;
  os << "\n";
  for (int t = 0; t < cm.n; ++t) {
    os << std::setw(int(w)) << label_names[std::size_t(t)];
    for (int p = 0; p < cm.n; ++p) os << std::setw(int(w)) << cm.at(t, p);
    os << "\n";
  }
  os << "\n";
  const auto pli = per_label_iou(cm);
  for (int i = 0; i < cm.n; ++i) {
    os << "iou " << label_names[std::size_t(i)] << ": ";
    if (pli[std::size_t(i)])
      os << std::fixed << std::setprecision(4) << *pli[std::size_t(i)] << "\n";
    else
      os << "n/a (label absent)\n";
  }
  if (const auto mi = mean_iou(cm))
    os << "mean iou: " << std::fixed << std::setprecision(4) << *mi << "\n";
  os << "overall accuracy: " << std::fixed << std::setprecision(4) << overall_accuracy(cm)
     << "\n";
}

}  // namespace voxseg
