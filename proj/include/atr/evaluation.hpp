#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "atr/image.hpp"

namespace atr {

// (K+1) x (K+1) pixel counts, rows = ground truth, columns = prediction.
class Confusion {
 public:
  explicit Confusion(int num_labels);

  [[nodiscard]] int num_labels() const { return num_labels_; }
  [[nodiscard]] std::uint64_t at(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * (num_labels_ + 1) + predicted];
  }
  [[nodiscard]] std::uint64_t total() const;
  [[nodiscard]] std::uint64_t row(int truth) const;
  [[nodiscard]] std::uint64_t col(int predicted) const;

  // Throws on dims mismatch or values above K.
  void accumulate(const LabelMap& predicted, const LabelMap& truth);
  Confusion& operator+=(const Confusion& other);
  friend bool operator==(const Confusion&, const Confusion&) = default;

 private:
  int num_labels_;
  std::vector<std::uint64_t> counts_;
};

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> foreground_accuracy;  // absent when no foreground in truth
  std::vector<double> precision;              // index 0..K
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<int> averaged_labels;           // labels with row > 0 that enter the averages
  double avg_precision = 0.0;
  double avg_recall = 0.0;
  double avg_f1 = 0.0;
};

// Averages are unweighted over labels present in the ground truth; the
// background joins them only when include_background is set.
Metrics compute_metrics(const Confusion& confusion, bool include_background = false);

// Accuracy / F.g. accuracy / Avg. precision / Avg. recall / Avg. F-1 score,
// followed by a per-label table. Values in percent.
std::string format_report(const Metrics& metrics, const std::vector<std::string>& names);
std::string format_report_csv(const Metrics& metrics, const std::vector<std::string>& names);

}  // namespace atr
