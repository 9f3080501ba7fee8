#include "atr/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include "atr/error.hpp"

namespace atr {

Confusion::Confusion(int num_labels) : num_labels_(num_labels) {
  if (num_labels < 1 || num_labels > 255) throw ValidationError("label count must be in 1..255");
  counts_.assign(static_cast<std::size_t>(num_labels + 1) * (num_labels + 1), 0);
}

std::uint64_t Confusion::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t Confusion::row(int truth) const {
  std::uint64_t t = 0;
  for (int p = 0; p <= num_labels_; ++p) t += at(truth, p);
  return t;
}

std::uint64_t Confusion::col(int predicted) const {
  std::uint64_t t = 0;
  for (int g = 0; g <= num_labels_; ++g) t += at(g, predicted);
  return t;
}

void Confusion::accumulate(const LabelMap& predicted, const LabelMap& truth) {
  if (predicted.width() != truth.width() || predicted.height() != truth.height())
    throw ValidationError("prediction is " + std::to_string(predicted.width()) + "x" +
                          std::to_string(predicted.height()) + " but ground truth is " +
                          std::to_string(truth.width()) + "x" + std::to_string(truth.height()));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int g = truth[i], p = predicted[i];
    if (g > num_labels_ || p > num_labels_)
      throw ValidationError("label value " + std::to_string(std::max(g, p)) + " exceeds K=" +
                            std::to_string(num_labels_));
    ++counts_[static_cast<std::size_t>(g) * (num_labels_ + 1) + p];
  }
}

Confusion& Confusion::operator+=(const Confusion& other) {
  if (other.num_labels_ != num_labels_) throw ValidationError("confusion label counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

Metrics compute_metrics(const Confusion& c, bool include_background) {
  const std::uint64_t total = c.total();
  if (total == 0) throw ValidationError("metrics of an empty confusion matrix");
  const int k = c.num_labels();
  Metrics m;
  std::uint64_t diag = 0, fg_diag = 0, fg_rows = 0;
  m.precision.assign(static_cast<std::size_t>(k) + 1, 0.0);
  m.recall = m.f1 = m.precision;
  for (int l = 0; l <= k; ++l) {
    const std::uint64_t d = c.at(l, l), row = c.row(l), col = c.col(l);
    diag += d;
    if (l > 0) fg_diag += d, fg_rows += row;
    const double p = col ? static_cast<double>(d) / col : 0.0;
    const double r = row ? static_cast<double>(d) / row : 0.0;
    m.precision[l] = p;
    m.recall[l] = r;
    m.f1[l] = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    if (row > 0 && (l > 0 || include_background)) m.averaged_labels.push_back(l);
  }
  m.accuracy = static_cast<double>(diag) / static_cast<double>(total);
  if (fg_rows > 0) m.foreground_accuracy = static_cast<double>(fg_diag) / static_cast<double>(fg_rows);
  if (!m.averaged_labels.empty()) {
    for (int l : m.averaged_labels) {
      m.avg_precision += m.precision[l];
      m.avg_recall += m.recall[l];
      m.avg_f1 += m.f1[l];
    }
    const double n = static_cast<double>(m.averaged_labels.size());
    m.avg_precision /= n;
    m.avg_recall /= n;
    m.avg_f1 /= n;
  }
  return m;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string label_name(const std::vector<std::string>& names, int l) {
  return l < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(l)] : "label" + std::to_string(l);
}

}  // namespace

std::string format_report(const Metrics& m, const std::vector<std::string>& names) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-16s %-16s %-14s %-14s\n", "Accuracy", "F.g. accuracy",
                "Avg. precision", "Avg. recall", "Avg. F-1 score");
  out << line;
  const std::string fg = m.foreground_accuracy ? pct(*m.foreground_accuracy) : "n/a";
  std::snprintf(line, sizeof line, "%-10s %-16s %-16s %-14s %-14s\n", pct(m.accuracy).c_str(), fg.c_str(),
                pct(m.avg_precision).c_str(), pct(m.avg_recall).c_str(), pct(m.avg_f1).c_str());
  out << line << "\n";
  std::snprintf(line, sizeof line, "%-16s %10s %10s %10s\n", "label", "precision", "recall", "F-1");
  out << line;
  for (int l : m.averaged_labels) {
    std::snprintf(line, sizeof line, "%-16s %10s %10s %10s\n", label_name(names, l).c_str(),
                  pct(m.precision[l]).c_str(), pct(m.recall[l]).c_str(), pct(m.f1[l]).c_str());
    out << line;
  }
  return out.str();
}

std::string format_report_csv(const Metrics& m, const std::vector<std::string>& names) {
  std::ostringstream out;
  out.precision(10);
  out << "accuracy,fg_accuracy,avg_precision,avg_recall,avg_f1\n"
      << m.accuracy << ',';
  if (m.foreground_accuracy) out << *m.foreground_accuracy;
  out << ',' << m.avg_precision << ',' << m.avg_recall << ',' << m.avg_f1 << "\n"
      << "label,name,precision,recall,f1\n";
  for (int l : m.averaged_labels)
    out << l << ',' << label_name(names, l) << ',' << m.precision[l] << ',' << m.recall[l] << ',' << m.f1[l] << "\n";
  return out.str();
}

}  // namespace atr
