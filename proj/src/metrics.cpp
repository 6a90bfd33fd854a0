#include "lst/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lst::metrics {

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t predicted) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < classes_; ++j) t += at(predicted, j);
  return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t truth) const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) t += at(i, truth);
  return t;
}

void ConfusionMatrix::accumulate(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("accumulate: " + std::to_string(predicted.size()) + " predictions but " +
                                std::to_string(truth.size()) + " labels");
  }
  const auto bad = [this](int v) { return v < 0 || static_cast<std::size_t>(v) >= classes_; };
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (bad(predicted[i]) || bad(truth[i])) {
      throw std::invalid_argument("accumulate: class index out of range at position " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++counts_[static_cast<std::size_t>(predicted[i]) * classes_ + static_cast<std::size_t>(truth[i])];
  }
}

void ConfusionMatrix::add(std::size_t predicted, std::size_t truth, std::uint64_t n) {
  if (predicted >= classes_ || truth >= classes_) throw std::invalid_argument("add: class index out of range");
  counts_[predicted * classes_ + truth] += n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

SegmentationMetrics derive_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("derive_metrics: confusion matrix is empty");
  const auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  SegmentationMetrics m;
  double trace = 0.0, iou_sum = 0.0, f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto row = static_cast<double>(cm.row_sum(c));
    const auto col = static_cast<double>(cm.col_sum(c));
    ClassMetrics k;
    k.precision = ratio(tp, row);
    k.recall = ratio(tp, col);
    k.f1 = f1_score(k.precision, k.recall);
    k.iou = ratio(tp, row + col - tp);
    k.present = row + col > 0.0;
    trace += tp;
    if (k.present) {
      ++present;
      iou_sum += k.iou;
      f1_sum += k.f1;
    }
    m.per_class.push_back(k);
  }
  m.overall_accuracy = trace / static_cast<double>(total);
  m.mean_iou = iou_sum / static_cast<double>(present);
  m.average_f1 = f1_sum / static_cast<double>(present);
  return m;
}

double measure_latency(const std::function<void()>& forward, std::size_t repetitions) {
  if (repetitions < 1) throw std::invalid_argument("measure_latency: repetitions must be at least 1");
  forward();
  std::vector<double> ms;
  ms.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    forward();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  return ms.size() % 2 == 1 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
}

void write_metrics_csv(std::ostream& os, const SegmentationMetrics& m, const std::vector<std::string>& names) {
  os << "class,precision,recall,f1,iou\n" << std::fixed << std::setprecision(6);
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& k = m.per_class[c];
    os << (c < names.size() ? names[c] : std::to_string(c)) << ',' << k.precision << ',' << k.recall << ','
       << k.f1 << ',' << k.iou << '\n';
  }
  os << "OA," << m.overall_accuracy << ",,,\n";
  os << "mIoU," << m.mean_iou << ",,,\n";
  os << "avgF1," << m.average_f1 << ",,,\n";
}

std::string format_report(const ConfusionMatrix& cm, const SegmentationMetrics& m,
                          const std::vector<std::string>& names) {
  const std::size_t c = cm.classes();
  auto name = [&](std::size_t i) { return i < names.size() ? names[i] : "class" + std::to_string(i); };
  std::size_t label_w = 10;
  for (std::size_t i = 0; i < c; ++i) label_w = std::max(label_w, name(i).size() + 1);
  std::size_t col_w = 9;
  for (std::size_t i = 0; i < c; ++i) col_w = std::max(col_w, name(i).size() + 2);

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_w)) << "Categories";
  for (std::size_t j = 0; j < c; ++j) os << std::right << std::setw(static_cast<int>(col_w)) << name(j);
  os << '\n' << std::string(label_w + c * col_w, '-') << '\n' << std::fixed << std::setprecision(1);
  for (std::size_t i = 0; i < c; ++i) {
    os << std::left << std::setw(static_cast<int>(label_w)) << name(i);
    for (std::size_t j = 0; j < c; ++j) {
      const auto col = static_cast<double>(cm.col_sum(j));
      const double pct = col > 0.0 ? 100.0 * static_cast<double>(cm.at(i, j)) / col : 0.0;
      os << std::right << std::setw(static_cast<int>(col_w)) << pct;
    }
    os << '\n';
  }
  os << std::string(label_w + c * col_w, '-') << '\n';
  const auto metric_row = [&](const char* label, double ClassMetrics::*field) {
    os << std::left << std::setw(static_cast<int>(label_w)) << label;
    for (const auto& k : m.per_class) os << std::right << std::setw(static_cast<int>(col_w)) << 100.0 * (k.*field);
    os << '\n';
  };
  metric_row("Precision", &ClassMetrics::precision);
  metric_row("Recall", &ClassMetrics::recall);
  metric_row("F1", &ClassMetrics::f1);
  metric_row("IoU", &ClassMetrics::iou);
  os << std::string(label_w + c * col_w, '-') << '\n';
  os << "OA " << 100.0 * m.overall_accuracy << "  mIoU " << 100.0 * m.mean_iou << "  avgF1 "
     << 100.0 * m.average_f1 << '\n';
  return os.str();
}

}  // namespace lst::metrics
