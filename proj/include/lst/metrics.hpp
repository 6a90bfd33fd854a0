#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lst::metrics {

/// counts(p, t): points predicted as p whose true class is t. Column-normalised
/// entries put recall on the diagonal.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t predicted, std::size_t truth) const { return counts_[predicted * classes_ + truth]; }
  std::uint64_t total() const noexcept;
  std::uint64_t row_sum(std::size_t predicted) const;
  std::uint64_t col_sum(std::size_t truth) const;

  /// Throws std::invalid_argument on unequal lengths or an index out of range;
  /// the matrix is unchanged on error.
  void accumulate(std::span<const int> predicted, std::span<const int> truth);
  void add(std::size_t predicted, std::size_t truth, std::uint64_t n = 1);

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  bool present = false;  // appears as prediction or truth
};

struct SegmentationMetrics {
  double overall_accuracy = 0.0;
  double mean_iou = 0.0;
  double average_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

/// Throws std::invalid_argument for an empty matrix. 0/0 ratios are 0 and
/// classes absent from both predictions and truth are left out of the means.
SegmentationMetrics derive_metrics(const ConfusionMatrix& cm);

/// Median wall-clock milliseconds of `repetitions` calls after one warm-up call.
double measure_latency(const std::function<void()>& forward, std::size_t repetitions);

void write_metrics_csv(std::ostream& os, const SegmentationMetrics& m, const std::vector<std::string>& names);

/// Confusion matrix in column percentages followed by precision, recall and F1
/// rows and an OA / mIoU / average F1 footer.
std::string format_report(const ConfusionMatrix& cm, const SegmentationMetrics& m,
                          const std::vector<std::string>& names);

}  // namespace lst::metrics
