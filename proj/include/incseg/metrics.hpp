#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incseg/common.hpp"
#include "incseg/taxonomy.hpp"

namespace incseg {

// Square count matrix, rows = ground truth, columns = prediction. Unlabeled
// ground-truth points are never recorded. Matrices over the same class set
// merge by elementwise addition.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<ClassId> classes);

  const std::vector<ClassId>& classes() const { return classes_; }
  std::uint64_t count(ClassId truth, ClassId pred) const;
  std::uint64_t total() const;
  bool has_class(ClassId c) const { return index_of(c) >= 0; }

  void add(ClassId truth, ClassId pred, std::uint64_t n = 1);
  void merge(const ConfusionMatrix& other);

  std::uint64_t row_sum(ClassId c) const;   // ground-truth occurrences
  std::uint64_t col_sum(ClassId c) const;   // predictions
  std::uint64_t diagonal(ClassId c) const;  // true positives

  // Sums rows/columns of classes that share a target class; used to score a
  // fine-grained matrix at a coarser hierarchy level.
  ConfusionMatrix aggregate(const std::vector<ClassId>& target_classes,
                            const std::vector<ClassId>& class_of_source) const;

 private:
  std::vector<ClassId> classes_;
  std::vector<std::uint64_t> counts_;
  std::array<int, 256> index_{};

  int index_of(ClassId c) const { return index_[c] - 1; }
};

void accumulate(ConfusionMatrix& cm, std::span<const ClassId> truth,
                std::span<const ClassId> pred);

// TP / (TP + FP + FN); empty when the class appears in neither truth nor
// prediction.
std::optional<double> iou(const ConfusionMatrix& cm, ClassId c);

struct StepReport {
  std::size_t step = 0;
  std::string scenario;
  std::vector<ClassId> eval_classes;          // semantic classes scored
  std::vector<std::optional<double>> per_class_iou;  // aligned to eval_classes
  std::vector<double> miou_steps;  // mIoU over C_j for each j <= step
  double miou = 0.0;               // headline mIoU over the evaluated classes
  double pa = 0.0;                 // point accuracy, trace / total
  double pp = 0.0;                 // point precision, mean TP/(TP+FP)
  double sigma = 0.0;              // population std-dev of the per-class IoUs
  ConfusionMatrix confusion;
  std::uint64_t inpaint_candidates = 0;
  std::uint64_t inpaint_inpainted = 0;
};

// Derives every metric from the confusion matrix. The matrix may carry a
// background row/column; background never enters the class means. Classes of
// C_j that occur in the ground truth but that the model never predicts score
// an IoU of 0; classes absent from both sides are skipped.
//
// For taxonomies with a hierarchy (coarse-to-fine runs), the per-step mIoU
// values for earlier steps are computed by aggregating the matrix up the
// hierarchy, which is exact on counts.
StepReport make_report(const ConfusionMatrix& cm, const ClassTaxonomy& tax,
                       std::size_t step, bool coarse_to_fine);

std::string report_to_json(const StepReport& report, const ClassTaxonomy& tax);
StepReport report_from_json(const std::string& text, const std::string& origin);
std::string report_csv_row_header(std::size_t num_steps);
std::string report_csv_row(const StepReport& report, std::size_t num_steps);
std::string report_text_table(std::span<const StepReport> reports,
                              const ClassTaxonomy& tax);
std::string per_class_csv(const StepReport& report, const ClassTaxonomy& tax);

}  // namespace incseg
