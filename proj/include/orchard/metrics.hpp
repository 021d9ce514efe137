#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "orchard/dataset.hpp"
#include "orchard/model.hpp"

namespace orchard {

/// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t num_classes() const { return counts.size(); }
  std::size_t total() const;
  std::size_t trace() const;
  std::size_t row_sum(std::size_t k) const;
  std::size_t col_sum(std::size_t k) const;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> actual, std::span<const std::size_t> predicted,
                                 std::size_t num_classes, std::vector<std::string> class_names = {});
/// Square count table; names default to class0, class1, ...
ConfusionMatrix confusion_from_counts(std::vector<std::vector<std::size_t>> counts,
                                      std::vector<std::string> class_names = {});

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassMetrics {
  std::vector<std::string> class_names;
  std::vector<ClassScore> per_class;
  double accuracy = 0.0;
  std::size_t total = 0;
  // Unweighted means over classes.
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Zero denominators give 0. Throws DataError on an empty matrix.
ClassMetrics compute_metrics(const ConfusionMatrix& cm);

double round_half_up(double value, int decimals);
double truncate_decimals(double value, int decimals);

/// Cross-checks a matrix against separately reported accuracy and sample count.
struct ReportAudit {
  double computed_accuracy = 0.0;
  std::size_t computed_total = 0;
  double reported_accuracy = 0.0;
  std::size_t reported_total = 0;
  bool accuracy_consistent = true;
  bool total_consistent = true;
  std::string note;

  bool consistent() const { return accuracy_consistent && total_consistent; }
};
ReportAudit audit_reported_figures(const ConfusionMatrix& cm, double reported_accuracy, std::size_t reported_total,
                                   double tolerance = 5e-5);

struct PredictionLogRow {
  std::string source_path;
  std::size_t actual = 0;
  std::size_t predicted = 0;
  double max_prob = 0.0;
};

struct EvaluationReport {
  ConfusionMatrix confusion;
  ClassMetrics metrics;
  std::vector<PredictionLogRow> log;
};

/// Actual class = argmax of the record label; throws DataError when the
/// dataset's classes differ from the model's.
EvaluationReport evaluate_model(const ModelGraph& model, const LabeledImageSet& set, std::size_t batch_size = 32);

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);
void write_metrics_json(const ClassMetrics& metrics, const std::filesystem::path& path);
void write_predictions_csv(const EvaluationReport& report, const std::filesystem::path& path);

}  // namespace orchard
