#include "orchard/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "orchard/errors.hpp"
#include "orchard/trainer.hpp"

namespace orchard {

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts)
    for (std::size_t v : row) t += v;
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) t += counts[k][k];
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t k) const {
  std::size_t s = 0;
  for (std::size_t v : counts.at(k)) s += v;
  return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t k) const {
  std::size_t s = 0;
  for (const auto& row : counts) s += row.at(k);
  return s;
}

namespace {
std::vector<std::string> default_names(std::vector<std::string> names, std::size_t c) {
  if (names.empty()) {
    for (std::size_t i = 0; i < c; ++i) names.push_back("class" + std::to_string(i));
  }
  if (names.size() != c) throw ShapeError("class name count does not match the confusion matrix size");
  return names;
}
}  // namespace

ConfusionMatrix confusion_matrix(std::span<const std::size_t> actual, std::span<const std::size_t> predicted,
                                 std::size_t num_classes, std::vector<std::string> class_names) {
  if (actual.size() != predicted.size()) {
    throw ShapeError("confusion_matrix: " + std::to_string(actual.size()) + " actual vs " +
                     std::to_string(predicted.size()) + " predicted labels");
  }
  ConfusionMatrix cm;
  cm.class_names = default_names(std::move(class_names), num_classes);
  cm.counts.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] >= num_classes || predicted[i] >= num_classes) {
      throw ShapeError("confusion_matrix: class index out of range at sample " + std::to_string(i));
    }
    ++cm.counts[actual[i]][predicted[i]];
  }
  return cm;
}

ConfusionMatrix confusion_from_counts(std::vector<std::vector<std::size_t>> counts,
                                      std::vector<std::string> class_names) {
  for (const auto& row : counts) {
    if (row.size() != counts.size()) throw ShapeError("confusion matrix must be square");
  }
  ConfusionMatrix cm;
  cm.class_names = default_names(std::move(class_names), counts.size());
  cm.counts = std::move(counts);
  return cm;
}

ClassMetrics compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw DataError("cannot compute metrics of an empty confusion matrix");
  ClassMetrics m;
  m.class_names = cm.class_names;
  m.total = total;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  const std::size_t c = cm.num_classes();
  for (std::size_t k = 0; k < c; ++k) {
    ClassScore s;
    const double tp = static_cast<double>(cm.counts[k][k]);
    const std::size_t col = cm.col_sum(k), row = cm.row_sum(k);
    s.precision = col ? tp / static_cast<double>(col) : 0.0;
    s.recall = row ? tp / static_cast<double>(row) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.support = row;
    m.per_class.push_back(s);
    m.macro_precision += s.precision / static_cast<double>(c);
    m.macro_recall += s.recall / static_cast<double>(c);
    m.macro_f1 += s.f1 / static_cast<double>(c);
  }
  return m;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The nudge keeps exact decimal halves (0.945 stored as 0.94499...) rounding up.
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

double truncate_decimals(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 1e-9) / scale;
}

ReportAudit audit_reported_figures(const ConfusionMatrix& cm, double reported_accuracy, std::size_t reported_total,
                                   double tolerance) {
  ReportAudit a;
  a.computed_total = cm.total();
  a.computed_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(a.computed_total);
  a.reported_accuracy = reported_accuracy;
  a.reported_total = reported_total;
  a.accuracy_consistent = std::abs(a.computed_accuracy - reported_accuracy) <= tolerance;
  a.total_consistent = a.computed_total == reported_total;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "counts give %zu/%zu = %.4f; reported accuracy %.4f (%s), reported total %zu (%s)",
                cm.trace(), a.computed_total, a.computed_accuracy, reported_accuracy,
                a.accuracy_consistent ? "consistent" : "MISMATCH", reported_total,
                a.total_consistent ? "consistent" : "MISMATCH");
  a.note = buf;
  return a;
}

EvaluationReport evaluate_model(const ModelGraph& model, const LabeledImageSet& set, std::size_t batch_size) {
  if (set.classes != model.class_names()) {
    std::string msg = "dataset classes [";
    for (const auto& c : set.classes) msg += c + ",";
    msg += "] do not match model classes [";
    for (const auto& c : model.class_names()) msg += c + ",";
    throw DataError(msg + "]");
  }
  if (set.size() == 0) throw DataError("evaluation set is empty");
  const Tensor probs = predict_probs(model, set, batch_size);
  const std::size_t c = model.num_classes();
  EvaluationReport report;
  std::vector<std::size_t> actual, predicted;
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::span<const float> row(probs.raw() + i * c, c);
    PredictionLogRow log;
    log.source_path = set.records[i].source_path;
    log.actual = set.class_of(i);
    log.predicted = argmax(row);
    log.max_prob = row[log.predicted];
    actual.push_back(log.actual);
    predicted.push_back(log.predicted);
    report.log.push_back(std::move(log));
  }
  report.confusion = confusion_matrix(actual, predicted, c, set.classes);
  report.metrics = compute_metrics(report.confusion);
  return report;
}

namespace {
std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}
}  // namespace

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "actual\\predicted";
  for (const auto& n : cm.class_names) out << "," << csv_field(n);
  out << "\n";
  for (std::size_t a = 0; a < cm.num_classes(); ++a) {
    out << csv_field(cm.class_names[a]);
    for (std::size_t v : cm.counts[a]) out << "," << v;
    out << "\n";
  }
}

void write_metrics_json(const ClassMetrics& metrics, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["accuracy"] = metrics.accuracy;
  j["total"] = metrics.total;
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < metrics.per_class.size(); ++k) {
    const ClassScore& s = metrics.per_class[k];
    classes.push_back({{"class", metrics.class_names[k]},
                       {"precision", s.precision},
                       {"recall", s.recall},
                       {"f1", s.f1},
                       {"support", s.support},
                       {"rounded", {{"precision", round_half_up(s.precision, 2)},
                                    {"recall", round_half_up(s.recall, 2)},
                                    {"f1", round_half_up(s.f1, 2)}}}});
  }
  j["per_class"] = classes;
  j["macro_average"] = {{"precision", metrics.macro_precision},
                        {"recall", metrics.macro_recall},
                        {"f1", metrics.macro_f1}};
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_predictions_csv(const EvaluationReport& report, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "source_path,actual,predicted,max_prob\n";
  const auto& names = report.confusion.class_names;
  char prob[32];
  for (const auto& row : report.log) {
    std::snprintf(prob, sizeof(prob), "%.9g", row.max_prob);
    out << csv_field(row.source_path) << "," << csv_field(names[row.actual]) << "," << csv_field(names[row.predicted])
        << "," << prob << "\n";
  }
}

}  // namespace orchard
