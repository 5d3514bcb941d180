// SPDX-License-Identifier: Apache-2.0
#include "ulma/metrics.hpp"

#include <sstream>

#include "ulma/errors.hpp"

namespace ulma {

EvalReport evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                    int num_classes) {
  if (num_classes < 2) throw UsageError("evaluate: num_classes must be >= 2");
  if (truth.size() != predicted.size()) {
    throw DataError("evaluate: " + std::to_string(truth.size()) + " labels vs " +
                    std::to_string(predicted.size()) + " predictions");
  }
  if (truth.empty()) throw DataError("evaluate: nothing to score");

  EvalReport r;
  r.num_classes = num_classes;
  r.total = static_cast<int64_t>(truth.size());
  r.confusion.assign(static_cast<size_t>(num_classes),
                     std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
  for (size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw DataError("evaluate: class index outside 0.." + std::to_string(num_classes - 1));
    }
    ++r.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)];
  }

  int64_t correct = 0;
  double f1_sum = 0.0;
  r.per_class.resize(static_cast<size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    ClassMetrics& m = r.per_class[static_cast<size_t>(k)];
    m.tp = r.confusion[static_cast<size_t>(k)][static_cast<size_t>(k)];
    correct += m.tp;
    for (int j = 0; j < num_classes; ++j) {
      if (j == k) continue;
      m.fn += r.confusion[static_cast<size_t>(k)][static_cast<size_t>(j)];
      m.fp += r.confusion[static_cast<size_t>(j)][static_cast<size_t>(k)];
    }
    m.support = m.tp + m.fn;
    m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp)
                                    : 0.0;
    m.recall = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn)
                                 : 0.0;
    m.f1 = (m.precision > 0.0 && m.recall > 0.0)
               ? 2.0 / (1.0 / m.recall + 1.0 / m.precision)
               : 0.0;
    f1_sum += m.f1;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  r.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return r;
}

nlohmann::json report_json(const EvalReport& report, const std::vector<std::string>& class_names) {
  if (static_cast<int>(class_names.size()) != report.num_classes) {
    throw InternalError("report_json: class name count mismatch");
  }
  nlohmann::json per_class = nlohmann::json::object();
  for (int k = 0; k < report.num_classes; ++k) {
    const ClassMetrics& m = report.per_class[static_cast<size_t>(k)];
    per_class[class_names[static_cast<size_t>(k)]] = {
        {"precision", m.precision}, {"recall", m.recall},   {"f1", m.f1},
        {"support", m.support},     {"tp", m.tp},           {"fp", m.fp},
        {"fn", m.fn}};
  }
  return nlohmann::json{{"total", report.total},
                        {"accuracy", report.accuracy},
                        {"macro_f1", report.macro_f1},
                        {"per_class", per_class},
                        {"confusion", report.confusion},
                        {"classes", class_names}};
}

std::string report_csv_header() { return "fold,class,precision,recall,f1,macro_f1\n"; }

std::string report_csv_rows(const EvalReport& report, const std::vector<std::string>& class_names,
                            int fold) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  const std::string fold_field = fold < 0 ? std::string() : std::to_string(fold);
  for (int k = 0; k < report.num_classes; ++k) {
    const ClassMetrics& m = report.per_class[static_cast<size_t>(k)];
    out << fold_field << ',' << class_names[static_cast<size_t>(k)] << ',' << m.precision << ','
        << m.recall << ',' << m.f1 << ',' << report.macro_f1 << '\n';
  }
  return out.str();
}

}  // namespace ulma
