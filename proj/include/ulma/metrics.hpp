// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace ulma {

struct ClassMetrics {
  int64_t tp = 0, fp = 0, fn = 0;
  int64_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  int num_classes = 0;
  int64_t total = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [truth][prediction]
  std::vector<ClassMetrics> per_class;
};

// Precision tp/(tp+fp), recall tp/(tp+fn), F1 as the harmonic mean
// 2/(1/recall + 1/precision); each is zero when its denominator is zero.
// Macro-F1 averages over all classes, present or not.
EvalReport evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                    int num_classes);

nlohmann::json report_json(const EvalReport& report, const std::vector<std::string>& class_names);

// Flat rows: fold,class,precision,recall,f1,macro_f1 (fold < 0 omits the
// aggregate marker and writes the fold column blank).
std::string report_csv_header();
std::string report_csv_rows(const EvalReport& report, const std::vector<std::string>& class_names,
                            int fold);

}  // namespace ulma
