#pragma once

#include <array>
#include <string>
#include <vector>

#include "del/data.hpp"
#include "del/tensor.hpp"

namespace del {

struct ClassPRF {
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Challenge-style scores: micro-averaged over happy/sad/angry only, so
// `others` rows count solely through confusions with an emotion class.
struct EvalReport {
  int n = 0;
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double accuracy = 0.0;  // plain 4-way accuracy, reported for context
  std::array<ClassPRF, 3> per_class;  // happy, sad, angry
};

// Zero denominators yield 0 scores, never NaN. Throws on empty or
// mismatched inputs.
EvalReport micro_f1(const std::vector<Label>& gold,
                    const std::vector<Label>& pred);

std::array<ClassPRF, 3> per_class_f1(const std::vector<Label>& gold,
                                     const std::vector<Label>& pred);

// Pearson correlation of two real vectors; NaN (with a stderr warning)
// when either side has zero variance.
double pearson_raw(const std::vector<double>& x, const std::vector<double>& y);

// Agreement between two prediction vectors: each is expanded to one-hot
// rows over the 4 labels, flattened to length 4n, then correlated.
double pearson_agreement(const std::vector<Label>& a,
                         const std::vector<Label>& b);

// Symmetric matrix of pairwise agreements with a unit diagonal.
Tensor agreement_matrix(const std::vector<std::vector<Label>>& preds);

std::string eval_report_json(const EvalReport& report);

}  // namespace del
