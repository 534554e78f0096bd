#include "del/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace del {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double p, double r) { return safe_div(2.0 * p * r, p + r); }

void check_pair(const std::vector<Label>& gold,
                const std::vector<Label>& pred) {
  if (gold.empty()) throw std::invalid_argument("micro_f1: empty input");
  if (gold.size() != pred.size())
    throw std::invalid_argument("micro_f1: gold/pred size mismatch");
}

}  // namespace

std::array<ClassPRF, 3> per_class_f1(const std::vector<Label>& gold,
                                     const std::vector<Label>& pred) {
  check_pair(gold, pred);
  std::array<ClassPRF, 3> out;
  for (size_t c = 0; c < kEmotionClasses.size(); ++c) {
    Label cls = kEmotionClasses[c];
    ClassPRF& s = out[c];
    for (size_t i = 0; i < gold.size(); ++i) {
      bool g = gold[i] == cls, p = pred[i] == cls;
      if (g && p) ++s.tp;
      if (!g && p) ++s.fp;
      if (g && !p) ++s.fn;
    }
    s.precision = safe_div(static_cast<double>(s.tp),
                           static_cast<double>(s.tp + s.fp));
    s.recall = safe_div(static_cast<double>(s.tp),
                        static_cast<double>(s.tp + s.fn));
    s.f1 = f1_of(s.precision, s.recall);
  }
  return out;
}

EvalReport micro_f1(const std::vector<Label>& gold,
                    const std::vector<Label>& pred) {
  check_pair(gold, pred);
  EvalReport r;
  r.n = static_cast<int>(gold.size());
  r.per_class = per_class_f1(gold, pred);
  for (const ClassPRF& s : r.per_class) {
    r.tp += s.tp;
    r.fp += s.fp;
    r.fn += s.fn;
  }
  r.precision =
      safe_div(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fp));
  r.recall =
      safe_div(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fn));
  r.f1 = f1_of(r.precision, r.recall);
  long hits = 0;
  for (size_t i = 0; i < gold.size(); ++i)
    if (gold[i] == pred[i]) ++hits;
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.n);
  return r;
}

double pearson_raw(const std::vector<double>& x,
                   const std::vector<double>& y) {
  if (x.empty() || x.size() != y.size())
    throw std::invalid_argument("pearson: empty or mismatched vectors");
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  double vx = sxx - sx * sx / n;
  double vy = syy - sy * sy / n;
  if (vx <= 0.0 || vy <= 0.0) {
    std::fprintf(stderr,
                 "warning: pearson undefined for zero-variance input\n");
    return std::numeric_limits<double>::quiet_NaN();
  }
  return (sxy - sx * sy / n) / std::sqrt(vx * vy);
}

double pearson_agreement(const std::vector<Label>& a,
                         const std::vector<Label>& b) {
  check_pair(a, b);
  std::vector<double> x(a.size() * kNumLabels, 0.0);
  std::vector<double> y(b.size() * kNumLabels, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    x[i * kNumLabels + static_cast<size_t>(a[i])] = 1.0;
    y[i * kNumLabels + static_cast<size_t>(b[i])] = 1.0;
  }
  return pearson_raw(x, y);
}

Tensor agreement_matrix(const std::vector<std::vector<Label>>& preds) {
  if (preds.empty()) throw std::invalid_argument("agreement_matrix: no inputs");
  int m = static_cast<int>(preds.size());
  for (const auto& p : preds)
    if (p.size() != preds[0].size())
      throw std::invalid_argument("agreement_matrix: length mismatch");
  Tensor out({m, m});
  for (int i = 0; i < m; ++i) {
    out(i, i) = 1.0;
    for (int j = i + 1; j < m; ++j) {
      double r = pearson_agreement(preds[static_cast<size_t>(i)],
                                   preds[static_cast<size_t>(j)]);
      out(i, j) = r;
      out(j, i) = r;
    }
  }
  return out;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  j["tp"] = report.tp;
  j["fp"] = report.fp;
  j["fn"] = report.fn;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["micro_f1"] = report.f1;
  j["accuracy"] = report.accuracy;
  for (size_t c = 0; c < kEmotionClasses.size(); ++c) {
    const ClassPRF& s = report.per_class[c];
    nlohmann::json e;
    e["tp"] = s.tp;
    e["fp"] = s.fp;
    e["fn"] = s.fn;
    e["precision"] = s.precision;
    e["recall"] = s.recall;
    e["f1"] = s.f1;
    j["per_class"][label_to_string(kEmotionClasses[c])] = e;
  }
  return j.dump(2);
}

}  // namespace del
