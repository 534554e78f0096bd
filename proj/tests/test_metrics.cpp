#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <vector>

#include "del/data.hpp"
#include "del/metrics.hpp"
#include "del/rng.hpp"
#include "doctest.h"

#include <json.hpp>

using namespace del;

namespace {

// Independent oracle: full 4x4 confusion matrix, then micro scores over
// the emotion rows/columns.
struct Oracle {
  long conf[4][4] = {};
  long tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

Oracle oracle_scores(const std::vector<Label>& gold,
                     const std::vector<Label>& pred) {
  Oracle o;
  for (size_t i = 0; i < gold.size(); ++i)
    ++o.conf[static_cast<int>(gold[i])][static_cast<int>(pred[i])];
  for (int c = 0; c < 3; ++c) {
    o.tp += o.conf[c][c];
    for (int g = 0; g < 4; ++g)
      if (g != c) o.fp += o.conf[g][c];
    for (int p = 0; p < 4; ++p)
      if (p != c) o.fn += o.conf[c][p];
  }
  o.precision = o.tp + o.fp == 0 ? 0.0 : double(o.tp) / double(o.tp + o.fp);
  o.recall = o.tp + o.fn == 0 ? 0.0 : double(o.tp) / double(o.tp + o.fn);
  o.f1 = o.precision + o.recall == 0.0
             ? 0.0
             : 2 * o.precision * o.recall / (o.precision + o.recall);
  return o;
}

double oracle_pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
  double n = double(x.size()), mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double cxy = 0, cxx = 0, cyy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    cxy += (x[i] - mx) * (y[i] - my);
    cxx += (x[i] - mx) * (x[i] - mx);
    cyy += (y[i] - my) * (y[i] - my);
  }
  return cxy / std::sqrt(cxx * cyy);
}

}  // namespace

TEST_CASE("worked micro example") {
  // One true positive, one false positive, two false negatives.
  std::vector<Label> gold = {Label::happy, Label::happy, Label::sad,
                             Label::others};
  std::vector<Label> pred = {Label::happy, Label::others, Label::others,
                             Label::happy};
  EvalReport r = micro_f1(gold, pred);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 2);
  CHECK(r.precision == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.recall == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.f1 == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(r.accuracy == doctest::Approx(0.25));
}

TEST_CASE("degenerate counts give zero scores") {
  std::vector<Label> gold = {Label::others, Label::others};
  std::vector<Label> pred = {Label::others, Label::others};
  EvalReport r = micro_f1(gold, pred);
  CHECK(r.tp == 0);
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  CHECK(r.accuracy == 1.0);

  std::vector<Label> g2 = {Label::happy};
  std::vector<Label> p2 = {Label::others};
  EvalReport r2 = micro_f1(g2, p2);
  CHECK(r2.f1 == 0.0);
  CHECK(r2.fn == 1);
}

TEST_CASE("perfect predictions") {
  std::vector<Label> gold = {Label::happy, Label::sad, Label::angry,
                             Label::others, Label::sad};
  EvalReport r = micro_f1(gold, gold);
  CHECK(r.f1 == 1.0);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.fp == 0);
  CHECK(r.fn == 0);
}

TEST_CASE("random confusion agrees with the counting oracle") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 50 + rng.uniform_int(200);
    std::vector<Label> gold, pred;
    for (int i = 0; i < n; ++i) {
      gold.push_back(static_cast<Label>(rng.uniform_int(4)));
      pred.push_back(static_cast<Label>(rng.uniform_int(4)));
    }
    Oracle o = oracle_scores(gold, pred);
    EvalReport r = micro_f1(gold, pred);
    CHECK(r.tp == o.tp);
    CHECK(r.fp == o.fp);
    CHECK(r.fn == o.fn);
    CHECK(std::abs(r.precision - o.precision) <= 1e-12);
    CHECK(std::abs(r.recall - o.recall) <= 1e-12);
    CHECK(std::abs(r.f1 - o.f1) <= 1e-12);

    // Micro counts are exactly the per-class sums.
    long tp = 0, fp = 0, fn = 0;
    for (const ClassPRF& c : r.per_class) {
      tp += c.tp;
      fp += c.fp;
      fn += c.fn;
    }
    CHECK(tp == r.tp);
    CHECK(fp == r.fp);
    CHECK(fn == r.fn);
  }
}

TEST_CASE("per-class is one-vs-rest") {
  std::vector<Label> gold = {Label::happy, Label::sad, Label::angry,
                             Label::happy, Label::others};
  std::vector<Label> pred = {Label::happy, Label::happy, Label::angry,
                             Label::sad, Label::happy};
  auto pc = per_class_f1(gold, pred);
  // happy: tp 1 (ex0), fp 2 (ex1, ex4), fn 1 (ex3)
  CHECK(pc[0].tp == 1);
  CHECK(pc[0].fp == 2);
  CHECK(pc[0].fn == 1);
  // sad: tp 0, fp 1 (ex3), fn 1 (ex1)
  CHECK(pc[1].tp == 0);
  CHECK(pc[1].fp == 1);
  CHECK(pc[1].fn == 1);
  CHECK(pc[1].f1 == 0.0);
  // angry: tp 1, fp 0, fn 0
  CHECK(pc[2].tp == 1);
  CHECK(pc[2].f1 == 1.0);
}

TEST_CASE("input validation") {
  std::vector<Label> a = {Label::happy};
  std::vector<Label> b = {Label::happy, Label::sad};
  CHECK_THROWS_AS(micro_f1({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(micro_f1(a, b), std::invalid_argument);
  CHECK_THROWS_AS(pearson_agreement(a, b), std::invalid_argument);
  CHECK_THROWS_AS(agreement_matrix({}), std::invalid_argument);
  CHECK_THROWS_AS(agreement_matrix({a, b}), std::invalid_argument);
}

TEST_CASE("pearson matches direct covariance") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x, y;
    for (int i = 0; i < 64; ++i) {
      x.push_back(rng.normal());
      y.push_back(0.4 * x.back() + rng.normal());
    }
    CHECK(std::abs(pearson_raw(x, y) - oracle_pearson(x, y)) <= 1e-12);
  }
  std::vector<double> x = {1, 2, 3, 4};
  std::vector<double> lin = {3, 5, 7, 9};
  std::vector<double> neg = {-1, -2, -3, -4};
  CHECK(pearson_raw(x, lin) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson_raw(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  std::vector<double> flat = {2, 2, 2, 2};
  CHECK(std::isnan(pearson_raw(x, flat)));
  CHECK(std::isnan(pearson_raw(flat, x)));
}

TEST_CASE("agreement over one-hot expansions") {
  std::vector<Label> a = {Label::happy, Label::sad, Label::angry,
                          Label::others, Label::happy};
  CHECK(pearson_agreement(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<Label> b = {Label::happy, Label::sad, Label::angry,
                          Label::others, Label::sad};
  // Against the explicit flattened oracle.
  std::vector<double> xa(a.size() * 4, 0.0), xb(b.size() * 4, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    xa[i * 4 + size_t(a[i])] = 1.0;
    xb[i * 4 + size_t(b[i])] = 1.0;
  }
  CHECK(pearson_agreement(a, b) ==
        doctest::Approx(oracle_pearson(xa, xb)).epsilon(1e-12));
  CHECK(pearson_agreement(a, b) == pearson_agreement(b, a));
  CHECK(pearson_agreement(a, b) < 1.0);
}

TEST_CASE("agreement matrix shape and symmetry") {
  Rng rng(13);
  std::vector<std::vector<Label>> preds(4);
  for (auto& p : preds)
    for (int i = 0; i < 30; ++i)
      p.push_back(static_cast<Label>(rng.uniform_int(4)));
  Tensor m = agreement_matrix(preds);
  REQUIRE(m.dim(0) == 4);
  REQUIRE(m.dim(1) == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(m(i, i) == 1.0);
    for (int j = 0; j < 4; ++j) CHECK(m(i, j) == m(j, i));
  }
  CHECK(m(0, 1) == doctest::Approx(pearson_agreement(preds[0], preds[1]))
                       .epsilon(1e-15));

  // Permuting the inputs permutes rows and columns consistently.
  std::vector<std::vector<Label>> perm = {preds[2], preds[0], preds[3],
                                          preds[1]};
  Tensor mp = agreement_matrix(perm);
  int map[4] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(mp(i, j) == m(map[i], map[j]));
}

TEST_CASE("report serializes to json") {
  std::vector<Label> gold = {Label::happy, Label::happy, Label::sad,
                             Label::others};
  std::vector<Label> pred = {Label::happy, Label::others, Label::others,
                             Label::happy};
  EvalReport r = micro_f1(gold, pred);
  nlohmann::json j = nlohmann::json::parse(eval_report_json(r));
  CHECK(j["micro_f1"].get<double>() == doctest::Approx(0.4));
  CHECK(j["tp"].get<long>() == 1);
  CHECK(j["n"].get<int>() == 4);
  CHECK(j["per_class"]["happy"]["tp"].get<long>() == 1);
  CHECK(j["per_class"]["sad"]["f1"].get<double>() == 0.0);
}
