#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "del/data.hpp"
#include "del/metrics.hpp"
#include "del/model.hpp"
#include "del/rng.hpp"
#include "del/train.hpp"
#include "doctest.h"

using namespace del;

namespace {

// A corpus whose turn-3 keyword decides the label.
std::vector<Dialogue> keyword_corpus(int per_class, uint64_t seed) {
  const char* keys[4] = {"yay", "boo", "grr", "meh"};
  const char* fillers[6] = {"so", "well", "right", "ok", "now", "then"};
  Rng rng(seed);
  std::vector<Dialogue> out;
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Dialogue d;
      d.id = std::string(keys[c]) + std::to_string(i);
      d.turns[0] = std::string(fillers[rng.uniform_int(6)]) + " " +
                   fillers[rng.uniform_int(6)];
      d.turns[1] = fillers[rng.uniform_int(6)];
      d.turns[2] = std::string(fillers[rng.uniform_int(6)]) + " " + keys[c];
      d.label = static_cast<Label>(c);
      out.push_back(std::move(d));
    }
  }
  rng.shuffle(out);
  return out;
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.architecture = "flat";
  cfg.encoder = "lstm";
  cfg.hidden_size = 16;
  cfg.embed_dim = 12;
  cfg.mlp_hidden = 12;
  cfg.dropout = 0.0;
  cfg.seed = 3;
  return cfg;
}

std::vector<Label> gold_of(const std::vector<Dialogue>& ds) {
  std::vector<Label> out;
  for (const auto& d : ds) out.push_back(*d.label);
  return out;
}

bool same_weights(Classifier& a, Classifier& b) {
  auto pa = a.state_tensors();
  auto pb = b.state_tensors();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name) return false;
    if (pa[i].value->values() != pb[i].value->values()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("cross entropy values and gradient") {
  Tensor uniform({kNumLabels});
  CHECK(cross_entropy(uniform, Label::sad) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-15));

  Tensor peaked({kNumLabels});
  peaked(2) = 30.0;
  CHECK(cross_entropy(peaked, Label::angry) < 1e-12);
  CHECK(cross_entropy(peaked, Label::happy) > 29.0);

  Rng rng(11);
  Tensor logits({kNumLabels});
  for (int c = 0; c < kNumLabels; ++c) logits(c) = rng.normal();
  Tensor g = cross_entropy_grad(logits, Label::happy);
  double sum = 0.0;
  for (int c = 0; c < kNumLabels; ++c) sum += g(c);
  CHECK(std::abs(sum) < 1e-12);
  CHECK(g(0) < 0.0);

  // Central differences on each logit.
  for (int c = 0; c < kNumLabels; ++c) {
    double eps = 1e-6;
    Tensor hi = logits, lo = logits;
    hi(c) += eps;
    lo(c) -= eps;
    double fd = (cross_entropy(hi, Label::happy) -
                 cross_entropy(lo, Label::happy)) /
                (2 * eps);
    CHECK(std::abs(fd - g(c)) < 1e-8);
  }

  Tensor bad({3});
  CHECK_THROWS_AS(cross_entropy(bad, Label::happy), std::invalid_argument);
}

TEST_CASE("small corpus is memorized within 50 epochs") {
  std::vector<Dialogue> corpus = keyword_corpus(10, 21);
  Vocabulary vocab = build_vocab(corpus, 1);
  auto model = make_classifier(small_config(), vocab);

  TrainOpts opts;
  opts.max_epochs = 50;
  opts.batch = 8;
  opts.lr = 3e-3;
  opts.patience = 50;
  opts.seed = 5;
  TrainReport report = train(*model, corpus, corpus, opts);

  CHECK(report.best_val_f1 == 1.0);
  CHECK(report.best_epoch < 50);
  // The returned model carries the best epoch's weights.
  EvalReport ev = micro_f1(gold_of(corpus), predict_labels(*model, corpus));
  CHECK(ev.f1 == report.best_val_f1);
  // Loss curve drops substantially from its start.
  CHECK(report.train_loss.back() < 0.5 * report.train_loss.front());
}

TEST_CASE("patience controls the early-stopping point") {
  std::vector<Dialogue> corpus = keyword_corpus(6, 22);
  Vocabulary vocab = build_vocab(corpus, 1);

  for (int patience : {0, 2}) {
    CAPTURE(patience);
    auto model = make_classifier(small_config(), vocab);
    TrainOpts opts;
    opts.max_epochs = 40;
    opts.batch = 8;
    opts.lr = 3e-3;
    opts.patience = patience;
    opts.seed = 9;
    TrainReport r = train(*model, corpus, corpus, opts);
    // Stopping happens exactly patience+1 epochs after the best one
    // (unless the epoch budget ran out first).
    CHECK(r.epochs_run ==
          std::min(opts.max_epochs, r.best_epoch + patience + 2));
    // Never stopped on an epoch that improved.
    if (r.epochs_run < opts.max_epochs)
      CHECK(r.val_f1.back() <= r.best_val_f1);
  }
}

TEST_CASE("training is deterministic under a fixed seed") {
  std::vector<Dialogue> corpus = keyword_corpus(6, 23);
  Vocabulary vocab = build_vocab(corpus, 1);
  ModelConfig cfg = small_config();
  cfg.dropout = 0.2;  // exercise the dropout stream too

  TrainOpts opts;
  opts.max_epochs = 6;
  opts.batch = 4;
  opts.patience = 6;
  opts.seed = 17;

  auto m1 = make_classifier(cfg, vocab);
  auto m2 = make_classifier(cfg, vocab);
  TrainReport r1 = train(*m1, corpus, corpus, opts);
  TrainReport r2 = train(*m2, corpus, corpus, opts);

  CHECK(r1.train_loss == r2.train_loss);
  CHECK(r1.val_f1 == r2.val_f1);
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(same_weights(*m1, *m2));

  TrainOpts other = opts;
  other.seed = 18;
  auto m3 = make_classifier(cfg, vocab);
  TrainReport r3 = train(*m3, corpus, corpus, other);
  CHECK(r1.train_loss != r3.train_loss);
}

TEST_CASE("noam schedule path trains") {
  std::vector<Dialogue> corpus = keyword_corpus(4, 24);
  Vocabulary vocab = build_vocab(corpus, 1);
  ModelConfig cfg = small_config();
  cfg.encoder = "utrs";
  cfg.n_heads = 2;
  cfg.hops = 2;
  cfg.ffn_filters = 16;
  auto model = make_classifier(cfg, vocab);
  TrainOpts opts;
  opts.max_epochs = 2;
  opts.batch = 8;
  opts.noam_d_model = 16;
  opts.noam_warmup = 100;
  opts.patience = 2;
  TrainReport r = train(*model, corpus, corpus, opts);
  CHECK(r.epochs_run == 2);
  for (double l : r.train_loss) CHECK(std::isfinite(l));
}

TEST_CASE("divergence aborts with a diagnostic") {
  std::vector<Dialogue> corpus = keyword_corpus(2, 25);
  Vocabulary vocab = build_vocab(corpus, 1);
  auto model = make_classifier(small_config(), vocab);
  for (const Param& p : model->parameters())
    if (p.name == "head.out.b") (*p.value)(0) =
        std::numeric_limits<double>::quiet_NaN();
  TrainOpts opts;
  opts.max_epochs = 2;
  try {
    train(*model, corpus, corpus, opts);
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("train input validation") {
  std::vector<Dialogue> corpus = keyword_corpus(2, 26);
  Vocabulary vocab = build_vocab(corpus, 1);
  auto model = make_classifier(small_config(), vocab);
  TrainOpts opts;
  CHECK_THROWS_AS(train(*model, {}, corpus, opts), std::invalid_argument);
  CHECK_THROWS_AS(train(*model, corpus, {}, opts), std::invalid_argument);

  std::vector<Dialogue> unlabeled = corpus;
  unlabeled[0].label = std::nullopt;
  CHECK_THROWS_AS(train(*model, unlabeled, corpus, opts),
                  std::invalid_argument);

  TrainOpts bad;
  bad.batch = 0;
  CHECK_THROWS_AS(train(*model, corpus, corpus, bad), std::invalid_argument);
  bad = TrainOpts{};
  bad.lr = 0.0;
  CHECK_THROWS_AS(train(*model, corpus, corpus, bad), std::invalid_argument);
}

TEST_CASE("committee trains k independent members") {
  std::vector<Dialogue> corpus = keyword_corpus(8, 27);
  Vocabulary vocab = build_vocab(corpus, 1);
  ModelConfig cfg = small_config();
  TrainOpts opts;
  opts.max_epochs = 3;
  opts.batch = 8;
  opts.patience = 3;
  opts.seed = 100;

  auto members = train_committee(corpus, cfg, vocab, opts, 3, 0.25);
  REQUIRE(members.size() == 3);
  CHECK(members[0].split_seed != members[1].split_seed);
  CHECK(members[1].split_seed != members[2].split_seed);
  for (const auto& m : members) {
    REQUIRE(m.model != nullptr);
    CHECK(m.report.epochs_run >= 1);
  }
  // Distinct splits and seeds give distinct models.
  CHECK(!same_weights(*members[0].model, *members[1].model));

  CHECK_THROWS_AS(train_committee(corpus, cfg, vocab, opts, 0, 0.25),
                  std::invalid_argument);

  // Re-running reproduces every member; worker threads change nothing.
  auto again = train_committee(corpus, cfg, vocab, opts, 3, 0.25);
  auto threaded = train_committee(corpus, cfg, vocab, opts, 3, 0.25, 2);
  for (size_t i = 0; i < members.size(); ++i) {
    CHECK(same_weights(*members[i].model, *again[i].model));
    CHECK(same_weights(*members[i].model, *threaded[i].model));
    CHECK(members[i].report.val_f1 == threaded[i].report.val_f1);
  }
}
