#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "del/data.hpp"
#include "del/gradcheck.hpp"
#include "del/model.hpp"
#include "del/rng.hpp"
#include "del/tensor.hpp"
#include "doctest.h"

using namespace del;

namespace {

Vocabulary letters_vocab() {
  Vocabulary v;
  for (char c = 'a'; c <= 'j'; ++c) v.add(std::string(1, c));
  return v;
}

Dialogue make_dialogue() {
  return Dialogue{"d1", {"a b c", "d e", "f g h i"}, Label::happy};
}

ModelConfig tiny_config(const std::string& arch, const std::string& enc) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.encoder = enc;
  cfg.hidden_size = 8;
  cfg.embed_dim = 6;
  cfg.dropout = 0.0;
  cfg.n_heads = 2;
  cfg.hops = 2;
  cfg.ffn_filters = 10;
  cfg.mlp_hidden = 6;
  cfg.seed = 7;
  return cfg;
}

double dot_all(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a(i) * b(i);
  return s;
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a(i) != b(i)) return false;
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig cfg = tiny_config("flat", "lstm");
  CHECK_NOTHROW(cfg.validate());

  ModelConfig bad = cfg;
  bad.architecture = "deep";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.encoder = "gru";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.dropout = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.hidden_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("flat", "utrs");
  bad.hops = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("flat", "utrs");
  bad.n_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("flat", "utrs");
  bad.bidirectional = true;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("model config json round trip and unknown keys") {
  ModelConfig cfg = tiny_config("hierarchical", "utrs");
  cfg.freeze_embeddings = true;
  cfg.bidirectional = false;
  cfg.seed = 123456789012345ULL;
  ModelConfig back = model_config_from_json(model_config_to_json(cfg));
  CHECK(back.architecture == cfg.architecture);
  CHECK(back.encoder == cfg.encoder);
  CHECK(back.hidden_size == cfg.hidden_size);
  CHECK(back.embed_dim == cfg.embed_dim);
  CHECK(back.dropout == cfg.dropout);
  CHECK(back.n_heads == cfg.n_heads);
  CHECK(back.hops == cfg.hops);
  CHECK(back.ffn_filters == cfg.ffn_filters);
  CHECK(back.mlp_hidden == cfg.mlp_hidden);
  CHECK(back.freeze_embeddings == cfg.freeze_embeddings);
  CHECK(back.seed == cfg.seed);

  CHECK_THROWS_AS(model_config_from_json("{\"hidden\": 4}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json("{\"dropout\": \"lots\"}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json("not json"), std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json("[1,2]"), std::invalid_argument);
  // Absent keys fall back to defaults.
  ModelConfig partial = model_config_from_json("{\"hidden_size\": 16}");
  CHECK(partial.hidden_size == 16);
  CHECK(partial.architecture == "hierarchical");
}

TEST_CASE("model construction is seed-deterministic") {
  Vocabulary vocab = letters_vocab();
  for (const char* arch : {"flat", "hierarchical"}) {
    for (const char* enc : {"lstm", "utrs"}) {
      ModelConfig cfg = tiny_config(arch, enc);
      auto m1 = make_classifier(cfg, vocab);
      auto m2 = make_classifier(cfg, vocab);
      auto p1 = m1->parameters();
      auto p2 = m2->parameters();
      REQUIRE(p1.size() == p2.size());
      for (size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].name == p2[i].name);
        CHECK(same_values(*p1[i].value, *p2[i].value));
      }
      ModelConfig other = cfg;
      other.seed = cfg.seed + 1;
      auto m3 = make_classifier(other, vocab);
      auto p3 = m3->parameters();
      bool any_diff = false;
      for (size_t i = 0; i < p1.size(); ++i)
        if (!same_values(*p1[i].value, *p3[i].value)) any_diff = true;
      CHECK(any_diff);
    }
  }
}

TEST_CASE("forward emits four finite logits and is repeatable") {
  Vocabulary vocab = letters_vocab();
  Dialogue d = make_dialogue();
  for (const char* arch : {"flat", "hierarchical"}) {
    for (const char* enc : {"lstm", "utrs"}) {
      ModelConfig cfg = tiny_config(arch, enc);
      cfg.dropout = 0.4;  // inference path must ignore it
      auto m = make_classifier(cfg, vocab);
      Tensor l1 = m->forward(d, false);
      m->clear_cache();
      Tensor l2 = m->forward(d, false);
      m->clear_cache();
      REQUIRE(l1.ndim() == 1);
      REQUIRE(l1.dim(0) == kNumLabels);
      CHECK(l1.all_finite());
      CHECK(same_values(l1, l2));
    }
  }
}

TEST_CASE("empty turns classify through the unk path") {
  Vocabulary vocab = letters_vocab();
  Dialogue empty{"e", {"", "", ""}, std::nullopt};
  for (const char* arch : {"flat", "hierarchical"}) {
    ModelConfig cfg = tiny_config(arch, "lstm");
    auto m = make_classifier(cfg, vocab);
    Tensor l = m->forward(empty, false);
    m->clear_cache();
    CHECK(l.all_finite());
  }
}

TEST_CASE("appended pad ids leave logits unchanged") {
  Vocabulary vocab = letters_vocab();
  std::vector<int> ids = {3, 4, Vocabulary::kSep, 5, Vocabulary::kSep, 6, 7};
  std::vector<int> padded = ids;
  padded.push_back(Vocabulary::kPad);
  padded.push_back(Vocabulary::kPad);
  for (const char* enc : {"lstm", "utrs"}) {
    ModelConfig cfg = tiny_config("flat", enc);
    FlatModel m(cfg, vocab);
    Tensor a = m.forward_ids(ids, false);
    m.clear_cache();
    Tensor b = m.forward_ids(padded, false);
    m.clear_cache();
    for (int i = 0; i < kNumLabels; ++i)
      CHECK(std::abs(a(i) - b(i)) < 1e-9);
  }
  std::array<std::vector<int>, 3> turns = {{{3, 4, 5}, {6}, {7, 8}}};
  std::array<std::vector<int>, 3> turns_padded = turns;
  turns_padded[0].push_back(Vocabulary::kPad);
  turns_padded[2].push_back(Vocabulary::kPad);
  turns_padded[2].push_back(Vocabulary::kPad);
  for (const char* enc : {"lstm", "utrs"}) {
    ModelConfig cfg = tiny_config("hierarchical", enc);
    HierModel m(cfg, vocab);
    Tensor a = m.forward_ids(turns, false);
    m.clear_cache();
    Tensor b = m.forward_ids(turns_padded, false);
    m.clear_cache();
    for (int i = 0; i < kNumLabels; ++i)
      CHECK(std::abs(a(i) - b(i)) < 1e-9);
  }
}

TEST_CASE("bidirectional flag changes encoder width not the contract") {
  Vocabulary vocab = letters_vocab();
  ModelConfig cfg = tiny_config("hierarchical", "lstm");
  cfg.bidirectional = true;
  HierModel m(cfg, vocab);
  Dialogue d = make_dialogue();
  Tensor l = m.forward(d, false);
  m.clear_cache();
  CHECK(l.dim(0) == kNumLabels);
  CHECK(l.all_finite());
  CHECK(m.last_turn_vectors()[0].dim(0) == 2 * cfg.hidden_size);
}

TEST_CASE("hierarchical model records one vector per turn") {
  Vocabulary vocab = letters_vocab();
  ModelConfig cfg = tiny_config("hierarchical", "lstm");
  HierModel m(cfg, vocab);

  std::array<std::vector<int>, 3> turns = {{{3, 4, 5}, {6}, {7, 8}}};
  m.forward_ids(turns, false);
  m.clear_cache();
  std::array<Tensor, 3> base = m.last_turn_vectors();
  for (const Tensor& t : base) {
    REQUIRE(t.ndim() == 1);
    CHECK(t.dim(0) == cfg.hidden_size);
  }

  // Changing turn 1 moves only the first pooled vector.
  std::array<std::vector<int>, 3> changed = turns;
  changed[0] = {9, 10};
  m.forward_ids(changed, false);
  m.clear_cache();
  std::array<Tensor, 3> moved = m.last_turn_vectors();
  CHECK(!same_values(base[0], moved[0]));
  CHECK(same_values(base[1], moved[1]));
  CHECK(same_values(base[2], moved[2]));
}

TEST_CASE("full-model gradients agree with finite differences") {
  Vocabulary vocab = letters_vocab();
  Dialogue d{"g", {"a b", "c", "d e f"}, std::nullopt};
  Rng wr(99);
  Tensor wout({kNumLabels});
  for (int i = 0; i < kNumLabels; ++i) wout(i) = wr.normal();

  for (const char* arch : {"flat", "hierarchical"}) {
    for (const char* enc : {"lstm", "utrs"}) {
      CAPTURE(arch);
      CAPTURE(enc);
      ModelConfig cfg = tiny_config(arch, enc);
      auto m = make_classifier(cfg, vocab);
      auto params = m->parameters();
      zero_params(params);
      m->forward(d, false);
      m->backward(wout);
      auto loss = [&] {
        Tensor y = m->forward(d, false);
        double s = dot_all(wout, y);
        m->clear_cache();
        return s;
      };
      double err = max_rel_grad_error(loss, params, 1e-5);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("bidirectional full-model gradients") {
  Vocabulary vocab = letters_vocab();
  Dialogue d{"g", {"a b", "c", "d e f"}, std::nullopt};
  Rng wr(100);
  Tensor wout({kNumLabels});
  for (int i = 0; i < kNumLabels; ++i) wout(i) = wr.normal();
  ModelConfig cfg = tiny_config("hierarchical", "lstm");
  cfg.bidirectional = true;
  auto m = make_classifier(cfg, vocab);
  auto params = m->parameters();
  zero_params(params);
  m->forward(d, false);
  m->backward(wout);
  auto loss = [&] {
    Tensor y = m->forward(d, false);
    double s = dot_all(wout, y);
    m->clear_cache();
    return s;
  };
  CHECK(max_rel_grad_error(loss, params, 1e-5) < 1e-4);
}

TEST_CASE("frozen embeddings are excluded from training but checkpointed") {
  Vocabulary vocab = letters_vocab();
  ModelConfig cfg = tiny_config("flat", "lstm");
  cfg.freeze_embeddings = true;
  FlatModel m(cfg, vocab);
  for (const auto& p : m.parameters()) CHECK(p.name != "embed.table");
  bool has_table = false;
  for (const auto& p : m.state_tensors())
    if (p.name == "embed.table") has_table = true;
  CHECK(has_table);
}

TEST_CASE("checkpoint round trip") {
  Vocabulary vocab = letters_vocab();
  Dialogue d = make_dialogue();
  for (const char* arch : {"flat", "hierarchical"}) {
    for (const char* enc : {"lstm", "utrs"}) {
      CAPTURE(arch);
      CAPTURE(enc);
      ModelConfig cfg = tiny_config(arch, enc);
      cfg.dropout = 0.25;
      auto m = make_classifier(cfg, vocab);
      Tensor before = m->forward(d, false);
      m->clear_cache();

      std::string p1 = temp_path(std::string("ck_") + arch + enc + ".bin");
      save_checkpoint(p1, *m);
      auto r1 = load_checkpoint(p1);
      auto r2 = load_checkpoint(p1);
      Tensor l1 = r1->forward(d, false);
      r1->clear_cache();
      Tensor l2 = r2->forward(d, false);
      r2->clear_cache();
      // Two loads of one file agree bitwise.
      CHECK(same_values(l1, l2));
      // float32 rounding keeps logits close to the saved model.
      for (int i = 0; i < kNumLabels; ++i)
        CHECK(std::abs(l1(i) - before(i)) < 1e-4);
      // Config and vocabulary survive.
      CHECK(r1->config().architecture == cfg.architecture);
      CHECK(r1->config().encoder == cfg.encoder);
      CHECK(r1->config().dropout == cfg.dropout);
      CHECK(r1->vocabulary().size() == vocab.size());
      CHECK(r1->vocabulary().token(3) == vocab.token(3));

      // Saving the loaded model reproduces the file byte for byte.
      std::string p2 = temp_path(std::string("ck2_") + arch + enc + ".bin");
      save_checkpoint(p2, *r1);
      CHECK(slurp(p1) == slurp(p2));
      std::filesystem::remove(p1);
      std::filesystem::remove(p2);
    }
  }
}

TEST_CASE("checkpoint loading rejects corrupt files") {
  Vocabulary vocab = letters_vocab();
  ModelConfig cfg = tiny_config("flat", "lstm");
  FlatModel m(cfg, vocab);
  std::string p = temp_path("ck_corrupt.bin");
  save_checkpoint(p, m);
  std::string bytes = slurp(p);

  {
    std::ofstream out(p, std::ios::binary);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_checkpoint(p), std::runtime_error);

  {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size() - 8));
  }
  CHECK_THROWS_AS(load_checkpoint(p), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(temp_path("ck_missing.bin")),
                  std::runtime_error);
  std::filesystem::remove(p);
}

TEST_CASE("frozen embedding checkpoint keeps the table") {
  Vocabulary vocab = letters_vocab();
  ModelConfig cfg = tiny_config("hierarchical", "lstm");
  cfg.freeze_embeddings = true;
  auto m = make_classifier(cfg, vocab);
  std::string p = temp_path("ck_frozen.bin");
  save_checkpoint(p, *m);
  auto r = load_checkpoint(p);
  Dialogue d = make_dialogue();
  Tensor a = m->forward(d, false);
  m->clear_cache();
  Tensor b = r->forward(d, false);
  r->clear_cache();
  for (int i = 0; i < kNumLabels; ++i) CHECK(std::abs(a(i) - b(i)) < 1e-4);
  CHECK(r->config().freeze_embeddings);
  std::filesystem::remove(p);
}

namespace {

FeatureMatrix separable_features(std::vector<Label>* labels_out) {
  // Four well-separated clusters in 3 dimensions, 10 points each.
  Rng rng(5);
  const double centers[4][3] = {
      {3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {-3, -3, -3}};
  FeatureMatrix f;
  f.values = Tensor({40, 3});
  for (int i = 0; i < 40; ++i) {
    int c = i % 4;
    f.ids.push_back("x" + std::to_string(i));
    for (int j = 0; j < 3; ++j)
      f.values(i, j) = centers[c][j] + 0.3 * rng.normal();
    labels_out->push_back(static_cast<Label>(c));
  }
  return f;
}

}  // namespace

TEST_CASE("logistic regression separates clustered features") {
  std::vector<Label> labels;
  FeatureMatrix f = separable_features(&labels);
  LogregReport report;
  LogregModel m = lr_train(f, labels, 1e-4, 500, &report);

  std::vector<Label> pred = lr_predict(m, f);
  int correct = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (pred[i] == labels[i]) ++correct;
  CHECK(correct == 40);
  CHECK(report.grad_norm < 1e-6);
  for (size_t e = 1; e < report.losses.size(); ++e)
    CHECK(report.losses[e] <= report.losses[e - 1] + 1e-12);
}

TEST_CASE("logistic regression edge cases") {
  std::vector<Label> labels;
  FeatureMatrix f = separable_features(&labels);
  LogregModel m = lr_train(f, labels, 1e-4, 50);

  // All-zero features reduce the logits to the bias.
  std::vector<double> zero(3, 0.0);
  Tensor l = lr_forward(m, zero);
  for (int c = 0; c < kNumLabels; ++c) CHECK(l(c) == m.b(c));

  std::vector<double> wrong_dim(5, 0.0);
  CHECK_THROWS_AS(lr_forward(m, wrong_dim), std::invalid_argument);

  std::vector<Label> short_labels(labels.begin(), labels.end() - 1);
  CHECK_THROWS_AS(lr_train(f, short_labels, 0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(lr_train(FeatureMatrix{}, {}, 0.0, 10),
                  std::invalid_argument);
  CHECK_THROWS_AS(lr_train(f, labels, -1.0, 10), std::invalid_argument);
}
