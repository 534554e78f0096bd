#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "del/data.hpp"
#include "doctest.h"

using namespace del;

namespace {

std::string write_file(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("labels parse case-insensitively and round-trip") {
  CHECK(label_from_string("happy") == Label::happy);
  CHECK(label_from_string("Sad") == Label::sad);
  CHECK(label_from_string("ANGRY") == Label::angry);
  CHECK(label_from_string("others") == Label::others);
  CHECK_THROWS(label_from_string("joyful"));
  for (Label l : {Label::happy, Label::sad, Label::angry, Label::others})
    CHECK(label_from_string(label_to_string(l)) == l);
}

TEST_CASE("load_tsv parses labeled corpora") {
  std::string path = write_file(
      "corpus_ok.tsv",
      "id\tturn1\tturn2\tturn3\tlabel\n"
      "1\tHi there\tAll good\tI am so happy\thappy\n"
      "2\tUgh\tWhy\tThis is awful\tsad\n");
  auto rows = load_tsv(path, true);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].id == "1");
  CHECK(rows[0].turns[0] == "Hi there");
  CHECK(rows[0].turns[2] == "I am so happy");
  CHECK(rows[0].label == Label::happy);
  CHECK(rows[1].label == Label::sad);
}

TEST_CASE("load_tsv rejects malformed input") {
  std::string bad_header = write_file(
      "corpus_badhdr.tsv", "ident\tturn1\tturn2\tturn3\tlabel\n");
  CHECK_THROWS_AS(load_tsv(bad_header, true), std::runtime_error);

  std::string bad_cols = write_file(
      "corpus_badcols.tsv",
      "id\tturn1\tturn2\tturn3\tlabel\n"
      "1\ta\tb\tc\thappy\n"
      "2\ta\tb\tsad\n");
  try {
    load_tsv(bad_cols, true);
    FAIL("expected a column-count error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }

  std::string dup = write_file(
      "corpus_dup.tsv",
      "id\tturn1\tturn2\tturn3\tlabel\n"
      "1\ta\tb\tc\thappy\n"
      "1\td\te\tf\tsad\n");
  CHECK_THROWS_AS(load_tsv(dup, true), std::runtime_error);

  std::string bad_label = write_file(
      "corpus_badlabel.tsv",
      "id\tturn1\tturn2\tturn3\tlabel\n"
      "1\ta\tb\tc\tecstatic\n");
  CHECK_THROWS(load_tsv(bad_label, true));

  CHECK_THROWS(load_tsv("/nonexistent/corpus.tsv", true));
}

TEST_CASE("unlabeled corpora and tsv round trip") {
  std::string path = write_file(
      "corpus_unlabeled.tsv",
      "id\tturn1\tturn2\tturn3\n"
      "a\tx\ty\tz\n");
  auto rows = load_tsv(path, false);
  REQUIRE(rows.size() == 1);
  CHECK_FALSE(rows[0].label.has_value());

  std::vector<Dialogue> ds = {
      {"1", {"Hi there", "All good", "Great news"}, Label::happy},
      {"2", {"", "Hmm", "Whatever"}, Label::others},
  };
  std::string rt = (std::filesystem::temp_directory_path() / "rt.tsv").string();
  write_tsv(rt, ds, true);
  auto back = load_tsv(rt, true);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == ds[0].id);
  CHECK(back[0].turns == ds[0].turns);
  CHECK(back[0].label == ds[0].label);
  CHECK(back[1].turns[0] == "");
  CHECK(back[1].label == Label::others);
}

TEST_CASE("corpus_stats splits emotion and others rows") {
  std::vector<Dialogue> ds = {
      {"1", {"a", "b", "c"}, Label::happy},
      {"2", {"a", "b", "c"}, Label::happy},
      {"3", {"a", "b", "c"}, Label::angry},
      {"4", {"a", "b", "c"}, Label::others},
      {"5", {"a", "b", "c"}, std::nullopt},
  };
  CorpusStats s = corpus_stats(ds);
  CHECK(s.total == 5);
  CHECK(s.emotion_rows == 3);
  CHECK(s.others_rows == 1);
  CHECK(s.unlabeled_rows == 1);
  CHECK(s.label_counts.at("happy") == 2);
  CHECK(s.label_counts.at("angry") == 1);
}

TEST_CASE("tokenize lowercases, splits punctuation and keeps emoji whole") {
  CHECK(tokenize("Hello, WORLD!") ==
        std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(tokenize("I'm ok") == std::vector<std::string>{"i", "'", "m", "ok"});
  CHECK(tokenize("  spaced\tout\nlines  ") ==
        std::vector<std::string>{"spaced", "out", "lines"});
  CHECK(tokenize("why???") == std::vector<std::string>{"why", "?", "?", "?"});
  CHECK(tokenize(":-(") == std::vector<std::string>{":", "-", "("});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("don't stop2") ==
        std::vector<std::string>{"don", "'", "t", "stop2"});
}

TEST_CASE("tokenize emoji handling") {
  // single emoji, adjacent emoji, embedded emoji
  CHECK(tokenize("\U0001F642") == std::vector<std::string>{"\U0001F642"});
  CHECK(tokenize("\U0001F602\U0001F602") ==
        std::vector<std::string>{"\U0001F602", "\U0001F602"});
  CHECK(tokenize("hi\U0001F642there") ==
        std::vector<std::string>{"hi", "\U0001F642", "there"});

  // skin-tone modifier and variation selector glue onto the emoji
  CHECK(tokenize("\U0001F44D\U0001F3FD") ==
        std::vector<std::string>{"\U0001F44D\U0001F3FD"});
  CHECK(tokenize("☺️ ok") ==
        std::vector<std::string>{"☺️", "ok"});

  // zwj family sequence stays one token
  std::string family = "\U0001F468‍\U0001F469‍\U0001F467";
  CHECK(tokenize(family) == std::vector<std::string>{family});
  // ...but two emoji without a joiner stay separate even after a sequence
  auto two = tokenize(family + "\U0001F642");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == family);
  CHECK(two[1] == "\U0001F642");

  // non-ascii letters are word characters
  CHECK(tokenize("Café au lait") ==
        std::vector<std::string>{"café", "au", "lait"});
}

TEST_CASE("vocabulary reserves specials and indexes by frequency") {
  Vocabulary v;
  CHECK(v.size() == 3);
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
  CHECK(v.token(Vocabulary::kSep) == "<sep>");
  CHECK(v.lookup("anything") == Vocabulary::kUnk);

  int id = v.add("go");
  CHECK(id == 3);
  CHECK(v.lookup("go") == 3);
  CHECK(v.contains("go"));
  CHECK_THROWS(v.add("go"));
}

TEST_CASE("build_vocab orders by frequency then token and applies min_count") {
  std::vector<Dialogue> ds = {
      {"1", {"go go", "stop", "go stop now"}, Label::others},
  };
  Vocabulary v = build_vocab(ds, 2);
  CHECK(v.size() == 5);  // specials + go + stop
  CHECK(v.lookup("go") == 3);    // freq 3
  CHECK(v.lookup("stop") == 4);  // freq 2
  CHECK(v.lookup("now") == Vocabulary::kUnk);  // freq 1 (below min_count)

  std::vector<Dialogue> tie = {{"1", {"y x", "x y", ""}, Label::others}};
  Vocabulary vt = build_vocab(tie, 1);
  CHECK(vt.lookup("x") == 3);  // equal freq; ties break by token asc
  CHECK(vt.lookup("y") == 4);

  CHECK_THROWS(build_vocab({}, 1));
}

TEST_CASE("flatten_dialogue inserts separators between turns") {
  std::vector<Dialogue> ds = {{"1", {"go go", "stop", "go stop now"}, {}}};
  Vocabulary v = build_vocab(ds, 2);

  Dialogue d{"x", {"go", "", "stop now"}, {}};
  auto ids = flatten_dialogue(d, v);
  CHECK(ids == std::vector<int>{3, Vocabulary::kSep, Vocabulary::kSep, 4,
                                Vocabulary::kUnk});
  // length = sum of turn lengths + 2 separators
  CHECK(ids.size() == 1 + 0 + 2 + 2);

  CHECK(turn_ids("stop go zzz", v) ==
        std::vector<int>{4, 3, Vocabulary::kUnk});
}

TEST_CASE("load_word_vectors copies known rows and seeds the rest") {
  std::vector<Dialogue> ds = {{"1", {"go go", "stop", "go stop"}, {}}};
  Vocabulary v = build_vocab(ds, 1);  // go=3, stop=4

  std::string path = write_file("vecs.txt",
                                "go 1.0 2.0 3.0\n"
                                "unused 9 9 9\n");
  Tensor t = load_word_vectors(path, v, 3, 77);
  REQUIRE(t.dim(0) == v.size());
  REQUIRE(t.dim(1) == 3);
  for (int j = 0; j < 3; ++j) CHECK(t(Vocabulary::kPad, j) == 0.0);
  CHECK(t(3, 0) == 1.0);
  CHECK(t(3, 1) == 2.0);
  CHECK(t(3, 2) == 3.0);
  for (int j = 0; j < 3; ++j) {
    CHECK(t(4, j) >= -0.05);
    CHECK(t(4, j) <= 0.05);
    CHECK(t(4, j) != 0.0);  // seeded, not silently zero
  }

  Tensor again = load_word_vectors(path, v, 3, 77);
  for (int i = 0; i < t.size(); ++i) CHECK(t(i) == again(i));
  Tensor other = load_word_vectors(path, v, 3, 78);
  bool differs = false;
  for (int j = 0; j < 3; ++j) differs = differs || other(4, j) != t(4, j);
  CHECK(differs);

  std::string bad = write_file("vecs_bad.txt", "go 1.0 2.0\n");
  try {
    load_word_vectors(bad, v, 3, 1);
    FAIL("expected a dimension error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":1") != std::string::npos);
  }
}

TEST_CASE("feature files parse and concatenate") {
  std::string p1 = write_file("feat1.tsv", "a\t0.5,1.5\nb\t2.5,3.5\n");
  FeatureMatrix f1 = load_features(p1);
  CHECK(f1.ids == std::vector<std::string>{"a", "b"});
  CHECK(f1.rows() == 2);
  CHECK(f1.dim() == 2);
  CHECK(f1.values(1, 0) == 2.5);

  std::string p2 = write_file("feat2.tsv", "a\t10\nb\t20\n");
  FeatureMatrix f2 = load_features(p2);
  FeatureMatrix cat = concat_features({f1, f2});
  CHECK(cat.dim() == 3);
  CHECK(cat.values(0, 2) == 10.0);
  CHECK(cat.values(1, 1) == 3.5);

  std::string dup = write_file("feat_dup.tsv", "a\t1\na\t2\n");
  CHECK_THROWS(load_features(dup));
  std::string ragged = write_file("feat_ragged.tsv", "a\t1,2\nb\t3\n");
  CHECK_THROWS(load_features(ragged));

  FeatureMatrix f3 = load_features(write_file("feat3.tsv", "a\t1\nc\t2\n"));
  CHECK_THROWS(concat_features({f1, f3}));
  CHECK_THROWS(concat_features({}));
}

TEST_CASE("split_shuffle is a deterministic seeded partition") {
  std::vector<Dialogue> ds;
  for (int i = 0; i < 20; ++i)
    ds.push_back({std::to_string(i), {"a", "b", "c"}, Label::others});

  auto [train, val] = split_shuffle(ds, 42, 0.2);
  CHECK(train.size() == 16);
  CHECK(val.size() == 4);

  std::set<std::string> ids;
  for (const auto& d : train) ids.insert(d.id);
  for (const auto& d : val) ids.insert(d.id);
  CHECK(ids.size() == 20);

  auto [train2, val2] = split_shuffle(ds, 42, 0.2);
  for (size_t i = 0; i < train.size(); ++i) CHECK(train[i].id == train2[i].id);

  auto [train3, val3] = split_shuffle(ds, 43, 0.2);
  bool differs = false;
  for (size_t i = 0; i < train.size(); ++i)
    differs = differs || train[i].id != train3[i].id;
  CHECK(differs);

  auto [t7, v7] = split_shuffle(ds, 1, 0.35);  // floor(20 * 0.65) = 13
  CHECK(t7.size() == 13);
  CHECK(v7.size() == 7);

  CHECK_THROWS(split_shuffle(ds, 1, 0.0));
  CHECK_THROWS(split_shuffle(ds, 1, 1.0));
}
