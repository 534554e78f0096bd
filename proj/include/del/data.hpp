#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "del/tensor.hpp"

namespace del {

// The four target classes. happy/sad/angry are the scored emotion classes;
// others is excluded from micro-F1 counts.
enum class Label : int { happy = 0, sad = 1, angry = 2, others = 3 };

constexpr int kNumLabels = 4;
constexpr std::array<Label, 3> kEmotionClasses = {Label::happy, Label::sad,
                                                  Label::angry};

Label label_from_string(const std::string& s);  // case-insensitive
const std::string& label_to_string(Label l);

// One classification example: a three-turn dialogue. The label, when
// present, is the emotion of turn 3 given turns 1-2 as context.
struct Dialogue {
  std::string id;
  std::array<std::string, 3> turns;
  std::optional<Label> label;
};

// Token ids. 0..2 are reserved; real tokens are indexed densely from 3,
// ordered by (frequency desc, token asc).
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSep = 2;

  Vocabulary();

  // Appends a token; returns its index. Throws on duplicates.
  int add(const std::string& token);
  // Index of token, or kUnk when absent.
  int lookup(const std::string& token) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Precomputed per-example sentence features (stand-in for external
// encoders). ids align 1:1 with the corpus they were exported from.
struct FeatureMatrix {
  std::vector<std::string> ids;
  Tensor values;  // [n x d]

  int rows() const { return values.empty() ? 0 : values.dim(0); }
  int dim() const { return values.empty() ? 0 : values.dim(1); }
};

// ---- corpus files ----------------------------------------------------

// Parses a TSV corpus: header `id\tturn1\tturn2\tturn3[\tlabel]`, one
// dialogue per line. Throws on wrong column count, unknown label or
// duplicate id.
std::vector<Dialogue> load_tsv(const std::string& path, bool labeled);
void write_tsv(const std::string& path, const std::vector<Dialogue>& dialogues,
               bool labeled);

// Per-label counts plus the emotion/others split.
struct CorpusStats {
  std::map<std::string, int> label_counts;
  int emotion_rows = 0;
  int others_rows = 0;
  int unlabeled_rows = 0;
  int total = 0;
};
CorpusStats corpus_stats(const std::vector<Dialogue>& dialogues);

// ---- tokenization ----------------------------------------------------

// Lowercases ASCII, splits on whitespace, splits punctuation runs into
// single-character tokens and keeps each emoji (with its ZWJ sequence,
// variation selectors and skin-tone modifiers) as one token.
std::vector<std::string> tokenize(const std::string& text);

// Tokens with corpus frequency >= min_count over all turns, ordered by
// (freq desc, token asc) after the reserved ids. Throws on empty corpus.
Vocabulary build_vocab(const std::vector<Dialogue>& dialogues, int min_count);

// ---- embeddings and features ------------------------------------------

// Text rows `token v1 ... v_dim`. In-vocab rows are copied; vocab tokens
// missing from the file get seeded uniform(-0.05, 0.05) rows; <pad> is
// zero. Throws if any line's dimension disagrees with dim.
Tensor load_word_vectors(const std::string& path, const Vocabulary& vocab,
                         int dim, uint64_t seed);

// Text rows `id\tv1,v2,...,vd` (comma-separated reals).
FeatureMatrix load_features(const std::string& path);
// Column-wise concatenation; ids must agree element-wise.
FeatureMatrix concat_features(const std::vector<FeatureMatrix>& parts);

// ---- splits and model input -------------------------------------------

// Deterministic shuffle under seed; the first floor(n * (1-val_fraction))
// examples become train. val_fraction must lie in (0, 1).
std::pair<std::vector<Dialogue>, std::vector<Dialogue>> split_shuffle(
    const std::vector<Dialogue>& dataset, uint64_t seed, double val_fraction);

// ids(turn1) + <sep> + ids(turn2) + <sep> + ids(turn3); OOV -> <unk>.
std::vector<int> flatten_dialogue(const Dialogue& d, const Vocabulary& vocab);

// Token ids of one turn (OOV -> <unk>).
std::vector<int> turn_ids(const std::string& turn, const Vocabulary& vocab);

}  // namespace del
