#include "del/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace del {

Label label_from_string(const std::string& s) {
  std::string low;
  low.reserve(s.size());
  for (char c : s) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (low == "happy") return Label::happy;
  if (low == "sad") return Label::sad;
  if (low == "angry") return Label::angry;
  if (low == "others") return Label::others;
  throw std::invalid_argument("unknown label: " + s);
}

const std::string& label_to_string(Label l) {
  static const std::array<std::string, 4> names = {"happy", "sad", "angry",
                                                   "others"};
  return names[static_cast<size_t>(l)];
}

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<unk>", "<sep>"};
  for (int i = 0; i < 3; ++i) index_[tokens_[static_cast<size_t>(i)]] = i;
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, size());
  if (!inserted) throw std::invalid_argument("duplicate vocab token: " + token);
  tokens_.push_back(token);
  return it->second;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

// ---- corpus files ----------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<Dialogue> load_tsv(const std::string& path, bool labeled) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  const size_t want = labeled ? 5 : 4;

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty corpus file: " + path);
  auto header = split_tabs(strip_cr(line));
  if (header.size() != want || header[0] != "id" || header[1] != "turn1" ||
      header[2] != "turn2" || header[3] != "turn3" ||
      (labeled && header[4] != "label"))
    throw std::runtime_error("bad corpus header in " + path);

  std::vector<Dialogue> out;
  std::set<std::string> seen;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != want)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(want) +
                               " columns, got " + std::to_string(cols.size()));
    Dialogue d;
    d.id = cols[0];
    if (!seen.insert(d.id).second)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": duplicate id " + d.id);
    d.turns = {cols[1], cols[2], cols[3]};
    if (labeled) d.label = label_from_string(cols[4]);
    out.push_back(std::move(d));
  }
  return out;
}

void write_tsv(const std::string& path, const std::vector<Dialogue>& dialogues,
               bool labeled) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << "id\tturn1\tturn2\tturn3";
  if (labeled) out << "\tlabel";
  out << '\n';
  for (const auto& d : dialogues) {
    out << d.id << '\t' << d.turns[0] << '\t' << d.turns[1] << '\t'
        << d.turns[2];
    if (labeled) {
      if (!d.label)
        throw std::runtime_error("write_tsv: missing label for id " + d.id);
      out << '\t' << label_to_string(*d.label);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

CorpusStats corpus_stats(const std::vector<Dialogue>& dialogues) {
  CorpusStats s;
  s.total = static_cast<int>(dialogues.size());
  for (const auto& d : dialogues) {
    if (!d.label) {
      ++s.unlabeled_rows;
      continue;
    }
    ++s.label_counts[label_to_string(*d.label)];
    if (*d.label == Label::others)
      ++s.others_rows;
    else
      ++s.emotion_rows;
  }
  return s;
}

// ---- tokenization ----------------------------------------------------

namespace {

// Decodes one UTF-8 codepoint starting at i; advances i. Invalid bytes are
// consumed one at a time and returned as-is so the tokenizer stays total.
uint32_t next_codepoint(const std::string& s, size_t& i) {
  const unsigned char b0 = static_cast<unsigned char>(s[i]);
  size_t len = 1;
  uint32_t cp = b0;
  if ((b0 & 0x80u) == 0) {
    len = 1;
  } else if ((b0 & 0xE0u) == 0xC0u) {
    len = 2;
    cp = b0 & 0x1Fu;
  } else if ((b0 & 0xF0u) == 0xE0u) {
    len = 3;
    cp = b0 & 0x0Fu;
  } else if ((b0 & 0xF8u) == 0xF0u) {
    len = 4;
    cp = b0 & 0x07u;
  } else {
    ++i;
    return b0;
  }
  if (i + len > s.size()) {
    ++i;
    return b0;
  }
  for (size_t k = 1; k < len; ++k) {
    const unsigned char b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0u) != 0x80u) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3Fu);
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, uint32_t cp) {
  if (cp < 0x80u) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800u) {
    out.push_back(static_cast<char>(0xC0u | (cp >> 6)));
    out.push_back(static_cast<char>(0x80u | (cp & 0x3Fu)));
  } else if (cp < 0x10000u) {
    out.push_back(static_cast<char>(0xE0u | (cp >> 12)));
    out.push_back(static_cast<char>(0x80u | ((cp >> 6) & 0x3Fu)));
    out.push_back(static_cast<char>(0x80u | (cp & 0x3Fu)));
  } else {
    out.push_back(static_cast<char>(0xF0u | (cp >> 18)));
    out.push_back(static_cast<char>(0x80u | ((cp >> 12) & 0x3Fu)));
    out.push_back(static_cast<char>(0x80u | ((cp >> 6) & 0x3Fu)));
    out.push_back(static_cast<char>(0x80u | (cp & 0x3Fu)));
  }
}

constexpr uint32_t kZwj = 0x200D;

bool is_emoji(uint32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) ||  // pictographs, supplement
         (cp >= 0x2600 && cp <= 0x27BF) ||    // misc symbols, dingbats
         (cp >= 0x2B00 && cp <= 0x2BFF) ||    // stars, arrows
         (cp >= 0x1F1E6 && cp <= 0x1F1FF);    // regional indicators
}

// Marks that glue onto a preceding emoji token.
bool is_emoji_modifier(uint32_t cp) {
  return cp == 0xFE0F ||                       // variation selector-16
         (cp >= 0x1F3FB && cp <= 0x1F3FF);     // skin tones
}

bool is_space_cp(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == 0x0B ||
         cp == 0x0C || cp == 0xA0;
}

bool is_word_cp(uint32_t cp) {
  if (cp < 0x80)
    return std::isalnum(static_cast<int>(cp)) != 0;
  // Non-ASCII, non-emoji codepoints (accented letters etc.) count as word
  // characters.
  return !is_emoji(cp) && !is_emoji_modifier(cp) && cp != kZwj;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string word;
  bool prev_emoji = false;  // last emitted token is an open emoji sequence

  auto flush_word = [&] {
    if (!word.empty()) {
      tokens.push_back(word);
      word.clear();
    }
  };

  size_t i = 0;
  while (i < text.size()) {
    const uint32_t cp = next_codepoint(text, i);
    if (is_space_cp(cp)) {
      flush_word();
      prev_emoji = false;
      continue;
    }
    if (cp == kZwj || is_emoji_modifier(cp)) {
      if (prev_emoji) {
        append_utf8(tokens.back(), cp);
      }  // stray joiner outside an emoji sequence is dropped
      continue;
    }
    if (is_emoji(cp)) {
      flush_word();
      if (prev_emoji && !tokens.empty() &&
          tokens.back().size() >= 3 &&
          tokens.back().compare(tokens.back().size() - 3, 3, "\xE2\x80\x8D") == 0) {
        append_utf8(tokens.back(), cp);  // continue the ZWJ sequence
      } else {
        std::string t;
        append_utf8(t, cp);
        tokens.push_back(std::move(t));
      }
      prev_emoji = true;
      continue;
    }
    if (is_word_cp(cp)) {
      uint32_t lowered = cp;
      if (cp < 0x80) lowered = static_cast<uint32_t>(std::tolower(static_cast<int>(cp)));
      append_utf8(word, lowered);
      prev_emoji = false;
      continue;
    }
    // Punctuation or symbol: one token per character.
    flush_word();
    std::string t;
    append_utf8(t, cp);
    tokens.push_back(std::move(t));
    prev_emoji = false;
  }
  flush_word();
  return tokens;
}

Vocabulary build_vocab(const std::vector<Dialogue>& dialogues, int min_count) {
  if (dialogues.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::unordered_map<std::string, int> freq;
  for (const auto& d : dialogues)
    for (const auto& turn : d.turns)
      for (auto& tok : tokenize(turn)) ++freq[tok];

  std::vector<std::pair<std::string, int>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [tok, count] : items)
    if (count >= min_count) vocab.add(tok);
  return vocab;
}

// ---- embeddings and features ------------------------------------------

Tensor load_word_vectors(const std::string& path, const Vocabulary& vocab,
                         int dim, uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("load_word_vectors: dim must be >= 1");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word-vector file: " + path);

  std::unordered_map<std::string, std::vector<double>> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (static_cast<int>(vals.size()) != dim)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(dim) +
                               " values, got " + std::to_string(vals.size()));
    rows[token] = std::move(vals);
  }

  Rng rng(seed);
  Tensor table({vocab.size(), dim});
  for (int id = 0; id < vocab.size(); ++id) {
    if (id == Vocabulary::kPad) continue;  // stays zero
    auto it = rows.find(vocab.token(id));
    if (it != rows.end()) {
      for (int j = 0; j < dim; ++j) table(id, j) = it->second[static_cast<size_t>(j)];
    } else {
      for (int j = 0; j < dim; ++j) table(id, j) = rng.uniform(-0.05, 0.05);
    }
  }
  return table;
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);

  std::vector<std::string> ids;
  std::vector<double> flat;
  std::set<std::string> seen;
  int dim = -1;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected `id\\tv1,v2,...`");
    std::string id = line.substr(0, tab);
    if (!seen.insert(id).second)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": duplicate id " + id);
    std::vector<double> vals;
    std::istringstream ss(line.substr(tab + 1));
    std::string field;
    while (std::getline(ss, field, ','))
      vals.push_back(std::stod(field));
    if (vals.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty feature row");
    if (dim < 0) dim = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != dim)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": inconsistent feature dimension");
    ids.push_back(std::move(id));
    flat.insert(flat.end(), vals.begin(), vals.end());
  }
  if (ids.empty()) throw std::runtime_error("empty feature file: " + path);

  FeatureMatrix fm;
  fm.values = Tensor({static_cast<int>(ids.size()), dim}, std::move(flat));
  fm.ids = std::move(ids);
  return fm;
}

FeatureMatrix concat_features(const std::vector<FeatureMatrix>& parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_features: no inputs");
  const auto& first = parts.front();
  int total_dim = 0;
  for (const auto& p : parts) {
    if (p.rows() != first.rows())
      throw std::invalid_argument("concat_features: row-count mismatch");
    if (p.ids != first.ids)
      throw std::invalid_argument("concat_features: id misalignment");
    total_dim += p.dim();
  }
  FeatureMatrix out;
  out.ids = first.ids;
  out.values = Tensor({first.rows(), total_dim});
  for (int i = 0; i < first.rows(); ++i) {
    int col = 0;
    for (const auto& p : parts)
      for (int j = 0; j < p.dim(); ++j) out.values(i, col++) = p.values(i, j);
  }
  return out;
}

// ---- splits and model input -------------------------------------------

std::pair<std::vector<Dialogue>, std::vector<Dialogue>> split_shuffle(
    const std::vector<Dialogue>& dataset, uint64_t seed, double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("split_shuffle: val_fraction must be in (0,1)");
  std::vector<Dialogue> shuffled = dataset;
  Rng rng(seed);
  rng.shuffle(shuffled);
  const size_t n_train = static_cast<size_t>(
      std::floor(static_cast<double>(shuffled.size()) * (1.0 - val_fraction)));
  std::vector<Dialogue> train(shuffled.begin(),
                              shuffled.begin() + static_cast<long>(n_train));
  std::vector<Dialogue> val(shuffled.begin() + static_cast<long>(n_train),
                            shuffled.end());
  return {std::move(train), std::move(val)};
}

std::vector<int> turn_ids(const std::string& turn, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& tok : tokenize(turn)) ids.push_back(vocab.lookup(tok));
  return ids;
}

std::vector<int> flatten_dialogue(const Dialogue& d, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (int k = 0; k < 3; ++k) {
    if (k > 0) ids.push_back(Vocabulary::kSep);
    auto part = turn_ids(d.turns[static_cast<size_t>(k)], vocab);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

}  // namespace del
