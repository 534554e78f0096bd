#include "del/synth.hpp"

#include <array>
#include <cstdio>
#include <stdexcept>

#include "del/rng.hpp"

namespace del {

namespace {

const std::array<std::array<const char*, 3>, 4> kKeywords = {{
    {"grinning", "delighted", "cheerful"},     // happy
    {"weeping", "gloomy", "heartbroken"},      // sad
    {"furious", "fuming", "outraged"},         // angry
    {"statement", "question", "remark"},       // others
}};

constexpr const char* kNegation = "hardly";

const std::array<const char*, 40> kDistractors = {
    "the",    "a",      "well",    "so",     "today", "later",  "maybe",
    "plan",   "meet",   "call",    "lunch",  "work",  "home",   "game",
    "movie",  "book",   "weather", "train",  "ride",  "coffee", "tea",
    "morning", "evening", "friend", "team",  "project", "idea", "note",
    "list",   "thing",  "stuff",   "place",  "time",  "day",    "week",
    "road",   "door",   "desk",    "phone",  "mail"};

constexpr std::array<Label, 4> kFlip = {Label::sad, Label::happy,
                                        Label::others, Label::angry};

std::string filler_turn(Rng& rng, const char* insert) {
  int len = 10 + rng.uniform_int(11);
  std::vector<const char*> toks(static_cast<size_t>(len));
  for (auto& t : toks) t = kDistractors[static_cast<size_t>(rng.uniform_int(40))];
  if (insert) toks[static_cast<size_t>(rng.uniform_int(len))] = insert;
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace

std::vector<Dialogue> synth_corpus(int n, uint64_t seed,
                                   const std::string& id_prefix) {
  if (n < 0) throw std::invalid_argument("synth_corpus: negative size");
  Rng rng(seed);
  std::vector<Dialogue> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int kw = rng.uniform_int(4);
    // 30% flips: frequent enough that ignoring turn 1 caps well below the
    // acceptance bar, rare enough that the keyword mapping anchors first.
    bool flip = rng.uniform() < 0.3;
    const char* keyword =
        kKeywords[static_cast<size_t>(kw)][static_cast<size_t>(rng.uniform_int(3))];

    Dialogue d;
    char id[32];
    std::snprintf(id, sizeof id, "%s%06d", id_prefix.c_str(), i);
    d.id = id;
    d.turns[0] = filler_turn(rng, flip ? kNegation : nullptr);
    d.turns[1] = filler_turn(rng, nullptr);
    d.turns[2] = filler_turn(rng, keyword);
    d.label = flip ? kFlip[static_cast<size_t>(kw)] : static_cast<Label>(kw);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace del
