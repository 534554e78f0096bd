#include "del/vote.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace del {

Label majority_vote(const std::vector<Label>& votes) {
  if (votes.empty()) throw std::invalid_argument("majority_vote: no votes");
  int counts[kNumLabels] = {0, 0, 0, 0};
  for (Label v : votes) ++counts[static_cast<int>(v)];
  int best = 0;
  for (int c = 1; c < kNumLabels; ++c)
    if (counts[c] > counts[best]) best = c;
  int at_max = 0;
  for (int c = 0; c < kNumLabels; ++c)
    if (counts[c] == counts[best]) ++at_max;
  return at_max > 1 ? Label::others : static_cast<Label>(best);
}

PredictionSet vote_committee(const std::vector<PredictionSet>& sets,
                             const std::string& name) {
  if (sets.empty()) throw std::invalid_argument("vote: no prediction sets");
  const auto& ids = sets[0].ids;
  for (const PredictionSet& s : sets) {
    if (s.ids.size() != s.labels.size())
      throw std::invalid_argument("vote: misaligned set " + s.name);
    if (s.ids != ids)
      throw std::invalid_argument("vote: id mismatch between " +
                                  sets[0].name + " and " + s.name);
  }
  PredictionSet out;
  out.name = name;
  out.ids = ids;
  out.labels.reserve(ids.size());
  std::vector<Label> votes(sets.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    for (size_t s = 0; s < sets.size(); ++s) votes[s] = sets[s].labels[i];
    out.labels.push_back(majority_vote(votes));
  }
  return out;
}

PredictionSet final_ensemble(const std::vector<PredictionSet>& sets,
                             const std::string& name) {
  return vote_committee(sets, name);
}

PredictionSet load_predictions(const std::string& path,
                               const std::string& name) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prediction file: " + path);
  auto fail = [&](const std::string& why, long line_no) {
    std::ostringstream msg;
    msg << "bad prediction file " << path << ":" << line_no << ": " << why;
    throw std::runtime_error(msg.str());
  };
  auto strip_cr = [](std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  };
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty prediction file: " + path);
  line = strip_cr(line);
  bool with_probs;
  if (line == "id\tlabel") {
    with_probs = false;
  } else if (line == "id\tlabel\tp_happy\tp_sad\tp_angry\tp_others") {
    with_probs = true;
  } else {
    fail("unrecognized header", 1);
    return {};
  }

  PredictionSet out;
  out.name = name;
  std::set<std::string> seen;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> cols;
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    size_t want = with_probs ? 6 : 2;
    if (cols.size() != want) fail("wrong column count", line_no);
    if (!seen.insert(cols[0]).second) fail("duplicate id " + cols[0], line_no);
    out.ids.push_back(cols[0]);
    try {
      out.labels.push_back(label_from_string(cols[1]));
    } catch (const std::exception&) {
      fail("unknown label " + cols[1], line_no);
    }
    if (with_probs) {
      std::array<double, 4> p{};
      for (int c = 0; c < 4; ++c) {
        try {
          size_t used = 0;
          p[static_cast<size_t>(c)] = std::stod(cols[static_cast<size_t>(2 + c)], &used);
          if (used != cols[static_cast<size_t>(2 + c)].size())
            fail("bad probability " + cols[static_cast<size_t>(2 + c)], line_no);
        } catch (const std::invalid_argument&) {
          fail("bad probability " + cols[static_cast<size_t>(2 + c)], line_no);
        } catch (const std::out_of_range&) {
          fail("bad probability " + cols[static_cast<size_t>(2 + c)], line_no);
        }
      }
      out.probs.push_back(p);
    }
  }
  if (out.ids.empty()) throw std::runtime_error("no rows in " + path);
  return out;
}

void write_predictions(const std::string& path, const PredictionSet& preds) {
  if (preds.ids.size() != preds.labels.size())
    throw std::invalid_argument("write_predictions: misaligned set");
  bool with_probs = !preds.probs.empty();
  if (with_probs && preds.probs.size() != preds.ids.size())
    throw std::invalid_argument("write_predictions: misaligned probabilities");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write prediction file: " + path);
  out << "id\tlabel";
  if (with_probs) out << "\tp_happy\tp_sad\tp_angry\tp_others";
  out << '\n';
  char buf[64];
  for (size_t i = 0; i < preds.ids.size(); ++i) {
    out << preds.ids[i] << '\t' << label_to_string(preds.labels[i]);
    if (with_probs)
      for (double p : preds.probs[i]) {
        std::snprintf(buf, sizeof buf, "%.17g", p);
        out << '\t' << buf;
      }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace del
