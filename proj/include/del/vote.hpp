#pragma once

#include <array>
#include <string>
#include <vector>

#include "del/data.hpp"

namespace del {

// One model's labels over a corpus, in corpus order. probs is either empty
// or one row of 4 class probabilities per id.
struct PredictionSet {
  std::string name;
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<std::array<double, 4>> probs;
};

// Strict plurality; any tie for the maximum count returns others.
Label majority_vote(const std::vector<Label>& votes);

// Per-example majority across aligned sets. Throws on an empty list or
// when any two sets disagree on ids (order included).
PredictionSet vote_committee(const std::vector<PredictionSet>& sets,
                             const std::string& name = "vote");

// Final ensembles apply the same rule; committee outputs compose freely
// with single models.
PredictionSet final_ensemble(const std::vector<PredictionSet>& sets,
                             const std::string& name = "ensemble");

// TSV with header: `id\tlabel[\tp_happy\tp_sad\tp_angry\tp_others]`.
PredictionSet load_predictions(const std::string& path,
                               const std::string& name);
void write_predictions(const std::string& path, const PredictionSet& preds);

}  // namespace del
