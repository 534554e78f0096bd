#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "del/data.hpp"
#include "del/model.hpp"
#include "del/tensor.hpp"

namespace del {

struct TrainOpts {
  int max_epochs = 50;
  int batch = 32;
  double lr = 1e-3;
  // When noam_d_model > 0 the warmup-then-decay schedule replaces lr.
  int noam_d_model = 0;
  int noam_warmup = 4000;
  int patience = 5;
  uint64_t seed = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // mean cross-entropy per epoch
  std::vector<double> val_f1;      // validation micro-F1 per epoch
  int best_epoch = -1;             // earliest maximum of val_f1
  double best_val_f1 = 0.0;
  int epochs_run = 0;
  double wall_seconds = 0.0;
};

// Mean 4-way cross-entropy pieces.
double cross_entropy(const Tensor& logits, Label gold);
Tensor cross_entropy_grad(const Tensor& logits, Label gold);  // softmax - 1hot

Label predict_label(Classifier& model, const Dialogue& d);
std::vector<Label> predict_labels(Classifier& model,
                                  const std::vector<Dialogue>& dialogues);
std::array<double, 4> predict_probs(Classifier& model, const Dialogue& d);

// Mini-batch Adam with per-epoch shuffles under opts.seed and early
// stopping on validation micro-F1 (ties keep the earliest epoch). The model
// is left holding the best epoch's weights. Non-finite loss aborts with a
// diagnostic. Both sets must be non-empty and fully labeled.
TrainReport train(Classifier& model, const std::vector<Dialogue>& train_set,
                  const std::vector<Dialogue>& val_set, const TrainOpts& opts);

std::string train_report_json(const TrainReport& report);

// One committee member: model trained on its own shuffled split.
struct CommitteeMember {
  std::unique_ptr<Classifier> model;
  TrainReport report;
  uint64_t split_seed = 0;
};

// k models over k distinct train/validation splits (split seed, model seed
// and shuffle seed all offset by the member index). Members are
// independent, so jobs > 1 trains them on worker threads with identical
// results.
std::vector<CommitteeMember> train_committee(
    const std::vector<Dialogue>& dataset, const ModelConfig& cfg,
    const Vocabulary& vocab, const TrainOpts& opts, int k,
    double val_fraction, int jobs = 1);

}  // namespace del
