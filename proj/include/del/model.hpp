#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "del/data.hpp"
#include "del/gradcheck.hpp"
#include "del/layers.hpp"
#include "del/rng.hpp"
#include "del/tensor.hpp"

namespace del {

// Everything needed to rebuild a classifier's parameter shapes. Two models
// constructed from equal configs (and vocab) are bitwise identical.
struct ModelConfig {
  std::string architecture = "hierarchical";  // flat | hierarchical
  std::string encoder = "lstm";               // lstm | utrs
  int hidden_size = 64;
  int embed_dim = 64;
  double dropout = 0.3;
  int n_heads = 4;       // utrs only
  int hops = 2;          // utrs only
  int ffn_filters = 50;  // utrs only
  int mlp_hidden = 64;
  std::string embed_source;  // word-vector file; empty = random init
  bool freeze_embeddings = false;
  bool bidirectional = false;  // lstm only
  uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument on bad fields
};

std::string model_config_to_json(const ModelConfig& cfg);
// Unknown keys are rejected; absent keys keep their defaults.
ModelConfig model_config_from_json(const std::string& json_text);

// Sequence encoder: [T x in] -> [T x out_dim()], plus extraction of the
// fixed-size final state used by the hierarchical turn-level stage.
class SeqEncoder {
 public:
  virtual ~SeqEncoder() = default;
  virtual Tensor forward(const Tensor& x, const Mask& mask) = 0;
  virtual Tensor backward(const Tensor& dh) = 0;
  virtual int out_dim() const = 0;
  virtual Tensor final_state(const Tensor& h) const = 0;  // [out_dim]
  virtual void add_final_grad(Tensor& dh, const Tensor& dfinal) const = 0;
  virtual std::vector<Param> params(const std::string& prefix) = 0;
  virtual void clear_cache() = 0;
};

std::unique_ptr<SeqEncoder> make_encoder(const ModelConfig& cfg, int in_dim,
                                         Rng& rng);

// A trained or trainable dialogue classifier. forward/backward follow the
// layer protocol: backwards must mirror forwards in reverse order, and
// parameter gradients accumulate until zeroed.
class Classifier {
 public:
  virtual ~Classifier() = default;

  // Logits over the 4 labels. training enables dropout (advancing the
  // model's private dropout stream).
  virtual Tensor forward(const Dialogue& d, bool training) = 0;
  virtual void backward(const Tensor& dlogits) = 0;

  virtual std::vector<Param> parameters() = 0;     // trainable only
  virtual std::vector<Param> state_tensors() = 0;  // checkpoint contents
  virtual void clear_cache() = 0;
  virtual const ModelConfig& config() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
};

// Whole dialogue as one token sequence with <sep> between turns:
// embed -> encoder -> attention pooling -> dropout -> mlp head.
class FlatModel : public Classifier {
 public:
  FlatModel(const ModelConfig& cfg, const Vocabulary& vocab);

  Tensor forward(const Dialogue& d, bool training) override;
  // Raw id path; mask is derived as id != kPad.
  Tensor forward_ids(const std::vector<int>& ids, bool training);
  void backward(const Tensor& dlogits) override;
  std::vector<Param> parameters() override;
  std::vector<Param> state_tensors() override;
  void clear_cache() override;
  const ModelConfig& config() const override { return cfg_; }
  const Vocabulary& vocabulary() const override { return vocab_; }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  Embedding embed_;
  std::unique_ptr<SeqEncoder> enc_;
  AttnPool pool_;
  MlpHead head_;
  Rng dropout_rng_;
  std::vector<Tensor> drop_masks_;
};

// Per-turn word encoder + attention pooling produce one vector per turn;
// a turn-level encoder over the 3-step sequence yields the dialogue state:
// final state -> dropout -> mlp head. Word-level weights are shared
// across the three turns.
class HierModel : public Classifier {
 public:
  HierModel(const ModelConfig& cfg, const Vocabulary& vocab);

  Tensor forward(const Dialogue& d, bool training) override;
  Tensor forward_ids(const std::array<std::vector<int>, 3>& turns,
                     bool training);
  void backward(const Tensor& dlogits) override;
  std::vector<Param> parameters() override;
  std::vector<Param> state_tensors() override;
  void clear_cache() override;
  const ModelConfig& config() const override { return cfg_; }
  const Vocabulary& vocabulary() const override { return vocab_; }

  // Pooled turn vectors recorded by the most recent forward.
  const std::array<Tensor, 3>& last_turn_vectors() const {
    return turn_vectors_;
  }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  Embedding embed_;
  std::unique_ptr<SeqEncoder> word_enc_;
  AttnPool word_pool_;
  std::unique_ptr<SeqEncoder> turn_enc_;
  MlpHead head_;
  Rng dropout_rng_;
  std::vector<Tensor> drop_masks_;
  std::array<Tensor, 3> turn_vectors_;
};

// Builds a model per config. When embed_source is set, word vectors are
// loaded from that file against the vocabulary.
std::unique_ptr<Classifier> make_classifier(const ModelConfig& cfg,
                                            const Vocabulary& vocab);

// ---- checkpoints ----------------------------------------------------------

// Container layout: a text manifest (format tag, config JSON, vocabulary,
// ordered tensor entries `name ndim dims... float32`) followed by raw
// little-endian float32 payloads. Weights are stored at single precision,
// so save/load round-trips are exact in float32.
void save_checkpoint(const std::string& path, Classifier& model);
std::unique_ptr<Classifier> load_checkpoint(const std::string& path);

// ---- feature-based logistic regression ------------------------------------

// Multinomial logistic regression over precomputed sentence features.
struct LogregModel {
  Tensor w;  // [d x 4]
  Tensor b;  // [4]
};

struct LogregReport {
  std::vector<double> losses;  // one per epoch, non-increasing
  double grad_norm = 0.0;      // at exit
  int epochs_run = 0;
};

Tensor lr_forward(const LogregModel& model, std::span<const double> x);

// Mean cross-entropy + (l2/2)*||W||^2 and, when grad is non-null, its
// analytic gradient in matching shapes.
double lr_loss_grad(const LogregModel& model, const FeatureMatrix& features,
                    const std::vector<Label>& labels, double l2,
                    LogregModel* grad = nullptr);

// Full-batch gradient descent with backtracking line search on
// mean cross-entropy + (l2/2)*||W||^2 (bias unpenalized). Stops early once
// the gradient norm drops below tol.
LogregModel lr_train(const FeatureMatrix& features,
                     const std::vector<Label>& labels, double l2, int epochs,
                     LogregReport* report = nullptr, double tol = 1e-8);

std::vector<Label> lr_predict(const LogregModel& model,
                              const FeatureMatrix& features);

}  // namespace del
