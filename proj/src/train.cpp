#include "del/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "del/metrics.hpp"
#include "del/optim.hpp"
#include "del/rng.hpp"

namespace del {

void TrainOpts::validate() const {
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (patience < 0) throw std::invalid_argument("patience must be >= 0");
  if (noam_d_model > 0) {
    if (noam_warmup < 1) throw std::invalid_argument("noam warmup must be >= 1");
  } else if (!(lr > 0.0)) {
    throw std::invalid_argument("lr must be positive");
  }
}

double cross_entropy(const Tensor& logits, Label gold) {
  if (logits.ndim() != 1 || logits.dim(0) != kNumLabels)
    throw std::invalid_argument("cross_entropy: logits must be [4]");
  double mx = logits(0);
  for (int c = 1; c < kNumLabels; ++c) mx = std::max(mx, logits(c));
  double z = 0.0;
  for (int c = 0; c < kNumLabels; ++c) z += std::exp(logits(c) - mx);
  return -(logits(static_cast<int>(gold)) - mx - std::log(z));
}

Tensor cross_entropy_grad(const Tensor& logits, Label gold) {
  if (logits.ndim() != 1 || logits.dim(0) != kNumLabels)
    throw std::invalid_argument("cross_entropy_grad: logits must be [4]");
  Tensor g = softmax(Tensor({1, kNumLabels}, logits.values()), 1);
  Tensor out({kNumLabels}, g.values());
  out(static_cast<int>(gold)) -= 1.0;
  return out;
}

Label predict_label(Classifier& model, const Dialogue& d) {
  Tensor logits = model.forward(d, false);
  model.clear_cache();
  int best = 0;
  for (int c = 1; c < kNumLabels; ++c)
    if (logits(c) > logits(best)) best = c;
  return static_cast<Label>(best);
}

std::vector<Label> predict_labels(Classifier& model,
                                  const std::vector<Dialogue>& dialogues) {
  std::vector<Label> out;
  out.reserve(dialogues.size());
  for (const Dialogue& d : dialogues) out.push_back(predict_label(model, d));
  return out;
}

std::array<double, 4> predict_probs(Classifier& model, const Dialogue& d) {
  Tensor logits = model.forward(d, false);
  model.clear_cache();
  Tensor p = softmax(Tensor({1, kNumLabels}, logits.values()), 1);
  return {p(0, 0), p(0, 1), p(0, 2), p(0, 3)};
}

namespace {

std::vector<Label> gold_labels(const std::vector<Dialogue>& set,
                               const char* which) {
  std::vector<Label> out;
  out.reserve(set.size());
  for (const Dialogue& d : set) {
    if (!d.label)
      throw std::invalid_argument(std::string("train: unlabeled ") + which +
                                  " example " + d.id);
    out.push_back(*d.label);
  }
  return out;
}

std::vector<Tensor> snapshot(const std::vector<Param>& tensors) {
  std::vector<Tensor> out;
  out.reserve(tensors.size());
  for (const Param& p : tensors) out.push_back(*p.value);
  return out;
}

void restore(const std::vector<Param>& tensors,
             const std::vector<Tensor>& snap) {
  for (size_t i = 0; i < tensors.size(); ++i) *tensors[i].value = snap[i];
}

}  // namespace

TrainReport train(Classifier& model, const std::vector<Dialogue>& train_set,
                  const std::vector<Dialogue>& val_set,
                  const TrainOpts& opts) {
  opts.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty train or validation set");
  gold_labels(train_set, "train");
  std::vector<Label> val_gold = gold_labels(val_set, "validation");

  auto t0 = std::chrono::steady_clock::now();
  std::vector<Param> params = model.parameters();
  std::vector<Param> state = model.state_tensors();
  std::vector<AdamState> adam;
  adam.reserve(params.size());
  for (const Param& p : params) adam.push_back(AdamState::for_param(*p.value));

  Rng rng(opts.seed);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  std::vector<Tensor> best_snap = snapshot(state);
  long step = 0;

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int n = static_cast<int>(train_set.size());
    for (int start = 0; start < n; start += opts.batch) {
      int stop = std::min(n, start + opts.batch);
      zero_params(params);
      for (int i = start; i < stop; ++i) {
        const Dialogue& d = train_set[static_cast<size_t>(order[static_cast<size_t>(i)])];
        Tensor logits = model.forward(d, true);
        double loss = cross_entropy(logits, *d.label);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "training diverged: non-finite loss at epoch " << epoch
              << ", batch " << start / opts.batch << ", example " << d.id;
          throw std::runtime_error(msg.str());
        }
        loss_sum += loss;
        model.backward(cross_entropy_grad(logits, *d.label));
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      for (const Param& p : params)
        for (double& g : p.grad->values()) g *= inv;
      ++step;
      double lr = opts.noam_d_model > 0
                      ? noam_lr(step, opts.noam_d_model, opts.noam_warmup)
                      : opts.lr;
      for (size_t i = 0; i < params.size(); ++i)
        adam_step(*params[i].value, *params[i].grad, adam[i], lr);
    }
    report.train_loss.push_back(loss_sum / n);

    std::vector<Label> val_pred = predict_labels(model, val_set);
    double f1 = micro_f1(val_gold, val_pred).f1;
    report.val_f1.push_back(f1);
    report.epochs_run = epoch + 1;

    if (report.best_epoch < 0 || f1 > report.best_val_f1) {
      report.best_epoch = epoch;
      report.best_val_f1 = f1;
      best_snap = snapshot(state);
    }
    if (epoch - report.best_epoch > opts.patience) break;
  }

  restore(state, best_snap);
  model.clear_cache();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

std::string train_report_json(const TrainReport& report) {
  nlohmann::json j;
  j["train_loss"] = report.train_loss;
  j["val_f1"] = report.val_f1;
  j["best_epoch"] = report.best_epoch;
  j["best_val_f1"] = report.best_val_f1;
  j["epochs_run"] = report.epochs_run;
  // wall_seconds stays out: report files must be byte-identical across
  // reruns of the same seed.
  return j.dump(2);
}

std::vector<CommitteeMember> train_committee(
    const std::vector<Dialogue>& dataset, const ModelConfig& cfg,
    const Vocabulary& vocab, const TrainOpts& opts, int k, double val_fraction,
    int jobs) {
  opts.validate();
  cfg.validate();
  if (k < 1) throw std::invalid_argument("train_committee: k must be >= 1");
  if (jobs < 1) throw std::invalid_argument("train_committee: jobs must be >= 1");

  std::vector<CommitteeMember> members(static_cast<size_t>(k));
  auto run_one = [&](int i) {
    CommitteeMember& m = members[static_cast<size_t>(i)];
    m.split_seed = opts.seed + static_cast<uint64_t>(i);
    auto [tr, va] = split_shuffle(dataset, m.split_seed, val_fraction);
    ModelConfig mc = cfg;
    mc.seed = cfg.seed + static_cast<uint64_t>(i);
    m.model = make_classifier(mc, vocab);
    TrainOpts to = opts;
    to.seed = opts.seed + static_cast<uint64_t>(i);
    m.report = train(*m.model, tr, va, to);
  };

  if (jobs == 1 || k == 1) {
    for (int i = 0; i < k; ++i) run_one(i);
    return members;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < k; i = next.fetch_add(1)) run_one(i);
  };
  std::vector<std::thread> pool;
  int width = std::min(jobs, k);
  pool.reserve(static_cast<size_t>(width));
  for (int t = 0; t < width; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return members;
}

}  // namespace del
