#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "del/config.hpp"
#include "del/ioutil.hpp"
#include "del/metrics.hpp"
#include "del/model.hpp"
#include "del/synth.hpp"
#include "del/train.hpp"
#include "del/vote.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace del;

namespace {

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw std::runtime_error("missing " + what + ": " + path);
}

// Corpus files may or may not carry the trailing label column.
bool sniff_labeled(const std::string& path) {
  std::ifstream in(path);
  std::string header;
  if (!in || !std::getline(in, header))
    throw std::runtime_error("cannot read corpus: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  return std::count(header.begin(), header.end(), '\t') == 4;
}

void resolve_paths(RunConfig& cfg) {
  cfg.data.train = resolve_data_path(cfg.data.train);
  cfg.data.dev = resolve_data_path(cfg.data.dev);
  cfg.data.test = resolve_data_path(cfg.data.test);
  cfg.model.embed_source = resolve_data_path(cfg.model.embed_source);
  if (cfg.data.train.empty())
    throw std::invalid_argument("config needs data.train");
  require_file(cfg.data.train, "train corpus");
  if (!cfg.data.dev.empty()) require_file(cfg.data.dev, "dev corpus");
  if (!cfg.data.test.empty()) require_file(cfg.data.test, "test corpus");
  if (!cfg.model.embed_source.empty())
    require_file(cfg.model.embed_source, "embedding file");
}

void write_manifest_for(const std::string& path, const std::string& config_text,
                        const std::vector<uint64_t>& seeds) {
  write_text_atomic(path, manifest_json(config_text, seeds));
}

std::string labels_to_predictions(const std::string& out_path,
                                  Classifier& model,
                                  const std::vector<Dialogue>& corpus,
                                  bool with_probs) {
  PredictionSet ps;
  ps.name = stem_of(out_path);
  for (const auto& d : corpus) {
    ps.ids.push_back(d.id);
    ps.labels.push_back(predict_label(model, d));
    if (with_probs) ps.probs.push_back(predict_probs(model, d));
  }
  write_file_atomic_via(out_path,
                        [&](const std::string& tmp) { write_predictions(tmp, ps); });
  return out_path;
}

// ---- commands ----------------------------------------------------------

int cmd_prepare(const std::string& out_dir, int n_train, int n_test,
                uint64_t seed) {
  fs::create_directories(out_dir);
  auto all = synth_corpus(n_train + n_test, seed);
  std::vector<Dialogue> train(all.begin(), all.begin() + n_train);
  std::vector<Dialogue> test(all.begin() + n_train, all.end());
  write_file_atomic_via(out_dir + "/train.tsv", [&](const std::string& tmp) {
    write_tsv(tmp, train, true);
  });
  write_file_atomic_via(out_dir + "/test.tsv", [&](const std::string& tmp) {
    write_tsv(tmp, test, true);
  });
  char desc[128];
  std::snprintf(desc, sizeof desc, "prepare n_train=%d n_test=%d seed=%llu",
                n_train, n_test, static_cast<unsigned long long>(seed));
  write_manifest_for(out_dir + "/manifest.json", desc, {seed});
  json out = {{"train", out_dir + "/train.tsv"},
              {"test", out_dir + "/test.tsv"},
              {"n_train", n_train},
              {"n_test", n_test}};
  std::printf("%s\n", out.dump().c_str());
  return 0;
}

int cmd_train(RunConfig cfg, int jobs) {
  resolve_paths(cfg);
  auto full_train = load_tsv(cfg.data.train, true);
  Vocabulary vocab = build_vocab(full_train, cfg.data.min_count);
  fs::create_directories(cfg.out_dir);
  std::string cfg_text = run_config_to_json(cfg);

  json summary;
  if (cfg.committee.k == 1) {
    std::vector<Dialogue> tr, dv;
    if (!cfg.data.dev.empty()) {
      tr = full_train;
      dv = load_tsv(cfg.data.dev, true);
    } else {
      std::tie(tr, dv) =
          split_shuffle(full_train, cfg.train.seed, cfg.data.val_fraction);
    }
    auto model = make_classifier(cfg.model, vocab);
    TrainReport rep = train(*model, tr, dv, cfg.train);
    write_file_atomic_via(cfg.out_dir + "/model.ckpt", [&](const std::string& tmp) {
      save_checkpoint(tmp, *model);
    });
    write_text_atomic(cfg.out_dir + "/train_report.json",
                      train_report_json(rep));
    summary = {{"checkpoint", cfg.out_dir + "/model.ckpt"},
               {"best_val_f1", rep.best_val_f1},
               {"best_epoch", rep.best_epoch},
               {"epochs_run", rep.epochs_run}};
    write_manifest_for(cfg.out_dir + "/manifest.json", cfg_text,
                       {cfg.train.seed, cfg.model.seed});
  } else {
    TrainOpts opts = cfg.train;
    opts.seed = cfg.committee.base_seed;
    auto members = train_committee(full_train, cfg.model, vocab, opts,
                                   cfg.committee.k, cfg.data.val_fraction, jobs);
    json list = json::array();
    for (size_t i = 0; i < members.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "member_%02zu.ckpt", i);
      write_file_atomic_via(cfg.out_dir + "/" + name, [&](const std::string& tmp) {
        save_checkpoint(tmp, *members[i].model);
      });
      list.push_back({{"checkpoint", name},
                      {"split_seed", members[i].split_seed},
                      {"best_val_f1", members[i].report.best_val_f1},
                      {"best_epoch", members[i].report.best_epoch},
                      {"epochs_run", members[i].report.epochs_run}});
    }
    write_text_atomic(cfg.out_dir + "/committee.json", list.dump(2));
    summary = {{"committee", cfg.out_dir + "/committee.json"},
               {"k", cfg.committee.k}};
    write_manifest_for(cfg.out_dir + "/manifest.json", cfg_text,
                       {cfg.committee.base_seed, cfg.model.seed});
  }
  std::printf("%s\n", summary.dump().c_str());
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, bool with_probs) {
  require_file(model_path, "checkpoint");
  require_file(data_path, "corpus");
  auto model = load_checkpoint(model_path);
  auto corpus = load_tsv(data_path, sniff_labeled(data_path));
  labels_to_predictions(out_path, *model, corpus, with_probs);
  write_manifest_for(out_path + ".manifest.json",
                     "predict " + model_path + " " + data_path +
                         (with_probs ? " probs" : ""),
                     {model->config().seed});
  std::printf("%s\n", json({{"predictions", out_path},
                            {"n", corpus.size()}}).dump().c_str());
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gold_path,
             const std::string& out_path) {
  PredictionSet pred = load_predictions(pred_path, stem_of(pred_path));
  auto gold_corpus = load_tsv(gold_path, true);
  std::map<std::string, Label> gold_by_id;
  for (const auto& d : gold_corpus) gold_by_id[d.id] = *d.label;
  if (pred.ids.size() != gold_by_id.size())
    throw std::runtime_error("prediction/gold size mismatch");
  std::vector<Label> gold, hyp;
  for (size_t i = 0; i < pred.ids.size(); ++i) {
    auto it = gold_by_id.find(pred.ids[i]);
    if (it == gold_by_id.end())
      throw std::runtime_error("prediction id missing from gold: " +
                               pred.ids[i]);
    gold.push_back(it->second);
    hyp.push_back(pred.labels[i]);
  }
  std::string report = eval_report_json(micro_f1(gold, hyp));
  if (!out_path.empty()) {
    write_text_atomic(out_path, report);
    write_manifest_for(out_path + ".manifest.json",
                       "eval " + pred_path + " " + gold_path, {});
  }
  std::printf("%s\n", report.c_str());
  return 0;
}

int cmd_vote(const std::vector<std::string>& inputs, const std::string& out_path,
             bool as_ensemble) {
  std::vector<PredictionSet> sets;
  for (const auto& p : inputs) sets.push_back(load_predictions(p, stem_of(p)));
  PredictionSet v = as_ensemble ? final_ensemble(sets) : vote_committee(sets);
  write_file_atomic_via(out_path,
                        [&](const std::string& tmp) { write_predictions(tmp, v); });
  std::string desc = as_ensemble ? "ensemble" : "vote";
  for (const auto& p : inputs) desc += " " + p;
  write_manifest_for(out_path + ".manifest.json", desc, {});
  std::printf("%s\n", json({{"predictions", out_path},
                            {"voters", inputs.size()}}).dump().c_str());
  return 0;
}

int cmd_correlate(const std::vector<std::string>& inputs,
                  const std::string& out_path) {
  std::vector<PredictionSet> sets;
  for (const auto& p : inputs) sets.push_back(load_predictions(p, stem_of(p)));
  for (size_t i = 1; i < sets.size(); ++i)
    if (sets[i].ids != sets[0].ids)
      throw std::runtime_error("prediction files disagree on ids: " +
                               inputs[i]);
  std::vector<std::vector<Label>> rows;
  for (const auto& s : sets) rows.push_back(s.labels);
  Tensor m = agreement_matrix(rows);

  std::string tsv = "name";
  for (const auto& s : sets) tsv += "\t" + s.name;
  tsv += "\n";
  for (size_t i = 0; i < sets.size(); ++i) {
    tsv += sets[i].name;
    for (size_t j = 0; j < sets.size(); ++j) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g",
                    m(static_cast<int>(i), static_cast<int>(j)));
      tsv += "\t";
      tsv += buf;
    }
    tsv += "\n";
  }
  write_text_atomic(out_path, tsv);
  std::string desc = "correlate";
  for (const auto& p : inputs) desc += " " + p;
  write_manifest_for(out_path + ".manifest.json", desc, {});
  std::printf("%s\n", json({{"matrix", out_path},
                            {"models", inputs.size()}}).dump().c_str());
  return 0;
}

int cmd_hpo(RunConfig cfg) {
  resolve_paths(cfg);
  if (cfg.hpo.space.dims.empty())
    throw std::invalid_argument("config needs a non-empty hpo.space");
  auto full_train = load_tsv(cfg.data.train, true);
  Vocabulary vocab = build_vocab(full_train, cfg.data.min_count);
  // All trials share one split so their scores are comparable.
  auto [tr, dv] =
      split_shuffle(full_train, cfg.train.seed, cfg.data.val_fraction);

  auto objective = [&](const std::vector<double>& values) {
    RunConfig trial_cfg = cfg;
    for (size_t i = 0; i < values.size(); ++i)
      apply_tunable(trial_cfg, cfg.hpo.space.dims[i].name, values[i]);
    trial_cfg.model.validate();
    trial_cfg.train.validate();
    auto model = make_classifier(trial_cfg.model, vocab);
    return train(*model, tr, dv, trial_cfg.train).best_val_f1;
  };

  BoResult res = bo_loop(objective, cfg.hpo.space, cfg.hpo.n_iter,
                         cfg.hpo.n_init, cfg.hpo.seed);

  fs::create_directories(cfg.out_dir);
  json trials = json::array();
  for (size_t i = 0; i < res.history.size(); ++i) {
    const Trial& t = res.history[i];
    json cfg_obj;
    for (size_t d = 0; d < t.config.size(); ++d)
      cfg_obj[cfg.hpo.space.dims[d].name] = t.config[d];
    trials.push_back({{"x", t.x},
                      {"config", cfg_obj},
                      {"y", t.y},
                      {"failed", t.failed},
                      {"f_best", res.best_so_far[i]}});
  }
  write_text_atomic(cfg.out_dir + "/trials.json", trials.dump(2));

  RunConfig best_cfg = cfg;
  for (size_t d = 0; d < res.best.config.size(); ++d)
    apply_tunable(best_cfg, cfg.hpo.space.dims[d].name, res.best.config[d]);
  write_text_atomic(cfg.out_dir + "/best_config.json",
                    run_config_to_json(best_cfg));
  write_manifest_for(cfg.out_dir + "/manifest.json", run_config_to_json(cfg),
                     {cfg.hpo.seed, cfg.train.seed, cfg.model.seed});

  json summary = {{"best_y", res.best.y},
                  {"trials", res.history.size()},
                  {"best_config", cfg.out_dir + "/best_config.json"}};
  std::printf("%s\n", summary.dump().c_str());
  return 0;
}

int cmd_features_lr(const std::vector<std::string>& feature_paths,
                    const std::string& labels_path, double l2, int epochs,
                    const std::string& out_dir) {
  for (const auto& p : feature_paths) require_file(p, "feature file");
  require_file(labels_path, "gold corpus");
  std::vector<FeatureMatrix> parts;
  for (const auto& p : feature_paths) parts.push_back(load_features(p));
  FeatureMatrix feats =
      parts.size() == 1 ? std::move(parts[0]) : concat_features(parts);

  auto gold_corpus = load_tsv(labels_path, true);
  std::map<std::string, Label> gold_by_id;
  for (const auto& d : gold_corpus) gold_by_id[d.id] = *d.label;
  std::vector<Label> labels;
  for (const auto& id : feats.ids) {
    auto it = gold_by_id.find(id);
    if (it == gold_by_id.end())
      throw std::runtime_error("feature id missing from gold: " + id);
    labels.push_back(it->second);
  }

  LogregReport rep;
  LogregModel model = lr_train(feats, labels, l2, epochs, &rep);
  auto hyp = lr_predict(model, feats);
  int correct = 0;
  for (size_t i = 0; i < hyp.size(); ++i)
    if (hyp[i] == labels[i]) ++correct;
  double acc = labels.empty() ? 0.0 : double(correct) / double(labels.size());

  fs::create_directories(out_dir);
  json model_json;
  model_json["dim"] = feats.dim();
  model_json["classes"] = {"happy", "sad", "angry", "others"};
  json w = json::array();
  for (int r = 0; r < feats.dim(); ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(model.w(r, c));
    w.push_back(row);
  }
  model_json["w"] = w;
  model_json["b"] = {model.b(0), model.b(1), model.b(2), model.b(3)};
  write_text_atomic(out_dir + "/lr_model.json", model_json.dump(2));

  json report = {{"losses", rep.losses},
                 {"grad_norm", rep.grad_norm},
                 {"epochs_run", rep.epochs_run},
                 {"train_accuracy", acc}};
  write_text_atomic(out_dir + "/lr_report.json", report.dump(2));

  std::string desc = "features-lr";
  for (const auto& p : feature_paths) desc += " " + p;
  desc += " " + labels_path;
  write_manifest_for(out_dir + "/manifest.json", desc, {});
  std::printf("%s\n", json({{"model", out_dir + "/lr_model.json"},
                            {"train_accuracy", acc},
                            {"grad_norm", rep.grad_norm}}).dump().c_str());
  return 0;
}

RunConfig load_run_config(const std::string& config_path, bool seed_set,
                          uint64_t seed, const std::string& out_override) {
  RunConfig cfg = run_config_from_json(read_text_file(config_path));
  if (seed_set) {
    cfg.train.seed = seed;
    cfg.model.seed = seed;
    cfg.committee.base_seed = seed;
    cfg.hpo.seed = seed;
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialogue emotion classification pipeline"};
  app.require_subcommand(1);

  std::string config_path, out, model_path, data_path, pred_path, gold_path,
      labels_path;
  std::vector<std::string> inputs, feature_paths;
  uint64_t seed = 0;
  bool seed_set = false, with_probs = false;
  int jobs = 1, n_train = 2000, n_test = 500, lr_epochs = 200;
  uint64_t prep_seed = 7;
  double l2 = 1e-4;

  auto* prepare = app.add_subcommand("prepare", "generate the synthetic corpus");
  prepare->add_option("--out", out, "output directory")->required();
  prepare->add_option("--n-train", n_train, "training examples");
  prepare->add_option("--n-test", n_test, "test examples");
  prepare->add_option("--seed", prep_seed, "corpus seed");

  auto* train_cmd = app.add_subcommand("train", "train a model or committee");
  train_cmd->add_option("--config", config_path, "run config json")->required();
  train_cmd->add_option("--seed", seed, "override every seed")
      ->each([&](const std::string&) { seed_set = true; });
  train_cmd->add_option("--jobs", jobs, "parallel committee trainings");
  train_cmd->add_option("--out", out, "override out_dir");

  auto* predict = app.add_subcommand("predict", "label a corpus");
  predict->add_option("--model", model_path, "checkpoint")->required();
  predict->add_option("--data", data_path, "corpus tsv")->required();
  predict->add_option("--out", out, "prediction tsv")->required();
  predict->add_flag("--probs", with_probs, "append class probabilities");

  auto* eval = app.add_subcommand("eval", "score predictions against gold");
  eval->add_option("--pred", pred_path, "prediction tsv")->required();
  eval->add_option("--gold", gold_path, "labeled corpus tsv")->required();
  eval->add_option("--out", out, "report json");

  auto* vote = app.add_subcommand("vote", "majority-vote prediction files");
  vote->add_option("inputs", inputs, "prediction tsvs")->required();
  vote->add_option("--out", out, "output tsv")->required();

  auto* ensemble =
      app.add_subcommand("ensemble", "majority-vote model outputs");
  ensemble->add_option("inputs", inputs, "prediction tsvs")->required();
  ensemble->add_option("--out", out, "output tsv")->required();

  auto* correlate =
      app.add_subcommand("correlate", "pairwise prediction agreement");
  correlate->add_option("inputs", inputs, "prediction tsvs")
      ->required()
      ->expected(2, -1);
  correlate->add_option("--out", out, "matrix tsv")->required();

  auto* hpo = app.add_subcommand("hpo", "gaussian-process hyper-parameter search");
  hpo->add_option("--config", config_path, "run config json")->required();
  hpo->add_option("--seed", seed, "override every seed")
      ->each([&](const std::string&) { seed_set = true; });
  hpo->add_option("--out", out, "override out_dir");

  auto* flr = app.add_subcommand("features-lr",
                                 "logistic regression on precomputed features");
  flr->add_option("--features", feature_paths, "feature tsv(s)")->required();
  flr->add_option("--labels", labels_path, "labeled corpus tsv")->required();
  flr->add_option("--l2", l2, "l2 penalty");
  flr->add_option("--epochs", lr_epochs, "max epochs");
  flr->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(prepare))
      return cmd_prepare(out, n_train, n_test, prep_seed);
    if (app.got_subcommand(train_cmd))
      return cmd_train(load_run_config(config_path, seed_set, seed, out), jobs);
    if (app.got_subcommand(predict))
      return cmd_predict(model_path, data_path, out, with_probs);
    if (app.got_subcommand(eval)) return cmd_eval(pred_path, gold_path, out);
    if (app.got_subcommand(vote)) return cmd_vote(inputs, out, false);
    if (app.got_subcommand(ensemble)) return cmd_vote(inputs, out, true);
    if (app.got_subcommand(correlate)) return cmd_correlate(inputs, out);
    if (app.got_subcommand(hpo))
      return cmd_hpo(load_run_config(config_path, seed_set, seed, out));
    if (app.got_subcommand(flr))
      return cmd_features_lr(feature_paths, labels_path, l2, lr_epochs, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", json({{"error", e.what()}}).dump().c_str());
    return 1;
  }
  return 1;
}
