#include "del/config.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "json.hpp"

namespace del {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object())
    throw std::invalid_argument(where + " must be a json object");
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw std::invalid_argument("unknown " + where + " key: " + item.key());
}

DataConfig parse_data(const json& j) {
  reject_unknown(j, {"train", "dev", "test", "val_fraction", "min_count"},
                 "data config");
  DataConfig d;
  if (j.contains("train")) d.train = j["train"];
  if (j.contains("dev")) d.dev = j["dev"];
  if (j.contains("test")) d.test = j["test"];
  if (j.contains("val_fraction")) d.val_fraction = j["val_fraction"];
  if (j.contains("min_count")) d.min_count = j["min_count"];
  return d;
}

TrainOpts parse_train(const json& j) {
  reject_unknown(j,
                 {"max_epochs", "batch", "lr", "noam_d_model", "noam_warmup",
                  "patience", "seed"},
                 "train config");
  TrainOpts t;
  if (j.contains("max_epochs")) t.max_epochs = j["max_epochs"];
  if (j.contains("batch")) t.batch = j["batch"];
  if (j.contains("lr")) t.lr = j["lr"];
  if (j.contains("noam_d_model")) t.noam_d_model = j["noam_d_model"];
  if (j.contains("noam_warmup")) t.noam_warmup = j["noam_warmup"];
  if (j.contains("patience")) t.patience = j["patience"];
  if (j.contains("seed")) t.seed = j["seed"];
  return t;
}

CommitteeConfig parse_committee(const json& j) {
  reject_unknown(j, {"k", "base_seed"}, "committee config");
  CommitteeConfig c;
  if (j.contains("k")) c.k = j["k"];
  if (j.contains("base_seed")) c.base_seed = j["base_seed"];
  return c;
}

Dimension parse_dimension(const json& j) {
  reject_unknown(j, {"name", "type", "lo", "hi", "values"}, "hpo dimension");
  if (!j.contains("name") || !j.contains("type"))
    throw std::invalid_argument("hpo dimension needs name and type");
  std::string name = j["name"];
  std::string type = j["type"];
  if (!is_tunable(name))
    throw std::invalid_argument("hpo dimension is not tunable: " + name);
  if (type == "continuous") {
    if (!j.contains("lo") || !j.contains("hi") || j.contains("values"))
      throw std::invalid_argument("continuous dimension needs lo and hi: " +
                                  name);
    return Dimension::continuous(name, j["lo"], j["hi"]);
  }
  if (type == "grid") {
    if (!j.contains("values") || j.contains("lo") || j.contains("hi"))
      throw std::invalid_argument("grid dimension needs values: " + name);
    return Dimension::grid(name, j["values"].get<std::vector<double>>());
  }
  throw std::invalid_argument("hpo dimension type must be continuous or grid");
}

HpoConfig parse_hpo(const json& j) {
  reject_unknown(j, {"space", "n_iter", "n_init", "seed"}, "hpo config");
  HpoConfig h;
  if (j.contains("space")) {
    if (!j["space"].is_array())
      throw std::invalid_argument("hpo space must be an array");
    for (const auto& dim : j["space"])
      h.space.dims.push_back(parse_dimension(dim));
  }
  if (j.contains("n_iter")) h.n_iter = j["n_iter"];
  if (j.contains("n_init")) h.n_init = j["n_init"];
  if (j.contains("seed")) h.seed = j["seed"];
  return h;
}

}  // namespace

void RunConfig::validate() const {
  if (data.val_fraction <= 0.0 || data.val_fraction >= 1.0)
    throw std::invalid_argument("val_fraction must lie in (0, 1)");
  if (data.min_count < 1)
    throw std::invalid_argument("min_count must be >= 1");
  model.validate();
  train.validate();
  if (committee.k < 1) throw std::invalid_argument("committee k must be >= 1");
  if (!hpo.space.dims.empty()) hpo.space.validate();
  if (hpo.n_init < 1) throw std::invalid_argument("hpo n_init must be >= 1");
  if (hpo.n_iter < 0) throw std::invalid_argument("hpo n_iter must be >= 0");
  if (out_dir.empty()) throw std::invalid_argument("out_dir must be set");
}

RunConfig run_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad run config json: ") +
                                e.what());
  }
  reject_unknown(j, {"data", "model", "train", "committee", "hpo", "out_dir"},
                 "run config");
  RunConfig cfg;
  try {
    if (j.contains("data")) cfg.data = parse_data(j["data"]);
    if (j.contains("model"))
      cfg.model = model_config_from_json(j["model"].dump());
    if (j.contains("train")) cfg.train = parse_train(j["train"]);
    if (j.contains("committee")) cfg.committee = parse_committee(j["committee"]);
    if (j.contains("hpo")) cfg.hpo = parse_hpo(j["hpo"]);
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"];
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad run config value: ") +
                                e.what());
  }
  cfg.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["data"] = {{"train", cfg.data.train},
               {"dev", cfg.data.dev},
               {"test", cfg.data.test},
               {"val_fraction", cfg.data.val_fraction},
               {"min_count", cfg.data.min_count}};
  j["model"] = json::parse(model_config_to_json(cfg.model));
  j["train"] = {{"max_epochs", cfg.train.max_epochs},
                {"batch", cfg.train.batch},
                {"lr", cfg.train.lr},
                {"noam_d_model", cfg.train.noam_d_model},
                {"noam_warmup", cfg.train.noam_warmup},
                {"patience", cfg.train.patience},
                {"seed", cfg.train.seed}};
  j["committee"] = {{"k", cfg.committee.k},
                    {"base_seed", cfg.committee.base_seed}};
  json space = json::array();
  for (const auto& d : cfg.hpo.space.dims) {
    json dim;
    dim["name"] = d.name;
    if (d.discrete) {
      dim["type"] = "grid";
      dim["values"] = d.values;
    } else {
      dim["type"] = "continuous";
      dim["lo"] = d.lo;
      dim["hi"] = d.hi;
    }
    space.push_back(dim);
  }
  j["hpo"] = {{"space", space},
              {"n_iter", cfg.hpo.n_iter},
              {"n_init", cfg.hpo.n_init},
              {"seed", cfg.hpo.seed}};
  j["out_dir"] = cfg.out_dir;
  return j.dump(2);
}

bool is_tunable(const std::string& name) {
  static const std::set<std::string> names = {
      "hidden_size", "embed_dim", "mlp_hidden",  "hops",  "n_heads",
      "ffn_filters", "dropout",   "noam_warmup", "batch", "lr"};
  return names.count(name) > 0;
}

void apply_tunable(RunConfig& cfg, const std::string& name, double value) {
  auto as_int = [&] { return static_cast<int>(std::llround(value)); };
  if (name == "hidden_size")
    cfg.model.hidden_size = as_int();
  else if (name == "embed_dim")
    cfg.model.embed_dim = as_int();
  else if (name == "mlp_hidden")
    cfg.model.mlp_hidden = as_int();
  else if (name == "hops")
    cfg.model.hops = as_int();
  else if (name == "n_heads")
    cfg.model.n_heads = as_int();
  else if (name == "ffn_filters")
    cfg.model.ffn_filters = as_int();
  else if (name == "dropout")
    cfg.model.dropout = value;
  else if (name == "noam_warmup")
    cfg.train.noam_warmup = as_int();
  else if (name == "batch")
    cfg.train.batch = as_int();
  else if (name == "lr")
    cfg.train.lr = value;
  else
    throw std::invalid_argument("not a tunable field: " + name);
}

std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::exists(path) || fs::path(path).is_absolute())
    return path;
  const char* root = std::getenv("DEL_DATA_DIR");
  if (!root || !*root) return path;
  fs::path candidate = fs::path(root) / path;
  if (fs::exists(candidate)) return candidate.string();
  return path;
}

}  // namespace del
