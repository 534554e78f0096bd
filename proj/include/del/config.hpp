#pragma once

#include <cstdint>
#include <string>

#include "del/bo.hpp"
#include "del/model.hpp"
#include "del/train.hpp"

namespace del {

struct DataConfig {
  std::string train;
  std::string dev;   // optional; empty -> carve dev out of train
  std::string test;  // optional
  double val_fraction = 0.1;
  int min_count = 1;
};

struct CommitteeConfig {
  int k = 1;
  uint64_t base_seed = 1;
};

struct HpoConfig {
  SearchSpace space;  // dimension names must be tunable fields
  int n_iter = 10;
  int n_init = 5;
  uint64_t seed = 1;
};

// Top-level JSON run configuration shared by the train and hpo commands.
// Unknown keys are rejected at every level.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainOpts train;
  CommitteeConfig committee;
  HpoConfig hpo;
  std::string out_dir = "run_out";

  // Structural checks; path existence is checked separately so configs
  // can be validated before their data lands.
  void validate() const;
};

RunConfig run_config_from_json(const std::string& json_text);
std::string run_config_to_json(const RunConfig& cfg);

// Names accepted as hpo search dimensions.
bool is_tunable(const std::string& name);
// Applies one decoded dimension value (integer fields are rounded).
void apply_tunable(RunConfig& cfg, const std::string& name, double value);

// Returns the path itself when it exists (or is empty/absolute);
// otherwise retries under $DEL_DATA_DIR before giving the original back.
std::string resolve_data_path(const std::string& path);

}  // namespace del
