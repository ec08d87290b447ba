#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/client_opt.hpp"
#include "fedsim/data.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

struct ExperimentConfig {
  std::vector<Method> methods = {Method::FedAvg};
  ClientPool::Mode mode = ClientPool::Mode::CrossDevice;
  int pool_size = 10;       // cross-silo roster
  int rounds = 60;          // T
  HyperParams hp;
  ShiftConfig shift;
  std::string partition = "prior";  // prior | covariate | iid
  int num_domains = 5;
  int concept_shift_force_round = 0;  // 0 = never forced
  bool fedbn = false;
  bool weighted_average = false;

  std::vector<int> hidden = {32};
  bool norm_layer = false;

  std::string dataset = "synthetic";  // synthetic | file
  int classes = 10;
  int dim = 16;
  int n_per_class = 200;
  int val_per_class = 100;
  std::string data_file;

  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string out_dir = "out";
  double acc_target = 0.7;
  int workers = 1;

  ModelSpec model_spec() const;
  void validate() const;
  /// Canonical key-value serialization (sorted keys, 17-digit floats).
  std::string serialize() const;
  /// FNV-1a 64 over serialize(), hex.
  std::string digest() const;
};

/// Flat `key = value` text, '#' comments, unknown keys rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Applies `key=value` overrides on top of a parsed config.
void apply_override(ExperimentConfig& cfg, const std::string& key_value);

/// Runs the (method x seed) matrix; writes one metrics CSV per run plus a
/// summary CSV. Returns 0 on success, 1 when any run failed.
int run_experiment(const ExperimentConfig& cfg);

/// Single (method, seed) cell; exposed for tests and bindings.
RunHistory run_single(const ExperimentConfig& cfg, Method method, std::uint64_t seed);

}  // namespace fedsim
