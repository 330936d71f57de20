#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "bgmd/engine.hpp"

namespace bgmd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat experiment description mirroring the config file sections.
// parse_config_text fills one from `key = value` lines under [task],
// [oracle], [aggregator], [corruption], [engine], [output] headers; unknown
// sections or keys, duplicate keys, and malformed values are all rejected
// with the offending line number.
struct ExperimentConfig {
  // [task]
  std::string task_kind = "least_squares";
  std::size_t dim = 50;
  std::size_t num_samples = 500;
  double noise_std = 0.1;
  double ridge = 0.0;
  std::size_t hidden = 8;
  std::string data_csv;  // optional (A, y) CSV for least_squares
  double feature_noise_psi = 0.0;
  double feature_noise_std = 10.0;
  double label_flip_psi = 0.0;

  // [oracle]
  std::size_t batch_size = 10;
  std::size_t minibatch = 10;
  double additive_std = 0.0;
  bool heterogeneous = false;
  double sigma_sq = 0.0;

  // [aggregator]
  std::string agg_kind = "bgmd";
  std::size_t k = 0;   // absolute block size; 0 = derive from k_frac
  double k_frac = 0.1; // fraction of the task dimension
  std::string block_mode = "norm_sample";
  bool use_memory = true;
  double gm_rel_tol = 1e-8;
  std::size_t gm_max_iters = 1000;
  double gm_smoothing = -1.0;

  // [corruption]
  double psi = 0.0;
  std::string attack = "none";
  double attack_additive_std = 10.0;
  double flip_scale = -100.0;
  bool dynamic = true;

  // [engine]
  std::string mode = "sync";
  std::int64_t iterations = 1000;
  std::string step_policy = "constant";
  double gamma = 0.1;
  std::size_t local_steps = 10;
  unsigned quant_bits = 2;
  bool quant_bypass = false;
  double client_scale = 1.0;
  std::uint64_t seed = 42;
  double divergence_factor = 1e6;

  // [output]
  std::string out_dir;
  bool deterministic_timings = true;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical serialization with every key present. Reparsing the echo yields
// an identical config (and an identical echo, byte for byte).
std::string echo_config(const ExperimentConfig& cfg);

// Assign one value by "section.key" path, validating exactly as the file
// parser does. Sweeps use this to vary parameters.
void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key,
                      const std::string& value);

// Instantiate the task described by [task] (deterministic given cfg.seed).
Task build_task(const ExperimentConfig& cfg);

// Effective block size for this config on a given task dimension.
std::size_t resolve_block_size(const ExperimentConfig& cfg, std::size_t dim);

// Build the task, assemble the run described by the config, execute it, and
// return the result. `sink` may be null.
RunResult execute_experiment(const ExperimentConfig& cfg, MetricSink* sink);

}  // namespace bgmd
