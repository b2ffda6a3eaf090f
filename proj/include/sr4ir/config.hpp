#pragma once

#include <string>
#include <vector>

#include "sr4ir/trainer.hpp"

namespace sr4ir {

// Declarative description of one experiment: dataset, networks, training,
// and the run matrix (scenarios x seeds). Parsed from flat `key = value`
// text with dotted namespaces; unknown keys are errors and every field has a
// default, so the empty config is valid.
struct ExperimentConfig {
  DatasetSpec dataset;
  NetConfig net;  // num_classes and scale are synced from dataset in finalize()
  TrainConfig train;
  std::vector<ScenarioKind> scenarios = {ScenarioKind::SR4IR};
  std::vector<uint64_t> seeds = {1};
  std::string output_dir = "out";

  // run matrix in execution order
  std::vector<std::pair<ScenarioKind, uint64_t>> run_matrix() const;
};

// strict: unknown key, bad value and invariant violations all name the key
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key_eq_value);

// canonical form; parse(emit(cfg)) reproduces cfg exactly
std::string emit_config(const ExperimentConfig& cfg);

// syncs derived fields and validates every nested invariant
void finalize_config(ExperimentConfig& cfg);

std::vector<Role> roles_from_string(const std::string& csv);
std::string roles_to_string(const std::vector<Role>& roles);

// Executes the run matrix sequentially: echoes config.resolved, runs every
// (scenario, seed) pair into its own subdirectory (per-epoch CSV +
// checkpoints), and writes output_dir/summary.csv. Returns the reports in
// matrix order.
std::vector<RunReport> run_experiment(const ExperimentConfig& cfg, bool resume = false,
                                      bool verbose = false);

}  // namespace sr4ir
