#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "hamlearn/dataset.hpp"
#include "hamlearn/oracles.hpp"
#include "hamlearn/recovery.hpp"

namespace hl {

/// Named optimizer scenarios with their step sizes.
struct ScenarioParams {
  SGDConfig sgd;
  double tau = 1.0;
};

/// Presets: GD-a (0.01, 0, 0, tau 1), GD-b (0.001, 0, 0, tau 0.5),
/// Mom-a (0.01, 0.05, 0.6, tau 1), Mom-b (0.01, 0.1, 0.5, tau 0.5).
ScenarioParams scenario_preset(const std::string& name);

struct ModelConfig {
  std::string kind = "linear";  // linear | mlp | rnn
  std::size_t hidden = 30;
  std::string activation = "tanh";
};

struct DatasetConfig {
  std::string name;   // iris_synth | digits_synth | sequences_synth
  std::string csv;    // or a CSV table path
  std::string jsonl;  // or a JSON-lines sequence path
};

struct ToleranceConfig {
  double max_weight_diff = 1e-9;
  double mean_weight_diff = 1e-8;
  double loss_curve = 1e-9;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string scenario = "GD-a";  // preset name or "custom"
  SGDConfig sgd;                  // honored when scenario == custom
  double tau = 1.0;               // honored when scenario == custom
  std::string mode = "ff_output";
  std::size_t window = 0;  // rnn_truncated
  ModelConfig model;
  DatasetConfig dataset;
  std::string loss = "softmax_cross_entropy";
  std::size_t epochs = 40;
  std::uint64_t seed = 1234;
  bool shuffle = false;
  std::string output_dir = "out";
  ToleranceConfig tolerance;

  ScenarioParams resolve_scenario() const;

  static ExperimentConfig from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
  static ExperimentConfig load(const std::string& path);
  void save(const std::string& path) const;
};

struct WeightDiffStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct ExperimentSummary {
  std::string name;
  std::string scenario;
  std::size_t steps = 0;
  double final_loss = 0.0;
  WeightDiffStats final_diff;  // against the aligned-buffer oracle
  std::optional<WeightDiffStats> final_diff_mainstream;  // momentum runs only
  double max_step_weight_diff = 0.0;
  double mean_step_weight_diff = 0.0;
  double max_loss_gap = 0.0;
  double runtime_sec = 0.0;
  bool pass = false;
  std::string hl_csv;
  std::string oracle_csv;
  std::string summary_json;

  nlohmann::ordered_json to_json() const;
};

/// Paired run: the mapped Hamiltonian learner and the reference optimizer
/// consume the same stream from the same initial weights; per-step weight
/// gaps and loss curves land in CSV files under output_dir.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

struct CurveReport {
  std::size_t rows = 0;
  double max_gap = 0.0;
  std::size_t first_violation = 0;  // row index, valid when !pass
  bool pass = true;
};

/// Compares the loss column of two run CSVs at the given tolerance.
CurveReport compare_curves(const std::string& csv_a, const std::string& csv_b, double tol);

/// Model wiring shared by the harness and the acceptance suite.
NetSpec build_netspec(const ModelConfig& model, const std::string& mode,
                      std::size_t input_dim, std::size_t output_dim);

}  // namespace hl
