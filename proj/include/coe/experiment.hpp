#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coe/common.hpp"
#include "coe/experts.hpp"
#include "coe/margin.hpp"
#include "coe/multiplex.hpp"

namespace coe {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct ExperimentConfig {
  std::string dataset_dir;  // empty: generate from `synthetic`
  SyntheticSpec synthetic;

  int epochs = 800;
  Scalar lr = 0.001;
  int d_hidden = 128;
  int d_out = 64;
  int knn_k = 15;
  int order = 2;
  int depth = 2;
  Scalar tau_c = 0.2;
  Scalar alpha = 100.0;
  Scalar lambda = 100.0;
  int stage2_iterations = 500;
  std::string stage2_optimizer = "adaptive";  // or "plain_gd"
  std::vector<std::uint64_t> seeds{0};
  bool no_gsl = false;
  bool no_he = false;
  Scalar train_fraction = 0.3;
  Scalar val_fraction = 0.2;
  int refresh_every = 10;
  KnnMode knn;
};

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);
std::string config_hash(const ExperimentConfig& config);
std::string artifact_version(const ExperimentConfig& config);

struct MethodResult {
  std::vector<Scalar> per_seed;
  Scalar mean = 0.0;
  std::optional<Scalar> stddev;  // absent with fewer than 2 seeds
};

struct Report {
  std::vector<std::pair<std::string, MethodResult>> methods;  // deterministic order
  std::vector<std::uint64_t> seeds;
  std::string hash;
  std::string version;
  nlohmann::json config_json;
  nlohmann::json extra;
  double wall_seconds = 0.0;

  const MethodResult* find(const std::string& name) const;
};

// Timing excluded; two runs of the same config must agree byte for byte.
nlohmann::json canonical_report_json(const Report& report);
void write_report(const std::string& out_dir, const Report& report);

struct SingleRun {
  Scalar coe_accuracy = 0.0;
  Scalar rf_accuracy = 0.0;
  Scalar wrf_accuracy = 0.0;
  std::vector<std::string> expert_ids;
  std::vector<Scalar> expert_accuracy;  // test accuracy per roster expert
  TrainedExperts system;
  ConfidenceTensor theta;
  LoadedDataset data;
};

SingleRun run_single(const ExperimentConfig& config, std::uint64_t seed);

// Same pipeline on caller-prepared data (perturbation studies compare
// variants on identical inputs).
SingleRun run_single_prepared(const ExperimentConfig& config, std::uint64_t seed,
                              LoadedDataset data);

// Full pipeline over all seeds: refinement, joint expert training, opinion
// assembly, confidence-tensor optimization, test accuracy.
Report run(const ExperimentConfig& config);

Report robustness_sweep(const ExperimentConfig& config, const std::vector<Scalar>& ratios,
                        const std::vector<PerturbMode>& modes);

Report sensitivity_sweep(const ExperimentConfig& config, const std::string& parameter,
                         const std::vector<Scalar>& grid);

Report ablation_suite(const ExperimentConfig& config);

Report fusion_vs_addition(const ExperimentConfig& config);

// Reference desk-scale dataset: two complementary-information layers over
// three classes; used by the regression tests and the acceptance suite.
SyntheticSpec reference_synthetic();
ExperimentConfig reference_config();

}  // namespace coe
