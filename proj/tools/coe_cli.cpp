// Command-line front end: end-to-end runs, sweeps, ablations, theory
// verification, and synthetic data generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coe/experiment.hpp"
#include "coe/theory.hpp"

namespace fs = std::filesystem;
using coe::ExperimentConfig;
using coe::Report;
using coe::Scalar;

namespace {

struct CommonArgs {
  std::string config_file;
  std::string out_dir = "out";
};

void add_config_flags(CLI::App* cmd, ExperimentConfig* config, CommonArgs* common) {
  cmd->add_option("--config", common->config_file, "JSON config file");
  cmd->add_option("--out", common->out_dir, "output directory");
  cmd->add_option("--dataset", config->dataset_dir, "dataset directory");
  cmd->add_option("--epochs", config->epochs, "stage-1 training epochs");
  cmd->add_option("--lr", config->lr, "learning rate");
  cmd->add_option("--d-h", config->d_hidden, "encoder hidden width");
  cmd->add_option("--d", config->d_out, "embedding width");
  cmd->add_option("--k", config->knn_k, "kNN neighbor count");
  cmd->add_option("--r", config->order, "propagation order");
  cmd->add_option("--l", config->depth, "encoder depth");
  cmd->add_option("--tau-c", config->tau_c, "critic temperature");
  cmd->add_option("--alpha", config->alpha, "smooth-max sharpness");
  cmd->add_option("--lambda", config->lambda, "correctness/margin balance");
  cmd->add_option("--stage2-iterations", config->stage2_iterations, "tensor iterations");
  cmd->add_option("--stage2-optimizer", config->stage2_optimizer, "adaptive or plain_gd");
  cmd->add_option("--seeds", config->seeds, "seed list");
  cmd->add_flag("--no-gsl", config->no_gsl, "skip structure refinement");
  cmd->add_flag("--no-he", config->no_he, "low-level experts only");
  cmd->add_option("--train-fraction", config->train_fraction, "training split fraction");
  cmd->add_option("--val-fraction", config->val_fraction, "validation split fraction");
  cmd->add_option("--refresh-every", config->refresh_every, "fused-graph refresh period");
}

ExperimentConfig finalize_config(const ExperimentConfig& cli_config, const CLI::App* cmd,
                                 const CommonArgs& common) {
  ExperimentConfig config = coe::reference_config();
  config.epochs = 800;
  config.seeds = {0};
  if (!common.config_file.empty()) {
    std::ifstream in(common.config_file);
    if (!in) throw coe::ValidationError(common.config_file + ": missing file");
    try {
      config = coe::config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw coe::ValidationError(common.config_file + ": " + e.what());
    }
  }
  // Explicit flags override the file.
  auto take = [&](const std::string& flag, auto member, auto value) {
    if (cmd->count(flag)) config.*member = value;
  };
  take("--dataset", &ExperimentConfig::dataset_dir, cli_config.dataset_dir);
  take("--epochs", &ExperimentConfig::epochs, cli_config.epochs);
  take("--lr", &ExperimentConfig::lr, cli_config.lr);
  take("--d-h", &ExperimentConfig::d_hidden, cli_config.d_hidden);
  take("--d", &ExperimentConfig::d_out, cli_config.d_out);
  take("--k", &ExperimentConfig::knn_k, cli_config.knn_k);
  take("--r", &ExperimentConfig::order, cli_config.order);
  take("--l", &ExperimentConfig::depth, cli_config.depth);
  take("--tau-c", &ExperimentConfig::tau_c, cli_config.tau_c);
  take("--alpha", &ExperimentConfig::alpha, cli_config.alpha);
  take("--lambda", &ExperimentConfig::lambda, cli_config.lambda);
  take("--stage2-iterations", &ExperimentConfig::stage2_iterations, cli_config.stage2_iterations);
  take("--stage2-optimizer", &ExperimentConfig::stage2_optimizer, cli_config.stage2_optimizer);
  take("--seeds", &ExperimentConfig::seeds, cli_config.seeds);
  take("--train-fraction", &ExperimentConfig::train_fraction, cli_config.train_fraction);
  take("--val-fraction", &ExperimentConfig::val_fraction, cli_config.val_fraction);
  take("--refresh-every", &ExperimentConfig::refresh_every, cli_config.refresh_every);
  if (cmd->count("--no-gsl")) config.no_gsl = cli_config.no_gsl;
  if (cmd->count("--no-he")) config.no_he = cli_config.no_he;
  return config;
}

void emit(const Report& report, const CommonArgs& common) {
  coe::write_report(common.out_dir, report);
  for (const auto& [name, result] : report.methods) {
    std::cout << name << ": mean=" << result.mean;
    if (result.stddev) std::cout << " std=" << *result.stddev;
    std::cout << "\n";
  }
  std::cout << "report written to " << common.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperation-of-experts multiplex pipeline"};
  app.require_subcommand(1);

  ExperimentConfig cli_config;
  CommonArgs common;

  auto* cmd_run = app.add_subcommand("run", "full pipeline");
  add_config_flags(cmd_run, &cli_config, &common);

  auto* cmd_rob = app.add_subcommand("robustness", "edge perturbation sweep");
  add_config_flags(cmd_rob, &cli_config, &common);
  std::vector<Scalar> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::string> mode_names{"add", "delete"};
  cmd_rob->add_option("--ratios", ratios, "perturbation ratios");
  cmd_rob->add_option("--modes", mode_names, "add and/or delete");

  auto* cmd_sen = app.add_subcommand("sensitivity", "hyperparameter sweep");
  add_config_flags(cmd_sen, &cli_config, &common);
  std::string parameter = "alpha";
  std::vector<Scalar> grid{50, 100, 200, 500, 1000};
  cmd_sen->add_option("--parameter", parameter, "alpha, lambda, or K");
  cmd_sen->add_option("--grid", grid, "grid values");

  auto* cmd_abl = app.add_subcommand("ablation", "variant comparison");
  add_config_flags(cmd_abl, &cli_config, &common);

  auto* cmd_fus = app.add_subcommand("fusion-compare", "fused graph vs adjacency average");
  add_config_flags(cmd_fus, &cli_config, &common);

  auto* cmd_thy = app.add_subcommand("verify-theory", "numerical theory checks");
  std::string theory_out = "out";
  std::uint64_t theory_seed = 0;
  cmd_thy->add_option("--out", theory_out, "output directory");
  cmd_thy->add_option("--seed", theory_seed, "probe seed");

  auto* cmd_gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  std::string gen_out = "dataset";
  std::uint64_t gen_seed = 0;
  int gen_nodes = 200, gen_classes = 3, gen_layers = 2, gen_dim = 16;
  Scalar gen_pin = 0.2, gen_pout = 0.02, gen_noise = 1.0;
  cmd_gen->add_option("--out", gen_out, "output directory");
  cmd_gen->add_option("--seed", gen_seed, "generator seed");
  cmd_gen->add_option("--num-nodes", gen_nodes, "node count");
  cmd_gen->add_option("--num-classes", gen_classes, "class count");
  cmd_gen->add_option("--num-layers", gen_layers, "layer count");
  cmd_gen->add_option("--feature-dim", gen_dim, "feature width");
  cmd_gen->add_option("--p-in", gen_pin, "informative same-class edge probability");
  cmd_gen->add_option("--p-out", gen_pout, "background edge probability");
  cmd_gen->add_option("--feature-noise", gen_noise, "feature noise stddev");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_thy->parsed()) {
      const auto checks = coe::run_theory_checks(theory_seed);
      fs::create_directories(theory_out);
      coe::save_theory_report((fs::path(theory_out) / "theory_report.json").string(), checks);
      bool all = true;
      for (const auto& check : checks) {
        std::cout << (check.pass ? "[PASS] " : "[FAIL] ") << check.name
                  << " observed=" << check.observed << " bound=" << check.bound << "\n";
        all = all && check.pass;
      }
      return all ? 0 : 1;
    }
    if (cmd_gen->parsed()) {
      coe::SyntheticSpec spec = coe::reference_synthetic();
      spec.num_nodes = gen_nodes;
      spec.num_classes = gen_classes;
      spec.num_layers = gen_layers;
      spec.feature_dim = gen_dim;
      spec.p_in = gen_pin;
      spec.p_out = gen_pout;
      spec.feature_noise = gen_noise;
      spec.seed = gen_seed;
      // Classes partitioned round-robin across layers; layers left empty get
      // every class.
      spec.informative_classes.assign(static_cast<std::size_t>(gen_layers), {});
      for (int c = 0; c < gen_classes; ++c)
        spec.informative_classes[static_cast<std::size_t>(c % gen_layers)].push_back(c);
      for (auto& classes : spec.informative_classes)
        if (classes.empty())
          for (int c = 0; c < gen_classes; ++c) classes.push_back(c);
      const coe::Dataset data = coe::generate_synthetic(spec);
      const coe::NodeSplit split = coe::split_nodes(spec.num_nodes, 0.3, 0.2, gen_seed);
      coe::save_multiplex(gen_out, data.network, data.labels, &split);
      std::cout << "dataset written to " << gen_out << "\n";
      return 0;
    }

    CLI::App* active = nullptr;
    for (auto* cmd : {cmd_run, cmd_rob, cmd_sen, cmd_abl, cmd_fus})
      if (cmd->parsed()) active = cmd;
    const ExperimentConfig config = finalize_config(cli_config, active, common);

    if (cmd_run->parsed()) {
      emit(coe::run(config), common);
    } else if (cmd_rob->parsed()) {
      std::vector<coe::PerturbMode> modes;
      for (const auto& name : mode_names) {
        if (name == "add") modes.push_back(coe::PerturbMode::Add);
        else if (name == "delete") modes.push_back(coe::PerturbMode::Delete);
        else throw coe::ValidationError("robustness: mode must be add or delete");
      }
      emit(coe::robustness_sweep(config, ratios, modes), common);
    } else if (cmd_sen->parsed()) {
      emit(coe::sensitivity_sweep(config, parameter, grid), common);
    } else if (cmd_abl->parsed()) {
      emit(coe::ablation_suite(config), common);
    } else if (cmd_fus->parsed()) {
      emit(coe::fusion_vs_addition(config), common);
    }
    return 0;
  } catch (const coe::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const coe::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
