#include "coe/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace coe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json synthetic_to_json(const SyntheticSpec& spec) {
  json j;
  j["num_nodes"] = spec.num_nodes;
  j["num_classes"] = spec.num_classes;
  j["num_layers"] = spec.num_layers;
  j["informative_classes"] = spec.informative_classes;
  j["p_in"] = spec.p_in;
  j["p_out"] = spec.p_out;
  j["feature_noise"] = spec.feature_noise;
  j["feature_dim"] = spec.feature_dim;
  j["seed"] = spec.seed;
  return j;
}

SyntheticSpec synthetic_from_json(const json& j) {
  SyntheticSpec spec;
  spec.num_nodes = j.value("num_nodes", 0);
  spec.num_classes = j.value("num_classes", 0);
  spec.num_layers = j.value("num_layers", 0);
  if (j.contains("informative_classes"))
    spec.informative_classes = j["informative_classes"].get<std::vector<std::vector<int>>>();
  spec.p_in = j.value("p_in", 0.0);
  spec.p_out = j.value("p_out", 0.0);
  spec.feature_noise = j.value("feature_noise", 0.0);
  spec.feature_dim = j.value("feature_dim", 0);
  spec.seed = j.value("seed", std::uint64_t{0});
  return spec;
}

Scalar accuracy_of(const std::vector<int>& predicted, const OpinionBatch& opinions) {
  int correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == opinions.labels[i]) ++correct;
  return static_cast<Scalar>(correct) / static_cast<Scalar>(predicted.size());
}

Scalar expert_block_accuracy(const OpinionBatch& opinions, int expert) {
  const int c = opinions.num_classes;
  int correct = 0;
  for (Eigen::Index i = 0; i < opinions.size(); ++i) {
    const Vector block =
        opinions.g.row(i).segment(static_cast<Eigen::Index>(expert) * c, c).transpose();
    if (argmax_lowest(block) == opinions.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<Scalar>(correct) / static_cast<Scalar>(opinions.size());
}

MethodResult summarize(std::vector<Scalar> per_seed) {
  MethodResult r;
  r.per_seed = std::move(per_seed);
  for (Scalar v : r.per_seed) r.mean += v;
  r.mean /= static_cast<Scalar>(r.per_seed.size());
  if (r.per_seed.size() >= 2) {
    Scalar ss = 0.0;
    for (Scalar v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / static_cast<Scalar>(r.per_seed.size() - 1));
  }
  return r;
}

void add_method(Report& report, const std::string& name, std::vector<Scalar> per_seed) {
  report.methods.emplace_back(name, summarize(std::move(per_seed)));
}

Report make_report(const ExperimentConfig& config) {
  Report report;
  report.seeds = config.seeds;
  report.config_json = config_to_json(config);
  report.hash = config_hash(config);
  report.version = artifact_version(config);
  return report;
}

StageOneConfig stage1_config(const ExperimentConfig& config, std::uint64_t seed) {
  StageOneConfig s1;
  s1.epochs = config.epochs;
  s1.lr = config.lr;
  s1.d_hidden = config.d_hidden;
  s1.d_out = config.d_out;
  s1.gcn_depth = config.depth;
  s1.tau = config.tau_c;
  s1.fused_k = config.knn_k;
  s1.refresh_every = config.refresh_every;
  s1.seed = seed;
  s1.knn = config.knn;
  if (config.no_he) {
    s1.high_level_experts = false;
    s1.enable_mi = false;
  }
  return s1;
}

}  // namespace

json config_to_json(const ExperimentConfig& config) {
  json j;
  j["dataset"] = config.dataset_dir;
  j["synthetic"] = synthetic_to_json(config.synthetic);
  j["epochs"] = config.epochs;
  j["lr"] = config.lr;
  j["d_h"] = config.d_hidden;
  j["d"] = config.d_out;
  j["K"] = config.knn_k;
  j["r"] = config.order;
  j["L"] = config.depth;
  j["tau_c"] = config.tau_c;
  j["alpha"] = config.alpha;
  j["lambda"] = config.lambda;
  j["stage2_iterations"] = config.stage2_iterations;
  j["stage2_optimizer"] = config.stage2_optimizer;
  j["seeds"] = config.seeds;
  j["no_gsl"] = config.no_gsl;
  j["no_he"] = config.no_he;
  j["train_fraction"] = config.train_fraction;
  j["val_fraction"] = config.val_fraction;
  j["refresh_every"] = config.refresh_every;
  j["knn_variant"] = config.knn.variant == KnnMode::Exact ? "exact" : "lsh";
  j["lsh_batch"] = config.knn.batch_size;
  j["lsh_hashes"] = config.knn.num_hashes;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig config;
  config.dataset_dir = j.value("dataset", std::string{});
  if (j.contains("synthetic")) config.synthetic = synthetic_from_json(j["synthetic"]);
  config.epochs = j.value("epochs", config.epochs);
  config.lr = j.value("lr", config.lr);
  config.d_hidden = j.value("d_h", config.d_hidden);
  config.d_out = j.value("d", config.d_out);
  config.knn_k = j.value("K", config.knn_k);
  config.order = j.value("r", config.order);
  config.depth = j.value("L", config.depth);
  config.tau_c = j.value("tau_c", config.tau_c);
  config.alpha = j.value("alpha", config.alpha);
  config.lambda = j.value("lambda", config.lambda);
  config.stage2_iterations = j.value("stage2_iterations", config.stage2_iterations);
  config.stage2_optimizer = j.value("stage2_optimizer", config.stage2_optimizer);
  if (j.contains("seeds")) config.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  config.no_gsl = j.value("no_gsl", false);
  config.no_he = j.value("no_he", false);
  config.train_fraction = j.value("train_fraction", config.train_fraction);
  config.val_fraction = j.value("val_fraction", config.val_fraction);
  config.refresh_every = j.value("refresh_every", config.refresh_every);
  config.knn.variant =
      j.value("knn_variant", std::string{"exact"}) == "lsh" ? KnnMode::Lsh : KnnMode::Exact;
  config.knn.batch_size = j.value("lsh_batch", config.knn.batch_size);
  config.knn.num_hashes = j.value("lsh_hashes", config.knn.num_hashes);
  return config;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::uint64_t h = fnv1a(config_to_json(config).dump());
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string artifact_version(const ExperimentConfig& config) {
  return std::string(kArtifactVersion) + "+" + config_hash(config).substr(0, 8);
}

const MethodResult* Report::find(const std::string& name) const {
  for (const auto& [key, value] : methods)
    if (key == name) return &value;
  return nullptr;
}

json canonical_report_json(const Report& report) {
  json j;
  j["version"] = report.version;
  j["config_hash"] = report.hash;
  j["config"] = report.config_json;
  j["seeds"] = report.seeds;
  json methods = json::object();
  for (const auto& [name, result] : report.methods) {
    json m;
    m["per_seed"] = result.per_seed;
    m["mean"] = result.mean;
    if (result.stddev) m["std"] = *result.stddev;
    else m["std"] = nullptr;
    methods[name] = m;
  }
  j["methods"] = methods;
  j["extra"] = report.extra;
  return j;
}

void write_report(const std::string& out_dir, const Report& report) {
  fs::create_directories(out_dir);
  json j = canonical_report_json(report);
  j["wall_seconds"] = report.wall_seconds;
  std::ofstream(fs::path(out_dir) / "report.json") << j.dump(2) << "\n";

  std::ofstream csv(fs::path(out_dir) / "report.csv");
  csv << "method,seed,accuracy,config_hash,version\n";
  char buf[40];
  auto fmt = [&](Scalar v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& [name, result] : report.methods) {
    for (std::size_t s = 0; s < result.per_seed.size(); ++s)
      csv << name << "," << report.seeds[s % report.seeds.size()] << ","
          << fmt(result.per_seed[s]) << "," << report.hash << "," << report.version << "\n";
    csv << name << ",mean," << fmt(result.mean) << "," << report.hash << ","
        << report.version << "\n";
    if (result.stddev)
      csv << name << ",std," << fmt(*result.stddev) << "," << report.hash << ","
          << report.version << "\n";
  }
}

namespace {

LoadedDataset prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  LoadedDataset data;
  if (!config.dataset_dir.empty()) {
    data = load_multiplex(config.dataset_dir);
  } else {
    SyntheticSpec spec = config.synthetic;
    spec.seed = spec.seed + seed;
    Dataset generated = generate_synthetic(spec);
    data.network = std::move(generated.network);
    data.labels = std::move(generated.labels);
    data.has_split = false;
  }
  return data;
}

}  // namespace

SingleRun run_single_prepared(const ExperimentConfig& config, std::uint64_t seed,
                              LoadedDataset data) {
  SingleRun run;
  run.data = std::move(data);
  const MultiplexNetwork& net = run.data.network;
  const LabelSet& labels = run.data.labels;

  if (!run.data.has_split)
    run.data.split = split_nodes(net.num_nodes, config.train_fraction, config.val_fraction, seed);
  const NodeSplit& split = run.data.split;

  std::set<int> train_classes;
  for (int i : split.train) train_classes.insert(labels.labels[static_cast<std::size_t>(i)]);
  if (static_cast<int>(train_classes.size()) != labels.num_classes)
    throw ValidationError("run: a class is missing from the training split");

  std::vector<RefinedLayer> refined;
  std::vector<Matrix> layer_features;
  for (const auto& layer : net.layers) {
    layer_features.push_back(layer.features);
    if (config.no_gsl) {
      RefinedLayer r = postprocess_adjacency(layer.dense_adjacency(net.num_nodes));
      r.source = layer.name;
      refined.push_back(std::move(r));
    } else {
      const LearnerParams params =
          LearnerParams::ones(net.num_nodes, net.feature_dim, config.order);
      refined.push_back(refine_layer(layer, net.num_nodes, params, config.knn_k, config.knn));
    }
  }

  run.system = train_experts(refined, layer_features, labels, split, stage1_config(config, seed));

  // The tensor optimization sees every labeled node outside the test split.
  IndexList labeled = split.train;
  labeled.insert(labeled.end(), split.validation.begin(), split.validation.end());
  const OpinionBatch train_op = expert_opinions(run.system, labeled, labels);
  const OpinionBatch test_op = expert_opinions(run.system, split.test, labels);

  MarginConfig margin;
  margin.alpha = config.alpha;
  margin.lambda = config.lambda;
  margin.lr = config.lr;
  margin.iterations = config.stage2_iterations;
  margin.optimizer = config.stage2_optimizer == "plain_gd" ? MarginConfig::PlainGd
                                                           : MarginConfig::Adaptive;
  run.theta = optimize_theta(train_op, margin);

  run.coe_accuracy = accuracy_of(fuse_predict_all(run.theta.theta, test_op), test_op);
  run.rf_accuracy = accuracy_of(vote_rf(test_op), test_op);

  // WRF weights are the normalized validation accuracies (training split when
  // no validation nodes exist).
  const OpinionBatch weight_op =
      split.validation.empty() ? train_op : expert_opinions(run.system, split.validation, labels);
  Vector weights(run.system.roster.k());
  for (int e = 0; e < run.system.roster.k(); ++e)
    weights[e] = expert_block_accuracy(weight_op, e);
  if (weights.sum() <= 0.0) weights.setOnes();
  weights /= weights.sum();
  run.wrf_accuracy = accuracy_of(vote_wrf(test_op, weights), test_op);

  for (int e = 0; e < run.system.roster.k(); ++e) {
    run.expert_ids.push_back(run.system.roster.experts[static_cast<std::size_t>(e)].id);
    run.expert_accuracy.push_back(expert_block_accuracy(test_op, e));
  }
  return run;
}

SingleRun run_single(const ExperimentConfig& config, std::uint64_t seed) {
  return run_single_prepared(config, seed, prepare_data(config, seed));
}

Report run(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report = make_report(config);

  std::vector<Scalar> coe, rf, wrf;
  std::vector<std::vector<Scalar>> experts;
  std::vector<std::string> expert_ids;
  for (std::uint64_t seed : config.seeds) {
    SingleRun r = run_single(config, seed);
    coe.push_back(r.coe_accuracy);
    rf.push_back(r.rf_accuracy);
    wrf.push_back(r.wrf_accuracy);
    if (expert_ids.empty()) {
      expert_ids = r.expert_ids;
      experts.resize(expert_ids.size());
    }
    for (std::size_t e = 0; e < r.expert_accuracy.size(); ++e)
      experts[e].push_back(r.expert_accuracy[e]);
  }
  add_method(report, "coe", std::move(coe));
  add_method(report, "rf", std::move(rf));
  add_method(report, "wrf", std::move(wrf));
  Scalar best_single = 0.0;
  for (std::size_t e = 0; e < expert_ids.size(); ++e) {
    const MethodResult mr = summarize(experts[e]);
    best_single = std::max(best_single, mr.mean);
    report.methods.emplace_back("expert:" + expert_ids[e], mr);
  }
  report.extra["max_single_expert_mean"] = best_single;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Report robustness_sweep(const ExperimentConfig& config, const std::vector<Scalar>& ratios,
                        const std::vector<PerturbMode>& modes) {
  for (Scalar r : ratios)
    if (r < 0.0 || r > 0.9) throw ValidationError("robustness: ratios must lie in [0, 0.9]");
  const auto t0 = std::chrono::steady_clock::now();
  Report report = make_report(config);
  json table = json::array();

  for (PerturbMode mode : modes) {
    const std::string mode_name = mode == PerturbMode::Add ? "add" : "delete";
    for (Scalar ratio : ratios) {
      std::vector<Scalar> acc;
      for (std::uint64_t seed : config.seeds) {
        LoadedDataset data = prepare_data(config, seed);
        for (std::size_t l = 0; l < data.network.layers.size(); ++l) {
          const std::uint64_t pseed =
              seed ^ fnv1a(mode_name + ":" + std::to_string(ratio) + ":" + std::to_string(l));
          data.network.layers[l] = perturb_edges(data.network.layers[l],
                                                 data.network.num_nodes, ratio, mode, pseed);
        }
        acc.push_back(run_single_prepared(config, seed, std::move(data)).coe_accuracy);
      }
      const MethodResult mr = summarize(acc);
      std::ostringstream name;
      name << "coe@" << mode_name << ":" << ratio;
      report.methods.emplace_back(name.str(), mr);
      table.push_back({{"mode", mode_name}, {"ratio", ratio}, {"mean", mr.mean}});
    }
  }
  report.extra["robustness"] = table;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Report sensitivity_sweep(const ExperimentConfig& config, const std::string& parameter,
                         const std::vector<Scalar>& grid) {
  if (grid.empty()) throw ValidationError("sensitivity: empty grid");
  const auto t0 = std::chrono::steady_clock::now();
  Report report = make_report(config);
  Scalar lo = 1.0, hi = 0.0;
  json table = json::array();
  for (Scalar value : grid) {
    ExperimentConfig variant = config;
    if (parameter == "alpha") variant.alpha = value;
    else if (parameter == "lambda") variant.lambda = value;
    else if (parameter == "K") variant.knn_k = static_cast<int>(value);
    else throw ValidationError("sensitivity: parameter must be alpha, lambda, or K");

    std::vector<Scalar> acc;
    for (std::uint64_t seed : config.seeds) acc.push_back(run_single(variant, seed).coe_accuracy);
    const MethodResult mr = summarize(std::move(acc));
    lo = std::min(lo, mr.mean);
    hi = std::max(hi, mr.mean);
    std::ostringstream name;
    name << "coe@" << parameter << "=" << value;
    report.methods.emplace_back(name.str(), mr);
    table.push_back({{"value", value}, {"mean", mr.mean}});
  }
  report.extra["sensitivity"] = {{"parameter", parameter},
                                 {"spread", hi - lo},
                                 {"table", table}};
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Report ablation_suite(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report = make_report(config);

  std::vector<Scalar> coe, rf, wrf, no_he, no_gsl;
  for (std::uint64_t seed : config.seeds) {
    const SingleRun full = run_single(config, seed);
    coe.push_back(full.coe_accuracy);
    rf.push_back(full.rf_accuracy);
    wrf.push_back(full.wrf_accuracy);

    ExperimentConfig variant = config;
    variant.no_he = true;
    no_he.push_back(run_single(variant, seed).coe_accuracy);

    variant = config;
    variant.no_gsl = true;
    no_gsl.push_back(run_single(variant, seed).coe_accuracy);
  }
  add_method(report, "coe", std::move(coe));
  add_method(report, "rf", std::move(rf));
  add_method(report, "wrf", std::move(wrf));
  add_method(report, "no_he", std::move(no_he));
  add_method(report, "no_gsl", std::move(no_gsl));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Report fusion_vs_addition(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report = make_report(config);

  std::vector<Scalar> fused_acc, added_acc;
  for (std::uint64_t seed : config.seeds) {
    const SingleRun full = run_single(config, seed);
    const MultiplexNetwork& net = full.data.network;
    if (net.num_layers() < 2)
      throw ValidationError("fusion_vs_addition: requires >=2 layers");

    const int v = full.system.roster.num_low;
    const FusedGraph& tot = full.system.fused.back();

    // "+" baseline: the normalized refined adjacencies averaged.
    Matrix mean_adj =
        Matrix::Zero(net.num_nodes, net.num_nodes);
    for (int i = 0; i < v; ++i)
      mean_adj += full.system.graphs[static_cast<std::size_t>(i)].adjacency_norm;
    mean_adj /= static_cast<Scalar>(v);
    RefinedLayer added;
    added.adjacency_norm = mean_adj;
    added.source = "addition";

    StageOneConfig s1 = stage1_config(config, seed);
    const Expert fused_expert = train_single_expert(tot.refined, tot.features, full.data.labels,
                                                    full.data.split.train, s1, "compare:fused");
    const Expert added_expert = train_single_expert(added, tot.features, full.data.labels,
                                                    full.data.split.train, s1, "compare:added");
    fused_acc.push_back(expert_accuracy(fused_expert, tot.refined, tot.features,
                                        full.data.labels, full.data.split.test));
    added_acc.push_back(expert_accuracy(added_expert, added, tot.features, full.data.labels,
                                        full.data.split.test));
  }
  add_method(report, "fused_expert", std::move(fused_acc));
  add_method(report, "addition_expert", std::move(added_acc));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

SyntheticSpec reference_synthetic() {
  SyntheticSpec spec;
  spec.num_nodes = 200;
  spec.num_classes = 3;
  spec.num_layers = 2;
  spec.informative_classes = {{0, 1}, {2}};
  spec.p_in = 0.35;
  spec.p_out = 0.05;
  spec.feature_noise = 1.2;
  spec.feature_dim = 16;
  spec.seed = 0;
  return spec;
}

ExperimentConfig reference_config() {
  ExperimentConfig config;
  config.synthetic = reference_synthetic();
  config.epochs = 200;
  config.seeds = {0, 1, 2, 3, 4};
  return config;
}

}  // namespace coe
