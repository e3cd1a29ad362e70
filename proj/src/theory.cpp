#include "coe/theory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace coe {

using nlohmann::json;

LipschitzBound lipschitz_bound(int c, int k, Scalar lambda, Scalar alpha) {
  if (c < 1 || k < 1 || lambda < 0.0 || alpha <= 0.0)
    throw ValidationError("lipschitz_bound: invalid arguments");
  LipschitzBound out;
  const Scalar front = 2.0 * std::sqrt(static_cast<Scalar>(c)) * static_cast<Scalar>(k);
  // log(1 + lambda + (lambda/c) e^alpha) via a shifted log-sum-exp.
  const Scalar log_front = std::log(front);
  Scalar log_terms;
  if (lambda == 0.0) {
    log_terms = 0.0;
  } else {
    const Scalar t1 = std::log1p(lambda);                            // log(1 + lambda)
    const Scalar t2 = std::log(lambda / static_cast<Scalar>(c)) + alpha;  // log((lambda/c) e^a)
    const Scalar m = std::max(t1, t2);
    log_terms = m + std::log(std::exp(t1 - m) + std::exp(t2 - m));
  }
  out.log_value = log_front + log_terms;
  if (alpha > 300.0) {
    out.overflowed = true;
    out.value = std::numeric_limits<Scalar>::infinity();
  } else {
    out.value = front * (1.0 + lambda + (lambda / static_cast<Scalar>(c)) * std::exp(alpha));
  }
  return out;
}

EmpiricalLipschitzReport empirical_lipschitz(const OpinionBatch& opinions, Scalar lambda,
                                             Scalar alpha, int trials, std::uint64_t seed) {
  if (alpha > 5.0)
    throw ValidationError("empirical_lipschitz: run with alpha <= 5 (see lipschitz_bound "
                          "overflow scaling)");
  opinions.validate();
  const int c = opinions.num_classes;
  const int k = opinions.num_experts;

  EmpiricalLipschitzReport report;
  report.bound = static_cast<Scalar>(opinions.size()) *
                 lipschitz_bound(c, k, lambda, alpha).value;

  auto rng = make_rng(seed, 31);
  std::normal_distribution<Scalar> gauss(0.0, 1.0);
  std::uniform_real_distribution<Scalar> unif(0.0, 1.0);
  auto sample_theta = [&]() {
    Matrix t(c, static_cast<Eigen::Index>(k) * c);
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = gauss(rng);
    const Scalar norm = t.norm();
    if (norm > 0.0) t *= unif(rng) / norm;
    return t;
  };

  for (int trial = 0; trial < trials; ++trial) {
    const Matrix a = sample_theta();
    const Matrix b = sample_theta();
    const Scalar dist = (a - b).norm();
    if (dist < 1e-12) continue;  // zero-denominator pairs are skipped
    const Scalar la = collaboration_loss(a, opinions, alpha, lambda);
    const Scalar lb = collaboration_loss(b, opinions, alpha, lambda);
    report.max_ratio = std::max(report.max_ratio, std::abs(la - lb) / dist);
    ++report.pairs;
  }
  report.pass = report.max_ratio <= report.bound;
  return report;
}

ConvergenceReport convergence_check(const ThetaTrace& trace, Scalar lambda, int num_nodes) {
  if (trace.grad_sq_norm.size() < 2 || trace.loss.size() < 2)
    throw ValidationError("convergence_check: trace shorter than 2 steps");
  ConvergenceReport report;
  report.min_grad_sq = *std::min_element(trace.grad_sq_norm.begin(), trace.grad_sq_norm.end());
  const Scalar loss0 = trace.loss.front();
  const Scalar lower = -lambda * static_cast<Scalar>(num_nodes);
  report.rhs = 2.0 * (loss0 - lower) /
               (trace.lr * static_cast<Scalar>(trace.iterations));
  report.pass = report.min_grad_sq <= report.rhs;
  return report;
}

ConvexityReport convexity_probe(int c, Scalar lambda, Scalar alpha, int trials,
                                std::uint64_t seed, ProbeSpace space) {
  if (c < 2) throw ValidationError("convexity_probe: need c >= 2");
  auto rng = make_rng(seed, 37);
  std::uniform_real_distribution<Scalar> unif(0.01, 1.0);
  std::uniform_int_distribution<int> pick_class(0, c - 1);
  std::normal_distribution<Scalar> gauss(0.0, 2.0);

  auto node_loss = [&](const Vector& x, int y) {
    if (space == ProbeSpace::Opinion) return collaboration_node_loss(x, y, alpha, lambda);
    return collaboration_node_loss(softmax(x), y, alpha, lambda);
  };

  ConvexityReport report;
  report.trials = trials;
  Vector u(c), v(c);
  for (int t = 0; t < trials; ++t) {
    for (int j = 0; j < c; ++j) {
      u[j] = space == ProbeSpace::Opinion ? unif(rng) : gauss(rng);
      v[j] = space == ProbeSpace::Opinion ? unif(rng) : gauss(rng);
    }
    const int y = pick_class(rng);
    const Vector mid = 0.5 * (u + v);
    const Scalar violation = node_loss(mid, y) - 0.5 * (node_loss(u, y) + node_loss(v, y));
    report.max_violation = std::max(report.max_violation, violation);
  }
  return report;
}

void BoundInputs::validate() const {
  if (n <= 0 || b_theta <= 0.0 || g_e <= 0.0 || k <= 0 || gamma_margin <= 0.0 || c <= 0)
    throw ValidationError("generalization bound: all inputs must be positive");
  if (delta <= 0.0 || delta >= 1.0)
    throw ValidationError("generalization bound: delta must lie in (0,1)");
}

Scalar rademacher_term(const BoundInputs& in) {
  in.validate();
  Scalar term = 2.0 * in.b_theta * in.g_e * std::sqrt(static_cast<Scalar>(in.k)) /
                (in.gamma_margin * std::sqrt(static_cast<Scalar>(in.n)));
  if (in.multiclass_constant) term *= std::sqrt(std::log(static_cast<Scalar>(in.c)));
  return term;
}

Scalar generalization_bound(Scalar empirical_ramp, const BoundInputs& in) {
  if (empirical_ramp < 0.0 || empirical_ramp > 1.0)
    throw ValidationError("generalization bound: ramp must lie in [0,1]");
  return empirical_ramp + rademacher_term(in) +
         3.0 * std::sqrt(std::log(2.0 / in.delta) / (2.0 * static_cast<Scalar>(in.n)));
}

RampReport ramp_and_margin(const Matrix& scores, const std::vector<int>& labels,
                           Scalar gamma_margin) {
  if (gamma_margin <= 0.0) throw ValidationError("ramp_and_margin: gamma must be positive");
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
    throw ValidationError("ramp_and_margin: one label per row required");
  RampReport report;
  report.histogram.assign(20, 0);
  report.ordering_holds = true;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    Scalar best_other = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (j != y) best_other = std::max(best_other, scores(i, j));
    const Scalar margin = scores(i, y) - best_other;
    report.margins.push_back(margin);

    Scalar ramp;
    if (margin >= gamma_margin) ramp = 0.0;
    else if (margin > 0.0) ramp = 1.0 - margin / gamma_margin;
    else ramp = 1.0;
    report.ramp.push_back(ramp);
    report.mean_ramp += ramp;

    const Scalar zero_one =
        argmax_lowest(scores.row(i).transpose()) != y ? 1.0 : 0.0;
    const Scalar thresholded = margin <= 0.0 ? 1.0 : 0.0;
    if (!(zero_one <= thresholded && thresholded <= ramp + 1e-15))
      report.ordering_holds = false;

    const int bin = std::clamp(static_cast<int>((margin + 1.0) * 10.0), 0, 19);
    ++report.histogram[static_cast<std::size_t>(bin)];
  }
  if (!report.ramp.empty()) report.mean_ramp /= static_cast<Scalar>(report.ramp.size());
  return report;
}

void save_theory_report(const std::string& path, const std::vector<TheoryCheck>& checks) {
  json j;
  json list = json::array();
  for (const auto& check : checks) {
    json jc;
    jc["name"] = check.name;
    jc["inputs"] = check.inputs;
    jc["observed"] = check.observed;
    jc["bound"] = check.bound;
    jc["pass"] = check.pass;
    list.push_back(jc);
  }
  j["checks"] = list;
  std::ofstream out(path);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

namespace {

OpinionBatch random_opinions(int n, int c, int k, std::uint64_t seed) {
  auto rng = make_rng(seed, 53);
  std::normal_distribution<Scalar> gauss(0.0, 1.0);
  OpinionBatch batch;
  batch.num_classes = c;
  batch.num_experts = k;
  batch.g.resize(n, static_cast<Eigen::Index>(k) * c);
  batch.labels.resize(static_cast<std::size_t>(n));
  batch.node_ids.resize(static_cast<std::size_t>(n));
  std::uniform_int_distribution<int> pick_class(0, c - 1);
  for (int i = 0; i < n; ++i) {
    batch.node_ids[static_cast<std::size_t>(i)] = i;
    batch.labels[static_cast<std::size_t>(i)] = pick_class(rng);
    for (int e = 0; e < k; ++e) {
      Vector logits(c);
      for (int j = 0; j < c; ++j) logits[j] = gauss(rng);
      batch.g.row(i).segment(static_cast<Eigen::Index>(e) * c, c) = softmax(logits).transpose();
    }
  }
  return batch;
}

}  // namespace

std::vector<TheoryCheck> run_theory_checks(std::uint64_t seed) {
  std::vector<TheoryCheck> checks;

  {  // Partial convexity of the per-node loss in opinion space.
    TheoryCheck check;
    check.name = "convexity_probe";
    check.inputs = "c in {2,3,4,5}, lambda=1, alpha=5, 10000 trials";
    Scalar worst = 0.0;
    for (int c : {2, 3, 4, 5})
      worst = std::max(worst,
                       convexity_probe(c, 1.0, 5.0, 10000, seed + static_cast<std::uint64_t>(c))
                           .max_violation);
    check.observed = worst;
    check.bound = 1e-9;
    check.pass = worst <= check.bound;
    checks.push_back(check);
  }

  {  // Sampled Lipschitz ratios against the closed form.
    TheoryCheck check;
    check.name = "empirical_lipschitz";
    check.inputs = "c=2, k=1, lambda=1, alpha=2, 1000 trials, single node";
    const OpinionBatch one = random_opinions(1, 2, 1, seed + 11);
    const auto report = empirical_lipschitz(one, 1.0, 2.0, 1000, seed + 12);
    check.observed = report.max_ratio;
    check.bound = report.bound;
    check.pass = report.pass;
    checks.push_back(check);
  }

  {  // Gradient-descent stationarity bound.
    TheoryCheck check;
    check.name = "convergence_check";
    check.inputs = "c=3, k=4, lambda=1, alpha=2, T=500, plain gd, lr=1/L";
    const OpinionBatch batch = random_opinions(60, 3, 4, seed + 21);
    const Scalar per_node = lipschitz_bound(3, 4, 1.0, 2.0).value;
    MarginConfig config;
    config.alpha = 2.0;
    config.lambda = 1.0;
    config.optimizer = MarginConfig::PlainGd;
    config.iterations = 500;
    config.lr = 1.0 / (static_cast<Scalar>(batch.size()) * per_node);
    ThetaTrace trace;
    optimize_theta(batch, config, &trace);
    const auto report = convergence_check(trace, config.lambda, static_cast<int>(batch.size()));
    check.observed = report.min_grad_sq;
    check.bound = report.rhs;
    check.pass = report.pass;
    checks.push_back(check);
  }

  {  // Generalization calculator worked value.
    TheoryCheck check;
    check.name = "generalization_bound";
    check.inputs = "ramp=0, n=100, B_theta=1, G_e=1, k=4, gamma=0.5, delta=0.1";
    BoundInputs in{100, 1.0, 1.0, 4, 0.5, 0.1, 3, false};
    check.observed = generalization_bound(0.0, in);
    check.bound = 1.167;
    check.pass = std::abs(check.observed - check.bound) <= 0.001;
    checks.push_back(check);
  }

  return checks;
}

}  // namespace coe
