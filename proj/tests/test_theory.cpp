#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "coe/theory.hpp"

using namespace coe;
namespace fs = std::filesystem;

namespace {

OpinionBatch random_opinions(int n, int c, int k, std::uint64_t seed) {
  auto rng = make_rng(seed, 2);
  std::normal_distribution<Scalar> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, c - 1);
  OpinionBatch batch;
  batch.num_classes = c;
  batch.num_experts = k;
  batch.g.resize(n, static_cast<Eigen::Index>(k) * c);
  batch.labels.resize(static_cast<std::size_t>(n));
  batch.node_ids.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    batch.node_ids[static_cast<std::size_t>(i)] = i;
    batch.labels[static_cast<std::size_t>(i)] = pick(rng);
    for (int e = 0; e < k; ++e) {
      Vector logits(c);
      for (int j = 0; j < c; ++j) logits[j] = gauss(rng);
      batch.g.row(i).segment(static_cast<Eigen::Index>(e) * c, c) = softmax(logits).transpose();
    }
  }
  return batch;
}

}  // namespace

TEST_CASE("closed-form bound values") {
  SUBCASE("worked example at small alpha") {
    const LipschitzBound b = lipschitz_bound(3, 2, 1.0, 1.0);
    const Scalar oracle = 4.0 * std::sqrt(3.0) * (2.0 + std::exp(1.0) / 3.0);
    CHECK(b.value == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(b.value == doctest::Approx(20.13).epsilon(1e-3));
    CHECK_FALSE(b.overflowed);
  }
  SUBCASE("lambda zero collapses the formula") {
    for (int c : {2, 5})
      for (int k : {1, 4}) {
        const LipschitzBound b = lipschitz_bound(c, k, 0.0, 50.0);
        CHECK(b.value == doctest::Approx(2.0 * std::sqrt(static_cast<Scalar>(c)) * k));
        CHECK(b.log_value ==
              doctest::Approx(std::log(2.0 * std::sqrt(static_cast<Scalar>(c)) * k)));
      }
  }
  SUBCASE("log-domain value at large alpha") {
    const LipschitzBound b = lipschitz_bound(3, 4, 100.0, 100.0);
    CHECK_FALSE(b.overflowed);  // e^100 still representable
    const Scalar oracle = std::log(2.0 * std::sqrt(3.0) * 4.0) + std::log(100.0 / 3.0) + 100.0;
    CHECK(b.log_value == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(std::log(b.value) == doctest::Approx(b.log_value).epsilon(1e-9));

    const LipschitzBound big = lipschitz_bound(3, 4, 100.0, 400.0);
    CHECK(big.overflowed);
    CHECK(std::isinf(big.value));
    CHECK(big.log_value ==
          doctest::Approx(std::log(2.0 * std::sqrt(3.0) * 4.0) + std::log(100.0 / 3.0) + 400.0)
              .epsilon(1e-9));
  }
  SUBCASE("monotone in k, lambda, and alpha; not in c") {
    // d/dc of sqrt(c)*(1+lambda+(lambda/c)e^a) flips sign once
    // lambda*e^a > (1+lambda)*c, so the class count is non-monotone:
    CHECK(lipschitz_bound(3, 2, 1.0, 2.0).value < lipschitz_bound(2, 2, 1.0, 2.0).value);
    // With a negligible exponential term the sqrt(c) factor dominates again.
    CHECK(lipschitz_bound(3, 2, 0.0, 2.0).value > lipschitz_bound(2, 2, 0.0, 2.0).value);
    Scalar prev = 0.0;
    for (int k : {1, 2, 3}) {
      const Scalar v = lipschitz_bound(3, k, 1.0, 2.0).value;
      CHECK(v > prev);
      prev = v;
    }
    prev = 0.0;
    for (Scalar lambda : {0.0, 1.0, 10.0}) {
      const Scalar v = lipschitz_bound(3, 2, lambda, 2.0).value;
      CHECK(v > prev);
      prev = v;
    }
    prev = 0.0;
    for (Scalar alpha : {1.0, 2.0, 4.0}) {
      const Scalar v = lipschitz_bound(3, 2, 1.0, alpha).value;
      CHECK(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("sampled difference quotients stay under the bound") {
  const OpinionBatch one = random_opinions(1, 2, 1, 5);
  const auto report = empirical_lipschitz(one, 1.0, 2.0, 1000, 6);
  CHECK(report.pairs > 990);
  CHECK(report.pass);
  const Scalar closed = 2.0 * std::sqrt(2.0) * (2.0 + std::exp(2.0) / 2.0);
  CHECK(report.bound == doctest::Approx(closed).epsilon(1e-9));
  CHECK(report.max_ratio <= closed);

  SUBCASE("doubling the nodes doubles the worst ratio") {
    OpinionBatch two;
    two.num_classes = 2;
    two.num_experts = 1;
    two.g.resize(2, 2);
    two.g.row(0) = one.g.row(0);
    two.g.row(1) = one.g.row(0);
    two.labels = {one.labels[0], one.labels[0]};
    two.node_ids = {0, 1};
    const auto doubled = empirical_lipschitz(two, 1.0, 2.0, 1000, 6);
    CHECK(doubled.max_ratio == doctest::Approx(2.0 * report.max_ratio).epsilon(0.1));
  }
  SUBCASE("alpha above the overflow-scaled regime is rejected") {
    CHECK_THROWS_AS(empirical_lipschitz(one, 1.0, 50.0, 10, 0), ValidationError);
  }
}

TEST_CASE("descent stationarity check") {
  const OpinionBatch batch = random_opinions(40, 3, 4, 9);
  const Scalar per_node = lipschitz_bound(3, 4, 1.0, 2.0).value;
  MarginConfig config;
  config.alpha = 2.0;
  config.lambda = 1.0;
  config.optimizer = MarginConfig::PlainGd;
  config.iterations = 500;
  config.lr = 1.0 / (static_cast<Scalar>(batch.size()) * per_node);
  ThetaTrace trace;
  optimize_theta(batch, config, &trace);

  const ConvergenceReport report = convergence_check(trace, 1.0, static_cast<int>(batch.size()));
  CHECK(report.pass);
  CHECK(report.min_grad_sq <= report.rhs);

  SUBCASE("corrupted gradient norms fail") {
    ThetaTrace corrupted = trace;
    for (auto& g : corrupted.grad_sq_norm) g = g * 1e9 + report.rhs;
    CHECK_FALSE(convergence_check(corrupted, 1.0, static_cast<int>(batch.size())).pass);
  }
  SUBCASE("short traces are rejected") {
    ThetaTrace stub;
    stub.loss = {1.0};
    stub.grad_sq_norm = {1.0};
    CHECK_THROWS_AS(convergence_check(stub, 1.0, 1), ValidationError);
  }
  SUBCASE("single-step inequality from one evaluation") {
    MarginConfig one_step = config;
    one_step.iterations = 2;
    ThetaTrace t2;
    optimize_theta(batch, one_step, &t2);
    CHECK(convergence_check(t2, 1.0, static_cast<int>(batch.size())).pass);
  }
}

TEST_CASE("convexity probe") {
  SUBCASE("correctness term alone") {
    const ConvexityReport report = convexity_probe(3, 0.0, 5.0, 2000, 1);
    CHECK(report.max_violation <= 1e-12);
  }
  SUBCASE("full loss in opinion space") {
    for (int c : {2, 3, 4, 5}) {
      const ConvexityReport report =
          convexity_probe(c, 1.0, 5.0, 10000, static_cast<std::uint64_t>(c));
      CAPTURE(c);
      CHECK(report.max_violation <= 1e-9);
    }
  }
  SUBCASE("logit-space composition shows violations") {
    const ConvexityReport report = convexity_probe(2, 1.0, 5.0, 10000, 3, ProbeSpace::Logit);
    CHECK(report.max_violation > 0.0);
  }
}

TEST_CASE("generalization calculator") {
  SUBCASE("worked n=100 example") {
    BoundInputs in{100, 1.0, 1.0, 4, 0.5, 0.1, 3, false};
    CHECK(generalization_bound(0.0, in) == doctest::Approx(1.167).epsilon(0.001));
  }
  SUBCASE("large-sample limit") {
    BoundInputs in{1000000, 1.0, 1.0, 4, 0.5, 0.1, 3, false};
    const Scalar v = generalization_bound(0.0, in);
    CHECK(rademacher_term(in) == doctest::Approx(0.008).epsilon(1e-9));
    CHECK(v == doctest::Approx(0.008 + 3.0 * std::sqrt(std::log(20.0) / 2e6)).epsilon(1e-9));
    CHECK(v < 0.0125);
  }
  SUBCASE("exact sqrt(k) scaling") {
    BoundInputs k1{100, 1.0, 1.0, 1, 0.5, 0.1, 3, false};
    BoundInputs k4 = k1;
    k4.k = 4;
    CHECK(rademacher_term(k4) / rademacher_term(k1) == 2.0);
  }
  SUBCASE("monotone directions") {
    BoundInputs base{100, 1.0, 1.0, 4, 0.5, 0.1, 3, false};
    for (int n : {200, 400, 800}) {
      BoundInputs in = base;
      in.n = n;
      CHECK(generalization_bound(0.1, in) < generalization_bound(0.1, base));
      base = in;  // strictly decreasing along the grid
    }
    base = {100, 1.0, 1.0, 4, 0.5, 0.1, 3, false};
    Scalar prev = generalization_bound(0.1, base);
    for (Scalar gamma : {0.6, 0.8, 1.0}) {
      BoundInputs in = base;
      in.gamma_margin = gamma;
      CHECK(generalization_bound(0.1, in) < prev);
      prev = generalization_bound(0.1, in);
    }
    prev = generalization_bound(0.1, base);
    for (int k : {5, 8, 16}) {
      BoundInputs in = base;
      in.k = k;
      CHECK(generalization_bound(0.1, in) > prev);
      prev = generalization_bound(0.1, in);
    }
    prev = generalization_bound(0.1, base);
    for (Scalar cap : {2.0, 4.0}) {
      BoundInputs in = base;
      in.b_theta = cap;
      CHECK(generalization_bound(0.1, in) > prev);
      prev = generalization_bound(0.1, in);
    }
  }
  SUBCASE("multiclass constant toggles a sqrt(ln c) factor") {
    BoundInputs in{100, 1.0, 1.0, 4, 0.5, 0.1, 3, false};
    BoundInputs with = in;
    with.multiclass_constant = true;
    CHECK(rademacher_term(with) ==
          doctest::Approx(rademacher_term(in) * std::sqrt(std::log(3.0))));
  }
  SUBCASE("invalid inputs are rejected") {
    BoundInputs in{100, 1.0, 1.0, 4, 0.5, 1.5, 3, false};
    CHECK_THROWS_AS(generalization_bound(0.0, in), ValidationError);
    CHECK_THROWS_AS(generalization_bound(-0.1, BoundInputs{100, 1, 1, 4, 0.5, 0.1, 3, false}),
                    ValidationError);
  }
}

TEST_CASE("ramp and margin cases") {
  Matrix scores(3, 3);
  // margins: 0.9-0.05 (confident right), 0.45-0.2 (narrow right), wrong.
  scores << 0.9, 0.05, 0.05,
            0.45, 0.35, 0.2,
            0.2, 0.7, 0.1;
  // Second row margin: 0.45 - 0.35 = 0.1... adjust to hit 0.25 exactly.
  scores(1, 0) = 0.5;
  scores(1, 1) = 0.25;
  scores(1, 2) = 0.25;
  const RampReport report = ramp_and_margin(scores, {0, 0, 0}, 0.5);
  CHECK(report.ramp[0] == doctest::Approx(0.0));
  CHECK(report.ramp[1] == doctest::Approx(0.5));
  CHECK(report.ramp[2] == doctest::Approx(1.0));
  CHECK(report.margins[0] == doctest::Approx(0.85));
  CHECK(report.margins[1] == doctest::Approx(0.25));
  CHECK(report.margins[2] == doctest::Approx(-0.5));
  CHECK(report.mean_ramp == doctest::Approx(0.5));
  CHECK(report.ordering_holds);

  SUBCASE("loss ordering holds on random scores") {
    auto rng = make_rng(12, 0);
    std::normal_distribution<Scalar> gauss(0.0, 1.0);
    Matrix random_scores(200, 4);
    std::vector<int> labels;
    std::uniform_int_distribution<int> pick(0, 3);
    for (int i = 0; i < 200; ++i) {
      for (int j = 0; j < 4; ++j) random_scores(i, j) = gauss(rng);
      labels.push_back(pick(rng));
    }
    CHECK(ramp_and_margin(random_scores, labels, 0.3).ordering_holds);
  }
}

TEST_CASE("theory report file") {
  const auto checks = run_theory_checks(0);
  CHECK(checks.size() >= 4);
  for (const auto& check : checks) {
    CAPTURE(check.name);
    CHECK(check.pass);
  }
  const fs::path path = fs::temp_directory_path() / "coe_theory_report.json";
  save_theory_report(path.string(), checks);
  std::ifstream in(path);
  const nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j.at("checks").size() == checks.size());
  CHECK(j["checks"][0].contains("observed"));
  CHECK(j["checks"][0].contains("bound"));
  CHECK(j["checks"][0].contains("pass"));
  fs::remove(path);
}
