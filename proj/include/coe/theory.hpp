#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coe/common.hpp"
#include "coe/margin.hpp"
#include "coe/opinions.hpp"

namespace coe {

struct LipschitzBound {
  Scalar value = 0.0;      // +inf when the direct form overflows
  Scalar log_value = 0.0;  // always finite
  bool overflowed = false;
};

// Closed form 2*sqrt(c)*k*(1 + lambda + (lambda/c)*e^alpha); computed in
// log space when alpha > 300.
LipschitzBound lipschitz_bound(int c, int k, Scalar lambda, Scalar alpha);

struct EmpiricalLipschitzReport {
  Scalar max_ratio = 0.0;
  Scalar bound = 0.0;  // per-node closed form times the node count
  int pairs = 0;
  bool pass = false;
};

// Sampled difference quotients |L(T)-L(T')|/||T-T'||_F over random tensor
// pairs in the unit Frobenius ball.
EmpiricalLipschitzReport empirical_lipschitz(const OpinionBatch& opinions, Scalar lambda,
                                             Scalar alpha, int trials, std::uint64_t seed = 0);

struct ConvergenceReport {
  Scalar min_grad_sq = 0.0;
  Scalar rhs = 0.0;
  bool pass = false;
};

// Plain gradient-descent stationarity bound: min_t ||grad||^2 against
// 2*(L(T_0) - L*)/(lr*T) with L* = -lambda*N.
ConvergenceReport convergence_check(const ThetaTrace& trace, Scalar lambda, int num_nodes);

enum class ProbeSpace {
  Opinion,  // loss as a function of the fused opinion vector (entries in (0,1))
  Logit,    // loss composed with softmax of a logit vector
};

struct ConvexityReport {
  Scalar max_violation = 0.0;
  int trials = 0;
};

// Midpoint convexity probe of the per-node collaboration loss. The opinion
// space is where the convexity statement holds; the logit-space probe is
// kept to document that the composition with softmax breaks it.
ConvexityReport convexity_probe(int c, Scalar lambda, Scalar alpha, int trials,
                                std::uint64_t seed = 0,
                                ProbeSpace space = ProbeSpace::Opinion);

struct BoundInputs {
  int n = 0;
  Scalar b_theta = 0.0;   // confidence-tensor norm cap
  Scalar g_e = 0.0;       // expert-output norm bound
  int k = 0;
  Scalar gamma_margin = 0.0;
  Scalar delta = 0.0;
  int c = 0;
  bool multiclass_constant = false;  // multiply the complexity term by sqrt(ln c)

  void validate() const;
};

Scalar rademacher_term(const BoundInputs& inputs);
Scalar generalization_bound(Scalar empirical_ramp, const BoundInputs& inputs);

struct RampReport {
  std::vector<Scalar> margins;
  std::vector<Scalar> ramp;      // per sample
  Scalar mean_ramp = 0.0;
  bool ordering_holds = false;   // zero_one <= thresholded <= ramp for every sample
  std::vector<int> histogram;    // margin counts over [-1, 1] in 20 bins
};

// Per-sample margin (true score minus best other score) and the piecewise
// ramp surrogate at threshold gamma_margin.
RampReport ramp_and_margin(const Matrix& scores, const std::vector<int>& labels,
                           Scalar gamma_margin);

struct TheoryCheck {
  std::string name;
  std::string inputs;
  Scalar observed = 0.0;
  Scalar bound = 0.0;
  bool pass = false;
};

void save_theory_report(const std::string& path, const std::vector<TheoryCheck>& checks);

// Full default verification battery (used by the CLI).
std::vector<TheoryCheck> run_theory_checks(std::uint64_t seed = 0);

}  // namespace coe
