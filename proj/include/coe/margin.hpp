#pragma once

#include <string>
#include <vector>

#include "coe/common.hpp"
#include "coe/opinions.hpp"

namespace coe {

// Credibility table: row r, expert-block t, column s weights expert t's
// opinion for class s toward fused class r. Stored expanded as c x (k*c).
struct ConfidenceTensor {
  Matrix theta;
  Scalar norm_cap = 0.0;  // 0: no cap; otherwise project to ||theta||_F <= cap

  // Block-replicated identity scaled by 1/k: fused logits start at the mean
  // expert opinion.
  static ConfidenceTensor mean_init(int num_classes, int num_experts, Scalar norm_cap = 0.0);
};

struct MarginConfig {
  Scalar alpha = 100.0;  // smooth-max sharpness
  Scalar lambda = 100.0; // balance between correctness and margin terms
  Scalar lr = 0.001;
  int iterations = 500;
  enum Optimizer { PlainGd, Adaptive };
  Optimizer optimizer = Adaptive;
  Scalar norm_cap = 0.0;
};

struct FusedPrediction {
  int label = 0;
  Vector probabilities;
};

FusedPrediction fuse_predict(const Matrix& theta, const Vector& opinion);

// Log-sum-exp approximation of the largest non-true-class probability:
// the true-class entry is zeroed before a sharp logsumexp. Within ln(c)/alpha
// of the exact masked max.
Scalar smooth_max2(const Vector& probabilities, int true_class, Scalar alpha);

Scalar margin_loss(const Matrix& theta, const OpinionBatch& opinions, Scalar alpha);
Scalar correctness_loss(const Matrix& theta, const OpinionBatch& opinions);

// Stage-2 objective: correctness - lambda * margin, summed over nodes, all
// exponentials in shifted log-domain form.
Scalar collaboration_loss(const Matrix& theta, const OpinionBatch& opinions, Scalar alpha,
                          Scalar lambda);

// Per-node objective as a function of the fused opinion vector (entries in
// (0,1)); this is the variable the convexity analysis works in.
Scalar collaboration_node_loss(const Vector& fused, int true_class, Scalar alpha,
                               Scalar lambda);

Matrix theta_gradient(const Matrix& theta, const OpinionBatch& opinions, Scalar alpha,
                      Scalar lambda);

struct ThetaTrace {
  std::vector<Scalar> loss;
  std::vector<Scalar> grad_sq_norm;
  Scalar lr = 0.0;
  int iterations = 0;
};

ConfidenceTensor optimize_theta(const OpinionBatch& opinions, const MarginConfig& config,
                                ThetaTrace* trace = nullptr);

std::vector<int> fuse_predict_all(const Matrix& theta, const OpinionBatch& opinions);

std::vector<int> vote_rf(const OpinionBatch& opinions);
std::vector<int> vote_wrf(const OpinionBatch& opinions, const Vector& expert_weights);

void save_theta(const std::string& path, const ConfidenceTensor& theta);
ConfidenceTensor load_theta(const std::string& path);

void save_predictions(const std::string& path, const std::vector<int>& node_ids,
                      const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace coe
