#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "coe/common.hpp"

namespace coe {

// Stacked message-passing weights; layer l maps the previous width to the
// next via Z_l = relu(A * Z_{l-1} * W_l).
struct EncoderParams {
  std::vector<Matrix> weights;

  static EncoderParams init(int d_in, int d_hidden, int d_out, int depth,
                            std::uint64_t seed);
};

struct ClassifierHead {
  Matrix w;  // d x c
  Matrix b;  // 1 x c

  static ClassifierHead zeros(int d, int num_classes) {
    return {Matrix::Zero(d, num_classes), Matrix::Zero(1, num_classes)};
  }
};

// Forward intermediates kept for the backward pass.
struct GcnCache {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l; inputs[0] = X
  std::vector<Matrix> pre;     // pre-activation per layer
};

struct GcnGrads {
  std::vector<Matrix> weights;
  Matrix adjacency;  // filled only when requested
};

Matrix gcn_forward(const Matrix& adjacency, const Matrix& features,
                   const EncoderParams& params, GcnCache* cache = nullptr);

// Backpropagates d(loss)/dZ through the cached forward. Set want_adjacency to
// also get d(loss)/dA for learnable-structure paths.
GcnGrads gcn_backward(const Matrix& adjacency, const EncoderParams& params,
                      const GcnCache& cache, const Matrix& d_output,
                      bool want_adjacency = false);

// Row-wise softmax(Z W + b).
Matrix classify(const Matrix& embeddings, const ClassifierHead& head);

struct CrossEntropyResult {
  Scalar loss = 0.0;
  Matrix d_logits;  // zero outside the index set; already divided by |idx|
};

// Mean negative log-likelihood over the index set, with the gradient w.r.t.
// the logits (probabilities - one_hot, restricted to the set).
CrossEntropyResult cross_entropy(const Matrix& probabilities, const std::vector<int>& labels,
                                 const IndexList& indices);

struct HeadGrads {
  Matrix w, b;
  Matrix embeddings;
};

HeadGrads head_backward(const Matrix& embeddings, const ClassifierHead& head,
                        const Matrix& d_logits);

struct FiniteDiffReport {
  Scalar max_rel_error = 0.0;
  int coords_checked = 0;
  bool pass = false;
};

// Central finite differences against an analytic gradient on up to
// max_coords sampled coordinates. Coordinates where both values are below
// 1e-6 in magnitude are compared absolutely.
FiniteDiffReport finite_diff_check(const std::function<Scalar(const Vector&)>& loss,
                                   const Vector& params, const Vector& analytic_grad,
                                   Scalar step, Scalar tolerance, int max_coords = 200,
                                   std::uint64_t seed = 0);

}  // namespace coe
