#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coe/common.hpp"
#include "coe/multiplex.hpp"

namespace coe {

// Element-wise weights for the two-layer attentive learner. All-ones weights
// reduce the learner to plain SGC propagation.
struct LearnerParams {
  Matrix w1, w2;  // same shape as the feature matrix they multiply
  int order = 2;  // propagation order r

  static LearnerParams ones(Eigen::Index rows, Eigen::Index cols, int order) {
    return {Matrix::Ones(rows, cols), Matrix::Ones(rows, cols), order};
  }
};

struct KnnMode {
  enum Variant { Exact, Lsh };
  Variant variant = Exact;
  int batch_size = 64;   // B, lsh only
  int num_hashes = 16;   // signature bits, lsh only
  std::uint64_t seed = 0;
};

// Symmetric nonnegative normalized adjacency with unit self-loops. Dense at
// desk scale (N <= 2048).
struct RefinedLayer {
  Matrix adjacency_norm;
  int k = 0;
  std::string source;
};

// Normalized propagation operator (A+I) rescaled by degree on both sides.
Matrix normalized_operator(const Matrix& adjacency);

// H = relu((P^r X) .* W1) .* W2 with P the normalized operator. Layers
// flagged without structure pass their features through unchanged.
Matrix attentive_embed(const Layer& layer, int num_nodes, const LearnerParams& params);

// Directed top-K selection: weights(i,j) holds the cosine similarity for the
// K kept neighbors of i, and mask(i,j) marks the selection (a kept neighbor
// can carry weight <= 0).
struct SparseKnn {
  Matrix weights;
  Matrix mask;
};

// Ties break to the lowest index.
SparseKnn knn_graph(const Matrix& embeddings, int k, const KnnMode& mode = {});

// Neighbor sets of the selection mask, for recall measurements.
std::vector<std::vector<int>> knn_neighbor_sets(const SparseKnn& knn);

RefinedLayer postprocess_adjacency(const Matrix& sparse_knn);

RefinedLayer refine_layer(const Layer& layer, int num_nodes, const LearnerParams& params,
                          int k, const KnnMode& mode = {});

void save_refined(const std::string& path, const RefinedLayer& layer);
RefinedLayer load_refined(const std::string& path, int num_nodes);

namespace detail {

// relu -> half-sum symmetrization -> unit self-loops -> two-sided degree
// normalization, computed on the upper triangle and mirrored so the output is
// bitwise symmetric.
template <typename Derived>
Matrix postprocess_dense(const Eigen::MatrixBase<Derived>& sparse_knn) {
  const Eigen::Index n = sparse_knn.rows();
  if (sparse_knn.cols() != n) throw ValidationError("postprocess: square matrix required");
  if (!sparse_knn.derived().allFinite())
    throw ValidationError("postprocess: non-finite entry");

  Matrix sym(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const Scalar v = (std::max(Scalar(sparse_knn(i, j)), 0.0) +
                        std::max(Scalar(sparse_knn(j, i)), 0.0)) /
                       2.0;
      sym(i, j) = v;
      sym(j, i) = v;
    }

  Vector scale(n);
  for (Eigen::Index i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(1.0 + sym.row(i).sum());

  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = (sym(i, i) + 1.0) * scale[i] * scale[i];
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Scalar v = sym(i, j) * scale[i] * scale[j];
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

}  // namespace detail

}  // namespace coe
