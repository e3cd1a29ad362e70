#pragma once

#include <cstdint>
#include <vector>

#include "coe/common.hpp"

namespace coe {

// Projection-and-cosine score critic. An empty projection matrix means the
// projection is the identity (no affine map, no activation).
struct CriticParams {
  Matrix w;  // d x d_p
  Matrix b;  // 1 x d_p
  Scalar tau = 0.2;

  bool identity() const { return w.size() == 0; }
  static CriticParams init(int d, std::uint64_t seed, Scalar tau = 0.2);
};

// Aligned node positions: row i of both matrices is a positive pair.
struct MiBatch {
  IndexList indices;

  static MiBatch full(Eigen::Index n) {
    MiBatch b;
    b.indices.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) b.indices[static_cast<std::size_t>(i)] = static_cast<int>(i);
    return b;
  }
};

Scalar critic_score(const Vector& z_a, const Vector& z_b, const CriticParams& critic);

struct InfoNceResult {
  Scalar value = 0.0;
  Matrix d_za, d_zb;  // same shapes as the inputs, zero outside the batch
  Matrix d_w, d_b;    // critic gradients (empty for identity projection)
};

// Symmetrized contrastive lower bound over aligned positive pairs against
// in-batch negatives; always <= ln(batch size). Gradients are returned for
// both embedding matrices and the critic.
InfoNceResult info_nce(const Matrix& z_a, const Matrix& z_b, const CriticParams& critic,
                       const MiBatch& batch, bool want_grads = true);

}  // namespace coe
