#pragma once

#include <vector>

#include "coe/common.hpp"

namespace coe {

// Stacked expert opinions: row i holds the concatenated per-class probability
// vectors of all experts for one node, in roster order.
struct OpinionBatch {
  Matrix g;                // n x (k*c)
  std::vector<int> labels; // length n
  IndexList node_ids;      // original node index per row (optional bookkeeping)
  int num_classes = 0;
  int num_experts = 0;

  Eigen::Index size() const { return g.rows(); }

  void validate() const {
    if (g.cols() != static_cast<Eigen::Index>(num_classes) * num_experts)
      throw ValidationError("opinions: width must equal k*c");
    if (static_cast<Eigen::Index>(labels.size()) != g.rows())
      throw ValidationError("opinions: one label per row required");
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (int e = 0; e < num_experts; ++e) {
        const auto block = g.row(i).segment(static_cast<Eigen::Index>(e) * num_classes, num_classes);
        if ((block.array() <= 0.0).any())
          throw ValidationError("opinions: expert block must be strictly positive");
        if (std::abs(block.sum() - 1.0) > 1e-9)
          throw ValidationError("opinions: expert block must sum to 1");
      }
  }
};

}  // namespace coe
