#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coe/checkpoint.hpp"
#include "coe/common.hpp"
#include "coe/encoders.hpp"
#include "coe/mi.hpp"
#include "coe/multiplex.hpp"
#include "coe/opinions.hpp"
#include "coe/refinery.hpp"

namespace coe {

enum class ExpertLevel { Low, High };

// A classifier bound to one knowledge field (a refined layer or a fused
// graph).
struct Expert {
  std::string id;
  ExpertLevel level = ExpertLevel::Low;
  std::string knowledge;
  EncoderParams encoder;
  ClassifierHead head;
  bool trained = false;
};

// Fixed ordering: the V low-level experts, then the V(V-1)/2 pairwise fused
// experts in lexicographic (i,j) order with i<j, then the all-layer fused
// expert. This ordering defines the block layout of every opinion vector.
struct ExpertRoster {
  std::vector<Expert> experts;
  int num_low = 0;

  int k() const { return static_cast<int>(experts.size()); }
};

// Element-wise weighted nonlinearity over concatenated embeddings; there is
// no propagation step because a fused graph has no prior structure.
struct FusionLearner {
  Matrix w1, w2;  // N x (sum of member embedding widths)
  int k = 15;
};

// One fused graph: the kNN selection pattern is frozen between refreshes
// while the edge values stay differentiable through the learner weights.
struct FusedGraph {
  std::vector<int> members;  // indices of the fused low-level layers
  FusionLearner learner;
  Matrix snapshot;  // concatenated member embeddings at the last refresh
  Matrix pattern;   // 0/1 mask of the directed kNN selection
  RefinedLayer refined;
  Matrix features;  // concatenated member layer features (fixed input)
  std::string name;
};

FusedGraph build_fused_graph(const std::vector<const Matrix*>& embeddings,
                             FusionLearner learner, const KnnMode& mode = {});

// Recomputes edge values (and the normalized adjacency) from the current
// learner weights on the frozen pattern.
void recompute_fused_values(FusedGraph& fused);

// New kNN pattern and snapshot from fresh embeddings; learner weights are
// kept.
void refresh_fused_graph(FusedGraph& fused, const std::vector<const Matrix*>& embeddings,
                         const KnnMode& mode = {});

struct StageOneConfig {
  int epochs = 800;
  Scalar lr = 0.001;
  int d_hidden = 128;
  int d_out = 64;
  int gcn_depth = 2;
  Scalar tau = 0.2;
  int fused_k = 15;
  int refresh_every = 10;
  Scalar refresh_until_frac = 0.8;  // structure frozen for the last stretch
  bool enable_mi = true;
  bool high_level_experts = true;
  bool high_head_ce = true;
  std::uint64_t seed = 0;
  KnnMode knn;
};

struct TrainedExperts {
  ExpertRoster roster;
  std::vector<RefinedLayer> graphs;   // one per expert, roster order
  std::vector<Matrix> features;       // one per expert, roster order
  std::vector<FusedGraph> fused;      // pairwise graphs then the all-layer graph
  CriticParams critic;
  std::vector<Scalar> loss_trace;     // objective per epoch
};

// Joint opinion-maximization training: per-layer classification plus the
// contrastive alignment terms between single and fused embeddings.
TrainedExperts train_experts(const std::vector<RefinedLayer>& refined,
                             const std::vector<Matrix>& layer_features,
                             const LabelSet& labels, const NodeSplit& split,
                             const StageOneConfig& config);

OpinionBatch expert_opinions(const TrainedExperts& system, const IndexList& node_indices,
                             const LabelSet& labels);

// Objective and gradients at the current parameters with frozen kNN
// patterns; exposed for gradient verification.
Scalar stage1_objective(TrainedExperts& system, const LabelSet& labels,
                        const IndexList& train_idx, const StageOneConfig& config,
                        std::vector<Matrix>* grads = nullptr);
std::vector<Matrix*> stage1_parameters(TrainedExperts& system);

// Plain cross-entropy training of a single expert on a fixed graph; used for
// graph-vs-graph comparisons and per-layer baselines.
Expert train_single_expert(const RefinedLayer& graph, const Matrix& features,
                           const LabelSet& labels, const IndexList& train_idx,
                           const StageOneConfig& config, const std::string& id);

Scalar expert_accuracy(const Expert& expert, const RefinedLayer& graph, const Matrix& features,
                       const LabelSet& labels, const IndexList& eval_idx);

void save_roster(const std::string& dir, const TrainedExperts& system);

// Loading returns parameters and metadata; graphs are re-derived by the
// pipeline.
struct RosterCheckpoint {
  std::vector<std::string> ids;
  std::vector<ExpertLevel> levels;
  std::vector<std::string> knowledges;
  std::vector<ParamMap> params;
};

RosterCheckpoint load_roster(const std::string& dir);

}  // namespace coe
