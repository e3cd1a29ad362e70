#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coe/common.hpp"

namespace coe {

// One relation type: a sparse undirected binary adjacency (stored as a sorted
// coordinate list with src < dst, no self-loops, no duplicates) plus a dense
// node-feature matrix.
struct Layer {
  std::string name;
  std::vector<std::pair<int, int>> edges;
  Matrix features;                // N x d_f
  bool has_structure = true;      // false: treat features as the embedding directly

  int num_edges() const { return static_cast<int>(edges.size()); }
  Matrix dense_adjacency(int num_nodes) const;
  void validate(int num_nodes, int feature_dim, const std::string& context) const;
};

struct MultiplexNetwork {
  int num_nodes = 0;
  int feature_dim = 0;
  std::vector<Layer> layers;

  int num_layers() const { return static_cast<int>(layers.size()); }
  void validate() const;
};

struct LabelSet {
  std::vector<int> labels;  // class index per node, in [0, num_classes)
  int num_classes = 0;

  void validate(int num_nodes) const;
  Matrix one_hot() const;  // N x c
};

struct NodeSplit {
  IndexList train, validation, test;

  void validate(int num_nodes) const;
};

// Stochastic-block-model style multiplex: layer v connects same-class pairs
// with p_in when the class is in informative_classes[v], all other pairs with
// p_out. Features are one-hot labels plus Gaussian noise, zero-padded to
// feature_dim.
struct SyntheticSpec {
  int num_nodes = 0;
  int num_classes = 0;
  int num_layers = 0;
  std::vector<std::vector<int>> informative_classes;  // one set per layer
  Scalar p_in = 0.0;
  Scalar p_out = 0.0;
  Scalar feature_noise = 0.0;
  int feature_dim = 0;  // 0: defaults to num_classes
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  MultiplexNetwork network;
  LabelSet labels;
};

struct LoadedDataset {
  MultiplexNetwork network;
  LabelSet labels;
  NodeSplit split;
  bool has_split = false;
};

LoadedDataset load_multiplex(const std::string& root_path);
void save_multiplex(const std::string& root_path, const MultiplexNetwork& net,
                    const LabelSet& labels, const NodeSplit* split = nullptr);

Dataset generate_synthetic(const SyntheticSpec& spec);

enum class PerturbMode { Add, Delete };

Layer perturb_edges(const Layer& layer, int num_nodes, Scalar ratio, PerturbMode mode,
                    std::uint64_t seed);

NodeSplit split_nodes(int num_nodes, Scalar train_fraction, Scalar val_fraction,
                      std::uint64_t seed);

}  // namespace coe
