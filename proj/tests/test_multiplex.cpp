#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "coe/multiplex.hpp"

using namespace coe;
namespace fs = std::filesystem;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.num_nodes = 8;
  spec.num_classes = 2;
  spec.num_layers = 2;
  spec.informative_classes = {{0}, {1}};
  spec.p_in = 1.0;
  spec.p_out = 0.0;
  spec.feature_noise = 0.0;
  spec.seed = 7;
  return spec;
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("coe_test_" + tag);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("degenerate probabilities give label-pure cliques") {
  const Dataset data = generate_synthetic(tiny_spec());
  // Round-robin labels: class 0 on even nodes, class 1 on odd nodes.
  for (int i = 0; i < 8; ++i) CHECK(data.labels.labels[static_cast<std::size_t>(i)] == i % 2);

  const auto& l1 = data.network.layers[0];
  CHECK(l1.num_edges() == 6);  // 4-clique on the class-0 nodes
  for (auto [u, w] : l1.edges) {
    CHECK(u % 2 == 0);
    CHECK(w % 2 == 0);
  }
  const auto& l2 = data.network.layers[1];
  CHECK(l2.num_edges() == 6);
  for (auto [u, w] : l2.edges) {
    CHECK(u % 2 == 1);
    CHECK(w % 2 == 1);
  }
}

TEST_CASE("generation is deterministic") {
  const Dataset a = generate_synthetic(tiny_spec());
  const Dataset b = generate_synthetic(tiny_spec());
  for (int v = 0; v < 2; ++v) {
    CHECK(a.network.layers[v].edges == b.network.layers[v].edges);
    CHECK(a.network.layers[v].features == b.network.layers[v].features);
  }
}

TEST_CASE("edge counts stay within three sigma of the binomial oracle") {
  SyntheticSpec spec;
  spec.num_nodes = 200;
  spec.num_classes = 3;
  spec.num_layers = 2;
  spec.informative_classes = {{0}, {1, 2}};
  spec.p_in = 0.1;
  spec.p_out = 0.01;
  spec.feature_noise = 0.3;
  spec.seed = 11;
  const Dataset data = generate_synthetic(spec);

  for (int v = 0; v < 2; ++v) {
    // Oracle: count pair types exactly from the label assignment.
    long long n_in = 0, n_out = 0;
    for (int u = 0; u < spec.num_nodes; ++u)
      for (int w = u + 1; w < spec.num_nodes; ++w) {
        const int yu = u % 3, yw = w % 3;
        const auto& inf = spec.informative_classes[static_cast<std::size_t>(v)];
        const bool informative =
            yu == yw && std::find(inf.begin(), inf.end(), yu) != inf.end();
        (informative ? n_in : n_out) += 1;
      }
    const double mean = static_cast<double>(n_in) * spec.p_in + static_cast<double>(n_out) * spec.p_out;
    const double var = static_cast<double>(n_in) * spec.p_in * (1 - spec.p_in) +
                       static_cast<double>(n_out) * spec.p_out * (1 - spec.p_out);
    const double count = data.network.layers[static_cast<std::size_t>(v)].num_edges();
    CHECK(std::abs(count - mean) <= 3.0 * std::sqrt(var));
  }
}

TEST_CASE("connected components are label-pure without noise or background edges") {
  SyntheticSpec spec;
  spec.num_nodes = 30;
  spec.num_classes = 3;
  spec.num_layers = 2;
  spec.informative_classes = {{0, 1}, {2}};
  spec.p_in = 0.6;
  spec.p_out = 0.0;
  spec.feature_noise = 0.0;
  spec.seed = 3;
  const Dataset data = generate_synthetic(spec);
  for (const auto& layer : data.network.layers)
    for (auto [u, w] : layer.edges)
      CHECK(data.labels.labels[static_cast<std::size_t>(u)] ==
            data.labels.labels[static_cast<std::size_t>(w)]);
}

TEST_CASE("more classes than nodes is rejected") {
  SyntheticSpec spec = tiny_spec();
  spec.num_classes = 20;
  spec.informative_classes = {{0}, {1}};
  CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
}

TEST_CASE("save and load round-trip exactly") {
  SyntheticSpec spec = tiny_spec();
  spec.feature_noise = 0.37;
  spec.feature_dim = 5;
  const Dataset data = generate_synthetic(spec);
  const NodeSplit split = split_nodes(8, 0.5, 0.25, 1);

  const fs::path dir = temp_dir("roundtrip");
  save_multiplex(dir.string(), data.network, data.labels, &split);
  const LoadedDataset loaded = load_multiplex(dir.string());

  CHECK(loaded.network.num_nodes == 8);
  CHECK(loaded.network.feature_dim == 5);
  CHECK(loaded.labels.num_classes == 2);
  CHECK(loaded.labels.labels == data.labels.labels);
  CHECK(loaded.has_split);
  CHECK(loaded.split.train == split.train);
  CHECK(loaded.split.validation == split.validation);
  CHECK(loaded.split.test == split.test);
  for (int v = 0; v < 2; ++v) {
    CHECK(loaded.network.layers[static_cast<std::size_t>(v)].edges ==
          data.network.layers[static_cast<std::size_t>(v)].edges);
    CHECK(loaded.network.layers[static_cast<std::size_t>(v)].features ==
          data.network.layers[static_cast<std::size_t>(v)].features);
  }
  fs::remove_all(dir);
}

TEST_CASE("loader reports malformed inputs with the offending file") {
  const fs::path dir = temp_dir("badload");
  fs::create_directories(dir);
  std::ofstream(dir / "meta.json")
      << R"({"num_nodes":4,"num_classes":2,"feature_dim":1,"layers":["a"]})";
  std::ofstream(dir / "a.features.csv") << "1\n0\n1\n0\n";
  std::ofstream(dir / "labels.tsv") << "0\t0\n1\t1\n2\t0\n3\t1\n";

  SUBCASE("index out of range") {
    std::ofstream(dir / "a.edges.tsv") << "0\t9\n";
    CHECK_THROWS_WITH_AS(load_multiplex(dir.string()),
                         doctest::Contains("index out of range"), ValidationError);
  }
  SUBCASE("inconsistent node count") {
    std::ofstream(dir / "a.edges.tsv") << "0\t1\n";
    std::ofstream(dir / "a.features.csv") << "1\n0\n1\n0\n1\n";
    CHECK_THROWS_WITH_AS(load_multiplex(dir.string()),
                         doctest::Contains("inconsistent node count"), ValidationError);
  }
  SUBCASE("class index out of range") {
    std::ofstream(dir / "a.edges.tsv") << "0\t1\n";
    std::ofstream(dir / "labels.tsv") << "0\t0\n1\t5\n2\t0\n3\t1\n";
    CHECK_THROWS_WITH_AS(load_multiplex(dir.string()),
                         doctest::Contains("class index"), ValidationError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_multiplex(dir.string()), doctest::Contains("missing file"),
                         ValidationError);
  }
  SUBCASE("smallest well-formed input") {
    std::ofstream(dir / "a.edges.tsv") << "0\t1\n2\t3\n";
    const LoadedDataset loaded = load_multiplex(dir.string());
    CHECK(loaded.network.num_layers() == 1);
    CHECK(loaded.network.num_nodes == 4);
  }
  fs::remove_all(dir);
}

TEST_CASE("perturbation counts edges exactly") {
  Layer layer;
  layer.name = "p";
  layer.features = Matrix::Zero(6, 1);
  layer.edges = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 4}, {2, 3}, {2, 5}, {3, 4}, {3, 5}, {4, 5}};

  SUBCASE("delete half") {
    const Layer out = perturb_edges(layer, 6, 0.5, PerturbMode::Delete, 5);
    CHECK(out.num_edges() == 5);
    const std::set<std::pair<int, int>> before(layer.edges.begin(), layer.edges.end());
    for (auto e : out.edges) CHECK(before.count(e) == 1);
  }
  SUBCASE("ratio zero is the identity") {
    CHECK(perturb_edges(layer, 6, 0.0, PerturbMode::Delete, 5).edges == layer.edges);
    CHECK(perturb_edges(layer, 6, 0.0, PerturbMode::Add, 5).edges == layer.edges);
  }
  SUBCASE("adds only previously absent pairs") {
    // 10 edges on 6 nodes: 15 possible pairs, 5 absent; ratio 0.9 adds 9... which
    // must fail; ratio 0.5 adds 5, consuming every absent pair.
    CHECK_THROWS_AS(perturb_edges(layer, 6, 0.9, PerturbMode::Add, 5), ValidationError);
    const Layer out = perturb_edges(layer, 6, 0.5, PerturbMode::Add, 5);
    CHECK(out.num_edges() == 15);
    const std::set<std::pair<int, int>> before(layer.edges.begin(), layer.edges.end());
    int fresh = 0;
    for (auto e : out.edges)
      if (!before.count(e)) ++fresh;
    CHECK(fresh == 5);
  }
  SUBCASE("add mode on a larger graph") {
    Layer big;
    big.name = "big";
    big.features = Matrix::Zero(12, 1);
    big.edges = {{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}, {6, 7}, {8, 9}, {10, 11}, {0, 11}};
    const Layer out = perturb_edges(big, 12, 0.9, PerturbMode::Add, 9);
    CHECK(out.num_edges() == 19);
  }
  SUBCASE("deterministic given seed") {
    const Layer a = perturb_edges(layer, 6, 0.3, PerturbMode::Delete, 77);
    const Layer b = perturb_edges(layer, 6, 0.3, PerturbMode::Delete, 77);
    CHECK(a.edges == b.edges);
  }
  SUBCASE("full delete grid") {
    for (int t = 0; t <= 9; ++t) {
      const Scalar ratio = 0.1 * t;
      const Layer out = perturb_edges(layer, 6, ratio, PerturbMode::Delete, 13);
      CHECK(out.num_edges() == 10 - static_cast<int>(ratio * 10));
    }
  }
}

TEST_CASE("node splits") {
  const NodeSplit split = split_nodes(10, 0.6, 0.2, 9);
  CHECK(split.train.size() == 6);
  CHECK(split.validation.size() == 2);
  CHECK(split.test.size() == 2);
  split.validate(10);

  const NodeSplit all_train = split_nodes(10, 1.0, 0.0, 9);
  CHECK(all_train.train.size() == 10);
  CHECK(all_train.test.empty());

  const NodeSplit again = split_nodes(10, 0.6, 0.2, 9);
  CHECK(again.train == split.train);
  CHECK(again.validation == split.validation);
  CHECK(again.test == split.test);

  CHECK_THROWS_AS(split_nodes(10, 0.8, 0.3, 0), ValidationError);
}
