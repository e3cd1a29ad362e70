#include "coe/multiplex.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace coe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& file, int line, const std::string& msg) {
  std::ostringstream os;
  os << file;
  if (line > 0) os << ":" << line;
  os << ": " << msg;
  throw ValidationError(os.str());
}

std::string fmt_double(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Matrix Layer::dense_adjacency(int num_nodes) const {
  Matrix a = Matrix::Zero(num_nodes, num_nodes);
  for (auto [u, w] : edges) {
    a(u, w) = 1.0;
    a(w, u) = 1.0;
  }
  return a;
}

void Layer::validate(int num_nodes, int feature_dim, const std::string& context) const {
  std::pair<int, int> prev{-1, -1};
  for (auto [u, w] : edges) {
    if (u < 0 || w < 0 || u >= num_nodes || w >= num_nodes)
      throw ValidationError(context + ": index out of range in layer '" + name + "'");
    if (u >= w)
      throw ValidationError(context + ": edge not stored as src<dst in layer '" + name + "'");
    if (std::pair<int, int>{u, w} <= prev)
      throw ValidationError(context + ": duplicate or unsorted edge in layer '" + name + "'");
    prev = {u, w};
  }
  if (features.rows() != num_nodes || features.cols() != feature_dim)
    throw ValidationError(context + ": feature shape mismatch in layer '" + name + "'");
  if (!features.allFinite())
    throw ValidationError(context + ": non-finite feature in layer '" + name + "'");
}

void MultiplexNetwork::validate() const {
  if (num_nodes <= 0) throw ValidationError("multiplex: num_nodes must be positive");
  for (const auto& layer : layers) layer.validate(num_nodes, feature_dim, "multiplex");
}

void LabelSet::validate(int num_nodes) const {
  if (static_cast<int>(labels.size()) != num_nodes)
    throw ValidationError("labels: expected one label per node");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw ValidationError("labels: class index out of range");
}

Matrix LabelSet::one_hot() const {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return y;
}

void NodeSplit::validate(int num_nodes) const {
  std::set<int> seen;
  for (const auto* part : {&train, &validation, &test}) {
    for (int i : *part) {
      if (i < 0 || i >= num_nodes) throw ValidationError("split: node index out of range");
      if (!seen.insert(i).second) throw ValidationError("split: index appears in two parts");
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_nodes <= 0 || num_classes <= 0 || num_layers <= 0)
    throw ValidationError("synthetic spec: counts must be positive");
  if (num_classes > num_nodes)
    throw ValidationError("synthetic spec: more classes than nodes");
  if (!(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0))
    throw ValidationError("synthetic spec: need 0 <= p_out <= p_in <= 1");
  if (feature_noise < 0.0) throw ValidationError("synthetic spec: negative feature noise");
  if (static_cast<int>(informative_classes.size()) != num_layers)
    throw ValidationError("synthetic spec: one informative class set per layer required");
  for (const auto& s : informative_classes) {
    if (s.empty()) throw ValidationError("synthetic spec: empty informative class set");
    for (int c : s)
      if (c < 0 || c >= num_classes)
        throw ValidationError("synthetic spec: informative class out of range");
  }
}

// ---------------------------------------------------------------------------
// Directory ingestion

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(path.string(), 0, "missing file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(path.string(), 0, e.what());
  }
}

std::vector<std::pair<int, int>> read_edges_tsv(const fs::path& path, int num_nodes) {
  std::ifstream in(path);
  if (!in) fail(path.string(), 0, "missing file");
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long u, w;
    if (!(ls >> u >> w)) fail(path.string(), lineno, "expected two integer columns");
    if (u < 0 || w < 0 || u >= num_nodes || w >= num_nodes)
      fail(path.string(), lineno, "index out of range");
    if (u >= w) fail(path.string(), lineno, "expected src < dst");
    edges.emplace_back(static_cast<int>(u), static_cast<int>(w));
  }
  std::sort(edges.begin(), edges.end());
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i] == edges[i - 1]) fail(path.string(), 0, "duplicate edge");
  return edges;
}

Matrix read_features_csv(const fs::path& path, int num_nodes, int feature_dim) {
  std::ifstream in(path);
  if (!in) fail(path.string(), 0, "missing file");
  Matrix x(num_nodes, feature_dim);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= num_nodes)
      fail(path.string(), row + 1, "inconsistent node count (more rows than num_nodes)");
    std::istringstream ls(line);
    std::string cell;
    int col = 0;
    while (std::getline(ls, cell, ',')) {
      if (col >= feature_dim) fail(path.string(), row + 1, "more columns than feature_dim");
      try {
        x(row, col) = std::stod(cell);
      } catch (const std::exception&) {
        fail(path.string(), row + 1, "unparseable value '" + cell + "'");
      }
      ++col;
    }
    if (col != feature_dim) fail(path.string(), row + 1, "wrong column count");
    ++row;
  }
  if (row != num_nodes) fail(path.string(), row, "inconsistent node count");
  return x;
}

std::vector<int> read_labels_tsv(const fs::path& path, int num_nodes, int num_classes) {
  std::ifstream in(path);
  if (!in) fail(path.string(), 0, "missing file");
  std::vector<int> labels(num_nodes, -1);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long node, cls;
    if (!(ls >> node >> cls)) fail(path.string(), lineno, "expected two integer columns");
    if (node < 0 || node >= num_nodes) fail(path.string(), lineno, "node index out of range");
    if (cls < 0 || cls >= num_classes)
      fail(path.string(), lineno, "class index >= num_classes");
    labels[static_cast<std::size_t>(node)] = static_cast<int>(cls);
  }
  for (int i = 0; i < num_nodes; ++i)
    if (labels[static_cast<std::size_t>(i)] < 0)
      fail(path.string(), 0, "missing label for node " + std::to_string(i));
  return labels;
}

}  // namespace

LoadedDataset load_multiplex(const std::string& root_path) {
  const fs::path root(root_path);
  const json meta = read_json_file(root / "meta.json");
  LoadedDataset out;
  try {
    out.network.num_nodes = meta.at("num_nodes").get<int>();
    out.labels.num_classes = meta.at("num_classes").get<int>();
    out.network.feature_dim = meta.at("feature_dim").get<int>();
    for (const auto& name : meta.at("layers")) {
      Layer layer;
      layer.name = name.get<std::string>();
      out.network.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    fail((root / "meta.json").string(), 0, e.what());
  }
  if (out.network.num_nodes <= 0)
    fail((root / "meta.json").string(), 0, "num_nodes must be positive");

  for (auto& layer : out.network.layers) {
    layer.edges = read_edges_tsv(root / (layer.name + ".edges.tsv"), out.network.num_nodes);
    layer.features = read_features_csv(root / (layer.name + ".features.csv"),
                                       out.network.num_nodes, out.network.feature_dim);
  }
  out.labels.labels =
      read_labels_tsv(root / "labels.tsv", out.network.num_nodes, out.labels.num_classes);

  const fs::path split_path = root / "split.json";
  if (fs::exists(split_path)) {
    const json sj = read_json_file(split_path);
    try {
      out.split.train = sj.at("train").get<IndexList>();
      out.split.validation = sj.at("val").get<IndexList>();
      out.split.test = sj.at("test").get<IndexList>();
    } catch (const json::exception& e) {
      fail(split_path.string(), 0, e.what());
    }
    out.split.validate(out.network.num_nodes);
    out.has_split = true;
  }

  out.network.validate();
  out.labels.validate(out.network.num_nodes);
  return out;
}

void save_multiplex(const std::string& root_path, const MultiplexNetwork& net,
                    const LabelSet& labels, const NodeSplit* split) {
  const fs::path root(root_path);
  fs::create_directories(root);

  json meta;
  meta["num_nodes"] = net.num_nodes;
  meta["num_classes"] = labels.num_classes;
  meta["feature_dim"] = net.feature_dim;
  json names = json::array();
  for (const auto& layer : net.layers) names.push_back(layer.name);
  meta["layers"] = names;
  std::ofstream(root / "meta.json") << meta.dump(2) << "\n";

  for (const auto& layer : net.layers) {
    std::ofstream edges(root / (layer.name + ".edges.tsv"));
    for (auto [u, w] : layer.edges) edges << u << "\t" << w << "\n";
    std::ofstream feats(root / (layer.name + ".features.csv"));
    for (int i = 0; i < net.num_nodes; ++i) {
      for (int j = 0; j < net.feature_dim; ++j) {
        if (j) feats << ",";
        feats << fmt_double(layer.features(i, j));
      }
      feats << "\n";
    }
  }

  std::ofstream lab(root / "labels.tsv");
  for (int i = 0; i < net.num_nodes; ++i)
    lab << i << "\t" << labels.labels[static_cast<std::size_t>(i)] << "\n";

  if (split) {
    json sj;
    sj["train"] = split->train;
    sj["val"] = split->validation;
    sj["test"] = split->test;
    std::ofstream(root / "split.json") << sj.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Synthetic generation

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int n = spec.num_nodes;
  const int c = spec.num_classes;
  const int d_f = spec.feature_dim > 0 ? spec.feature_dim : c;
  if (d_f < c) throw ValidationError("synthetic spec: feature_dim smaller than num_classes");

  Dataset out;
  out.labels.num_classes = c;
  out.labels.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.labels.labels[static_cast<std::size_t>(i)] = i % c;

  out.network.num_nodes = n;
  out.network.feature_dim = d_f;

  for (int v = 0; v < spec.num_layers; ++v) {
    Layer layer;
    layer.name = "layer" + std::to_string(v + 1);

    auto rng = make_rng(spec.seed, static_cast<std::uint64_t>(v) + 1);
    std::uniform_real_distribution<Scalar> unif(0.0, 1.0);
    const auto& informative = spec.informative_classes[static_cast<std::size_t>(v)];
    auto is_informative = [&](int cls) {
      return std::find(informative.begin(), informative.end(), cls) != informative.end();
    };
    for (int u = 0; u < n; ++u) {
      const int yu = out.labels.labels[static_cast<std::size_t>(u)];
      for (int w = u + 1; w < n; ++w) {
        const int yw = out.labels.labels[static_cast<std::size_t>(w)];
        const Scalar p = (yu == yw && is_informative(yu)) ? spec.p_in : spec.p_out;
        if (unif(rng) < p) layer.edges.emplace_back(u, w);
      }
    }

    auto frng = make_rng(spec.seed, 1000 + static_cast<std::uint64_t>(v));
    std::normal_distribution<Scalar> noise(0.0, 1.0);
    layer.features = Matrix::Zero(n, d_f);
    for (int i = 0; i < n; ++i) {
      layer.features(i, out.labels.labels[static_cast<std::size_t>(i)]) = 1.0;
      if (spec.feature_noise > 0.0)
        for (int j = 0; j < d_f; ++j) layer.features(i, j) += spec.feature_noise * noise(frng);
    }
    out.network.layers.push_back(std::move(layer));
  }
  out.network.validate();
  return out;
}

Layer perturb_edges(const Layer& layer, int num_nodes, Scalar ratio, PerturbMode mode,
                    std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 0.9)
    throw ValidationError("perturb_edges: ratio must lie in [0, 0.9]");
  const int count = static_cast<int>(ratio * static_cast<Scalar>(layer.num_edges()));
  Layer out = layer;
  if (count == 0) return out;

  auto rng = make_rng(seed, mode == PerturbMode::Delete ? 17 : 23);
  if (mode == PerturbMode::Delete) {
    std::vector<std::pair<int, int>> edges = layer.edges;
    // Partial Fisher-Yates: the first `count` entries are the removals.
    for (int i = 0; i < count; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(edges.size()) - 1);
      std::swap(edges[static_cast<std::size_t>(i)], edges[static_cast<std::size_t>(pick(rng))]);
    }
    edges.erase(edges.begin(), edges.begin() + count);
    std::sort(edges.begin(), edges.end());
    out.edges = std::move(edges);
    return out;
  }

  const long long total_pairs =
      static_cast<long long>(num_nodes) * (num_nodes - 1) / 2;
  const long long absent = total_pairs - layer.num_edges();
  if (absent < count)
    throw ValidationError("perturb_edges: not enough absent pairs to add " +
                          std::to_string(count) + " edges");
  std::set<std::pair<int, int>> present(layer.edges.begin(), layer.edges.end());
  std::uniform_int_distribution<int> pick_node(0, num_nodes - 1);
  int added = 0;
  while (added < count) {
    int u = pick_node(rng), w = pick_node(rng);
    if (u == w) continue;
    if (u > w) std::swap(u, w);
    if (present.insert({u, w}).second) ++added;
  }
  out.edges.assign(present.begin(), present.end());
  return out;
}

NodeSplit split_nodes(int num_nodes, Scalar train_fraction, Scalar val_fraction,
                      std::uint64_t seed) {
  if (train_fraction < 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0)
    throw ValidationError("split_nodes: fractions must be nonnegative and sum to <= 1");
  std::vector<int> order(static_cast<std::size_t>(num_nodes));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, 42);
  std::shuffle(order.begin(), order.end(), rng);

  const int n_train = static_cast<int>(train_fraction * num_nodes);
  const int n_val = static_cast<int>(val_fraction * num_nodes);
  NodeSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  return split;
}

}  // namespace coe
