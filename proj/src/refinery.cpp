#include "coe/refinery.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace coe {

namespace {

constexpr int kMaxDenseNodes = 2048;

void check_desk_scale(Eigen::Index n) {
  if (n > kMaxDenseNodes)
    throw ValidationError("refinery: N > 2048 exceeds the dense desk-scale path");
}

// Top-k rows of a similarity matrix, self excluded, ties to the lowest index.
SparseKnn topk_rows(const Matrix& sim, int k) {
  const Eigen::Index n = sim.rows();
  SparseKnn out{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    idx.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) idx.push_back(j);
    auto better = [&](int a, int b) {
      if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
      return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
    for (int t = 0; t < k; ++t) {
      const int j = idx[static_cast<std::size_t>(t)];
      out.weights(i, j) = sim(i, j);
      out.mask(i, j) = 1.0;
    }
  }
  return out;
}

Matrix normalize_rows_checked(const Matrix& h) {
  Matrix hn(h.rows(), h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const Scalar norm = h.row(i).norm();
    if (norm == 0.0)
      throw ValidationError("knn_graph: degenerate embedding (zero-norm row " +
                            std::to_string(i) + ")");
    hn.row(i) = h.row(i) / norm;
  }
  return hn;
}

}  // namespace

Matrix normalized_operator(const Matrix& adjacency) {
  const Eigen::Index n = adjacency.rows();
  Vector scale(n);
  for (Eigen::Index i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(1.0 + adjacency.row(i).sum());
  Matrix p(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      p(i, j) = (adjacency(i, j) + (i == j ? 1.0 : 0.0)) * scale[i] * scale[j];
  return p;
}

Matrix attentive_embed(const Layer& layer, int num_nodes, const LearnerParams& params) {
  check_desk_scale(num_nodes);
  if (!layer.has_structure) return layer.features;
  if (params.order < 1) throw ValidationError("attentive_embed: order must be >= 1");
  if (params.w1.rows() != layer.features.rows() || params.w1.cols() != layer.features.cols() ||
      params.w2.rows() != layer.features.rows() || params.w2.cols() != layer.features.cols())
    throw ValidationError("attentive_embed: weight shape does not match features");

  const Matrix p = normalized_operator(layer.dense_adjacency(num_nodes));
  Matrix h = layer.features;
  for (int t = 0; t < params.order; ++t) h = p * h;
  return relu(h.cwiseProduct(params.w1)).cwiseProduct(params.w2);
}

SparseKnn knn_graph(const Matrix& embeddings, int k, const KnnMode& mode) {
  const Eigen::Index n = embeddings.rows();
  check_desk_scale(n);
  if (k < 1 || k >= n) throw ValidationError("knn_graph: need 1 <= K < N");
  const Matrix hn = normalize_rows_checked(embeddings);

  if (mode.variant == KnnMode::Exact) {
    const Matrix sim = hn * hn.transpose();
    return topk_rows(sim, k);
  }

  if (mode.batch_size < k + 1)
    throw ValidationError("knn_graph: lsh batch size must be >= K+1");

  // Random-hyperplane signatures; nodes sorted by signature and chunked into
  // batches. kNN is computed only within each batch.
  auto rng = make_rng(mode.seed, 7);
  std::normal_distribution<Scalar> gauss(0.0, 1.0);
  Matrix planes(embeddings.cols(), mode.num_hashes);
  for (Eigen::Index i = 0; i < planes.rows(); ++i)
    for (Eigen::Index j = 0; j < planes.cols(); ++j) planes(i, j) = gauss(rng);

  const Matrix proj = hn * planes;
  std::vector<std::uint64_t> sig(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int b = 0; b < mode.num_hashes; ++b)
      if (proj(i, b) >= 0) sig[static_cast<std::size_t>(i)] |= (1ULL << b);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (sig[static_cast<std::size_t>(a)] != sig[static_cast<std::size_t>(b)])
      return sig[static_cast<std::size_t>(a)] < sig[static_cast<std::size_t>(b)];
    return a < b;
  });

  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += mode.batch_size) {
    const int stop = std::min<int>(start + mode.batch_size, static_cast<int>(n));
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  if (batches.size() > 1 && static_cast<int>(batches.back().size()) < k + 1) {
    auto tail = batches.back();
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }

  SparseKnn out{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  std::vector<int> cand;
  for (const auto& batch : batches) {
    const int m = static_cast<int>(batch.size());
    Matrix sub(m, hn.cols());
    for (int t = 0; t < m; ++t) sub.row(t) = hn.row(batch[static_cast<std::size_t>(t)]);
    const Matrix sim = sub * sub.transpose();
    for (int t = 0; t < m; ++t) {
      cand.clear();
      for (int s = 0; s < m; ++s)
        if (s != t) cand.push_back(s);
      auto better = [&](int a, int b) {
        if (sim(t, a) != sim(t, b)) return sim(t, a) > sim(t, b);
        return batch[static_cast<std::size_t>(a)] < batch[static_cast<std::size_t>(b)];
      };
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), better);
      for (int s = 0; s < k; ++s) {
        const int row = batch[static_cast<std::size_t>(t)];
        const int col = batch[static_cast<std::size_t>(cand[static_cast<std::size_t>(s)])];
        out.weights(row, col) = sim(t, cand[static_cast<std::size_t>(s)]);
        out.mask(row, col) = 1.0;
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> knn_neighbor_sets(const SparseKnn& knn) {
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(knn.mask.rows()));
  for (Eigen::Index i = 0; i < knn.mask.rows(); ++i)
    for (Eigen::Index j = 0; j < knn.mask.cols(); ++j)
      if (knn.mask(i, j) != 0.0) sets[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
  return sets;
}

RefinedLayer postprocess_adjacency(const Matrix& sparse_knn) {
  RefinedLayer out;
  out.adjacency_norm = detail::postprocess_dense(sparse_knn);
  return out;
}

RefinedLayer refine_layer(const Layer& layer, int num_nodes, const LearnerParams& params,
                          int k, const KnnMode& mode) {
  const Matrix h = attentive_embed(layer, num_nodes, params);
  RefinedLayer out = postprocess_adjacency(knn_graph(h, k, mode).weights);
  out.k = k;
  out.source = layer.name;
  return out;
}

void save_refined(const std::string& path, const RefinedLayer& layer) {
  std::ofstream out(path);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  char buf[48];
  const Eigen::Index n = layer.adjacency_norm.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      if (layer.adjacency_norm(i, j) != 0.0) {
        std::snprintf(buf, sizeof(buf), "%lld\t%lld\t%.17g\n", static_cast<long long>(i),
                      static_cast<long long>(j), layer.adjacency_norm(i, j));
        out << buf;
      }
}

RefinedLayer load_refined(const std::string& path, int num_nodes) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": missing file");
  RefinedLayer out;
  out.adjacency_norm = Matrix::Zero(num_nodes, num_nodes);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long i, j;
    Scalar w;
    if (!(ls >> i >> j >> w))
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected 'i j weight'");
    if (i < 0 || j < i || j >= num_nodes)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": index out of range");
    out.adjacency_norm(i, j) = w;
    out.adjacency_norm(j, i) = w;
  }
  return out;
}

}  // namespace coe
