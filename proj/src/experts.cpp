#include "coe/experts.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace coe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Matrix concat_cols(const std::vector<const Matrix*>& parts) {
  Eigen::Index rows = (*parts.front()).rows(), cols = 0;
  for (const auto* p : parts) {
    if (p->rows() != rows) throw ValidationError("fusion: embeddings disagree on N");
    cols += p->cols();
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  for (const auto* p : parts) {
    out.middleCols(off, p->cols()) = *p;
    off += p->cols();
  }
  return out;
}

struct FusedCache {
  Matrix pre;    // snapshot .* w1
  Matrix h;      // relu(pre) .* w2
  Vector norms;  // row norms of h
  Matrix vals;   // directed cosine values on the pattern
  Matrix sym;
  Vector scale;
};

// Edge values from the current learner weights on the frozen pattern,
// followed by the symmetrize-and-normalize post-processing.
FusedCache fused_forward(const FusedGraph& fused) {
  FusedCache cache;
  cache.pre = fused.snapshot.cwiseProduct(fused.learner.w1);
  cache.h = relu(cache.pre).cwiseProduct(fused.learner.w2);
  const Eigen::Index n = cache.h.rows();
  cache.norms.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cache.norms[i] = cache.h.row(i).norm();
    if (cache.norms[i] == 0.0)
      throw ValidationError("fusion: degenerate embedding (zero-norm row)");
  }
  cache.vals = Matrix::Zero(n, n);
  for (Eigen::Index u = 0; u < n; ++u)
    for (Eigen::Index w = 0; w < n; ++w)
      if (fused.pattern(u, w) != 0.0)
        cache.vals(u, w) = cache.h.row(u).dot(cache.h.row(w)) / (cache.norms[u] * cache.norms[w]);

  cache.sym.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const Scalar v =
          (std::max(cache.vals(i, j), 0.0) + std::max(cache.vals(j, i), 0.0)) / 2.0;
      cache.sym(i, j) = v;
      cache.sym(j, i) = v;
    }
  cache.scale.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    cache.scale[i] = 1.0 / std::sqrt(1.0 + cache.sym.row(i).sum());
  return cache;
}

Matrix fused_adjacency_from_cache(const FusedCache& cache) {
  const Eigen::Index n = cache.sym.rows();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = (cache.sym(i, i) + 1.0) * cache.scale[i] * cache.scale[i];
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Scalar v = cache.sym(i, j) * cache.scale[i] * cache.scale[j];
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

// d(loss)/d(normalized adjacency) -> learner weight gradients.
void fused_backward(const FusedGraph& fused, const FusedCache& cache, const Matrix& d_adj,
                    Matrix* d_w1, Matrix* d_w2) {
  const Eigen::Index n = cache.sym.rows();
  const Vector& s = cache.scale;

  Vector t = Vector::Zero(n);
  for (Eigen::Index u = 0; u < n; ++u) {
    Scalar acc = 0.0;
    for (Eigen::Index v = 0; v < n; ++v) {
      const Scalar a_tilde = cache.sym(u, v) + (u == v ? 1.0 : 0.0);
      acc += (d_adj(u, v) + d_adj(v, u)) * a_tilde * s[v];
    }
    t[u] = acc;
  }
  const Vector deg_grad = (-0.5) * s.array().cube() * t.array();

  Matrix d_h = Matrix::Zero(cache.h.rows(), cache.h.cols());
  for (Eigen::Index u = 0; u < n; ++u)
    for (Eigen::Index w = 0; w < n; ++w) {
      if (fused.pattern(u, w) == 0.0) continue;
      const Scalar dsym_uw = d_adj(u, w) * s[u] * s[w] + deg_grad[u];
      const Scalar dsym_wu = d_adj(w, u) * s[w] * s[u] + deg_grad[w];
      const Scalar d_val = cache.vals(u, w) > 0.0 ? 0.5 * (dsym_uw + dsym_wu) : 0.0;
      if (d_val == 0.0) continue;
      const Scalar inv = 1.0 / (cache.norms[u] * cache.norms[w]);
      const Scalar cosv = cache.vals(u, w);
      d_h.row(u) += d_val * (cache.h.row(w) * inv -
                             cosv * cache.h.row(u) / (cache.norms[u] * cache.norms[u]));
      d_h.row(w) += d_val * (cache.h.row(u) * inv -
                             cosv * cache.h.row(w) / (cache.norms[w] * cache.norms[w]));
    }

  const Matrix relu_pre = relu(cache.pre);
  d_w2->noalias() += d_h.cwiseProduct(relu_pre);
  const Matrix d_pre =
      d_h.cwiseProduct(fused.learner.w2).cwiseProduct(relu_grad(cache.pre));
  d_w1->noalias() += d_pre.cwiseProduct(fused.snapshot);
}

std::string sanitize(const std::string& id) {
  std::string out = id;
  for (char& ch : out)
    if (ch == ':' || ch == '&' || ch == '/') ch = '_';
  return out;
}

}  // namespace

FusedGraph build_fused_graph(const std::vector<const Matrix*>& embeddings,
                             FusionLearner learner, const KnnMode& mode) {
  FusedGraph fused;
  fused.learner = std::move(learner);
  fused.snapshot = concat_cols(embeddings);
  if (fused.learner.w1.size() == 0) {
    fused.learner.w1 = Matrix::Ones(fused.snapshot.rows(), fused.snapshot.cols());
    fused.learner.w2 = Matrix::Ones(fused.snapshot.rows(), fused.snapshot.cols());
  }
  if (fused.learner.w1.rows() != fused.snapshot.rows() ||
      fused.learner.w1.cols() != fused.snapshot.cols())
    throw ValidationError("fusion: learner weight shape does not match embeddings");

  const Matrix h = relu(fused.snapshot.cwiseProduct(fused.learner.w1))
                       .cwiseProduct(fused.learner.w2);
  const SparseKnn knn = knn_graph(h, fused.learner.k, mode);
  fused.pattern = knn.mask;
  fused.refined = postprocess_adjacency(knn.weights);
  fused.refined.k = fused.learner.k;
  return fused;
}

void recompute_fused_values(FusedGraph& fused) {
  const FusedCache cache = fused_forward(fused);
  fused.refined.adjacency_norm = fused_adjacency_from_cache(cache);
}

void refresh_fused_graph(FusedGraph& fused, const std::vector<const Matrix*>& embeddings,
                         const KnnMode& mode) {
  fused.snapshot = concat_cols(embeddings);
  const Matrix h = relu(fused.snapshot.cwiseProduct(fused.learner.w1))
                       .cwiseProduct(fused.learner.w2);
  const SparseKnn knn = knn_graph(h, fused.learner.k, mode);
  fused.pattern = knn.mask;
  fused.refined = postprocess_adjacency(knn.weights);
  fused.refined.k = fused.learner.k;
}

namespace {

// All trainable matrices in a fixed order; Adam slots and the gradient
// vector follow this layout.
std::vector<Matrix*> collect_parameters(TrainedExperts& sys) {
  std::vector<Matrix*> params;
  for (auto& e : sys.roster.experts) {
    for (auto& w : e.encoder.weights) params.push_back(&w);
    params.push_back(&e.head.w);
    params.push_back(&e.head.b);
  }
  params.push_back(&sys.critic.w);
  params.push_back(&sys.critic.b);
  for (auto& f : sys.fused) {
    params.push_back(&f.learner.w1);
    params.push_back(&f.learner.w2);
  }
  return params;
}

struct Stage1Eval {
  Scalar loss = 0.0;
  std::vector<Matrix> grads;  // aligned with collect_parameters
};

Stage1Eval stage1_evaluate(TrainedExperts& sys, const LabelSet& labels,
                           const IndexList& train_idx, const StageOneConfig& cfg,
                           bool want_grads) {
  const int k = sys.roster.k();
  const int v = sys.roster.num_low;
  const int num_pairs = static_cast<int>(sys.fused.size()) - (cfg.high_level_experts ? 1 : 0);

  std::vector<FusedCache> fcaches(sys.fused.size());
  for (std::size_t f = 0; f < sys.fused.size(); ++f) {
    fcaches[f] = fused_forward(sys.fused[f]);
    sys.fused[f].refined.adjacency_norm = fused_adjacency_from_cache(fcaches[f]);
    sys.graphs[static_cast<std::size_t>(v) + f].adjacency_norm =
        sys.fused[f].refined.adjacency_norm;
  }

  std::vector<GcnCache> caches(static_cast<std::size_t>(k));
  std::vector<Matrix> z(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e)
    z[static_cast<std::size_t>(e)] =
        gcn_forward(sys.graphs[static_cast<std::size_t>(e)].adjacency_norm,
                    sys.features[static_cast<std::size_t>(e)],
                    sys.roster.experts[static_cast<std::size_t>(e)].encoder,
                    &caches[static_cast<std::size_t>(e)]);

  Stage1Eval out;
  std::vector<Matrix> d_z(static_cast<std::size_t>(k));
  std::vector<Matrix> d_head_w(static_cast<std::size_t>(k)), d_head_b(static_cast<std::size_t>(k));
  Matrix d_critic_w, d_critic_b;
  if (want_grads) {
    for (int e = 0; e < k; ++e) {
      d_z[static_cast<std::size_t>(e)] =
          Matrix::Zero(z[static_cast<std::size_t>(e)].rows(), z[static_cast<std::size_t>(e)].cols());
      d_head_w[static_cast<std::size_t>(e)] = Matrix::Zero(
          sys.roster.experts[static_cast<std::size_t>(e)].head.w.rows(),
          sys.roster.experts[static_cast<std::size_t>(e)].head.w.cols());
      d_head_b[static_cast<std::size_t>(e)] =
          Matrix::Zero(1, sys.roster.experts[static_cast<std::size_t>(e)].head.b.cols());
    }
    d_critic_w = Matrix::Zero(sys.critic.w.rows(), sys.critic.w.cols());
    d_critic_b = Matrix::Zero(1, sys.critic.w.cols());
  }

  auto add_ce = [&](int e) {
    const auto& expert = sys.roster.experts[static_cast<std::size_t>(e)];
    const Matrix probs = classify(z[static_cast<std::size_t>(e)], expert.head);
    const CrossEntropyResult ce = cross_entropy(probs, labels.labels, train_idx);
    out.loss += ce.loss;
    if (!want_grads) return;
    const HeadGrads hg = head_backward(z[static_cast<std::size_t>(e)], expert.head, ce.d_logits);
    d_head_w[static_cast<std::size_t>(e)] += hg.w;
    d_head_b[static_cast<std::size_t>(e)] += hg.b;
    d_z[static_cast<std::size_t>(e)] += hg.embeddings;
  };
  for (int e = 0; e < v; ++e) add_ce(e);
  if (cfg.high_level_experts && cfg.high_head_ce)
    for (int e = v; e < k; ++e) add_ce(e);

  if (cfg.enable_mi) {
    const MiBatch batch = MiBatch::full(z[0].rows());
    auto add_mi = [&](int a, int b) {
      const InfoNceResult r =
          info_nce(z[static_cast<std::size_t>(a)], z[static_cast<std::size_t>(b)], sys.critic,
                   batch, want_grads);
      out.loss -= r.value;
      if (!want_grads) return;
      d_z[static_cast<std::size_t>(a)] -= r.d_za;
      d_z[static_cast<std::size_t>(b)] -= r.d_zb;
      d_critic_w -= r.d_w;
      d_critic_b -= r.d_b;
    };
    for (int i = 0; i < v; ++i)
      for (int j = i + 1; j < v; ++j) add_mi(i, j);
    if (cfg.high_level_experts) {
      const int tot = k - 1;
      for (int i = 0; i < v; ++i) add_mi(i, tot);
      for (int p = 0; p < num_pairs; ++p) {
        const auto& members = sys.fused[static_cast<std::size_t>(p)].members;
        add_mi(members[0], v + p);
        add_mi(members[1], v + p);
      }
    }
  }

  if (!want_grads) return out;

  out.grads.clear();
  std::vector<Matrix> d_fused_w1(sys.fused.size()), d_fused_w2(sys.fused.size());
  for (std::size_t f = 0; f < sys.fused.size(); ++f) {
    d_fused_w1[f] = Matrix::Zero(sys.fused[f].learner.w1.rows(), sys.fused[f].learner.w1.cols());
    d_fused_w2[f] = Matrix::Zero(sys.fused[f].learner.w2.rows(), sys.fused[f].learner.w2.cols());
  }

  std::vector<std::vector<Matrix>> d_enc(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e) {
    const bool is_high = e >= v;
    const GcnGrads gg = gcn_backward(sys.graphs[static_cast<std::size_t>(e)].adjacency_norm,
                                     sys.roster.experts[static_cast<std::size_t>(e)].encoder,
                                     caches[static_cast<std::size_t>(e)],
                                     d_z[static_cast<std::size_t>(e)], is_high);
    d_enc[static_cast<std::size_t>(e)] = gg.weights;
    if (is_high) {
      const std::size_t f = static_cast<std::size_t>(e - v);
      fused_backward(sys.fused[f], fcaches[f], gg.adjacency, &d_fused_w1[f], &d_fused_w2[f]);
    }
  }

  for (int e = 0; e < k; ++e) {
    for (auto& g : d_enc[static_cast<std::size_t>(e)]) out.grads.push_back(std::move(g));
    out.grads.push_back(std::move(d_head_w[static_cast<std::size_t>(e)]));
    out.grads.push_back(std::move(d_head_b[static_cast<std::size_t>(e)]));
  }
  out.grads.push_back(std::move(d_critic_w));
  out.grads.push_back(std::move(d_critic_b));
  for (std::size_t f = 0; f < sys.fused.size(); ++f) {
    out.grads.push_back(std::move(d_fused_w1[f]));
    out.grads.push_back(std::move(d_fused_w2[f]));
  }
  return out;
}

}  // namespace

Scalar stage1_objective(TrainedExperts& system, const LabelSet& labels,
                        const IndexList& train_idx, const StageOneConfig& config,
                        std::vector<Matrix>* grads) {
  Stage1Eval eval = stage1_evaluate(system, labels, train_idx, config, grads != nullptr);
  if (grads) *grads = std::move(eval.grads);
  return eval.loss;
}

std::vector<Matrix*> stage1_parameters(TrainedExperts& system) {
  return collect_parameters(system);
}

TrainedExperts train_experts(const std::vector<RefinedLayer>& refined,
                             const std::vector<Matrix>& layer_features,
                             const LabelSet& labels, const NodeSplit& split,
                             const StageOneConfig& cfg) {
  const int v = static_cast<int>(refined.size());
  if (v < 1) throw ValidationError("train_experts: at least one layer required");
  if (split.train.empty()) throw ValidationError("train_experts: empty training split");
  if (layer_features.size() != refined.size())
    throw ValidationError("train_experts: one feature matrix per layer required");
  const int c = labels.num_classes;

  TrainedExperts sys;
  sys.roster.num_low = v;

  for (int i = 0; i < v; ++i) {
    Expert e;
    e.id = "low:" + refined[static_cast<std::size_t>(i)].source;
    e.level = ExpertLevel::Low;
    e.knowledge = refined[static_cast<std::size_t>(i)].source;
    e.encoder = EncoderParams::init(static_cast<int>(layer_features[static_cast<std::size_t>(i)].cols()),
                                    cfg.d_hidden, cfg.d_out, cfg.gcn_depth,
                                    cfg.seed + static_cast<std::uint64_t>(i));
    e.head = ClassifierHead::zeros(cfg.d_out, c);
    sys.roster.experts.push_back(std::move(e));
    sys.graphs.push_back(refined[static_cast<std::size_t>(i)]);
    sys.features.push_back(layer_features[static_cast<std::size_t>(i)]);
  }

  sys.critic = CriticParams::init(cfg.d_out, cfg.seed + 101, cfg.tau);

  if (cfg.high_level_experts) {
    // Initial embeddings for the fused-graph construction.
    std::vector<Matrix> z0(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i)
      z0[static_cast<std::size_t>(i)] =
          gcn_forward(sys.graphs[static_cast<std::size_t>(i)].adjacency_norm,
                      sys.features[static_cast<std::size_t>(i)],
                      sys.roster.experts[static_cast<std::size_t>(i)].encoder);

    auto add_fused = [&](const std::vector<int>& members, const std::string& name,
                         const std::string& id, std::uint64_t stream) {
      std::vector<const Matrix*> parts;
      std::vector<const Matrix*> feature_parts;
      for (int m : members) {
        parts.push_back(&z0[static_cast<std::size_t>(m)]);
        feature_parts.push_back(&layer_features[static_cast<std::size_t>(m)]);
      }
      FusionLearner learner;
      learner.k = cfg.fused_k;
      FusedGraph fused = build_fused_graph(parts, std::move(learner), cfg.knn);
      fused.members = members;
      fused.features = concat_cols(feature_parts);
      fused.name = name;
      fused.refined.source = name;

      Expert e;
      e.id = id;
      e.level = ExpertLevel::High;
      e.knowledge = name;
      e.encoder = EncoderParams::init(static_cast<int>(fused.features.cols()), cfg.d_hidden,
                                      cfg.d_out, cfg.gcn_depth, cfg.seed + stream);
      e.head = ClassifierHead::zeros(cfg.d_out, c);
      sys.roster.experts.push_back(std::move(e));
      sys.graphs.push_back(fused.refined);
      sys.features.push_back(fused.features);
      sys.fused.push_back(std::move(fused));
    };

    std::uint64_t stream = 200;
    for (int i = 0; i < v; ++i)
      for (int j = i + 1; j < v; ++j)
        add_fused({i, j},
                  "fused:" + refined[static_cast<std::size_t>(i)].source + "&" +
                      refined[static_cast<std::size_t>(j)].source,
                  "pair:" + std::to_string(i + 1) + "&" + std::to_string(j + 1), stream++);
    std::vector<int> all(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) all[static_cast<std::size_t>(i)] = i;
    add_fused(all, "fused:tot", "high:tot", stream);
  }

  const auto params = collect_parameters(sys);
  AdamOptimizer adam(cfg.lr);
  const int refresh_stop = static_cast<int>(cfg.refresh_until_frac * cfg.epochs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.high_level_experts && epoch > 0 && epoch < refresh_stop &&
        cfg.refresh_every > 0 && epoch % cfg.refresh_every == 0) {
      std::vector<Matrix> z(static_cast<std::size_t>(v));
      for (int i = 0; i < v; ++i)
        z[static_cast<std::size_t>(i)] =
            gcn_forward(sys.graphs[static_cast<std::size_t>(i)].adjacency_norm,
                        sys.features[static_cast<std::size_t>(i)],
                        sys.roster.experts[static_cast<std::size_t>(i)].encoder);
      for (auto& fused : sys.fused) {
        std::vector<const Matrix*> parts;
        for (int m : fused.members) parts.push_back(&z[static_cast<std::size_t>(m)]);
        refresh_fused_graph(fused, parts, cfg.knn);
        sys.graphs[static_cast<std::size_t>(v) + (&fused - sys.fused.data())].adjacency_norm =
            fused.refined.adjacency_norm;
      }
    }

    Stage1Eval eval = stage1_evaluate(sys, labels, split.train, cfg, true);
    if (!std::isfinite(eval.loss))
      throw DivergenceError("train_experts: non-finite loss at epoch " + std::to_string(epoch) +
                            " (last finite loss " +
                            std::to_string(sys.loss_trace.empty() ? 0.0 : sys.loss_trace.back()) +
                            ")");
    sys.loss_trace.push_back(eval.loss);
    adam.step(params, eval.grads);
  }

  // Final graph values under the updated learner weights.
  for (std::size_t f = 0; f < sys.fused.size(); ++f) {
    recompute_fused_values(sys.fused[f]);
    sys.graphs[static_cast<std::size_t>(v) + f].adjacency_norm =
        sys.fused[f].refined.adjacency_norm;
  }
  for (auto& e : sys.roster.experts) e.trained = true;
  return sys;
}

OpinionBatch expert_opinions(const TrainedExperts& sys, const IndexList& node_indices,
                             const LabelSet& labels) {
  const int k = sys.roster.k();
  const int c = labels.num_classes;
  for (const auto& e : sys.roster.experts)
    if (!e.trained) throw ValidationError("expert_opinions: untrained expert '" + e.id + "'");

  OpinionBatch batch;
  batch.num_classes = c;
  batch.num_experts = k;
  batch.node_ids = node_indices;
  batch.g.resize(static_cast<Eigen::Index>(node_indices.size()),
                 static_cast<Eigen::Index>(k) * c);
  batch.labels.resize(node_indices.size());

  for (int e = 0; e < k; ++e) {
    const Matrix z = gcn_forward(sys.graphs[static_cast<std::size_t>(e)].adjacency_norm,
                                 sys.features[static_cast<std::size_t>(e)],
                                 sys.roster.experts[static_cast<std::size_t>(e)].encoder);
    const Matrix probs = classify(z, sys.roster.experts[static_cast<std::size_t>(e)].head);
    for (std::size_t t = 0; t < node_indices.size(); ++t)
      batch.g.row(static_cast<Eigen::Index>(t))
          .segment(static_cast<Eigen::Index>(e) * c, c) = probs.row(node_indices[t]);
  }
  for (std::size_t t = 0; t < node_indices.size(); ++t)
    batch.labels[t] = labels.labels[static_cast<std::size_t>(node_indices[t])];
  return batch;
}

Expert train_single_expert(const RefinedLayer& graph, const Matrix& features,
                           const LabelSet& labels, const IndexList& train_idx,
                           const StageOneConfig& cfg, const std::string& id) {
  if (train_idx.empty()) throw ValidationError("train_single_expert: empty training split");
  Expert e;
  e.id = id;
  e.level = ExpertLevel::Low;
  e.knowledge = graph.source;
  e.encoder = EncoderParams::init(static_cast<int>(features.cols()), cfg.d_hidden, cfg.d_out,
                                  cfg.gcn_depth, cfg.seed + fnv1a(id));
  e.head = ClassifierHead::zeros(cfg.d_out, labels.num_classes);

  std::vector<Matrix*> params;
  for (auto& w : e.encoder.weights) params.push_back(&w);
  params.push_back(&e.head.w);
  params.push_back(&e.head.b);
  AdamOptimizer adam(cfg.lr);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    GcnCache cache;
    const Matrix z = gcn_forward(graph.adjacency_norm, features, e.encoder, &cache);
    const Matrix probs = classify(z, e.head);
    const CrossEntropyResult ce = cross_entropy(probs, labels.labels, train_idx);
    if (!std::isfinite(ce.loss))
      throw DivergenceError("train_single_expert: non-finite loss at epoch " +
                            std::to_string(epoch));
    const HeadGrads hg = head_backward(z, e.head, ce.d_logits);
    const GcnGrads gg = gcn_backward(graph.adjacency_norm, e.encoder, cache, hg.embeddings);
    std::vector<Matrix> grads;
    for (const auto& g : gg.weights) grads.push_back(g);
    grads.push_back(hg.w);
    grads.push_back(hg.b);
    adam.step(params, grads);
  }
  e.trained = true;
  return e;
}

Scalar expert_accuracy(const Expert& expert, const RefinedLayer& graph, const Matrix& features,
                       const LabelSet& labels, const IndexList& eval_idx) {
  if (eval_idx.empty()) throw ValidationError("expert_accuracy: empty index set");
  const Matrix z = gcn_forward(graph.adjacency_norm, features, expert.encoder);
  const Matrix probs = classify(z, expert.head);
  int correct = 0;
  for (int i : eval_idx)
    if (argmax_lowest(probs.row(i).transpose()) == labels.labels[static_cast<std::size_t>(i)])
      ++correct;
  return static_cast<Scalar>(correct) / static_cast<Scalar>(eval_idx.size());
}

void save_roster(const std::string& dir, const TrainedExperts& sys) {
  fs::create_directories(dir);
  json meta;
  meta["k"] = sys.roster.k();
  meta["num_low"] = sys.roster.num_low;
  json list = json::array();
  for (const auto& e : sys.roster.experts) {
    json je;
    je["id"] = e.id;
    je["level"] = e.level == ExpertLevel::Low ? "low" : "high";
    je["knowledge"] = e.knowledge;
    je["dir"] = sanitize(e.id);
    list.push_back(je);

    ParamMap pm;
    for (std::size_t l = 0; l < e.encoder.weights.size(); ++l)
      pm["encoder." + std::to_string(l)] = e.encoder.weights[l];
    pm["head.w"] = e.head.w;
    pm["head.b"] = e.head.b;
    fs::create_directories(fs::path(dir) / sanitize(e.id));
    save_params((fs::path(dir) / sanitize(e.id) / "params.json").string(), pm);
  }
  meta["experts"] = list;
  std::ofstream(fs::path(dir) / "roster.json") << meta.dump(2) << "\n";

  ParamMap shared;
  shared["critic.w"] = sys.critic.w;
  shared["critic.b"] = sys.critic.b;
  for (const auto& f : sys.fused) {
    shared["fusion." + sanitize(f.name) + ".w1"] = f.learner.w1;
    shared["fusion." + sanitize(f.name) + ".w2"] = f.learner.w2;
  }
  save_params((fs::path(dir) / "shared.params.json").string(), shared);
}

RosterCheckpoint load_roster(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "roster.json");
  if (!in) throw ValidationError(dir + "/roster.json: missing file");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(dir + "/roster.json: " + std::string(e.what()));
  }
  RosterCheckpoint out;
  for (const auto& je : meta.at("experts")) {
    out.ids.push_back(je.at("id").get<std::string>());
    out.levels.push_back(je.at("level").get<std::string>() == "low" ? ExpertLevel::Low
                                                                    : ExpertLevel::High);
    out.knowledges.push_back(je.at("knowledge").get<std::string>());
    out.params.push_back(
        load_params((fs::path(dir) / je.at("dir").get<std::string>() / "params.json").string()));
  }
  return out;
}

}  // namespace coe
