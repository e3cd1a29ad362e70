#include "coe/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coe {

EncoderParams EncoderParams::init(int d_in, int d_hidden, int d_out, int depth,
                                  std::uint64_t seed) {
  if (depth < 1) throw ValidationError("encoder: depth must be >= 1");
  auto rng = make_rng(seed, 3);
  EncoderParams params;
  int prev = d_in;
  for (int l = 0; l < depth; ++l) {
    const int next = (l == depth - 1) ? d_out : d_hidden;
    params.weights.push_back(glorot_uniform(prev, next, rng));
    prev = next;
  }
  return params;
}

Matrix gcn_forward(const Matrix& adjacency, const Matrix& features,
                   const EncoderParams& params, GcnCache* cache) {
  if (adjacency.rows() != features.rows())
    throw ValidationError("gcn_forward: adjacency and features disagree on N");
  Matrix z = features;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (const Matrix& w : params.weights) {
    if (z.cols() != w.rows()) throw ValidationError("gcn_forward: weight shape mismatch");
    if (cache) cache->inputs.push_back(z);
    Matrix pre = adjacency * (z * w);
    if (cache) cache->pre.push_back(pre);
    z = relu(pre);
  }
  return z;
}

GcnGrads gcn_backward(const Matrix& adjacency, const EncoderParams& params,
                      const GcnCache& cache, const Matrix& d_output,
                      bool want_adjacency) {
  const int depth = static_cast<int>(params.weights.size());
  GcnGrads grads;
  grads.weights.resize(static_cast<std::size_t>(depth));
  if (want_adjacency) grads.adjacency = Matrix::Zero(adjacency.rows(), adjacency.cols());

  Matrix g = d_output;
  for (int l = depth - 1; l >= 0; --l) {
    const Matrix gpre = g.cwiseProduct(relu_grad(cache.pre[static_cast<std::size_t>(l)]));
    const Matrix zw = cache.inputs[static_cast<std::size_t>(l)] * params.weights[static_cast<std::size_t>(l)];
    grads.weights[static_cast<std::size_t>(l)] =
        (adjacency * cache.inputs[static_cast<std::size_t>(l)]).transpose() * gpre;
    if (want_adjacency) grads.adjacency.noalias() += gpre * zw.transpose();
    if (l > 0)
      g = (adjacency.transpose() * gpre) * params.weights[static_cast<std::size_t>(l)].transpose();
  }
  return grads;
}

Matrix classify(const Matrix& embeddings, const ClassifierHead& head) {
  if (embeddings.cols() != head.w.rows())
    throw ValidationError("classify: head shape mismatch");
  Matrix logits = embeddings * head.w;
  logits.rowwise() += head.b.row(0);
  return softmax_rows(logits);
}

CrossEntropyResult cross_entropy(const Matrix& probabilities, const std::vector<int>& labels,
                                 const IndexList& indices) {
  if (indices.empty()) throw ValidationError("cross_entropy: empty index set");
  CrossEntropyResult out;
  out.d_logits = Matrix::Zero(probabilities.rows(), probabilities.cols());
  const Scalar inv = 1.0 / static_cast<Scalar>(indices.size());
  for (int i : indices) {
    const int y = labels[static_cast<std::size_t>(i)];
    out.loss -= std::log(probabilities(i, y));
    out.d_logits.row(i) = probabilities.row(i) * inv;
    out.d_logits(i, y) -= inv;
  }
  out.loss *= inv;
  return out;
}

HeadGrads head_backward(const Matrix& embeddings, const ClassifierHead& head,
                        const Matrix& d_logits) {
  HeadGrads grads;
  grads.w = embeddings.transpose() * d_logits;
  grads.b = d_logits.colwise().sum();
  grads.embeddings = d_logits * head.w.transpose();
  return grads;
}

FiniteDiffReport finite_diff_check(const std::function<Scalar(const Vector&)>& loss,
                                   const Vector& params, const Vector& analytic_grad,
                                   Scalar step, Scalar tolerance, int max_coords,
                                   std::uint64_t seed) {
  if (params.size() != analytic_grad.size())
    throw ValidationError("finite_diff_check: gradient size mismatch");
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(params.size()));
  std::iota(coords.begin(), coords.end(), 0);
  if (static_cast<int>(coords.size()) > max_coords) {
    auto rng = make_rng(seed, 11);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(max_coords));
  }

  FiniteDiffReport report;
  Vector perturbed = params;
  for (Eigen::Index c : coords) {
    perturbed[c] = params[c] + step;
    const Scalar up = loss(perturbed);
    perturbed[c] = params[c] - step;
    const Scalar down = loss(perturbed);
    perturbed[c] = params[c];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw ValidationError("finite_diff_check: non-finite loss at perturbed point");
    const Scalar fd = (up - down) / (2.0 * step);
    const Scalar a = analytic_grad[c];
    const Scalar denom = std::max(std::abs(a), std::abs(fd));
    const Scalar err = denom < 1e-6 ? std::abs(a - fd) : std::abs(a - fd) / denom;
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.coords_checked;
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace coe
