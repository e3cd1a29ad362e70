#include "coe/margin.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace coe {

using nlohmann::json;

ConfidenceTensor ConfidenceTensor::mean_init(int num_classes, int num_experts,
                                             Scalar norm_cap) {
  ConfidenceTensor ct;
  ct.theta = Matrix::Zero(num_classes, static_cast<Eigen::Index>(num_classes) * num_experts);
  for (int e = 0; e < num_experts; ++e)
    for (int r = 0; r < num_classes; ++r)
      ct.theta(r, static_cast<Eigen::Index>(e) * num_classes + r) =
          1.0 / static_cast<Scalar>(num_experts);
  ct.norm_cap = norm_cap;
  return ct;
}

FusedPrediction fuse_predict(const Matrix& theta, const Vector& opinion) {
  if (theta.cols() != opinion.size())
    throw ValidationError("fuse_predict: theta width must match opinion length");
  FusedPrediction out;
  out.probabilities = softmax(theta * opinion);
  out.label = argmax_lowest(out.probabilities);
  return out;
}

Scalar smooth_max2(const Vector& probabilities, int true_class, Scalar alpha) {
  Vector masked = probabilities;
  masked[true_class] = 0.0;
  const Scalar m = masked.maxCoeff();
  return m + std::log((alpha * (masked.array() - m)).exp().sum()) / alpha;
}

Scalar collaboration_node_loss(const Vector& fused, int true_class, Scalar alpha,
                               Scalar lambda) {
  const Scalar p_true = fused[true_class];
  return -std::log(p_true) - lambda * (p_true - smooth_max2(fused, true_class, alpha));
}

namespace {

struct NodeEval {
  Vector p;        // softmax(theta * g)
  Scalar log_p_true;
  Scalar sm2;
  Vector omega;    // d(sm2)/d(masked), softmax of alpha*masked (true entry kept)
};

NodeEval eval_node(const Matrix& theta, const Vector& g, int y, Scalar alpha) {
  NodeEval ev;
  const Vector u = theta * g;
  const Scalar m = u.maxCoeff();
  const Vector shifted = (u.array() - m).exp();
  const Scalar z = shifted.sum();
  ev.p = shifted / z;
  ev.log_p_true = u[y] - m - std::log(z);

  Vector masked = ev.p;
  masked[y] = 0.0;
  const Scalar mm = masked.maxCoeff();
  const Vector e = (alpha * (masked.array() - mm)).exp();
  const Scalar es = e.sum();
  ev.sm2 = mm + std::log(es) / alpha;
  ev.omega = e / es;
  return ev;
}

}  // namespace

Scalar margin_loss(const Matrix& theta, const OpinionBatch& opinions, Scalar alpha) {
  Scalar total = 0.0;
  for (Eigen::Index i = 0; i < opinions.size(); ++i) {
    const int y = opinions.labels[static_cast<std::size_t>(i)];
    const NodeEval ev = eval_node(theta, opinions.g.row(i).transpose(), y, alpha);
    total += ev.p[y] - ev.sm2;
  }
  return total;
}

Scalar correctness_loss(const Matrix& theta, const OpinionBatch& opinions) {
  Scalar total = 0.0;
  for (Eigen::Index i = 0; i < opinions.size(); ++i) {
    const int y = opinions.labels[static_cast<std::size_t>(i)];
    const NodeEval ev = eval_node(theta, opinions.g.row(i).transpose(), y, 1.0);
    total -= ev.log_p_true;
  }
  return total;
}

Scalar collaboration_loss(const Matrix& theta, const OpinionBatch& opinions, Scalar alpha,
                          Scalar lambda) {
  Scalar total = 0.0;
  for (Eigen::Index i = 0; i < opinions.size(); ++i) {
    const int y = opinions.labels[static_cast<std::size_t>(i)];
    const NodeEval ev = eval_node(theta, opinions.g.row(i).transpose(), y, alpha);
    total += -ev.log_p_true - lambda * (ev.p[y] - ev.sm2);
  }
  return total;
}

Matrix theta_gradient(const Matrix& theta, const OpinionBatch& opinions, Scalar alpha,
                      Scalar lambda) {
  Matrix grad = Matrix::Zero(theta.rows(), theta.cols());
  const int c = opinions.num_classes;
  for (Eigen::Index i = 0; i < opinions.size(); ++i) {
    const int y = opinions.labels[static_cast<std::size_t>(i)];
    const Vector g = opinions.g.row(i).transpose();
    const NodeEval ev = eval_node(theta, g, y, alpha);

    // d/du of -log p_y.
    Vector du = ev.p;
    du[y] -= 1.0;

    if (lambda != 0.0) {
      // d/du of -lambda * p_y: -lambda * p_y * (e_y - p).
      Vector dpy = -ev.p * ev.p[y];
      dpy[y] += ev.p[y];
      du -= lambda * dpy;

      // d/du of +lambda * sm2; the true-class column of omega carries no
      // dependence on p, so it is excluded from the sum.
      Vector w = ev.omega;
      w[y] = 0.0;
      const Scalar wp = w.dot(ev.p);
      du += lambda * (w.cwiseProduct(ev.p) - wp * ev.p);
    }
    if (!du.allFinite())
      throw ValidationError(
          "theta_gradient: non-finite intermediate for node " + std::to_string(i) +
          "; use the log-stabilized path (smaller alpha or rescaled opinions)");
    for (int r = 0; r < c; ++r) grad.row(r) += du[r] * g.transpose();
  }
  return grad;
}

ConfidenceTensor optimize_theta(const OpinionBatch& opinions, const MarginConfig& config,
                                ThetaTrace* trace) {
  opinions.validate();
  ConfidenceTensor ct =
      ConfidenceTensor::mean_init(opinions.num_classes, opinions.num_experts, config.norm_cap);
  if (trace) {
    trace->loss.clear();
    trace->grad_sq_norm.clear();
    trace->lr = config.lr;
    trace->iterations = config.iterations;
  }
  AdamOptimizer adam(config.lr);
  for (int t = 0; t < config.iterations; ++t) {
    const Scalar loss = collaboration_loss(ct.theta, opinions, config.alpha, config.lambda);
    if (!std::isfinite(loss))
      throw DivergenceError("optimize_theta: non-finite loss at iteration " + std::to_string(t));
    const Matrix grad = theta_gradient(ct.theta, opinions, config.alpha, config.lambda);
    if (trace) {
      trace->loss.push_back(loss);
      trace->grad_sq_norm.push_back(grad.squaredNorm());
    }
    if (config.optimizer == MarginConfig::PlainGd) {
      ct.theta -= config.lr * grad;
    } else {
      std::vector<Matrix*> params{&ct.theta};
      std::vector<Matrix> grads{grad};
      adam.step(params, grads);
    }
    if (ct.norm_cap > 0.0) {
      const Scalar norm = ct.theta.norm();
      if (norm > ct.norm_cap) ct.theta *= ct.norm_cap / norm;
    }
  }
  return ct;
}

std::vector<int> fuse_predict_all(const Matrix& theta, const OpinionBatch& opinions) {
  std::vector<int> out(static_cast<std::size_t>(opinions.size()));
  for (Eigen::Index i = 0; i < opinions.size(); ++i)
    out[static_cast<std::size_t>(i)] = fuse_predict(theta, opinions.g.row(i).transpose()).label;
  return out;
}

namespace {

std::vector<int> vote_impl(const OpinionBatch& opinions, const Vector* weights) {
  const int c = opinions.num_classes;
  std::vector<int> out(static_cast<std::size_t>(opinions.size()));
  for (Eigen::Index i = 0; i < opinions.size(); ++i) {
    Vector tally = Vector::Zero(c);
    for (int e = 0; e < opinions.num_experts; ++e) {
      const Vector block =
          opinions.g.row(i).segment(static_cast<Eigen::Index>(e) * c, c).transpose();
      tally[argmax_lowest(block)] += weights ? (*weights)[e] : 1.0;
    }
    out[static_cast<std::size_t>(i)] = argmax_lowest(tally);
  }
  return out;
}

}  // namespace

std::vector<int> vote_rf(const OpinionBatch& opinions) { return vote_impl(opinions, nullptr); }

std::vector<int> vote_wrf(const OpinionBatch& opinions, const Vector& expert_weights) {
  if (expert_weights.size() != opinions.num_experts)
    throw ValidationError("vote_wrf: one weight per expert required");
  if ((expert_weights.array() < 0.0).any() || expert_weights.sum() <= 0.0)
    throw ValidationError("vote_wrf: weights must be nonnegative and not all zero");
  return vote_impl(opinions, &expert_weights);
}

void save_theta(const std::string& path, const ConfidenceTensor& ct) {
  json j;
  j["shape"] = {ct.theta.rows(), ct.theta.cols()};
  std::vector<Scalar> values;
  values.reserve(static_cast<std::size_t>(ct.theta.size()));
  for (Eigen::Index i = 0; i < ct.theta.rows(); ++i)
    for (Eigen::Index k = 0; k < ct.theta.cols(); ++k) values.push_back(ct.theta(i, k));
  j["values"] = values;
  if (ct.norm_cap > 0.0) j["norm_cap"] = ct.norm_cap;
  std::ofstream out(path);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

ConfidenceTensor load_theta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": missing file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  ConfidenceTensor ct;
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto values = j.at("values").get<std::vector<Scalar>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(values.size()) != shape[0] * shape[1])
    throw ValidationError(path + ": shape/value mismatch");
  ct.theta.resize(shape[0], shape[1]);
  std::size_t t = 0;
  for (Eigen::Index i = 0; i < shape[0]; ++i)
    for (Eigen::Index k = 0; k < shape[1]; ++k) ct.theta(i, k) = values[t++];
  if (j.contains("norm_cap")) ct.norm_cap = j["norm_cap"].get<Scalar>();
  return ct;
}

void save_predictions(const std::string& path, const std::vector<int>& node_ids,
                      const std::vector<int>& predicted, const std::vector<int>& truth) {
  std::ofstream out(path);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  for (std::size_t i = 0; i < predicted.size(); ++i)
    out << node_ids[i] << "\t" << predicted[i] << "\t" << truth[i] << "\n";
}

}  // namespace coe
