#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace coe {

using Scalar = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<int>;

// Invalid input, file, or configuration. The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss during optimization. The CLI maps this to exit code 3.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// One generator per (seed, stream) pair so independent stages never share state.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{seed, stream, std::uint64_t{0x9e3779b97f4a7c15ULL}};
  return std::mt19937_64(seq);
}

template <typename Derived>
Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Row-wise softmax with max subtraction.
template <typename Derived>
Matrix softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& logits) {
  const Scalar m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

// Derivative of relu evaluated at the pre-activation (0 at the kink).
template <typename Derived>
Matrix relu_grad(const Eigen::MatrixBase<Derived>& pre) {
  return (pre.array() > 0).template cast<Scalar>();
}

inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const Scalar limit = std::sqrt(6.0 / static_cast<Scalar>(rows + cols));
  std::uniform_real_distribution<Scalar> dist(-limit, limit);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = dist(rng);
  return w;
}

inline int argmax_lowest(const Vector& v) {
  int best = 0;
  for (int j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

// Flat view over a group of matrices, used by the finite-difference harness
// and the optimizers.
class ParamPack {
 public:
  void add(Matrix* m) { mats_.push_back(m); }
  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (auto* m : mats_) n += m->size();
    return n;
  }
  Vector to_vector() const {
    Vector v(size());
    Eigen::Index off = 0;
    for (auto* m : mats_) {
      v.segment(off, m->size()) = Eigen::Map<const Vector>(m->data(), m->size());
      off += m->size();
    }
    return v;
  }
  void from_vector(const Vector& v) {
    Eigen::Index off = 0;
    for (auto* m : mats_) {
      Eigen::Map<Vector>(m->data(), m->size()) = v.segment(off, m->size());
      off += m->size();
    }
  }
  const std::vector<Matrix*>& matrices() const { return mats_; }

 private:
  std::vector<Matrix*> mats_;
};

// Adam with bias correction; one slot per registered matrix.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(Scalar lr, Scalar beta1 = 0.9, Scalar beta2 = 0.999,
                         Scalar eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(Matrix::Zero(p->rows(), p->cols()));
        v_.emplace_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const Scalar bc1 = 1.0 - std::pow(beta1_, t_);
    const Scalar bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      params[i]->noalias() -=
          (lr_ * (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + eps_)).matrix();
    }
  }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Matrix> m_, v_;
};

// FNV-1a over bytes; used for config hashes and seed derivation.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace coe
