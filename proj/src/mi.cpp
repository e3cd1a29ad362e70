#include "coe/mi.hpp"

#include <cmath>

namespace coe {

CriticParams CriticParams::init(int d, std::uint64_t seed, Scalar tau) {
  auto rng = make_rng(seed, 5);
  CriticParams critic;
  critic.w = glorot_uniform(d, d, rng);
  // Nonzero bias keeps all-zero embedding rows away from the zero-norm
  // projection error.
  critic.b = Matrix::Constant(1, d, 0.1);
  critic.tau = tau;
  return critic;
}

namespace {

struct Projection {
  Matrix pre;   // rows x d_p, pre-activation (empty for identity)
  Matrix post;  // projected rows
  Matrix unit;  // row-normalized post
  Vector norms;
};

Projection project_rows(const Matrix& z, const CriticParams& critic, const IndexList& idx) {
  Projection out;
  const Eigen::Index b = static_cast<Eigen::Index>(idx.size());
  Matrix rows(b, z.cols());
  for (Eigen::Index t = 0; t < b; ++t) rows.row(t) = z.row(idx[static_cast<std::size_t>(t)]);
  if (critic.identity()) {
    out.post = rows;
  } else {
    out.pre = rows * critic.w;
    out.pre.rowwise() += critic.b.row(0);
    out.post = out.pre.array().tanh();
  }
  out.norms.resize(b);
  out.unit.resize(b, out.post.cols());
  for (Eigen::Index t = 0; t < b; ++t) {
    out.norms[t] = out.post.row(t).norm();
    if (out.norms[t] == 0.0)
      throw ValidationError("critic: zero projected norm");
    out.unit.row(t) = out.post.row(t) / out.norms[t];
  }
  return out;
}

// d(loss)/d(post) -> d(loss)/d(rows of z) plus critic grads.
void backprop_projection(const Matrix& z, const CriticParams& critic, const IndexList& idx,
                         const Projection& proj, const Matrix& d_post, Matrix* d_z,
                         Matrix* d_w, Matrix* d_b) {
  if (critic.identity()) {
    for (std::size_t t = 0; t < idx.size(); ++t)
      d_z->row(idx[t]) += d_post.row(static_cast<Eigen::Index>(t));
    return;
  }
  const Matrix d_pre =
      d_post.cwiseProduct((1.0 - proj.post.array().square()).matrix());
  Matrix rows(static_cast<Eigen::Index>(idx.size()), z.cols());
  for (std::size_t t = 0; t < idx.size(); ++t) rows.row(static_cast<Eigen::Index>(t)) = z.row(idx[t]);
  d_w->noalias() += rows.transpose() * d_pre;
  d_b->noalias() += d_pre.colwise().sum();
  const Matrix d_rows = d_pre * critic.w.transpose();
  for (std::size_t t = 0; t < idx.size(); ++t)
    d_z->row(idx[t]) += d_rows.row(static_cast<Eigen::Index>(t));
}

// d(loss)/d(unit rows) -> d(loss)/d(post rows) through row normalization.
Matrix backprop_normalize(const Projection& proj, const Matrix& d_unit) {
  Matrix d_post(d_unit.rows(), d_unit.cols());
  for (Eigen::Index t = 0; t < d_unit.rows(); ++t) {
    const Scalar dot = d_unit.row(t).dot(proj.unit.row(t));
    d_post.row(t) = (d_unit.row(t) - dot * proj.unit.row(t)) / proj.norms[t];
  }
  return d_post;
}

}  // namespace

Scalar critic_score(const Vector& z_a, const Vector& z_b, const CriticParams& critic) {
  auto proj = [&](const Vector& z) -> Vector {
    if (critic.identity()) return z;
    Vector pre = critic.w.transpose() * z + critic.b.row(0).transpose();
    return pre.array().tanh();
  };
  const Vector pa = proj(z_a);
  const Vector pb = proj(z_b);
  const Scalar na = pa.norm(), nb = pb.norm();
  if (na == 0.0 || nb == 0.0) throw ValidationError("critic: zero projected norm");
  return pa.dot(pb) / (na * nb * critic.tau);
}

InfoNceResult info_nce(const Matrix& z_a, const Matrix& z_b, const CriticParams& critic,
                       const MiBatch& batch, bool want_grads) {
  const Eigen::Index b = static_cast<Eigen::Index>(batch.indices.size());
  if (b < 2) throw ValidationError("info_nce: batch size must be >= 2");
  for (int i : batch.indices)
    if (i < 0 || i >= z_a.rows() || i >= z_b.rows())
      throw ValidationError("info_nce: batch index out of range");

  const Projection pa = project_rows(z_a, critic, batch.indices);
  const Projection pb = project_rows(z_b, critic, batch.indices);
  const Matrix scores = (pa.unit * pb.unit.transpose()) / critic.tau;

  // Row direction anchors z_a, column direction anchors z_b.
  Matrix row_soft(b, b), col_soft(b, b);
  Scalar value = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Scalar lse_row = log_sum_exp(scores.row(i));
    const Scalar lse_col = log_sum_exp(scores.col(i));
    value += (scores(i, i) - lse_row) + (scores(i, i) - lse_col);
    row_soft.row(i) = (scores.row(i).array() - lse_row).exp();
    col_soft.col(i) = (scores.col(i).array() - lse_col).exp();
  }
  InfoNceResult out;
  out.value = value / (2.0 * static_cast<Scalar>(b));
  if (!want_grads) return out;

  // d(value)/d(scores): (1/2B) [(I - row_soft) + (I - col_soft)].
  Matrix d_scores = -(row_soft + col_soft);
  d_scores.diagonal().array() += 2.0;
  d_scores /= 2.0 * static_cast<Scalar>(b);

  const Matrix d_unit_a = (d_scores * pb.unit) / critic.tau;
  const Matrix d_unit_b = (d_scores.transpose() * pa.unit) / critic.tau;

  out.d_za = Matrix::Zero(z_a.rows(), z_a.cols());
  out.d_zb = Matrix::Zero(z_b.rows(), z_b.cols());
  if (!critic.identity()) {
    out.d_w = Matrix::Zero(critic.w.rows(), critic.w.cols());
    out.d_b = Matrix::Zero(1, critic.w.cols());
  }
  Matrix* dw = critic.identity() ? nullptr : &out.d_w;
  Matrix* db = critic.identity() ? nullptr : &out.d_b;
  backprop_projection(z_a, critic, batch.indices, pa, backprop_normalize(pa, d_unit_a),
                      &out.d_za, dw, db);
  backprop_projection(z_b, critic, batch.indices, pb, backprop_normalize(pb, d_unit_b),
                      &out.d_zb, dw, db);
  return out;
}

}  // namespace coe
