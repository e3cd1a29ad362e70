#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "coe/encoders.hpp"
#include "coe/refinery.hpp"

using namespace coe;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                     Scalar scale = 1.0) {
  auto rng = make_rng(seed, 1);
  std::normal_distribution<Scalar> gauss(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

// Pipeline loss: gcn -> head -> cross entropy, as a function of every
// parameter. Used both for the analytic gradient and the flattened closure.
struct Pipeline {
  Matrix adjacency;
  Matrix features;
  std::vector<int> labels;
  IndexList train;
  int depth;
  int d_hidden;
  int d_out;
  int num_classes;

  ParamPack pack(EncoderParams& enc, ClassifierHead& head) const {
    ParamPack p;
    for (auto& w : enc.weights) p.add(&w);
    p.add(&head.w);
    p.add(&head.b);
    return p;
  }

  Scalar loss(const EncoderParams& enc, const ClassifierHead& head) const {
    const Matrix z = gcn_forward(adjacency, features, enc);
    return cross_entropy(classify(z, head), labels, train).loss;
  }

  Vector analytic_grad(EncoderParams& enc, ClassifierHead& head) const {
    GcnCache cache;
    const Matrix z = gcn_forward(adjacency, features, enc, &cache);
    const Matrix probs = classify(z, head);
    const CrossEntropyResult ce = cross_entropy(probs, labels, train);
    const HeadGrads hg = head_backward(z, head, ce.d_logits);
    const GcnGrads gg = gcn_backward(adjacency, enc, cache, hg.embeddings);

    EncoderParams enc_grads;
    enc_grads.weights = gg.weights;
    ClassifierHead head_grads{hg.w, hg.b};
    ParamPack p;
    for (auto& w : enc_grads.weights) p.add(&w);
    p.add(&head_grads.w);
    p.add(&head_grads.b);
    return p.to_vector();
  }
};

Pipeline random_pipeline(std::uint64_t seed, int n = 6, int d_f = 4, int c = 3) {
  Pipeline p;
  p.adjacency = postprocess_adjacency(random_matrix(n, n, seed + 1)).adjacency_norm;
  p.features = random_matrix(n, d_f, seed + 2);
  p.depth = 2;
  p.d_hidden = 5;
  p.d_out = 4;
  p.num_classes = c;
  auto rng = make_rng(seed, 9);
  std::uniform_int_distribution<int> pick(0, c - 1);
  for (int i = 0; i < n; ++i) p.labels.push_back(pick(rng));
  for (int i = 0; i < n; i += 2) p.train.push_back(i);
  return p;
}

}  // namespace

TEST_CASE("identity graph with unit weights passes the input through") {
  EncoderParams enc;
  enc.weights = {Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  const Matrix z = gcn_forward(Matrix::Ones(1, 1), Matrix::Ones(1, 1), enc);
  CHECK(z(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("zero weights give a zero embedding") {
  EncoderParams enc;
  enc.weights = {Matrix::Zero(4, 5), Matrix::Zero(5, 3)};
  const Matrix a = postprocess_adjacency(random_matrix(4, 4, 3)).adjacency_norm;
  const Matrix z = gcn_forward(a, random_matrix(4, 4, 4), enc);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches a straight-line reimplementation") {
  const Matrix a = postprocess_adjacency(random_matrix(5, 5, 7)).adjacency_norm;
  const Matrix x = random_matrix(5, 3, 8);
  EncoderParams enc = EncoderParams::init(3, 6, 4, 2, 17);
  const Matrix oracle = relu(Matrix(a * relu(Matrix(a * x * enc.weights[0])) * enc.weights[1]));
  CHECK((gcn_forward(a, x, enc) - oracle).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("depth one on the identity graph is a dense layer") {
  const Matrix x = random_matrix(6, 4, 12);
  EncoderParams enc = EncoderParams::init(4, 0, 3, 1, 13);
  const Matrix oracle = relu(Matrix(x * enc.weights[0]));
  CHECK((gcn_forward(Matrix::Identity(6, 6), x, enc) - oracle).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("classify basics") {
  SUBCASE("zero head is uniform") {
    const Matrix probs = classify(random_matrix(4, 3, 2), ClassifierHead::zeros(3, 5));
    CHECK((probs.array() - 0.2).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("a huge bias saturates") {
    ClassifierHead head = ClassifierHead::zeros(3, 3);
    head.b(0, 0) = 1000.0;
    const Matrix probs = classify(random_matrix(2, 3, 3, 0.1), head);
    CHECK(probs(0, 0) == doctest::Approx(1.0));
    CHECK(probs(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("rows sum to one") {
    const Matrix probs =
        classify(random_matrix(10, 4, 5, 3.0), {random_matrix(4, 6, 6), random_matrix(1, 6, 7)});
    for (int i = 0; i < 10; ++i) CHECK(std::abs(probs.row(i).sum() - 1.0) < 1e-9);
    CHECK((probs.array() > 0.0).all());
  }
  SUBCASE("shift invariance") {
    const Matrix z = random_matrix(5, 4, 8);
    ClassifierHead head{random_matrix(4, 3, 9), random_matrix(1, 3, 10)};
    const Matrix base = classify(z, head);
    ClassifierHead shifted = head;
    shifted.b.array() += 7.5;
    CHECK((classify(z, shifted) - base).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cross entropy closed-form values") {
  SUBCASE("perfect one-hot prediction") {
    Matrix probs(2, 3);
    probs << 1, 0, 0, 0, 1, 0;
    const CrossEntropyResult ce = cross_entropy(probs, {0, 1}, {0, 1});
    CHECK(ce.loss == doctest::Approx(0.0));
  }
  SUBCASE("uniform prediction over three classes") {
    const Matrix probs = Matrix::Constant(4, 3, 1.0 / 3.0);
    const CrossEntropyResult ce = cross_entropy(probs, {0, 1, 2, 0}, {0, 1, 2, 3});
    CHECK(ce.loss == doctest::Approx(std::log(3.0)));
  }
  SUBCASE("empty index set is rejected") {
    CHECK_THROWS_AS(cross_entropy(Matrix::Constant(2, 2, 0.5), {0, 1}, {}), ValidationError);
  }
}

TEST_CASE("finite difference harness") {
  SUBCASE("exact for quadratics") {
    const Vector theta = random_matrix(10, 1, 20).col(0);
    const auto loss = [](const Vector& v) { return v.squaredNorm(); };
    const Vector grad = 2.0 * theta;
    const FiniteDiffReport report = finite_diff_check(loss, theta, grad, 1e-5, 1e-7);
    CHECK(report.pass);
    CHECK(report.max_rel_error < 1e-7);
  }
  SUBCASE("detects a 10 percent corruption") {
    const Vector theta = random_matrix(10, 1, 21).col(0);
    const auto loss = [](const Vector& v) { return v.squaredNorm(); };
    const Vector corrupted = 2.2 * theta;
    const FiniteDiffReport report = finite_diff_check(loss, theta, corrupted, 1e-5, 1e-3);
    CHECK(report.max_rel_error > 0.05);
    CHECK_FALSE(report.pass);
  }
  SUBCASE("non-finite losses are reported") {
    const auto loss = [](const Vector& v) { return std::log(v[0]); };
    Vector at(1);
    at << 1e-6;
    CHECK_THROWS_AS(finite_diff_check(loss, at, at, 1e-5, 1e-3), ValidationError);
  }
}

TEST_CASE("pipeline gradients match central differences") {
  for (std::uint64_t seed : {100, 200, 300}) {
    Pipeline p = random_pipeline(seed);
    EncoderParams enc = EncoderParams::init(4, p.d_hidden, p.d_out, p.depth, seed);
    ClassifierHead head{random_matrix(p.d_out, p.num_classes, seed + 50, 0.5),
                        random_matrix(1, p.num_classes, seed + 51, 0.1)};

    const Vector grad = p.analytic_grad(enc, head);
    ParamPack pack = p.pack(enc, head);
    const Vector at = pack.to_vector();
    EncoderParams probe_enc = enc;
    ClassifierHead probe_head = head;
    ParamPack probe = p.pack(probe_enc, probe_head);
    const auto loss = [&](const Vector& v) {
      probe.from_vector(v);
      return p.loss(probe_enc, probe_head);
    };
    const FiniteDiffReport report = finite_diff_check(loss, at, grad, 1e-5, 1e-3, 200, seed);
    CAPTURE(seed);
    CHECK(report.pass);
  }
}
