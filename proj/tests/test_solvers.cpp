#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fixpool/embedding.hpp"
#include "fixpool/heads.hpp"
#include "fixpool/objectives.hpp"
#include "support/oracles.hpp"

using namespace fixpool;
namespace ts = testsupport;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  auto eng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(eng);
  return m;
}

// Gram-Schmidt keeps this free of Eigen internals that trip -Wmaybe-uninitialized.
Matrix random_orthogonal(Eigen::Index n, std::uint64_t seed) {
  Matrix a = random_matrix(n, n, seed);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < j; ++k) a.col(j) -= a.col(k).dot(a.col(j)) * a.col(k);
    a.col(j) /= a.col(j).norm();
  }
  return a;
}

}  // namespace

TEST_CASE("embedding forward shapes and identities") {
  SECTION("identity embedding returns its input and has no parameters") {
    EmbeddingSpec spec;
    spec.kind = EmbeddingSpec::Kind::identity;
    spec.input_dim = 3;
    spec.output_dim = 3;
    REQUIRE(spec.param_count() == 0);
    AlgorithmParams params{Vector::Zero(0), spec};
    const Matrix x = random_matrix(4, 3, 1);
    CHECK(embed_batch(params, x).output() == x);
  }
  SECTION("linear embedding with identity weight and zero bias is the identity") {
    EmbeddingSpec spec;
    spec.kind = EmbeddingSpec::Kind::linear;
    spec.input_dim = 3;
    spec.output_dim = 3;
    AlgorithmParams params{Vector::Zero(spec.param_count()), spec};
    auto view = detail::layer_view(params.w, 0, 3, 3);
    view.weight = Matrix::Identity(3, 3);
    const Matrix x = random_matrix(5, 3, 2);
    CHECK((embed_batch(params, x).output() - x).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("mlp with all-zero weights emits the output bias regardless of input") {
    EmbeddingSpec spec;
    spec.kind = EmbeddingSpec::Kind::mlp;
    spec.input_dim = 4;
    spec.hidden_dims = {6};
    spec.output_dim = 3;
    AlgorithmParams params{Vector::Zero(spec.param_count()), spec};
    // Layer 0: 6x4 weight + 6 bias; layer 1: 3x6 weight + 3 bias.
    auto out_layer = detail::layer_view(params.w, 6 * 4 + 6, 6, 3);
    out_layer.bias << 0.5, -1.0, 2.0;
    const Matrix x = random_matrix(7, 4, 3);
    const Matrix out = embed_batch(params, x).output();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      CHECK(out(r, 0) == 0.5);
      CHECK(out(r, 1) == -1.0);
      CHECK(out(r, 2) == 2.0);
    }
  }
  SECTION("identity spec rejects mismatched dims; mlp rejects nonpositive widths") {
    EmbeddingSpec bad;
    bad.kind = EmbeddingSpec::Kind::identity;
    bad.input_dim = 3;
    bad.output_dim = 2;
    CHECK_THROWS_AS(bad.validate(), DimensionError);
    EmbeddingSpec mlp;
    mlp.kind = EmbeddingSpec::Kind::mlp;
    mlp.input_dim = 3;
    mlp.hidden_dims = {0};
    mlp.output_dim = 2;
    CHECK_THROWS_AS(mlp.validate(), DimensionError);
  }
}

TEST_CASE("embedding backward matches finite differences") {
  EmbeddingSpec spec;
  spec.kind = EmbeddingSpec::Kind::mlp;
  spec.input_dim = 3;
  spec.hidden_dims = {5, 4};
  spec.output_dim = 2;
  auto eng = make_engine(10);
  std::uniform_real_distribution<double> unif(-0.8, 0.8);
  AlgorithmParams params{Vector::Zero(spec.param_count()), spec};
  for (Eigen::Index i = 0; i < params.w.size(); ++i) params.w[i] = unif(eng);

  const Matrix x = random_matrix(6, 3, 20);
  const Matrix w_out = random_matrix(6, 2, 21);  // fixed cotangent

  Vector grad = Vector::Zero(params.w.size());
  embed_batch_backward(params, embed_batch(params, x), w_out, grad);

  auto f = [&](const Vector& w) {
    AlgorithmParams p{w, spec};
    return (embed_batch(p, x).output().array() * w_out.array()).sum();
  };
  const Vector fd = ts::fd_gradient(f, params.w, 1e-6);
  REQUIRE(grad.size() == fd.size());
  CHECK((grad - fd).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
}

TEST_CASE("prototype head") {
  SECTION("a query sitting on a prototype scores logit zero; unit distance scores -1") {
    Matrix sup(2, 2);
    sup << 0.0, 0.0, 1.0, 0.0;
    std::vector<int> labels{0, 1};
    Matrix qry(1, 2);
    qry << 0.0, 0.0;
    const Matrix logits = protonet_logits(sup, labels, 2, qry);
    CHECK(logits(0, 0) == 0.0);
    CHECK(logits(0, 1) == -1.0);
  }
  SECTION("with one shot per class the prototypes are the supports themselves") {
    const Matrix sup = random_matrix(3, 4, 30);
    std::vector<int> labels{0, 1, 2};
    const Matrix qry = random_matrix(5, 4, 31);
    const Matrix logits = protonet_logits(sup, labels, 3, qry);
    for (Eigen::Index q = 0; q < 5; ++q)
      for (int c = 0; c < 3; ++c)
        CHECK_THAT(logits(q, c),
                   Catch::Matchers::WithinRel(-(qry.row(q) - sup.row(c)).squaredNorm(),
                                              1e-12));
  }
  SECTION("logits are invariant under a common orthogonal rotation") {
    const Matrix sup = random_matrix(6, 5, 40);
    std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const Matrix qry = random_matrix(4, 5, 41);
    const Matrix q = random_orthogonal(5, 42);
    const Matrix base = protonet_logits(sup, labels, 3, qry);
    const Matrix rotated = protonet_logits(sup * q, labels, 3, qry * q);
    CHECK((base - rotated).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("relabeling the classes permutes the logit columns") {
    const Matrix sup = random_matrix(6, 3, 50);
    std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const Matrix qry = random_matrix(4, 3, 51);
    const Matrix base = protonet_logits(sup, labels, 3, qry);
    const std::vector<int> perm{2, 0, 1};  // class c becomes perm[c]
    std::vector<int> relabeled(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
      relabeled[i] = perm[static_cast<std::size_t>(labels[i])];
    const Matrix permuted = protonet_logits(sup, relabeled, 3, qry);
    for (Eigen::Index r = 0; r < 4; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(permuted(r, perm[static_cast<std::size_t>(c)]) == base(r, c));
  }
  SECTION("backward pass matches finite differences") {
    const Matrix sup = random_matrix(4, 3, 60);
    std::vector<int> labels{0, 0, 1, 1};
    const Matrix qry = random_matrix(3, 3, 61);
    const Matrix w = random_matrix(3, 2, 62);  // cotangent over logits

    Matrix d_sup, d_qry;
    protonet_backward(sup, labels, 2, qry, w, d_sup, d_qry);

    const double h = 1e-6;
    for (Eigen::Index i = 0; i < sup.rows(); ++i)
      for (Eigen::Index j = 0; j < sup.cols(); ++j) {
        Matrix p = sup, m = sup;
        p(i, j) += h;
        m(i, j) -= h;
        const double fd = ((protonet_logits(p, labels, 2, qry).array() * w.array()).sum() -
                           (protonet_logits(m, labels, 2, qry).array() * w.array()).sum()) /
                          (2 * h);
        CHECK_THAT(d_sup(i, j), Catch::Matchers::WithinAbs(fd, 1e-6));
      }
    for (Eigen::Index i = 0; i < qry.rows(); ++i)
      for (Eigen::Index j = 0; j < qry.cols(); ++j) {
        Matrix p = qry, m = qry;
        p(i, j) += h;
        m(i, j) -= h;
        const double fd = ((protonet_logits(sup, labels, 2, p).array() * w.array()).sum() -
                           (protonet_logits(sup, labels, 2, m).array() * w.array()).sum()) /
                          (2 * h);
        CHECK_THAT(d_qry(i, j), Catch::Matchers::WithinAbs(fd, 1e-6));
      }
  }
  SECTION("empty class is a dimension error") {
    Matrix sup(2, 2);
    sup << 0.0, 0.0, 1.0, 0.0;
    std::vector<int> labels{0, 0};
    CHECK_THROWS_AS(protonet_logits(sup, labels, 2, sup), DimensionError);
  }
}

TEST_CASE("ridge head") {
  const Matrix sup = random_matrix(7, 3, 70);
  std::vector<int> labels{0, 0, 1, 1, 1, 2, 2};
  const Matrix y = one_hot(labels, 3);
  const Matrix qry = random_matrix(4, 3, 71);

  SECTION("solution satisfies the normal equations") {
    const double lambda = 0.7;
    RidgeSolution cache;
    ridge_logits(sup, y, qry, lambda, &cache);
    const Matrix lhs =
        (cache.phi_s.transpose() * cache.phi_s + lambda * Matrix::Identity(4, 4)) * cache.B;
    const Matrix rhs = cache.phi_s.transpose() * y;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8);
  }
  SECTION("the solution is the unique minimizer of the penalized objective") {
    const double lambda = 0.7;
    RidgeSolution cache;
    ridge_logits(sup, y, qry, lambda, &cache);
    auto objective = [&](const Matrix& b) {
      return (cache.phi_s * b - y).squaredNorm() + lambda * b.squaredNorm();
    };
    const double at_min = objective(cache.B);
    for (std::uint64_t s = 0; s < 20; ++s) {
      Matrix delta = random_matrix(4, 3, 700 + s);
      delta *= 1e-3 / delta.norm();
      CHECK(objective(cache.B + delta) > at_min);
    }
  }
  SECTION("a huge penalty drives every logit to zero") {
    const Matrix logits = ridge_logits(sup, y, qry, 1e9);
    CHECK(logits.cwiseAbs().maxCoeff() < 1e-5);
  }
  SECTION("logits are invariant under a common orthogonal rotation") {
    const Matrix q = random_orthogonal(3, 72);
    const Matrix base = ridge_logits(sup, y, qry, 0.5);
    const Matrix rotated = ridge_logits(sup * q, y, qry * q, 0.5);
    CHECK((base - rotated).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("permuting the one-hot columns permutes the logit columns") {
    const Matrix base = ridge_logits(sup, y, qry, 0.5);
    Matrix perm_y(y.rows(), 3);
    const std::vector<int> perm{1, 2, 0};
    for (int c = 0; c < 3; ++c) perm_y.col(perm[static_cast<std::size_t>(c)]) = y.col(c);
    const Matrix permuted = ridge_logits(sup, perm_y, qry, 0.5);
    for (Eigen::Index r = 0; r < base.rows(); ++r)
      for (int c = 0; c < 3; ++c)
        CHECK_THAT(permuted(r, perm[static_cast<std::size_t>(c)]),
                   Catch::Matchers::WithinAbs(base(r, c), 1e-12));
  }
  SECTION("backward pass matches finite differences") {
    const double lambda = 0.9;
    const Matrix w = random_matrix(4, 3, 73);  // cotangent over logits
    RidgeSolution cache;
    ridge_logits(sup, y, qry, lambda, &cache);
    Matrix d_sup, d_qry;
    ridge_backward(cache, w, d_sup, d_qry);

    const double h = 1e-6;
    auto value = [&](const Matrix& s, const Matrix& q) {
      return (ridge_logits(s, y, q, lambda).array() * w.array()).sum();
    };
    for (Eigen::Index i = 0; i < sup.rows(); ++i)
      for (Eigen::Index j = 0; j < sup.cols(); ++j) {
        Matrix p = sup, m = sup;
        p(i, j) += h;
        m(i, j) -= h;
        const double fd = (value(p, qry) - value(m, qry)) / (2 * h);
        CHECK_THAT(d_sup(i, j), Catch::Matchers::WithinAbs(fd, 1e-5));
      }
    for (Eigen::Index i = 0; i < qry.rows(); ++i)
      for (Eigen::Index j = 0; j < qry.cols(); ++j) {
        Matrix p = qry, m = qry;
        p(i, j) += h;
        m(i, j) -= h;
        const double fd = (value(sup, p) - value(sup, m)) / (2 * h);
        CHECK_THAT(d_qry(i, j), Catch::Matchers::WithinAbs(fd, 1e-5));
      }
  }
  SECTION("nonpositive lambda is rejected") {
    CHECK_THROWS_AS(ridge_logits(sup, y, qry, 0.0), DimensionError);
    CHECK_THROWS_AS(HeadKind::ridge(-1.0), DimensionError);
  }
}

TEST_CASE("softmax cross-entropy") {
  SECTION("hand-computed two-row example") {
    Matrix logits(2, 3);
    logits << 1.0, 0.0, -1.0, 0.0, 0.0, 2.0;
    std::vector<int> labels{0, 2};
    Matrix d;
    const EpisodeResult r = detail::softmax_xent(logits, labels, &d);
    const double l0 = -1.0 + std::log(std::exp(1.0) + 1.0 + std::exp(-1.0));
    const double l1 = -2.0 + std::log(1.0 + 1.0 + std::exp(2.0));
    CHECK_THAT(r.loss, Catch::Matchers::WithinAbs(0.5 * (l0 + l1), 1e-12));
    CHECK(r.accuracy == 1.0);
    // d = (softmax - onehot)/n_rows, rows sum to zero.
    for (Eigen::Index i = 0; i < 2; ++i)
      CHECK_THAT(d.row(i).sum(), Catch::Matchers::WithinAbs(0.0, 1e-12));
    const double z0 = std::exp(1.0) + 1.0 + std::exp(-1.0);
    CHECK_THAT(d(0, 0), Catch::Matchers::WithinAbs((std::exp(1.0) / z0 - 1.0) / 2.0, 1e-12));
    CHECK_THAT(d(0, 1), Catch::Matchers::WithinAbs((1.0 / z0) / 2.0, 1e-12));
  }
  SECTION("gradient matches finite differences") {
    const Matrix logits = random_matrix(4, 3, 80);
    std::vector<int> labels{2, 0, 1, 1};
    Matrix d;
    detail::softmax_xent(logits, labels, &d);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) {
        Matrix p = logits, m = logits;
        p(i, j) += h;
        m(i, j) -= h;
        const double fd = (detail::softmax_xent(p, labels, nullptr).loss -
                           detail::softmax_xent(m, labels, nullptr).loss) /
                          (2 * h);
        CHECK_THAT(d(i, j), Catch::Matchers::WithinAbs(fd, 1e-8));
      }
  }
  SECTION("ties break toward the lowest class index") {
    Matrix logits(2, 3);
    logits << 1.0, 1.0, 0.0, 1.0, 1.0, 0.0;
    const EpisodeResult r0 = detail::softmax_xent(logits, {0, 1}, nullptr);
    CHECK(r0.accuracy == 0.5);  // row 0 predicted 0 (correct), row 1 predicted 0 (wrong)
  }
}
