#pragma once

#include "fixpool/core.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace fixpool {

// Convex last-layer solvers applied to embedded features. Both are pure
// functions of their inputs and differentiable w.r.t. the features.

struct HeadKind {
  enum class Type { protonet, ridge };
  Type type = Type::protonet;
  double ridge_lambda = 1.0;

  static HeadKind protonet() { return {Type::protonet, 0.0}; }
  static HeadKind ridge(double lambda) {
    if (!(lambda > 0)) throw DimensionError("HeadKind: ridge lambda must be > 0");
    return {Type::ridge, lambda};
  }
};

// Class prototypes are support means; logits are negative squared Euclidean
// distances to them.
inline Matrix protonet_logits(const Matrix& support_features,
                              const std::vector<int>& support_labels, int n_way,
                              const Matrix& query_features) {
  if (static_cast<Eigen::Index>(support_labels.size()) != support_features.rows())
    throw DimensionError("protonet_logits: label count mismatch");
  const Eigen::Index dim = support_features.cols();
  if (query_features.cols() != dim)
    throw DimensionError("protonet_logits: feature dim mismatch");

  Matrix prototypes = Matrix::Zero(n_way, dim);
  std::vector<int> counts(n_way, 0);
  for (Eigen::Index i = 0; i < support_features.rows(); ++i) {
    const int c = support_labels[i];
    if (c < 0 || c >= n_way) throw DimensionError("protonet_logits: label out of range");
    prototypes.row(c) += support_features.row(i);
    ++counts[c];
  }
  for (int c = 0; c < n_way; ++c) {
    if (counts[c] == 0) throw DimensionError("protonet_logits: empty class " + std::to_string(c));
    prototypes.row(c) /= counts[c];
  }

  Matrix logits(query_features.rows(), n_way);
  for (Eigen::Index q = 0; q < query_features.rows(); ++q)
    for (int c = 0; c < n_way; ++c)
      logits(q, c) = -(query_features.row(q) - prototypes.row(c)).squaredNorm();
  return logits;
}

inline void protonet_backward(const Matrix& support_features,
                              const std::vector<int>& support_labels, int n_way,
                              const Matrix& query_features, const Matrix& d_logits,
                              Matrix& d_support, Matrix& d_query) {
  const Eigen::Index dim = support_features.cols();
  Matrix prototypes = Matrix::Zero(n_way, dim);
  std::vector<int> counts(n_way, 0);
  for (Eigen::Index i = 0; i < support_features.rows(); ++i) {
    prototypes.row(support_labels[i]) += support_features.row(i);
    ++counts[support_labels[i]];
  }
  for (int c = 0; c < n_way; ++c) prototypes.row(c) /= counts[c];

  d_support = Matrix::Zero(support_features.rows(), dim);
  d_query = Matrix::Zero(query_features.rows(), dim);
  Matrix d_proto = Matrix::Zero(n_way, dim);
  for (Eigen::Index q = 0; q < query_features.rows(); ++q) {
    for (int c = 0; c < n_way; ++c) {
      const double g = d_logits(q, c);
      if (g == 0.0) continue;
      const auto diff = query_features.row(q) - prototypes.row(c);
      d_query.row(q) += g * (-2.0) * diff;
      d_proto.row(c) += g * 2.0 * diff;
    }
  }
  for (Eigen::Index i = 0; i < support_features.rows(); ++i)
    d_support.row(i) = d_proto.row(support_labels[i]) / counts[support_labels[i]];
}

// Ridge regression onto one-hot targets through a bias-augmented design.
// Solves (Phi^T Phi + lambda I) B = Phi^T Y once, keeps the factorization for
// the backward pass.
struct RidgeSolution {
  Matrix phi_s;   // n_s x (dim+1)
  Matrix phi_q;   // n_q x (dim+1)
  Matrix one_hot; // n_s x n_way
  Matrix B;       // (dim+1) x n_way
  Eigen::LLT<Matrix> llt;
};

inline Matrix ridge_logits(const Matrix& support_features, const Matrix& support_one_hot,
                           const Matrix& query_features, double lambda,
                           RidgeSolution* cache = nullptr) {
  if (!(lambda > 0)) throw DimensionError("ridge_logits: lambda must be > 0");
  if (support_one_hot.rows() != support_features.rows())
    throw DimensionError("ridge_logits: one-hot row mismatch");
  if (query_features.cols() != support_features.cols())
    throw DimensionError("ridge_logits: feature dim mismatch");

  const Eigen::Index dim = support_features.cols();
  const Eigen::Index m = dim + 1;
  Matrix phi_s(support_features.rows(), m);
  phi_s.leftCols(dim) = support_features;
  phi_s.col(dim).setOnes();
  Matrix phi_q(query_features.rows(), m);
  phi_q.leftCols(dim) = query_features;
  phi_q.col(dim).setOnes();

  Matrix gram = phi_s.transpose() * phi_s;
  gram.diagonal().array() += lambda;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success)
    throw DegeneracyError("ridge_logits: Cholesky failed");
  Matrix B = llt.solve(phi_s.transpose() * support_one_hot);
  Matrix logits = phi_q * B;
  if (cache) {
    cache->phi_s = std::move(phi_s);
    cache->phi_q = std::move(phi_q);
    cache->one_hot = support_one_hot;
    cache->B = std::move(B);
    cache->llt = std::move(llt);
  }
  return logits;
}

// Reverse-mode through the linear solve: with Z = G^{-1} (Phi_q^T dL),
// dPhi_s = Y Z^T - Phi_s (Z B^T + B Z^T) and dPhi_q = dL B^T. The bias column
// is dropped when mapping back to feature space.
inline void ridge_backward(const RidgeSolution& sol, const Matrix& d_logits,
                           Matrix& d_support, Matrix& d_query) {
  const Eigen::Index dim = sol.phi_s.cols() - 1;
  Matrix d_phi_q = d_logits * sol.B.transpose();
  Matrix dB = sol.phi_q.transpose() * d_logits;
  Matrix Z = sol.llt.solve(dB);
  Matrix d_phi_s = sol.one_hot * Z.transpose() -
                   sol.phi_s * (Z * sol.B.transpose() + sol.B * Z.transpose());
  d_support = d_phi_s.leftCols(dim);
  d_query = d_phi_q.leftCols(dim);
}

}  // namespace fixpool
