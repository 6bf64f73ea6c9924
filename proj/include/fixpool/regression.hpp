#pragma once

#include "fixpool/core.hpp"

#include <cmath>
#include <utility>

namespace fixpool {

// One meta-linear-regression task: responses are x^T theta + noise with
// x ~ N(0, V diag(spectrum) V^T).
struct RegressionTask {
  Vector theta;
  Vector spectrum;  // eigenvalues of the covariance in the shared basis
  double sigma = 0.0;

  void validate() const {
    if (theta.size() != spectrum.size())
      throw DimensionError("RegressionTask: theta/spectrum size mismatch");
    if (sigma < 0) throw DimensionError("RegressionTask: sigma must be >= 0");
    for (Eigen::Index i = 0; i < spectrum.size(); ++i)
      if (!(spectrum[i] > 0))
        throw DegeneracyError("RegressionTask: spectrum must be strictly positive");
  }

  Matrix covariance(const Matrix& basis) const {
    return basis * spectrum.asDiagonal() * basis.transpose();
  }
};

// Task meta-distribution: per-coordinate Gaussian law for theta, log-uniform
// law for the covariance spectrum, half-open uniform law for sigma, and a
// shared orthonormal basis. Opt-in coupling replaces the spectrum with
// |theta| clamped below, for regimes where covariance tracks the parameter.
struct RegressionMetaDistribution {
  int dim = 2;
  Vector theta_mean;            // length dim
  Vector theta_scale;           // per-coordinate stddev, length dim
  double spectrum_log10_min = -1.0;
  double spectrum_log10_max = 1.0;
  Matrix basis;                 // dim x dim orthonormal
  double noise_min = 0.0;
  double noise_max = 0.0;
  bool couple_spectrum_to_theta = false;
  double coupling_floor = 1e-3;

  static RegressionMetaDistribution standard(int dim) {
    RegressionMetaDistribution meta;
    meta.dim = dim;
    meta.theta_mean = Vector::Zero(dim);
    meta.theta_scale = Vector::Ones(dim);
    meta.basis = Matrix::Identity(dim, dim);
    return meta;
  }

  void validate() const {
    if (dim <= 0) throw DimensionError("RegressionMetaDistribution: dim must be positive");
    if (theta_mean.size() != dim || theta_scale.size() != dim)
      throw DimensionError("RegressionMetaDistribution: theta law size mismatch");
    if (basis.rows() != dim || basis.cols() != dim)
      throw DimensionError("RegressionMetaDistribution: basis size mismatch");
    const double dev =
        (basis.transpose() * basis - Matrix::Identity(dim, dim)).cwiseAbs().maxCoeff();
    if (dev > 1e-10)
      throw DegeneracyError("RegressionMetaDistribution: basis not orthonormal");
    if (spectrum_log10_min > spectrum_log10_max)
      throw DimensionError("RegressionMetaDistribution: bad spectrum law");
    if (noise_min < 0 || noise_min > noise_max)
      throw DimensionError("RegressionMetaDistribution: bad noise law");
    if (coupling_floor <= 0)
      throw DimensionError("RegressionMetaDistribution: coupling floor must be positive");
  }
};

inline RegressionTask sample_regression_task(const RegressionMetaDistribution& meta,
                                             std::uint64_t seed) {
  meta.validate();
  auto engine = make_engine(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  RegressionTask task;
  task.theta = Vector(meta.dim);
  for (int j = 0; j < meta.dim; ++j)
    task.theta[j] = meta.theta_mean[j] + meta.theta_scale[j] * unit(engine);

  task.spectrum = Vector(meta.dim);
  if (meta.couple_spectrum_to_theta) {
    for (int j = 0; j < meta.dim; ++j)
      task.spectrum[j] = std::max(std::abs(task.theta[j]), meta.coupling_floor);
  } else {
    std::uniform_real_distribution<double> log_eig(meta.spectrum_log10_min,
                                                   meta.spectrum_log10_max);
    for (int j = 0; j < meta.dim; ++j)
      task.spectrum[j] = std::pow(10.0, log_eig(engine));
  }

  if (meta.noise_max > meta.noise_min) {
    std::uniform_real_distribution<double> noise(meta.noise_min, meta.noise_max);
    task.sigma = noise(engine);
  } else {
    task.sigma = meta.noise_min;
  }
  task.validate();
  return task;
}

// Draws n rows i.i.d. N(0, Sigma) in the given basis and responses
// y = X theta + eps with eps ~ N(0, sigma^2 I).
inline std::pair<Matrix, Vector> sample_regression_data(const RegressionTask& task,
                                                        const Matrix& basis, int n,
                                                        std::uint64_t seed) {
  task.validate();
  if (n < 1) throw DimensionError("sample_regression_data: n must be >= 1");
  const int p = static_cast<int>(task.theta.size());
  if (basis.rows() != p || basis.cols() != p)
    throw DimensionError("sample_regression_data: basis size mismatch");

  auto engine = make_engine(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix Z(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) Z(i, j) = unit(engine);
  // X row = V diag(sqrt(spectrum)) z  gives covariance V diag(spectrum) V^T.
  Matrix X = Z * task.spectrum.cwiseSqrt().asDiagonal() * basis.transpose();
  Vector y = X * task.theta;
  for (int i = 0; i < n; ++i) y[i] += task.sigma * unit(engine);
  return {std::move(X), std::move(y)};
}

inline std::pair<Matrix, Vector> sample_regression_data(const RegressionTask& task,
                                                        int n, std::uint64_t seed) {
  const int p = static_cast<int>(task.theta.size());
  return sample_regression_data(task, Matrix::Identity(p, p), n, seed);
}

}  // namespace fixpool
