#pragma once

#include "fixpool/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace fixpool {

// Closed-form machinery for the meta-linear-regression setting: risks,
// one-step adaptation, population minimizers of both objectives, Hessians,
// the diagonal special case, the optimal fixed support, and measured
// ingredients of the concentration bounds.

struct PopulationTask {
  Vector theta;
  Matrix sigma;   // uncentered second moment of a support/query row
  double noise = 0.0;
  double weight = 1.0;
};

struct TaskPopulation {
  std::vector<PopulationTask> tasks;

  Eigen::Index dim() const { return tasks.empty() ? 0 : tasks.front().theta.size(); }

  void validate() const {
    if (tasks.empty()) throw DimensionError("TaskPopulation: no tasks");
    const Eigen::Index d = dim();
    double total = 0.0;
    for (const auto& t : tasks) {
      if (t.theta.size() != d || t.sigma.rows() != d || t.sigma.cols() != d)
        throw DimensionError("TaskPopulation: dimension mismatch");
      if (t.weight < 0) throw DimensionError("TaskPopulation: negative weight");
      if (t.noise < 0) throw DimensionError("TaskPopulation: negative noise");
      const double scale = std::max(1.0, t.sigma.cwiseAbs().maxCoeff());
      if ((t.sigma - t.sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw DimensionError("TaskPopulation: covariance not symmetric");
      total += t.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw DimensionError("TaskPopulation: weights must sum to 1");
  }

  Matrix mean_sigma() const {
    Matrix s = Matrix::Zero(dim(), dim());
    for (const auto& t : tasks) s += t.weight * t.sigma;
    return s;
  }
};

struct FixedSupport {
  Matrix x;     // n x p design
  Matrix gram;  // X^T X, kept symmetric

  explicit FixedSupport(Matrix x_in) : x(std::move(x_in)) {
    if (x.rows() < 1 || x.cols() < 1) throw DimensionError("FixedSupport: empty design");
    gram = x.transpose() * x;
    gram = 0.5 * (gram + gram.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
      throw DegeneracyError("FixedSupport: gram not PSD");
  }

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
};

namespace detail {

inline double spectral_norm_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double lambda_min_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// SPD solve via Cholesky; the eigenvalue pass exists only to police the
// condition number (no inverse is ever formed).
inline Matrix solve_spd(const Matrix& h, const Matrix& rhs, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0) || hi / lo > 1e12)
    throw DegeneracyError(what + ": singular system, lambda_min = " + format_g17(lo));
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success)
    throw DegeneracyError(what + ": Cholesky failed, lambda_min = " + format_g17(lo));
  return llt.solve(rhs);
}

inline Matrix matrix_sqrt_psd(const Matrix& sigma) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  Vector vals = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, vals.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals(i) < -tol) throw DegeneracyError("matrix_sqrt_psd: matrix not PSD");
    vals(i) = std::sqrt(std::max(vals(i), 0.0));
  }
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

// Rows i.i.d. N(0, sqrtm * sqrtm^T); fill order is row-major so draws are
// reproducible for a given engine state.
inline Matrix sample_gaussian_rows(const Matrix& sqrtm, Eigen::Index n,
                                   std::mt19937_64& eng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(n, sqrtm.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < sqrtm.cols(); ++j) z(i, j) = normal(eng);
  return z * sqrtm;
}

inline std::size_t sample_task_index(const TaskPopulation& population,
                                     std::mt19937_64& eng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(eng);
  double acc = 0.0;
  for (std::size_t i = 0; i < population.tasks.size(); ++i) {
    acc += population.tasks[i].weight;
    if (u < acc) return i;
  }
  return population.tasks.size() - 1;
}

inline std::uint64_t hash_vector(std::uint64_t h, const Vector& v) {
  h = hash_combine(h, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) h = hash_combine(h, v(i));
  return h;
}

inline std::uint64_t hash_matrix(std::uint64_t h, const Matrix& m) {
  h = hash_combine(h, static_cast<std::uint64_t>(m.rows()));
  h = hash_combine(h, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) h = hash_combine(h, m(i, j));
  return h;
}

}  // namespace detail

// R(eta; tau) = 1/2 (eta - theta)^T Sigma (eta - theta) + 1/2 sigma^2.
inline double true_risk(const Vector& eta, const PopulationTask& task) {
  if (eta.size() != task.theta.size()) throw DimensionError("true_risk: dim mismatch");
  const Vector d = eta - task.theta;
  return 0.5 * d.dot(task.sigma * d) + 0.5 * task.noise * task.noise;
}

enum class RiskNormalization { per_sample, total };

// Risk against a pinned design. The total form is E_eps[1/2 ||X eta - y||^2]
// with its n-scaled noise term; per_sample divides the whole thing by n.
inline double fixed_support_risk(const Vector& eta, const FixedSupport& support,
                                 const PopulationTask& task,
                                 RiskNormalization norm = RiskNormalization::per_sample) {
  if (eta.size() != support.dim() || eta.size() != task.theta.size())
    throw DimensionError("fixed_support_risk: dim mismatch");
  const Vector d = eta - task.theta;
  const double n = static_cast<double>(support.n());
  const double total = 0.5 * d.dot(support.gram * d) + 0.5 * task.noise * task.noise * n;
  return norm == RiskNormalization::total ? total : total / n;
}

// One gradient step on the support squared loss from theta. The bare form
// uses the raw gradient X^T(X theta - y); normalize divides it by the row
// count, matching the (alpha/n) convention of the empirical-minimizer lemma.
inline Vector onestep_adapt(const Vector& theta, const Matrix& x_s, const Vector& y_s,
                            double alpha, bool normalize = false) {
  if (x_s.cols() != theta.size() || x_s.rows() != y_s.size())
    throw DimensionError("onestep_adapt: shape mismatch");
  const double scale = normalize ? alpha / static_cast<double>(x_s.rows()) : alpha;
  return theta - scale * (x_s.transpose() * (x_s * theta - y_s));
}

// A_F(alpha) = I - (alpha/n) X_F^T X_F.
inline Matrix af_matrix(const Matrix& x_f, double alpha, Eigen::Index n) {
  if (n < 1) throw DimensionError("af_matrix: n must be >= 1");
  const Eigen::Index p = x_f.cols();
  return Matrix::Identity(p, p) -
         (alpha / static_cast<double>(n)) * (x_f.transpose() * x_f);
}

// Minimizer of the fixed-support population objective:
// (A E[Sigma] A)^{-1} E[A Sigma A theta]. normalize_step selects whether
// alpha acts on X^T X / n (default) or on the raw gram.
inline Vector theta_star_fml(double alpha, const FixedSupport& support,
                             const TaskPopulation& population, bool normalize_step = true) {
  population.validate();
  if (support.dim() != population.dim())
    throw DimensionError("theta_star_fml: dim mismatch");
  const Matrix a = af_matrix(support.x, alpha, normalize_step ? support.n() : 1);
  Matrix h = a * population.mean_sigma() * a;
  h = 0.5 * (h + h.transpose()).eval();
  Vector b = Vector::Zero(population.dim());
  for (const auto& t : population.tasks) b += t.weight * (a * (t.sigma * (a * t.theta)));
  return detail::solve_spd(h, b, "theta_star_fml");
}

namespace detail {

// E_tau E_Shat[(I - alpha Shat) Sigma (I - alpha Shat)] with Shat = X^T X / n
// estimated by Monte Carlo. Each draw is paired with its reflection
// 2 Sigma - Shat: the integrand is quadratic in Shat, so the pair average
// cancels the linear deviation term exactly.
inline Matrix ml_hessian_mc(double alpha, const TaskPopulation& population, int n_support,
                            int mc_budget, std::uint64_t seed) {
  if (n_support < 1) throw DimensionError("ml_hessian_mc: n_support must be >= 1");
  if (mc_budget < 1) throw DimensionError("ml_hessian_mc: mc_budget must be >= 1");
  const Eigen::Index p = population.dim();
  const Matrix eye = Matrix::Identity(p, p);
  Matrix h = Matrix::Zero(p, p);
  for (std::size_t ti = 0; ti < population.tasks.size(); ++ti) {
    const auto& t = population.tasks[ti];
    auto eng = make_engine(derive_seed(seed, ti));
    const Matrix sqrtm = matrix_sqrt_psd(t.sigma);
    Matrix ht = Matrix::Zero(p, p);
    for (int j = 0; j < mc_budget; ++j) {
      const Matrix xs = sample_gaussian_rows(sqrtm, n_support, eng);
      const Matrix shat = (xs.transpose() * xs) / static_cast<double>(n_support);
      for (const Matrix& s : {shat, Matrix(2.0 * t.sigma - shat)}) {
        const Matrix m = eye - alpha * s;
        ht += m * t.sigma * m;
      }
    }
    ht /= 2.0 * static_cast<double>(mc_budget);
    h += t.weight * ht;
  }
  return 0.5 * (h + h.transpose()).eval();
}

}  // namespace detail

// Minimizer of the episodic population objective, inner expectation over the
// support covariance estimate done by antithetic Monte Carlo.
inline Vector theta_star_ml(double alpha, const TaskPopulation& population, int n_support,
                            int mc_budget, std::uint64_t seed) {
  population.validate();
  const Eigen::Index p = population.dim();
  const Matrix eye = Matrix::Identity(p, p);
  Matrix h = Matrix::Zero(p, p);
  Vector b = Vector::Zero(p);
  for (std::size_t ti = 0; ti < population.tasks.size(); ++ti) {
    const auto& t = population.tasks[ti];
    auto eng = make_engine(derive_seed(seed, ti));
    const Matrix sqrtm = detail::matrix_sqrt_psd(t.sigma);
    Matrix ht = Matrix::Zero(p, p);
    for (int j = 0; j < mc_budget; ++j) {
      const Matrix xs = detail::sample_gaussian_rows(sqrtm, n_support, eng);
      const Matrix shat = (xs.transpose() * xs) / static_cast<double>(n_support);
      for (const Matrix& s : {shat, Matrix(2.0 * t.sigma - shat)}) {
        const Matrix m = eye - alpha * s;
        ht += m * t.sigma * m;
      }
    }
    ht /= 2.0 * static_cast<double>(mc_budget);
    h += t.weight * ht;
    b += t.weight * (ht * t.theta);
  }
  h = 0.5 * (h + h.transpose()).eval();
  return detail::solve_spd(h, b, "theta_star_ml");
}

struct TaskBatch {
  Matrix x_s;
  Vector y_s;
  Matrix x_q;
  Vector y_q;
};

namespace detail {

// Post-adaptation parameter is affine in theta: A_i theta + c_i.
inline void batch_affine(const TaskBatch& b, double alpha, bool normalize_step, Matrix& a,
                         Vector& c) {
  if (b.x_s.rows() != b.y_s.size() || b.x_q.rows() != b.y_q.size() ||
      b.x_s.cols() != b.x_q.cols())
    throw DimensionError("TaskBatch: shape mismatch");
  const Eigen::Index p = b.x_s.cols();
  const double scale =
      normalize_step ? alpha / static_cast<double>(b.x_s.rows()) : alpha;
  a = Matrix::Identity(p, p) - scale * (b.x_s.transpose() * b.x_s);
  c = scale * (b.x_s.transpose() * b.y_s);
}

}  // namespace detail

// Value and gradient of the empirical episodic objective
// sum_i w_i 1/2 ||X_q,i (A_i theta + c_i) - y_q,i||^2.
inline std::pair<double, Vector> ml_empirical_objective(const std::vector<TaskBatch>& batches,
                                                        double alpha, const Vector& theta,
                                                        bool normalize_step = true,
                                                        bool normalize_query = false) {
  if (batches.empty()) throw DimensionError("ml_empirical_objective: no batches");
  double value = 0.0;
  Vector grad = Vector::Zero(theta.size());
  for (const auto& b : batches) {
    Matrix a;
    Vector c;
    detail::batch_affine(b, alpha, normalize_step, a, c);
    const double w = normalize_query ? 1.0 / static_cast<double>(b.x_q.rows()) : 1.0;
    const Vector r = b.x_q * (a * theta + c) - b.y_q;
    value += w * 0.5 * r.squaredNorm();
    grad += w * (a.transpose() * (b.x_q.transpose() * r));
  }
  return {value, grad};
}

// Exact minimizer of the quadratic above via its normal equations.
inline Vector theta_hat_ml_empirical(const std::vector<TaskBatch>& batches, double alpha,
                                     bool normalize_step = true,
                                     bool normalize_query = false) {
  if (batches.empty()) throw DimensionError("theta_hat_ml_empirical: no batches");
  const Eigen::Index p = batches.front().x_s.cols();
  Matrix h = Matrix::Zero(p, p);
  Vector rhs = Vector::Zero(p);
  for (const auto& b : batches) {
    Matrix a;
    Vector c;
    detail::batch_affine(b, alpha, normalize_step, a, c);
    const double w = normalize_query ? 1.0 / static_cast<double>(b.x_q.rows()) : 1.0;
    const Matrix qa = b.x_q * a;
    h += w * (qa.transpose() * qa);
    rhs += w * (qa.transpose() * (b.y_q - b.x_q * c));
  }
  h = 0.5 * (h + h.transpose()).eval();
  return detail::solve_spd(h, rhs, "theta_hat_ml_empirical");
}

// Population Hessians of the two quadratic objectives.
inline std::pair<Matrix, Matrix> hessians(double alpha, const FixedSupport& support,
                                          const TaskPopulation& population, int n_support,
                                          int mc_budget, std::uint64_t seed,
                                          bool normalize_step = true) {
  population.validate();
  const Matrix a = af_matrix(support.x, alpha, normalize_step ? support.n() : 1);
  Matrix h_fml = a * population.mean_sigma() * a;
  h_fml = 0.5 * (h_fml + h_fml.transpose()).eval();
  Matrix h_ml = detail::ml_hessian_mc(alpha, population, n_support, mc_budget, seed);
  return {h_fml, h_ml};
}

// Diagonal closed form theta*^j = E[Sigma^j theta^j] / E[Sigma^j]. The
// diagonal gram enters only through the precondition; its squared factors
// cancel, which is the point of the lemma.
inline Vector theta_star_diag(double alpha, const Vector& diag_gram,
                              const Vector& mean_sigma, const Vector& mean_sigma_theta) {
  const Eigen::Index p = diag_gram.size();
  if (mean_sigma.size() != p || mean_sigma_theta.size() != p)
    throw DimensionError("theta_star_diag: dim mismatch");
  Vector out(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::abs(1.0 - alpha * diag_gram(j)) < 1e-12)
      throw DegeneracyError("theta_star_diag: A_F coordinate " + std::to_string(j) +
                            " vanishes");
    if (!(mean_sigma(j) > 0))
      throw DegeneracyError("theta_star_diag: zero denominator at coordinate " +
                            std::to_string(j));
    out(j) = mean_sigma_theta(j) / mean_sigma(j);
  }
  return out;
}

// Coordinatewise minimizer of the variance proxy under the signal
// constraint: A_F^i = sqrt(kappa2 / E[Sigma^i]). alpha does not enter the
// formula; it is kept so call sites read like the other solvers.
inline Vector optimal_af(double alpha, const Vector& mean_spectrum, double kappa2) {
  (void)alpha;
  if (!(kappa2 > 0)) throw DimensionError("optimal_af: kappa2 must be > 0");
  Vector out(mean_spectrum.size());
  for (Eigen::Index i = 0; i < mean_spectrum.size(); ++i) {
    if (!(mean_spectrum(i) > 0))
      throw DimensionError("optimal_af: mean spectrum must be positive");
    out(i) = std::sqrt(kappa2 / mean_spectrum(i));
  }
  return out;
}

// Exact fixed-support population objective under per-sample query loss with
// support noise resampled each episode:
//   E_tau[ 1/2 (eta-theta)^T A Sigma A (eta-theta)
//          + 1/2 sigma^2 + 1/2 s^2 sigma^2 tr(Sigma G) ],  s = alpha_eff.
inline double fixml_population_objective(const Vector& eta, double alpha,
                                         const FixedSupport& support,
                                         const TaskPopulation& population,
                                         bool normalize_step = true,
                                         bool include_noise = true) {
  population.validate();
  if (eta.size() != population.dim() || support.dim() != population.dim())
    throw DimensionError("fixml_population_objective: dim mismatch");
  const double n_eff = normalize_step ? static_cast<double>(support.n()) : 1.0;
  const double s = alpha / n_eff;
  const Matrix a = af_matrix(support.x, alpha, normalize_step ? support.n() : 1);
  double value = 0.0;
  for (const auto& t : population.tasks) {
    const Vector d = a * (eta - t.theta);
    double term = 0.5 * d.dot(t.sigma * d);
    if (include_noise) {
      const double s2 = t.noise * t.noise;
      term += 0.5 * s2 + 0.5 * s * s * s2 * (t.sigma * support.gram).trace();
    }
    value += t.weight * term;
  }
  return value;
}

// Episodic population objective when the support design is drawn uniformly
// from a finite candidate set; used to make the bias statement checkable.
inline double ml_population_objective_finite_supports(
    const Vector& eta, double alpha, const std::vector<Matrix>& support_candidates,
    const TaskPopulation& population, bool normalize_step = true,
    bool include_noise = true) {
  if (support_candidates.empty())
    throw DimensionError("ml_population_objective_finite_supports: no candidates");
  double value = 0.0;
  for (const auto& x : support_candidates) {
    const FixedSupport fs(x);
    value += fixml_population_objective(eta, alpha, fs, population, normalize_step,
                                        include_noise);
  }
  return value / static_cast<double>(support_candidates.size());
}

struct SgdOptions {
  int steps = 200000;
  int task_batch = 8;
  int n_query = 16;
  double lr0 = 0.1;
  double lr_decay_t0 = 200.0;
  double average_tail = 0.5;  // fraction of final iterates averaged into the result
  std::uint64_t seed = 0;
  bool normalize_step = true;
};

// Plain SGD on the fixed-support quadratic objective. Episodes draw a task,
// fresh support noise, and a fresh query batch; the returned iterate is the
// tail average, which converges to theta_star_fml.
inline Vector sgd_fixml_quadratic(const TaskPopulation& population,
                                  const FixedSupport& support, double alpha,
                                  const SgdOptions& opts) {
  population.validate();
  if (opts.steps < 1 || opts.task_batch < 1 || opts.n_query < 1)
    throw DimensionError("sgd_fixml_quadratic: bad options");
  const Eigen::Index p = population.dim();
  const double n_eff = opts.normalize_step ? static_cast<double>(support.n()) : 1.0;
  const double s = alpha / n_eff;
  const Matrix a = af_matrix(support.x, alpha, opts.normalize_step ? support.n() : 1);

  std::vector<Matrix> sqrts;
  sqrts.reserve(population.tasks.size());
  for (const auto& t : population.tasks) sqrts.push_back(detail::matrix_sqrt_psd(t.sigma));

  auto eng = make_engine(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector eta = Vector::Zero(p);
  Vector average = Vector::Zero(p);
  const int tail_start =
      opts.steps - std::max(1, static_cast<int>(opts.steps * opts.average_tail));
  int averaged = 0;

  for (int step = 0; step < opts.steps; ++step) {
    Vector grad = Vector::Zero(p);
    for (int b = 0; b < opts.task_batch; ++b) {
      const std::size_t ti = detail::sample_task_index(population, eng);
      const auto& t = population.tasks[ti];
      // adapted parameter: A eta + s X_F^T y_s with y_s = X_F theta + eps
      Vector eps_s(support.n());
      for (Eigen::Index i = 0; i < eps_s.size(); ++i) eps_s(i) = t.noise * normal(eng);
      const Vector adapted =
          a * eta + s * (support.x.transpose() * (support.x * t.theta + eps_s));
      const Matrix xq = detail::sample_gaussian_rows(sqrts[ti], opts.n_query, eng);
      Vector eps_q(opts.n_query);
      for (Eigen::Index i = 0; i < eps_q.size(); ++i) eps_q(i) = t.noise * normal(eng);
      const Vector resid = xq * adapted - (xq * t.theta + eps_q);
      grad += a.transpose() * (xq.transpose() * resid) / static_cast<double>(opts.n_query);
    }
    grad /= static_cast<double>(opts.task_batch);
    const double lr = opts.lr0 / (1.0 + static_cast<double>(step) / opts.lr_decay_t0);
    eta -= lr * grad;
    if (!eta.allFinite()) throw DegeneracyError("sgd_fixml_quadratic: diverged");
    if (step >= tail_start) {
      average += eta;
      ++averaged;
    }
  }
  return average / static_cast<double>(averaged);
}

// Measured ingredients of the estimation-error decomposition for a fixed
// support: everything is computed, nothing is asserted.
struct ConcentrationReport {
  double lambda_min_sum = 0.0;       // lambda_min of the summed empirical B-tilde
  double bernstein_deviation = 0.0;  // ||(1/m) sum (B_i - E[B])||
  std::vector<double> per_task_cov_errors;  // ||B-tilde_i - B_i|| per sampled task
  double sup_theta_dev = 0.0;        // max_tau ||theta_tau - theta*(alpha)||
  double variance_norm = 0.0;        // ||E[(B - E[B])^2]||, population-exact
  double kappa_bound = 0.0;          // max_tau ||B_tau - E[B]||, population-exact
  double mu_min = 0.0;               // lambda_min(E[B])
  double l_max = 0.0;                // max_i ||B-tilde_i|| over the sample
  double b_norm_avg = 0.0;           // (1/m) sum ||B_i||  (candidate kappa1 reading)
  double b_norm_max = 0.0;           // max_i ||B_i||      (candidate kappa1 reading)
  double t1 = 0.0;                   // ||(1/m) sum (B-tilde_i - B_i)(theta_i - theta*)||
  double t2 = 0.0;                   // ||(1/m) sum (B_i - E[B])(theta_i - theta*)||
  double t3 = 0.0;                   // max_i ||E[B](theta_i - theta*)||
  double chernoff_predicted_frequency = 0.0;
  double delta = 0.05;
  double rho = 0.05;
  double epsilon = 0.5;
  int m = 0;
};

inline ConcentrationReport concentration_report(const TaskPopulation& population, int m,
                                                const FixedSupport& support, double alpha,
                                                int n_query, double delta = 0.05,
                                                double rho = 0.05, double epsilon = 0.5,
                                                std::uint64_t seed = 0) {
  population.validate();
  if (m < 2) throw DimensionError("concentration_report: m must be >= 2");
  if (n_query < 1) throw DimensionError("concentration_report: n_query must be >= 1");
  if (!(epsilon > 0 && epsilon < 1) || !(delta > 0 && delta < 1) || !(rho > 0 && rho < 1))
    throw DimensionError("concentration_report: confidence params must lie in (0,1)");

  const Eigen::Index p = population.dim();
  const Matrix a = af_matrix(support.x, alpha, support.n());

  ConcentrationReport rep;
  rep.delta = delta;
  rep.rho = rho;
  rep.epsilon = epsilon;
  rep.m = m;

  // Population-exact pieces.
  std::vector<Matrix> b_pop;
  b_pop.reserve(population.tasks.size());
  Matrix eb = Matrix::Zero(p, p);
  for (const auto& t : population.tasks) {
    b_pop.push_back(a * t.sigma * a);
    eb += t.weight * b_pop.back();
  }
  eb = 0.5 * (eb + eb.transpose()).eval();
  Matrix var = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < b_pop.size(); ++i) {
    const Matrix dev = b_pop[i] - eb;
    var += population.tasks[i].weight * (dev * dev);
    rep.kappa_bound = std::max(rep.kappa_bound, detail::spectral_norm_sym(dev));
  }
  rep.variance_norm = detail::spectral_norm_sym(var);
  rep.mu_min = detail::lambda_min_sym(eb);

  const Vector theta_star = theta_star_fml(alpha, support, population, true);
  for (const auto& t : population.tasks)
    rep.sup_theta_dev = std::max(rep.sup_theta_dev, (t.theta - theta_star).norm());

  // Sampled pieces.
  std::vector<Matrix> sqrts;
  sqrts.reserve(population.tasks.size());
  for (const auto& t : population.tasks) sqrts.push_back(detail::matrix_sqrt_psd(t.sigma));
  auto eng = make_engine(seed);

  Matrix sum_btilde = Matrix::Zero(p, p);
  Matrix sum_b = Matrix::Zero(p, p);
  Vector t1_acc = Vector::Zero(p);
  Vector t2_acc = Vector::Zero(p);
  rep.per_task_cov_errors.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const std::size_t ti = detail::sample_task_index(population, eng);
    const auto& t = population.tasks[ti];
    const Matrix xq = detail::sample_gaussian_rows(sqrts[ti], n_query, eng);
    Matrix btilde = a * ((xq.transpose() * xq) / static_cast<double>(n_query)) * a;
    btilde = 0.5 * (btilde + btilde.transpose()).eval();
    const Matrix& b = b_pop[ti];

    sum_btilde += btilde;
    sum_b += b;
    rep.per_task_cov_errors.push_back(detail::spectral_norm_sym(btilde - b));
    rep.l_max = std::max(rep.l_max, detail::spectral_norm_sym(btilde));
    rep.b_norm_avg += detail::spectral_norm_sym(b);
    rep.b_norm_max = std::max(rep.b_norm_max, detail::spectral_norm_sym(b));

    const Vector dev_theta = t.theta - theta_star;
    t1_acc += (btilde - b) * dev_theta;
    t2_acc += (b - eb) * dev_theta;
    rep.t3 = std::max(rep.t3, (eb * dev_theta).norm());
  }
  rep.b_norm_avg /= static_cast<double>(m);
  rep.lambda_min_sum = detail::lambda_min_sym(sum_btilde);
  rep.bernstein_deviation =
      detail::spectral_norm_sym(sum_b / static_cast<double>(m) - eb);
  rep.t1 = t1_acc.norm() / static_cast<double>(m);
  rep.t2 = t2_acc.norm() / static_cast<double>(m);

  // Lower-tail matrix Chernoff frequency, with the sampled l_max standing in
  // for the almost-sure bound.
  if (rep.l_max > 0 && rep.mu_min > 0) {
    const double ratio = std::exp(-epsilon) / std::pow(1.0 - epsilon, 1.0 - epsilon);
    const double bound = static_cast<double>(p) *
                         std::pow(ratio, static_cast<double>(m) * rep.mu_min / rep.l_max);
    rep.chernoff_predicted_frequency = std::max(0.0, 1.0 - bound);
  } else {
    rep.chernoff_predicted_frequency = 1.0;
  }
  return rep;
}

// Fraction of independent resamples on which lambda_min(sum B-tilde) clears
// (1 - epsilon) m mu_min.
inline double chernoff_empirical_frequency(const TaskPopulation& population, int m,
                                           const FixedSupport& support, double alpha,
                                           int n_query, double epsilon, int n_resamples,
                                           std::uint64_t seed) {
  population.validate();
  if (m < 1 || n_resamples < 1 || n_query < 1)
    throw DimensionError("chernoff_empirical_frequency: bad arguments");
  const Eigen::Index p = population.dim();
  const Matrix a = af_matrix(support.x, alpha, support.n());
  Matrix eb = Matrix::Zero(p, p);
  for (const auto& t : population.tasks) eb += t.weight * (a * t.sigma * a);
  const double mu_min = detail::lambda_min_sym(eb);

  std::vector<Matrix> sqrts;
  sqrts.reserve(population.tasks.size());
  for (const auto& t : population.tasks) sqrts.push_back(detail::matrix_sqrt_psd(t.sigma));

  int hits = 0;
  for (int r = 0; r < n_resamples; ++r) {
    auto eng = make_engine(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Matrix sum_btilde = Matrix::Zero(p, p);
    for (int i = 0; i < m; ++i) {
      const std::size_t ti = detail::sample_task_index(population, eng);
      const Matrix xq = detail::sample_gaussian_rows(sqrts[ti], n_query, eng);
      sum_btilde += a * ((xq.transpose() * xq) / static_cast<double>(n_query)) * a;
    }
    sum_btilde = 0.5 * (sum_btilde + sum_btilde.transpose()).eval();
    if (detail::lambda_min_sym(sum_btilde) >=
        (1.0 - epsilon) * static_cast<double>(m) * mu_min)
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_resamples);
}

// Flat export of oracle results: one row per operation call.
struct OracleRow {
  std::string operation;
  std::uint64_t inputs_hash = 0;
  std::vector<double> outputs;
};

inline void write_oracle_csv(const std::string& path, const std::vector<OracleRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("write_oracle_csv: cannot open " + path);
  out << "operation,inputs_hash,outputs\n";
  for (const auto& r : rows) {
    out << r.operation << ',';
    char hex[19];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(r.inputs_hash));
    out << hex << ',';
    for (std::size_t i = 0; i < r.outputs.size(); ++i) {
      if (i) out << ';';
      out << format_g17(r.outputs[i]);
    }
    out << '\n';
  }
  if (!out.good()) throw IoError("write_oracle_csv: write failed for " + path);
}

}  // namespace fixpool
