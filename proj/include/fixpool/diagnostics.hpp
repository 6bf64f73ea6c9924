#pragma once

#include "fixpool/core.hpp"
#include "fixpool/dataset.hpp"
#include "fixpool/embedding.hpp"
#include "fixpool/episode.hpp"
#include "fixpool/objectives.hpp"
#include "fixpool/pool.hpp"
#include "fixpool/trainer.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fixpool {

// Evaluation bundle shared by the diagnostics: which data, which task shape,
// which solver, and the Monte Carlo budget.
struct EvalSpec {
  const Dataset* dataset = nullptr;
  TaskConfig task;
  HeadKind solver;
  int n_episodes = 2000;
  std::uint64_t seed = 0;
  int workers = default_workers();
};

namespace detail {

inline std::uint64_t params_id(const AlgorithmParams& p) {
  std::uint64_t h = 0x5081492aa3c127f1ULL;
  for (Eigen::Index i = 0; i < p.w.size(); ++i) h = hash_combine(h, p.w(i));
  return h;
}

inline std::uint64_t class_fingerprint(const Dataset& d, int cls) {
  std::uint64_t h = 0x9d8a75e3b1c64d2bULL;
  for (int i = 0; i < d.per_class(); ++i) {
    const Vector x = d.example(cls, i);
    for (Eigen::Index j = 0; j < x.size(); ++j) h = hash_combine(h, x(j));
  }
  return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 1-D interpolation between the two solutions.

struct InterpolationCurve {
  std::vector<double> alphas;
  std::vector<double> train_losses;
  std::vector<double> test_losses;
  std::uint64_t endpoint_fml_id = 0;
  std::uint64_t endpoint_ml_id = 0;
};

inline std::vector<double> interpolation_alphas(int n = 25) {
  if (n < 2) throw DimensionError("interpolation_alphas: need at least 2 points");
  std::vector<double> a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    a[static_cast<std::size_t>(i)] = -0.2 + 1.4 * static_cast<double>(i) / (n - 1);
  return a;
}

// Evaluates the fresh-support objective at w = (1-alpha) w_fml + alpha w_ml.
// Episode seeds are fixed per eval spec, so every alpha sees the same
// episodes and the alpha=0 / alpha=1 points reproduce the endpoints exactly.
inline InterpolationCurve interpolate_losses(const AlgorithmParams& w_fml,
                                             const AlgorithmParams& w_ml,
                                             const std::vector<double>& alphas,
                                             const EvalSpec& train_eval,
                                             const EvalSpec& test_eval) {
  if (!(w_fml.spec == w_ml.spec) || w_fml.w.size() != w_ml.w.size())
    throw DimensionError("interpolate_losses: endpoint parameter mismatch");
  if (train_eval.dataset == nullptr || test_eval.dataset == nullptr)
    throw DimensionError("interpolate_losses: missing dataset");
  if (alphas.empty()) throw DimensionError("interpolate_losses: empty alpha grid");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i] < -0.2 - 1e-9 || alphas[i] > 1.2 + 1e-9)
      throw DimensionError("interpolate_losses: alpha outside [-0.2, 1.2]");
    if (i > 0 && !(alphas[i] > alphas[i - 1]))
      throw DimensionError("interpolate_losses: alphas must increase strictly");
  }

  InterpolationCurve curve;
  curve.alphas = alphas;
  curve.endpoint_fml_id = detail::params_id(w_fml);
  curve.endpoint_ml_id = detail::params_id(w_ml);
  for (double alpha : alphas) {
    AlgorithmParams p;
    p.spec = w_fml.spec;
    p.w = (1.0 - alpha) * w_fml.w + alpha * w_ml.w;
    curve.train_losses.push_back(
        ml_loss_estimate(p, *train_eval.dataset, train_eval.task, train_eval.solver,
                         train_eval.n_episodes, train_eval.seed, train_eval.workers)
            .mean);
    curve.test_losses.push_back(
        ml_loss_estimate(p, *test_eval.dataset, test_eval.task, test_eval.solver,
                         test_eval.n_episodes, test_eval.seed, test_eval.workers)
            .mean);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Checkpoint table across support pools.

struct MultiPoolTable {
  std::vector<SupportPool> extra_pools;
  std::vector<double> base_losses;               // the pinned pool   (blue)
  std::vector<double> ml_losses;                 // fresh supports    (red)
  std::vector<double> ml_accs;
  std::vector<std::vector<double>> extra_losses;  // [pool][checkpoint] (green)
};

// Per-checkpoint losses on the training pool, on fresh supports, and on
// n_extra_pools freshly sampled pools distinct from the base (collisions are
// resampled). Evaluation seeds are shared across checkpoints: the red series
// at every checkpoint uses derive_seed(derive_seed(seed, 1), 1), so a
// standalone ml_loss_estimate call with that seed reproduces it exactly.
// All pool-conditioned series (blue and green) share one episode stream,
// derive_seed(derive_seed(seed, 1), 0): pools are compared on common random
// numbers, and a pool equal to the base would trace the blue curve exactly.
inline MultiPoolTable multi_pool_trajectory(const std::vector<AlgorithmParams>& checkpoints,
                                            const Dataset& dataset,
                                            const SupportPool& base_pool,
                                            int n_extra_pools, const TaskConfig& cfg,
                                            const HeadKind& solver, int n_episodes,
                                            std::uint64_t seed,
                                            int workers = default_workers()) {
  if (n_extra_pools < 1)
    throw DimensionError("multi_pool_trajectory: n_extra_pools must be >= 1");
  if (checkpoints.empty()) throw DimensionError("multi_pool_trajectory: no checkpoints");

  MultiPoolTable table;
  const std::uint64_t pool_stream = derive_seed(seed, 0);
  const std::uint64_t eval_root = derive_seed(seed, 1);
  std::uint64_t attempt = 0;
  while (static_cast<int>(table.extra_pools.size()) < n_extra_pools) {
    SupportPool candidate = sample_support_pool(dataset, cfg.k_shot,
                                                derive_seed(pool_stream, attempt++));
    bool collision = candidate == base_pool;
    for (const auto& existing : table.extra_pools) collision |= candidate == existing;
    if (!collision) table.extra_pools.push_back(std::move(candidate));
  }

  table.extra_losses.resize(static_cast<std::size_t>(n_extra_pools));
  for (const auto& params : checkpoints) {
    table.base_losses.push_back(fixml_loss_estimate(params, dataset, base_pool, cfg,
                                                    solver, n_episodes,
                                                    derive_seed(eval_root, 0), workers)
                                    .mean);
    const LossEstimate ml = ml_loss_estimate(params, dataset, cfg, solver, n_episodes,
                                             derive_seed(eval_root, 1), workers);
    table.ml_losses.push_back(ml.mean);
    table.ml_accs.push_back(ml.accuracy_mean);
    for (int j = 0; j < n_extra_pools; ++j) {
      table.extra_losses[static_cast<std::size_t>(j)].push_back(
          fixml_loss_estimate(params, dataset, table.extra_pools[static_cast<std::size_t>(j)],
                              cfg, solver, n_episodes, derive_seed(eval_root, 0), workers)
              .mean);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Generalization gap across class splits.

struct GapReport {
  LossEstimate on_train;
  LossEstimate on_test;
  double gap = 0.0;
};

// Fresh-support loss on the test split minus the train split, same seeds on
// both sides. Disjointness is checked on class content, not labels; pass
// require_disjoint = false to evaluate degenerate setups (e.g. the same
// dataset on both sides, whose gap is 0 by construction).
inline GapReport generalization_gap_report(const AlgorithmParams& params,
                                           const Dataset& train, const Dataset& test,
                                           const TaskConfig& cfg, const HeadKind& solver,
                                           int n_episodes, std::uint64_t seed,
                                           int workers = default_workers(),
                                           bool require_disjoint = true) {
  if (require_disjoint) {
    std::vector<std::uint64_t> train_ids;
    train_ids.reserve(static_cast<std::size_t>(train.n_classes()));
    for (int c = 0; c < train.n_classes(); ++c)
      train_ids.push_back(detail::class_fingerprint(train, c));
    for (int c = 0; c < test.n_classes(); ++c) {
      const std::uint64_t id = detail::class_fingerprint(test, c);
      for (std::uint64_t t : train_ids)
        if (t == id)
          throw DimensionError("generalization_gap: class splits overlap");
    }
  }
  GapReport rep;
  rep.on_train = ml_loss_estimate(params, train, cfg, solver, n_episodes, seed, workers);
  rep.on_test = ml_loss_estimate(params, test, cfg, solver, n_episodes, seed, workers);
  rep.gap = rep.on_test.mean - rep.on_train.mean;
  return rep;
}

inline double generalization_gap(const AlgorithmParams& params, const Dataset& train,
                                 const Dataset& test, const TaskConfig& cfg,
                                 const HeadKind& solver, int n_episodes,
                                 std::uint64_t seed, int workers = default_workers(),
                                 bool require_disjoint = true) {
  return generalization_gap_report(params, train, test, cfg, solver, n_episodes, seed,
                                   workers, require_disjoint)
      .gap;
}

// ---------------------------------------------------------------------------
// tr(C)/tr(F) ratio.

struct TicReport {
  double tr_c = 0.0;   // mean squared gradient norm, true query labels
  double tr_f = 0.0;   // mean squared gradient norm, labels drawn from the model
  double ratio = 0.0;
  int n_samples = 0;
  double train_loss = 0.0;  // mean episode loss, for judging how well-fit w is
  double gen_gap = std::numeric_limits<double>::quiet_NaN();  // caller-filled
};

namespace detail {

inline std::vector<int> sample_labels_from_probs(const Matrix& probs,
                                                 std::mt19937_64& engine) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> labels(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index q = 0; q < probs.rows(); ++q) {
    const double u = unif(engine);
    double acc = 0.0;
    int pick = static_cast<int>(probs.cols()) - 1;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      acc += probs(q, c);
      if (u < acc) {
        pick = static_cast<int>(c);
        break;
      }
    }
    labels[static_cast<std::size_t>(q)] = pick;
  }
  return labels;
}

}  // namespace detail

// Both traces are estimated as mean squared episode-gradient norms:
// tr(E[g g^T]) = E[||g||^2]. C draws the episode's true labels, F redraws the
// query labels from the model's own posterior. use_true_labels_hook reroutes
// F's labels to the true ones, which forces ratio = 1 exactly.
inline TicReport tic_ratio(const AlgorithmParams& params, const Dataset& dataset,
                           const TaskConfig& cfg, const HeadKind& solver, int n_episodes,
                           std::uint64_t seed, int workers = default_workers(),
                           bool use_true_labels_hook = false) {
  if (n_episodes < 100) throw DimensionError("tic_ratio: need at least 100 episodes");
  const std::uint64_t episode_stream = derive_seed(seed, 0);
  const std::uint64_t label_stream = derive_seed(seed, 1);

  std::vector<double> sq_true(static_cast<std::size_t>(n_episodes));
  std::vector<double> sq_model(static_cast<std::size_t>(n_episodes));
  std::vector<double> losses(static_cast<std::size_t>(n_episodes));
  parallel_for(static_cast<std::size_t>(n_episodes), workers, [&](std::size_t i) {
    const Episode ep =
        sample_episode_ml(dataset, cfg, derive_seed(episode_stream, i));
    Vector g;
    losses[i] = episode_grad(params, ep, solver, g).loss;
    sq_true[i] = g.squaredNorm();

    std::vector<int> labels;
    if (use_true_labels_hook) {
      labels.reserve(ep.query.size());
      for (const auto& q : ep.query) labels.push_back(q.second);
    } else {
      const Matrix probs = episode_query_probs(params, ep, solver);
      auto engine = make_engine(derive_seed(label_stream, i));
      labels = detail::sample_labels_from_probs(probs, engine);
    }
    episode_grad_with_labels(params, ep, solver, labels, g);
    sq_model[i] = g.squaredNorm();
  });

  TicReport rep;
  rep.n_samples = n_episodes;
  rep.tr_c = pairwise_mean(sq_true);
  rep.tr_f = pairwise_mean(sq_model);
  rep.train_loss = pairwise_mean(losses);
  if (rep.tr_f < 1e-12)
    throw DegeneracyError("tic_ratio: tr(F) below 1e-12, model is degenerate");
  rep.ratio = rep.tr_c / rep.tr_f;
  return rep;
}

// ---------------------------------------------------------------------------
// Empirical leave-one-task-out stability.

struct StabilityReport {
  double beta_hat = 0.0;
  std::vector<double> per_perturbation;
};

// Trains once on a fixed episode roster and once per dropped task, then takes
// the max probe-episode loss difference. The max over finitely many
// perturbations only ever underestimates the sup, so beta_hat is a LOWER
// estimate of the uniform stability constant.
inline StabilityReport stability_estimate(const Dataset& dataset, const TrainConfig& config,
                                          int n_perturbations, std::uint64_t seed,
                                          int roster_tasks = 0, int episodes_per_task = 8,
                                          int probe_episodes = 32) {
  if (n_perturbations < 2)
    throw DimensionError("stability_estimate: n_perturbations must be >= 2");
  if (roster_tasks == 0) roster_tasks = n_perturbations;
  if (roster_tasks < n_perturbations)
    throw DimensionError("stability_estimate: roster smaller than perturbation count");

  const Roster roster =
      make_roster(dataset, config.task, roster_tasks, episodes_per_task,
                  derive_seed(seed, 0));
  std::vector<Episode> probes;
  probes.reserve(static_cast<std::size_t>(probe_episodes));
  const std::uint64_t probe_stream = derive_seed(seed, 1);
  for (int i = 0; i < probe_episodes; ++i)
    probes.push_back(
        sample_episode_ml(dataset, config.task, derive_seed(probe_stream,
                                                            static_cast<std::uint64_t>(i))));

  const std::vector<bool> all(roster.tasks.size(), true);
  const AlgorithmParams base = train_on_roster(roster, all, config);
  std::vector<double> base_losses;
  base_losses.reserve(probes.size());
  for (const auto& ep : probes)
    base_losses.push_back(episode_loss(base, ep, config.solver).loss);

  StabilityReport rep;
  rep.per_perturbation.reserve(static_cast<std::size_t>(n_perturbations));
  for (int k = 0; k < n_perturbations; ++k) {
    std::vector<bool> mask(roster.tasks.size(), true);
    mask[static_cast<std::size_t>(k)] = false;
    const AlgorithmParams perturbed = train_on_roster(roster, mask, config);
    double worst = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const double diff =
          std::abs(episode_loss(perturbed, probes[i], config.solver).loss - base_losses[i]);
      worst = std::max(worst, diff);
    }
    rep.per_perturbation.push_back(worst);
    rep.beta_hat = std::max(rep.beta_hat, worst);
  }
  return rep;
}

}  // namespace fixpool
