#pragma once

#include "fixpool/core.hpp"
#include "fixpool/dataset.hpp"
#include "fixpool/embedding.hpp"
#include "fixpool/episode.hpp"
#include "fixpool/heads.hpp"
#include "fixpool/objectives.hpp"
#include "fixpool/pool.hpp"

#include <chrono>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace fixpool {

struct TrainConfig {
  enum class Objective { ml, fixml };

  Objective objective = Objective::ml;
  int epochs = 60;
  int episodes_per_epoch = 100;
  int task_batch = 4;
  // Piecewise-constant schedule: (first epoch, learning rate), first entry at 0.
  std::vector<std::pair<int, double>> lr_schedule = {{0, 0.05}};
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int eval_every = 1;     // snapshot cadence, in epochs
  int eval_episodes = 200;
  TaskConfig task;
  HeadKind solver;
  EmbeddingSpec embedding;
  int workers = default_workers();

  void validate() const {
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (episodes_per_epoch <= 0)
      throw ConfigError("TrainConfig: episodes_per_epoch must be > 0");
    if (task_batch <= 0) throw ConfigError("TrainConfig: task_batch must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("TrainConfig: momentum must lie in [0,1)");
    if (eval_every <= 0) throw ConfigError("TrainConfig: eval_every must be > 0");
    if (eval_episodes <= 0) throw ConfigError("TrainConfig: eval_episodes must be > 0");
    if (lr_schedule.empty() || lr_schedule.front().first != 0)
      throw ConfigError("TrainConfig: lr schedule must start at epoch 0");
    for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
      if (i > 0 && lr_schedule[i].first <= lr_schedule[i - 1].first)
        throw ConfigError("TrainConfig: lr schedule epochs must increase");
      if (!(lr_schedule[i].second >= 0.0))
        throw ConfigError("TrainConfig: learning rates must be >= 0");
    }
    embedding.validate();
  }

  double lr_at(int epoch) const {
    double lr = lr_schedule.front().second;
    for (const auto& [e, v] : lr_schedule)
      if (e <= epoch) lr = v;
    return lr;
  }
};

// Single drop to lr0/10 at 60% of the run.
inline std::vector<std::pair<int, double>> default_lr_schedule(int epochs, double lr0) {
  const int drop = static_cast<int>(epochs * 0.6);
  if (drop <= 0 || drop >= epochs) return {{0, lr0}};
  return {{0, lr0}, {drop, lr0 * 0.1}};
}

struct TrajectoryRecord {
  int epoch = 0;
  double train_loss = 0.0;  // estimate of the objective being optimized
  double ml_loss = 0.0;     // fresh-support objective estimate
  double ml_acc = 0.0;
  std::vector<double> pool_losses;  // filled only when extra pools are tracked
  double wall_time = 0.0;           // seconds since training start; never exported
};

struct TrajectoryLog {
  std::vector<TrajectoryRecord> records;
  std::vector<AlgorithmParams> snapshots;  // one per record

  // Stable column order; wall time stays out so reruns are byte-identical.
  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("TrajectoryLog: cannot open " + path);
    const std::size_t n_pools = records.empty() ? 0 : records.front().pool_losses.size();
    out << "epoch,train_loss,ml_loss,ml_acc";
    for (std::size_t p = 0; p < n_pools; ++p) out << ",pool_" << p << "_loss";
    out << '\n';
    for (const auto& r : records) {
      if (r.pool_losses.size() != n_pools)
        throw DimensionError("TrajectoryLog: ragged pool columns");
      out << r.epoch << ',' << format_g17(r.train_loss) << ',' << format_g17(r.ml_loss)
          << ',' << format_g17(r.ml_acc);
      for (double v : r.pool_losses) out << ',' << format_g17(v);
      out << '\n';
    }
    if (!out.good()) throw IoError("TrajectoryLog: write failed for " + path);
  }
};

// Glorot-style uniform init: weights in +/- sqrt(6/(fan_in+fan_out)), biases 0.
inline AlgorithmParams init_params(const EmbeddingSpec& spec, std::uint64_t seed) {
  spec.validate();
  AlgorithmParams params;
  params.spec = spec;
  params.w = Vector::Zero(spec.param_count());
  auto engine = make_engine(seed);
  Eigen::Index offset = 0;
  for (auto [in, out] : spec.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    const Eigen::Index n_w = static_cast<Eigen::Index>(out) * in;
    for (Eigen::Index i = 0; i < n_w; ++i) params.w(offset + i) = unif(engine);
    offset += n_w + out;  // biases stay zero
  }
  return params;
}

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'F', 'X', 'M', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detail

// Layout: "FXML", version u32, d u64, then d raw 64-bit floats. Written on
// little-endian hosts only, which is all this project targets.
inline void save_checkpoint(const AlgorithmParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(detail::kCheckpointMagic, 4);
  const std::uint32_t version = detail::kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t d = static_cast<std::uint64_t>(params.w.size());
  out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  out.write(reinterpret_cast<const char*>(params.w.data()),
            static_cast<std::streamsize>(d * sizeof(double)));
  if (!out.good()) throw IoError("save_checkpoint: write failed for " + path);
}

inline AlgorithmParams load_checkpoint(const std::string& path, const EmbeddingSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in.good() || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
    throw IoError("load_checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in.good() || version != detail::kCheckpointVersion)
    throw IoError("load_checkpoint: unsupported version in " + path);
  std::uint64_t d = 0;
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  if (!in.good() || d != static_cast<std::uint64_t>(spec.param_count()))
    throw IoError("load_checkpoint: dimension mismatch in " + path);
  AlgorithmParams params;
  params.spec = spec;
  params.w = Vector::Zero(static_cast<Eigen::Index>(d));
  in.read(reinterpret_cast<char*>(params.w.data()),
          static_cast<std::streamsize>(d * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(d * sizeof(double)))
    throw IoError("load_checkpoint: truncated file " + path);
  return params;
}

namespace detail {

// Batched episode loss+gradient against an immutable parameter snapshot.
// Per-episode results land in private slots; the reduction order is fixed, so
// the outcome is independent of the worker count.
template <typename EpisodeAt>
double batch_step(const AlgorithmParams& params, const HeadKind& solver, int task_batch,
                  int workers, EpisodeAt&& episode_at, Vector& grad_out) {
  std::vector<double> losses(static_cast<std::size_t>(task_batch));
  std::vector<Vector> grads(static_cast<std::size_t>(task_batch));
  parallel_for(static_cast<std::size_t>(task_batch), workers, [&](std::size_t b) {
    const Episode ep = episode_at(b);
    losses[b] = episode_grad(params, ep, solver, grads[b]).loss;
  });
  grad_out = pairwise_sum_vectors(grads) / static_cast<double>(task_batch);
  return pairwise_mean(losses);
}

}  // namespace detail

// Episodic SGD with momentum. The pool pins every episode's support when the
// objective is fixml and must be absent for ml. Snapshots carry both the
// optimized objective's estimate and a held-out fresh-support estimate, each
// on its own fixed seed stream so a zero learning rate yields a flat log.
inline std::pair<AlgorithmParams, TrajectoryLog> train(const Dataset& dataset,
                                                       const SupportPool* pool,
                                                       const TrainConfig& config) {
  config.validate();
  config.task.validate(dataset);
  const bool fixml = config.objective == TrainConfig::Objective::fixml;
  if (fixml && pool == nullptr) throw ConfigError("train: fixml objective requires a pool");
  if (!fixml && pool != nullptr) throw ConfigError("train: ml objective takes no pool");
  if (config.embedding.input_dim != dataset.dim())
    throw ConfigError("train: embedding input dim != dataset dim");

  // Fixed seed streams: 0 = training episodes, 1 = train-objective eval,
  // 2 = fresh-support eval, 3 = parameter init.
  const std::uint64_t train_stream = derive_seed(config.seed, 0);
  const std::uint64_t eval_train_stream = derive_seed(config.seed, 1);
  const std::uint64_t eval_ml_stream = derive_seed(config.seed, 2);

  AlgorithmParams params = init_params(config.embedding, derive_seed(config.seed, 3));
  Vector velocity = Vector::Zero(params.w.size());

  const auto t0 = std::chrono::steady_clock::now();
  TrajectoryLog log;
  auto record = [&](int epoch) {
    const LossEstimate train_est =
        fixml ? fixml_loss_estimate(params, dataset, *pool, config.task, config.solver,
                                    config.eval_episodes, eval_train_stream, config.workers)
              : ml_loss_estimate(params, dataset, config.task, config.solver,
                                 config.eval_episodes, eval_train_stream, config.workers);
    const LossEstimate ml_est =
        ml_loss_estimate(params, dataset, config.task, config.solver,
                         config.eval_episodes, eval_ml_stream, config.workers);
    TrajectoryRecord r;
    r.epoch = epoch;
    r.train_loss = train_est.mean;
    r.ml_loss = ml_est.mean;
    r.ml_acc = ml_est.accuracy_mean;
    r.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.records.push_back(std::move(r));
    log.snapshots.push_back(params);
  };

  record(0);

  const int steps = std::max(1, config.episodes_per_epoch / config.task_batch);
  std::uint64_t episode_counter = 0;
  double guard_base = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    for (int step = 0; step < steps; ++step) {
      Vector grad;
      const double batch_loss = detail::batch_step(
          params, config.solver, config.task_batch, config.workers,
          [&](std::size_t b) {
            const std::uint64_t s = derive_seed(train_stream, episode_counter + b);
            return fixml ? sample_episode_from_pool(dataset, *pool, config.task, s)
                         : sample_episode_ml(dataset, config.task, s);
          },
          grad);
      episode_counter += static_cast<std::uint64_t>(config.task_batch);
      // Floor the baseline at 1 so a lucky (near-zero loss) first batch cannot
      // make ordinary later batches look like a 1000x explosion; the negated
      // comparison also trips on NaN.
      if (guard_base < 0) guard_base = std::max(batch_loss, 1.0);
      if (!(batch_loss <= 1e3 * guard_base))
        throw DegeneracyError("train: diverged, batch loss " + format_g17(batch_loss) +
                              " vs initial " + format_g17(guard_base));
      velocity = config.momentum * velocity + grad;
      params.w -= lr * velocity;
    }
    if ((epoch + 1) % config.eval_every == 0) record(epoch + 1);
  }
  return {std::move(params), std::move(log)};
}

// ---------------------------------------------------------------------------
// Roster mode: a pre-generated finite task list whose episodes never change.
// Training is a deterministic pass over the included tasks' episodes, which
// is what leave-one-task-out comparisons need.

struct RosterTask {
  std::vector<int> classes;
  std::vector<std::vector<int>> support_indices;  // per class, ascending
  std::vector<Episode> episodes;                  // shared support, fresh queries
};

struct Roster {
  std::vector<RosterTask> tasks;
};

inline Roster make_roster(const Dataset& dataset, const TaskConfig& cfg, int n_tasks,
                          int episodes_per_task, std::uint64_t seed) {
  cfg.validate(dataset);
  if (n_tasks < 1 || episodes_per_task < 1)
    throw DimensionError("make_roster: counts must be >= 1");
  Roster roster;
  roster.tasks.reserve(static_cast<std::size_t>(n_tasks));
  for (int t = 0; t < n_tasks; ++t) {
    auto engine = make_engine(derive_seed(seed, static_cast<std::uint64_t>(t)));
    RosterTask task;
    task.classes = detail::sample_index_subset(dataset.n_classes(), cfg.n_way, engine);
    task.support_indices.reserve(task.classes.size());
    for (std::size_t c = 0; c < task.classes.size(); ++c)
      task.support_indices.push_back(
          detail::sample_index_subset(dataset.per_class(), cfg.k_shot, engine));
    for (int e = 0; e < episodes_per_task; ++e) {
      Episode ep;
      ep.classes = task.classes;
      for (int local = 0; local < cfg.n_way; ++local) {
        const int cls = task.classes[static_cast<std::size_t>(local)];
        const auto& sup = task.support_indices[static_cast<std::size_t>(local)];
        for (int idx : sup) ep.support.emplace_back(dataset.example(cls, idx), local);
        std::vector<int> complement;
        complement.reserve(dataset.per_class() - cfg.k_shot);
        std::size_t p = 0;
        for (int i = 0; i < dataset.per_class(); ++i) {
          if (p < sup.size() && sup[p] == i) {
            ++p;
            continue;
          }
          complement.push_back(i);
        }
        const auto q = detail::sample_from_candidates(complement, cfg.q_query, engine);
        for (int idx : q) ep.query.emplace_back(dataset.example(cls, idx), local);
      }
      task.episodes.push_back(std::move(ep));
    }
    roster.tasks.push_back(std::move(task));
  }
  return roster;
}

// SGD over the roster's episode list, excluded tasks skipped. Consumes no
// randomness beyond parameter init, so two runs differing only in the mask
// see bit-identical episodes for every shared slot. An epoch is one pass.
inline AlgorithmParams train_on_roster(const Roster& roster,
                                       const std::vector<bool>& include,
                                       const TrainConfig& config) {
  config.validate();
  if (include.size() != roster.tasks.size())
    throw DimensionError("train_on_roster: mask size mismatch");
  std::vector<const Episode*> slots;
  for (std::size_t t = 0; t < roster.tasks.size(); ++t) {
    if (!include[t]) continue;
    for (const auto& ep : roster.tasks[t].episodes) slots.push_back(&ep);
  }
  if (slots.empty()) throw DimensionError("train_on_roster: no included episodes");

  AlgorithmParams params = init_params(config.embedding, derive_seed(config.seed, 3));
  Vector velocity = Vector::Zero(params.w.size());
  double guard_base = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    for (std::size_t lo = 0; lo < slots.size(); lo += config.task_batch) {
      const std::size_t hi =
          std::min(slots.size(), lo + static_cast<std::size_t>(config.task_batch));
      std::vector<double> losses(hi - lo);
      std::vector<Vector> grads(hi - lo);
      parallel_for(hi - lo, config.workers, [&](std::size_t b) {
        losses[b] = episode_grad(params, *slots[lo + b], config.solver, grads[b]).loss;
      });
      const double batch_loss = pairwise_mean(losses);
      const Vector grad =
          pairwise_sum_vectors(grads) / static_cast<double>(hi - lo);
      // Same floored baseline as train(): see the comment there.
      if (guard_base < 0) guard_base = std::max(batch_loss, 1.0);
      if (!(batch_loss <= 1e3 * guard_base))
        throw DegeneracyError("train_on_roster: diverged, batch loss " +
                              format_g17(batch_loss));
      velocity = config.momentum * velocity + grad;
      params.w -= lr * velocity;
    }
  }
  return params;
}

}  // namespace fixpool
