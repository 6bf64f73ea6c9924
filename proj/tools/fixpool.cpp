// fixpool: command line front end for the few-shot pool experiments.
//
// Subcommands:
//   train          train an episodic learner (fresh or fixed supports)
//   eval           evaluate a checkpoint on fresh-support episodes
//   diagnose       interpolation / pool-trajectory / tic / gap / stability
//   oracle         closed-form linear-regression reference values
//   count-pools    log10 pool counts for a benchmark-sized task space
//
// Configs are flat key = value files; every run leaves a fully resolved
// config.lock in its run directory so results can be reproduced bit-exactly.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fixpool/config.hpp"
#include "fixpool/csvplot.hpp"
#include "fixpool/diagnostics.hpp"
#include "fixpool/linreg.hpp"
#include "fixpool/trainer.hpp"

namespace {

using namespace fixpool;

// ---------------------------------------------------------------------------
// config -> domain objects

int resolve_workers(ConfigMap& cfg) {
  int workers = static_cast<int>(cfg.get_int("workers", default_workers()));
  if (const char* env = std::getenv("FIXPOOL_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError("FIXPOOL_WORKERS must be a positive integer");
    workers = static_cast<int>(v);
    cfg.record("workers", std::to_string(workers));
  }
  if (workers < 1) throw ConfigError("workers must be >= 1");
  return workers;
}

// Dataset keys live under a prefix ("dataset" or "dataset.test") so a run can
// describe train and test splits side by side.
Dataset load_split(ConfigMap& cfg, const std::string& prefix, SplitTag tag) {
  const std::string source = cfg.get_string(prefix + ".source", "synthetic");
  if (source == "csv") return load_dataset_csv(cfg.get_path(prefix + ".path"), tag);
  if (source != "synthetic")
    throw ConfigError("config: " + prefix + ".source must be synthetic or csv");
  const int classes = static_cast<int>(cfg.get_int(prefix + ".classes"));
  const int per_class = static_cast<int>(cfg.get_int(prefix + ".per_class"));
  const int dim = static_cast<int>(cfg.get_int(prefix + ".dim"));
  const double spread = cfg.get_double(prefix + ".class_spread", 1.0);
  const double noise = cfg.get_double(prefix + ".within_noise", 0.25);
  const std::uint64_t seed =
      cfg.get_uint64(prefix + ".seed", tag == SplitTag::train ? 1 : 2);
  return generate_gaussian_dataset(classes, per_class, dim, spread, noise, seed, tag);
}

bool has_test_split(const ConfigMap& cfg) {
  return cfg.has("dataset.test.source") || cfg.has("dataset.test.path") ||
         cfg.has("dataset.test.classes");
}

TaskConfig load_task(ConfigMap& cfg) {
  TaskConfig task;
  task.n_way = static_cast<int>(cfg.get_int("task.n_way", task.n_way));
  task.k_shot = static_cast<int>(cfg.get_int("task.k_shot", task.k_shot));
  task.q_query = static_cast<int>(cfg.get_int("task.q_query", task.q_query));
  return task;
}

HeadKind load_solver(ConfigMap& cfg) {
  const std::string name = cfg.get_string("solver", "protonet");
  if (name == "protonet") return HeadKind::protonet();
  if (name == "ridge") return HeadKind::ridge(cfg.get_double("ridge.lambda", 1.0));
  throw ConfigError("config: solver must be protonet or ridge");
}

EmbeddingSpec load_embedding(ConfigMap& cfg, int input_dim) {
  EmbeddingSpec spec;
  spec.input_dim = input_dim;
  const std::string kind = cfg.get_string("embedding", "identity");
  if (kind == "identity") {
    spec.kind = EmbeddingSpec::Kind::identity;
    spec.output_dim = input_dim;
  } else if (kind == "linear") {
    spec.kind = EmbeddingSpec::Kind::linear;
    spec.output_dim = static_cast<int>(cfg.get_int("embedding.output_dim"));
  } else if (kind == "mlp") {
    spec.kind = EmbeddingSpec::Kind::mlp;
    spec.output_dim = static_cast<int>(cfg.get_int("embedding.output_dim"));
    spec.hidden_dims = cfg.get_int_list("embedding.hidden_dims", {});
    if (spec.hidden_dims.empty())
      throw ConfigError("config: embedding.hidden_dims is required for mlp");
  } else {
    throw ConfigError("config: embedding must be identity, linear, or mlp");
  }
  spec.validate();
  return spec;
}

TrainConfig load_train_config(ConfigMap& cfg, const Dataset& dataset, int workers) {
  TrainConfig tc;
  const std::string objective = cfg.get_string("objective");
  if (objective == "ml")
    tc.objective = TrainConfig::Objective::ml;
  else if (objective == "fixml")
    tc.objective = TrainConfig::Objective::fixml;
  else
    throw ConfigError("config: objective must be ml or fixml");
  tc.epochs = static_cast<int>(cfg.get_int("epochs", tc.epochs));
  tc.episodes_per_epoch =
      static_cast<int>(cfg.get_int("episodes_per_epoch", tc.episodes_per_epoch));
  tc.task_batch = static_cast<int>(cfg.get_int("task_batch", tc.task_batch));
  tc.lr_schedule = default_lr_schedule(tc.epochs, cfg.get_double("lr", 0.05));
  tc.momentum = cfg.get_double("momentum", tc.momentum);
  tc.seed = cfg.get_uint64("seed", 0);
  tc.eval_every = static_cast<int>(cfg.get_int("eval_every", tc.eval_every));
  tc.eval_episodes = static_cast<int>(cfg.get_int("eval_episodes", tc.eval_episodes));
  tc.task = load_task(cfg);
  tc.solver = load_solver(cfg);
  tc.embedding = load_embedding(cfg, dataset.dim());
  tc.workers = workers;
  tc.validate();
  return tc;
}

// The training pool seed is mandatory for fixed-support runs: silently
// defaulting it would hide the single most load-bearing input of the study.
SupportPool load_train_pool(ConfigMap& cfg, const Dataset& dataset, const TaskConfig& task) {
  if (!cfg.has("pool.seed"))
    throw ConfigError("config: pool.seed is required when objective = fixml");
  return sample_support_pool(dataset, task.k_shot, cfg.get_uint64("pool.seed", 0));
}

std::string run_dir_path(ConfigMap& cfg) {
  const std::string dir = cfg.get_path("run_dir");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run_dir " + dir + ": " + ec.message());
  return dir;
}

void write_pools_csv(const std::string& path,
                     const std::vector<const SupportPool*>& pools) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << "pool_id,class_id,indices\n";
  for (std::size_t p = 0; p < pools.size(); ++p) {
    for (int c = 0; c < pools[p]->n_classes(); ++c) {
      out << p << ',' << c << ',';
      const auto& idx = pools[p]->class_indices(c);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i) out << ';';
        out << idx[i];
      }
      out << '\n';
    }
  }
  if (!out.good()) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const std::string& config_path) {
  ConfigMap cfg = ConfigMap::load(config_path);
  const std::string run_dir = run_dir_path(cfg);
  const int workers = resolve_workers(cfg);

  const Dataset dataset = load_split(cfg, "dataset", SplitTag::train);
  const TrainConfig tc = load_train_config(cfg, dataset, workers);
  const bool fixml = tc.objective == TrainConfig::Objective::fixml;

  std::optional<SupportPool> pool;
  if (fixml) pool = load_train_pool(cfg, dataset, tc.task);

  const int extra_pools = static_cast<int>(cfg.get_int("extra_pools", 0));
  if (extra_pools < 0) throw ConfigError("config: extra_pools must be >= 0");
  if (extra_pools > 0 && !fixml)
    throw ConfigError("config: extra_pools requires objective = fixml");
  const std::uint64_t pools_seed = extra_pools > 0 ? cfg.get_uint64("pools.seed", 7) : 0;
  const bool save_snapshots = cfg.get_bool("save_snapshots", false);

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  auto [params, log] = train(dataset, pool ? &*pool : nullptr, tc);

  std::vector<const SupportPool*> pool_rows;
  if (pool) pool_rows.push_back(&*pool);

  MultiPoolTable table;
  if (extra_pools > 0) {
    table = multi_pool_trajectory(log.snapshots, dataset, *pool, extra_pools, tc.task,
                                  tc.solver, tc.eval_episodes, pools_seed, workers);
    for (std::size_t i = 0; i < log.records.size(); ++i) {
      auto& dst = log.records[i].pool_losses;
      dst.clear();
      for (int p = 0; p < extra_pools; ++p)
        dst.push_back(table.extra_losses[static_cast<std::size_t>(p)][i]);
    }
    for (const auto& sp : table.extra_pools) pool_rows.push_back(&sp);
  }

  log.write_csv(run_dir + "/trajectory.csv");
  save_checkpoint(params, run_dir + "/final.ckpt");
  write_pools_csv(run_dir + "/pools.csv", pool_rows);
  if (save_snapshots) {
    for (std::size_t i = 0; i < log.snapshots.size(); ++i)
      save_checkpoint(log.snapshots[i],
                      run_dir + "/snapshot_" + std::to_string(log.records[i].epoch) +
                          ".ckpt");
  }
  std::cout << "trained " << tc.epochs << " epochs; final train_loss = "
            << format_g17(log.records.back().train_loss)
            << ", ml_loss = " << format_g17(log.records.back().ml_loss) << "\n"
            << "wrote " << run_dir << "/{config.lock,trajectory.csv,final.ckpt,pools.csv}"
            << (save_snapshots ? " + snapshots" : "") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& config_path) {
  ConfigMap cfg = ConfigMap::load(config_path);
  const std::string run_dir = run_dir_path(cfg);
  const int workers = resolve_workers(cfg);

  const Dataset dataset = load_split(cfg, "dataset", SplitTag::train);
  const TaskConfig task = load_task(cfg);
  const HeadKind solver = load_solver(cfg);
  const EmbeddingSpec spec = load_embedding(cfg, dataset.dim());
  const std::string ckpt = cfg.get_path("checkpoint");
  const int n_episodes = static_cast<int>(cfg.get_int("n_episodes", 2000));
  const std::uint64_t seed = cfg.get_uint64("seed", 0);

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  const AlgorithmParams params = load_checkpoint(ckpt, spec);
  const LossEstimate est =
      ml_loss_estimate(params, dataset, task, solver, n_episodes, seed, workers);

  write_table_csv(run_dir + "/eval.csv",
                  {"loss_mean", "half_width_95", "accuracy_mean",
                   "accuracy_half_width_95", "n_episodes"},
                  {{est.mean, est.half_width_95, est.accuracy_mean,
                    est.accuracy_half_width_95, static_cast<double>(est.n_episodes)}});
  std::cout << "loss = " << format_g17(est.mean) << " +/- "
            << format_g17(est.half_width_95)
            << ", accuracy = " << format_g17(est.accuracy_mean) << " (" << est.n_episodes
            << " episodes)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose

int cmd_diagnose_interpolate(ConfigMap& cfg, const std::string& run_dir, int workers) {
  const Dataset train_ds = load_split(cfg, "dataset", SplitTag::train);
  const Dataset test_ds = load_split(cfg, "dataset.test", SplitTag::test);
  const TaskConfig task = load_task(cfg);
  const HeadKind solver = load_solver(cfg);
  const EmbeddingSpec spec = load_embedding(cfg, train_ds.dim());
  const std::string ckpt_fml = cfg.get_path("checkpoint_fml");
  const std::string ckpt_ml = cfg.get_path("checkpoint_ml");
  const int points = static_cast<int>(cfg.get_int("points", 25));
  const int n_episodes = static_cast<int>(cfg.get_int("n_episodes", 2000));
  const std::uint64_t seed = cfg.get_uint64("seed", 0);

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  const AlgorithmParams w_fml = load_checkpoint(ckpt_fml, spec);
  const AlgorithmParams w_ml = load_checkpoint(ckpt_ml, spec);

  EvalSpec train_eval{&train_ds, task, solver, n_episodes, derive_seed(seed, 0), workers};
  EvalSpec test_eval{&test_ds, task, solver, n_episodes, derive_seed(seed, 1), workers};
  const InterpolationCurve curve =
      interpolate_losses(w_fml, w_ml, interpolation_alphas(points), train_eval, test_eval);

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < curve.alphas.size(); ++i)
    rows.push_back({curve.alphas[i], curve.train_losses[i], curve.test_losses[i]});
  write_table_csv(run_dir + "/interpolation.csv", {"alpha", "train_loss", "test_loss"},
                  rows);
  svg_line_plot(run_dir + "/interpolation.svg", "loss along the segment between minima",
                "alpha", "episode loss", curve.alphas,
                {{"train", "blue", curve.train_losses},
                 {"test", "red", curve.test_losses}});
  std::cout << "interpolated " << curve.alphas.size() << " points; wrote " << run_dir
            << "/interpolation.{csv,svg}\n";
  return 0;
}

int cmd_diagnose_pools(ConfigMap& cfg, const std::string& run_dir, int workers) {
  const Dataset dataset = load_split(cfg, "dataset", SplitTag::train);
  const TaskConfig task = load_task(cfg);
  const HeadKind solver = load_solver(cfg);
  const EmbeddingSpec spec = load_embedding(cfg, dataset.dim());
  const std::vector<std::string> ckpt_paths = cfg.get_path_list("checkpoints");
  if (!cfg.has("pool.seed"))
    throw ConfigError("config: pool.seed identifies the training pool");
  const SupportPool base = sample_support_pool(dataset, task.k_shot,
                                               cfg.get_uint64("pool.seed", 0));
  const int n_extra = static_cast<int>(cfg.get_int("n_extra_pools", 10));
  const int n_episodes = static_cast<int>(cfg.get_int("n_episodes", 2000));
  const std::uint64_t seed = cfg.get_uint64("seed", 0);

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  std::vector<AlgorithmParams> checkpoints;
  for (const auto& p : ckpt_paths) checkpoints.push_back(load_checkpoint(p, spec));

  const MultiPoolTable table = multi_pool_trajectory(checkpoints, dataset, base, n_extra,
                                                     task, solver, n_episodes, seed,
                                                     workers);

  std::vector<std::string> columns = {"checkpoint", "fixed_pool_loss", "ml_loss",
                                      "ml_acc"};
  for (int p = 0; p < n_extra; ++p)
    columns.push_back("pool_" + std::to_string(p) + "_loss");
  std::vector<std::vector<double>> rows;
  std::vector<double> xs;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    std::vector<double> row = {static_cast<double>(i), table.base_losses[i],
                               table.ml_losses[i], table.ml_accs[i]};
    for (int p = 0; p < n_extra; ++p)
      row.push_back(table.extra_losses[static_cast<std::size_t>(p)][i]);
    rows.push_back(std::move(row));
    xs.push_back(static_cast<double>(i));
  }
  write_table_csv(run_dir + "/pools_trajectory.csv", columns, rows);

  std::vector<PlotSeries> series = {{"training pool", "blue", table.base_losses},
                                    {"fresh supports", "red", table.ml_losses}};
  for (int p = 0; p < n_extra; ++p)
    series.push_back({"pool " + std::to_string(p), "green",
                      table.extra_losses[static_cast<std::size_t>(p)]});
  svg_line_plot(run_dir + "/pools_trajectory.svg", "episode loss across support pools",
                "checkpoint", "episode loss", xs, series);

  std::vector<const SupportPool*> pool_rows = {&base};
  for (const auto& sp : table.extra_pools) pool_rows.push_back(&sp);
  write_pools_csv(run_dir + "/pools.csv", pool_rows);
  std::cout << "evaluated " << checkpoints.size() << " checkpoints on " << (1 + n_extra)
            << " pools; wrote " << run_dir << "/pools_trajectory.{csv,svg}\n";
  return 0;
}

int cmd_diagnose_tic(ConfigMap& cfg, const std::string& run_dir, int workers) {
  const Dataset dataset = load_split(cfg, "dataset", SplitTag::train);
  const bool with_gap = has_test_split(cfg);
  std::optional<Dataset> test_ds;
  if (with_gap) test_ds = load_split(cfg, "dataset.test", SplitTag::test);
  const TaskConfig task = load_task(cfg);
  const HeadKind solver = load_solver(cfg);
  const EmbeddingSpec spec = load_embedding(cfg, dataset.dim());
  const std::string ckpt = cfg.get_path("checkpoint");
  const int n_episodes = static_cast<int>(cfg.get_int("n_episodes", 2000));
  const std::uint64_t seed = cfg.get_uint64("seed", 0);

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  const AlgorithmParams params = load_checkpoint(ckpt, spec);
  TicReport rep = tic_ratio(params, dataset, task, solver, n_episodes, seed, workers);
  if (with_gap)
    rep.gen_gap = generalization_gap(params, dataset, *test_ds, task, solver, n_episodes,
                                     derive_seed(seed, 2), workers);

  write_table_csv(run_dir + "/tic.csv",
                  {"tr_c", "tr_f", "ratio", "n_samples", "train_loss", "gen_gap"},
                  {{rep.tr_c, rep.tr_f, rep.ratio, static_cast<double>(rep.n_samples),
                    rep.train_loss, rep.gen_gap}});
  std::cout << "tic ratio = " << format_g17(rep.ratio) << " (tr_c = "
            << format_g17(rep.tr_c) << ", tr_f = " << format_g17(rep.tr_f) << ")\n";
  return 0;
}

int cmd_diagnose_gap(ConfigMap& cfg, const std::string& run_dir, int workers) {
  const Dataset train_ds = load_split(cfg, "dataset", SplitTag::train);
  const Dataset test_ds = load_split(cfg, "dataset.test", SplitTag::test);
  const TaskConfig task = load_task(cfg);
  const HeadKind solver = load_solver(cfg);
  const EmbeddingSpec spec = load_embedding(cfg, train_ds.dim());
  const std::string ckpt = cfg.get_path("checkpoint");
  const int n_episodes = static_cast<int>(cfg.get_int("n_episodes", 2000));
  const std::uint64_t seed = cfg.get_uint64("seed", 0);
  const bool require_disjoint = cfg.get_bool("require_disjoint", true);

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  const AlgorithmParams params = load_checkpoint(ckpt, spec);
  const GapReport rep = generalization_gap_report(params, train_ds, test_ds, task, solver,
                                                  n_episodes, seed, workers,
                                                  require_disjoint);

  write_table_csv(run_dir + "/gap.csv",
                  {"train_loss", "train_half_width", "test_loss", "test_half_width",
                   "gap"},
                  {{rep.on_train.mean, rep.on_train.half_width_95, rep.on_test.mean,
                    rep.on_test.half_width_95, rep.gap}});
  std::cout << "gap = " << format_g17(rep.gap) << " (train " << format_g17(rep.on_train.mean)
            << ", test " << format_g17(rep.on_test.mean) << ")\n";
  return 0;
}

int cmd_diagnose_stability(ConfigMap& cfg, const std::string& run_dir, int workers) {
  const Dataset dataset = load_split(cfg, "dataset", SplitTag::train);
  TrainConfig tc = load_train_config(cfg, dataset, workers);
  const int n_perturbations = static_cast<int>(cfg.get_int("n_perturbations", 4));
  const int roster_tasks = static_cast<int>(cfg.get_int("roster_tasks", 0));
  const int episodes_per_task = static_cast<int>(cfg.get_int("episodes_per_task", 8));
  const int probe_episodes = static_cast<int>(cfg.get_int("probe_episodes", 32));
  const std::uint64_t seed = cfg.get_uint64("stability.seed", derive_seed(tc.seed, 17));

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  const StabilityReport rep = stability_estimate(dataset, tc, n_perturbations, seed,
                                                 roster_tasks, episodes_per_task,
                                                 probe_episodes);

  std::vector<std::vector<double>> rows;
  std::vector<double> xs;
  for (std::size_t i = 0; i < rep.per_perturbation.size(); ++i) {
    rows.push_back({static_cast<double>(i), rep.per_perturbation[i]});
    xs.push_back(static_cast<double>(i));
  }
  write_table_csv(run_dir + "/stability.csv", {"perturbation", "loss_diff"}, rows);
  write_table_csv(run_dir + "/stability_summary.csv", {"beta_hat", "n_perturbations"},
                  {{rep.beta_hat, static_cast<double>(n_perturbations)}});
  svg_line_plot(run_dir + "/stability.svg", "probe loss change per dropped task",
                "perturbation", "max |loss diff|", xs,
                {{"loss_diff", "green", rep.per_perturbation}});
  std::cout << "beta_hat = " << format_g17(rep.beta_hat) << " over " << n_perturbations
            << " perturbations (lower estimate)\n";
  return 0;
}

int cmd_diagnose(const std::string& which, const std::string& config_path) {
  ConfigMap cfg = ConfigMap::load(config_path);
  const std::string run_dir = run_dir_path(cfg);
  const int workers = resolve_workers(cfg);
  if (which == "interpolate") return cmd_diagnose_interpolate(cfg, run_dir, workers);
  if (which == "pools") return cmd_diagnose_pools(cfg, run_dir, workers);
  if (which == "tic") return cmd_diagnose_tic(cfg, run_dir, workers);
  if (which == "gap") return cmd_diagnose_gap(cfg, run_dir, workers);
  if (which == "stability") return cmd_diagnose_stability(cfg, run_dir, workers);
  throw ConfigError("diagnose: unknown kind '" + which +
                    "' (expected interpolate, pools, tic, gap, or stability)");
}

// ---------------------------------------------------------------------------
// oracle

TaskPopulation load_population(ConfigMap& cfg) {
  const int n_tasks = static_cast<int>(cfg.get_int("population.tasks"));
  if (n_tasks <= 0) throw ConfigError("config: population.tasks must be >= 1");
  TaskPopulation pop;
  for (int i = 0; i < n_tasks; ++i) {
    const std::string prefix = "population.task" + std::to_string(i) + ".";
    PopulationTask t;
    const auto theta = cfg.get_double_list(prefix + "theta");
    const auto sigma_diag = cfg.get_double_list(prefix + "sigma_diag");
    if (theta.size() != sigma_diag.size())
      throw ConfigError("config: " + prefix + "theta and sigma_diag sizes differ");
    const Eigen::Index p = static_cast<Eigen::Index>(theta.size());
    t.theta = Eigen::Map<const Vector>(theta.data(), p);
    t.sigma = Matrix::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j) t.sigma(j, j) = sigma_diag[static_cast<std::size_t>(j)];
    t.noise = cfg.get_double(prefix + "noise", 0.0);
    t.weight = cfg.get_double(prefix + "weight", 1.0 / n_tasks);
    pop.tasks.push_back(std::move(t));
  }
  pop.validate();
  return pop;
}

std::uint64_t population_hash(const TaskPopulation& pop) {
  std::uint64_t h = 0x706f70756c617465ULL;
  for (const auto& t : pop.tasks) {
    h = detail::hash_vector(h, t.theta);
    h = detail::hash_matrix(h, t.sigma);
    h = hash_combine(h, t.noise);
    h = hash_combine(h, t.weight);
  }
  return h;
}

int cmd_oracle(const std::string& config_path) {
  ConfigMap cfg = ConfigMap::load(config_path);
  const std::string run_dir = run_dir_path(cfg);
  resolve_workers(cfg);

  const TaskPopulation pop = load_population(cfg);
  const Eigen::Index p = pop.dim();
  const double alpha = cfg.get_double("alpha", 0.1);

  std::vector<double> gram_diag;
  if (cfg.has("support.diag"))
    gram_diag = cfg.get_double_list("support.diag");
  else
    gram_diag.assign(static_cast<std::size_t>(p), 1.0);
  if (gram_diag.size() != static_cast<std::size_t>(p))
    throw ConfigError("config: support.diag has the wrong dimension");
  cfg.record("support.diag", [&] {
    std::string s;
    for (std::size_t i = 0; i < gram_diag.size(); ++i)
      s += (i ? "," : "") + format_g17(gram_diag[i]);
    return s;
  }());
  Matrix x_f = Matrix::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(gram_diag[static_cast<std::size_t>(j)] > 0))
      throw ConfigError("config: support.diag entries must be > 0");
    x_f(j, j) = std::sqrt(gram_diag[static_cast<std::size_t>(j)]);
  }
  const FixedSupport support(x_f);

  const int n_support = static_cast<int>(cfg.get_int("n_support", 8));
  const int mc_budget = static_cast<int>(cfg.get_int("mc_budget", 200));
  const int emp_tasks = static_cast<int>(cfg.get_int("emp.tasks", 64));
  const int emp_n_query = static_cast<int>(cfg.get_int("emp.n_query", 32));
  const int m = static_cast<int>(cfg.get_int("m", 16));
  const int n_query = static_cast<int>(cfg.get_int("n_query", 1000));
  const int n_resamples = static_cast<int>(cfg.get_int("n_resamples", 200));
  const double kappa2 = cfg.get_double("kappa2", 1.0);
  const double delta = cfg.get_double("delta", 0.05);
  const double rho = cfg.get_double("rho", 0.05);
  const double epsilon = cfg.get_double("epsilon", 0.5);
  const std::uint64_t seed = cfg.get_uint64("seed", 0);

  cfg.reject_unconsumed();
  cfg.write_lock(run_dir + "/config.lock");

  const std::uint64_t pop_hash = population_hash(pop);
  std::uint64_t base = hash_combine(pop_hash, alpha);
  for (double g : gram_diag) base = hash_combine(base, g);

  std::vector<OracleRow> rows;
  auto vec_out = [](const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };

  // Population minimizers under the fixed support and under fresh supports.
  const Vector th_fml = theta_star_fml(alpha, support, pop);
  rows.push_back({"theta_star_fml", base, vec_out(th_fml)});

  const Vector th_ml = theta_star_ml(alpha, pop, n_support, mc_budget, seed);
  rows.push_back({"theta_star_ml",
                  hash_combine(hash_combine(base, static_cast<std::uint64_t>(n_support)),
                               static_cast<std::uint64_t>(mc_budget)),
                  vec_out(th_ml)});

  // Empirical minimizer over sampled task batches, with its gradient norm as a
  // stationarity certificate.
  {
    auto eng = make_engine(derive_seed(seed, 10));
    std::vector<TaskBatch> batches;
    for (int i = 0; i < emp_tasks; ++i) {
      const auto& t = pop.tasks[detail::sample_task_index(pop, eng)];
      const Matrix sqrtm = detail::matrix_sqrt_psd(t.sigma);
      TaskBatch b;
      b.x_s = detail::sample_gaussian_rows(sqrtm, n_support, eng);
      b.x_q = detail::sample_gaussian_rows(sqrtm, emp_n_query, eng);
      std::normal_distribution<double> unit(0.0, 1.0);
      b.y_s = b.x_s * t.theta;
      for (Eigen::Index r = 0; r < b.y_s.size(); ++r) b.y_s(r) += t.noise * unit(eng);
      b.y_q = b.x_q * t.theta;
      for (Eigen::Index r = 0; r < b.y_q.size(); ++r) b.y_q(r) += t.noise * unit(eng);
      batches.push_back(std::move(b));
    }
    const Vector th_hat = theta_hat_ml_empirical(batches, alpha);
    auto [value, grad] = ml_empirical_objective(batches, alpha, th_hat);
    (void)value;
    std::vector<double> out = vec_out(th_hat);
    out.push_back(grad.norm());
    rows.push_back({"theta_hat_ml_empirical",
                    hash_combine(base, static_cast<std::uint64_t>(emp_tasks)), out});
  }

  // Diagonal shortcut plus its defining invariance: the answer ignores the
  // (diagonal) support design entirely.
  {
    Vector mean_sigma = Vector::Zero(p);
    Vector mean_sigma_theta = Vector::Zero(p);
    for (const auto& t : pop.tasks) {
      mean_sigma += t.weight * t.sigma.diagonal();
      mean_sigma_theta += t.weight * (t.sigma.diagonal().cwiseProduct(t.theta));
    }
    Vector g0 = Eigen::Map<const Vector>(gram_diag.data(), p);
    const Vector th_diag = theta_star_diag(alpha, g0, mean_sigma, mean_sigma_theta);
    double max_dev = 0.0;
    auto eng = make_engine(derive_seed(seed, 11));
    std::uniform_real_distribution<double> unif(0.1, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
      Vector g(p);
      for (Eigen::Index j = 0; j < p; ++j) g(j) = unif(eng);
      const Vector th = theta_star_diag(alpha, g, mean_sigma, mean_sigma_theta);
      max_dev = std::max(max_dev, (th - th_diag).cwiseAbs().maxCoeff());
    }
    std::vector<double> out = vec_out(th_diag);
    out.push_back(max_dev);
    rows.push_back({"theta_star_diag", base, out});

    const Vector af = optimal_af(alpha, mean_sigma, kappa2);
    rows.push_back({"optimal_af", hash_combine(base, kappa2), vec_out(af)});
  }

  // Curvatures at the support-matched operating point.
  {
    const auto [h_fml, h_ml] = hessians(alpha, support, pop, n_support, mc_budget, seed);
    std::vector<double> out_fml(h_fml.data(), h_fml.data() + h_fml.size());
    std::vector<double> out_ml(h_ml.data(), h_ml.data() + h_ml.size());
    rows.push_back({"hessian_fml", base, out_fml});
    rows.push_back({"hessian_ml", base, out_ml});
  }

  // Concentration diagnostics for the m-task average.
  {
    const ConcentrationReport rep =
        concentration_report(pop, m, support, alpha, n_query, delta, rho, epsilon, seed);
    double mean_cov_err = 0.0;
    for (double v : rep.per_task_cov_errors) mean_cov_err += v;
    mean_cov_err /= static_cast<double>(rep.per_task_cov_errors.size());
    rows.push_back({"concentration", hash_combine(base, static_cast<std::uint64_t>(m)),
                    {static_cast<double>(rep.m), rep.mu_min, rep.l_max, rep.kappa_bound,
                     rep.variance_norm, rep.bernstein_deviation, rep.lambda_min_sum,
                     rep.b_norm_avg, rep.b_norm_max, rep.t1, rep.t2, rep.t3,
                     rep.sup_theta_dev, mean_cov_err, rep.chernoff_predicted_frequency}});

    const double freq = chernoff_empirical_frequency(pop, m, support, alpha, n_query,
                                                     epsilon, n_resamples, seed);
    rows.push_back({"chernoff_empirical",
                    hash_combine(base, static_cast<std::uint64_t>(n_resamples)),
                    {freq, rep.chernoff_predicted_frequency}});
  }

  write_oracle_csv(run_dir + "/oracle.csv", rows);
  std::cout << "wrote " << rows.size() << " oracle rows to " << run_dir << "/oracle.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// count-pools

int cmd_count_pools(int classes, int per_class, int k_shot, int n_way) {
  const double pools = count_support_pools_log10(classes, per_class, k_shot);
  const double reduction = count_reduction_factor_log10(per_class, k_shot, n_way);
  char line[64];
  std::snprintf(line, sizeof(line), "%.1f\n%.1f\n", pools, reduction);
  std::cout << line;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"episodic meta-learning with fixed support pools"};
  app.require_subcommand(1);

  std::string config_path;
  std::string diagnose_kind;
  int cp_classes = 0, cp_per_class = 0, cp_k_shot = 0, cp_n_way = 0;

  auto* train_cmd = app.add_subcommand("train", "train an episodic learner");
  train_cmd->add_option("config", config_path, "key = value config file")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("config", config_path, "key = value config file")->required();

  auto* diag_cmd = app.add_subcommand("diagnose", "generalization diagnostics");
  diag_cmd->add_option("kind", diagnose_kind,
                       "interpolate | pools | tic | gap | stability")
      ->required();
  diag_cmd->add_option("config", config_path, "key = value config file")->required();

  auto* oracle_cmd = app.add_subcommand("oracle", "closed-form regression references");
  oracle_cmd->add_option("config", config_path, "key = value config file")->required();

  auto* count_cmd = app.add_subcommand("count-pools", "log10 support-pool counts");
  count_cmd->add_option("classes", cp_classes, "number of classes")->required();
  count_cmd->add_option("per_class", cp_per_class, "examples per class")->required();
  count_cmd->add_option("k_shot", cp_k_shot, "support shots per class")->required();
  count_cmd->add_option("n_way", cp_n_way, "classes per episode")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(config_path);
    if (*eval_cmd) return cmd_eval(config_path);
    if (*diag_cmd) return cmd_diagnose(diagnose_kind, config_path);
    if (*oracle_cmd) return cmd_oracle(config_path);
    if (*count_cmd) return cmd_count_pools(cp_classes, cp_per_class, cp_k_shot, cp_n_way);
  } catch (const fixpool::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fixpool::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fixpool::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const fixpool::DegeneracyError& e) {
    std::cerr << "degenerate problem: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
