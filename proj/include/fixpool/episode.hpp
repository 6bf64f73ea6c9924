#pragma once

#include "fixpool/pool.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

namespace fixpool {

struct TaskConfig {
  int n_way = 5;
  int k_shot = 1;
  int q_query = 1;

  void validate(const Dataset& dataset) const {
    if (n_way <= 0 || k_shot <= 0 || q_query <= 0)
      throw DimensionError("TaskConfig: counts must be positive");
    if (n_way > dataset.n_classes())
      throw DimensionError("TaskConfig: n_way exceeds class count");
    if (k_shot + q_query > dataset.per_class())
      throw DimensionError("TaskConfig: k_shot + q_query exceeds per-class budget");
  }
};

// One few-shot task: a class subset, its support examples, and its query
// examples. Labels are local (0..n_way-1), ordered as `classes`.
struct Episode {
  std::vector<int> classes;                         // global class ids, ascending
  std::vector<std::pair<Vector, int>> support;      // (features, local label)
  std::vector<std::pair<Vector, int>> query;
};

namespace detail {

// Uniform n-subset of 0..total-1, returned ascending.
inline std::vector<int> sample_index_subset(int total, int n, std::mt19937_64& engine) {
  std::vector<int> all(total);
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> picked;
  picked.reserve(n);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), n, engine);
  return picked;
}

// Uniform n-subset of `candidates` (already ascending stays ascending).
inline std::vector<int> sample_from_candidates(const std::vector<int>& candidates,
                                               int n, std::mt19937_64& engine) {
  std::vector<int> picked;
  picked.reserve(n);
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(picked), n,
              engine);
  return picked;
}

}  // namespace detail

// Standard episodic sampler: uniform class subset, then per class k_shot
// support and q_query query indices drawn without replacement and disjoint.
inline Episode sample_episode_ml(const Dataset& dataset, const TaskConfig& cfg,
                                 std::uint64_t seed) {
  cfg.validate(dataset);
  auto engine = make_engine(seed);

  Episode ep;
  ep.classes = detail::sample_index_subset(dataset.n_classes(), cfg.n_way, engine);
  for (int local = 0; local < cfg.n_way; ++local) {
    const int cls = ep.classes[local];
    auto sup = detail::sample_index_subset(dataset.per_class(), cfg.k_shot, engine);
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
    auto q = detail::sample_from_candidates(complement, cfg.q_query, engine);
    for (int idx : q) ep.query.emplace_back(dataset.example(cls, idx), local);
  }
  return ep;
}

// Pool-restricted sampler: support is exactly the pool's examples for the
// sampled classes; queries are drawn from the complement of the pool.
inline Episode sample_episode_from_pool(const Dataset& dataset, const SupportPool& pool,
                                        const TaskConfig& cfg, std::uint64_t seed) {
  cfg.validate(dataset);
  if (pool.shots() != cfg.k_shot)
    throw DimensionError("sample_episode_from_pool: pool shots != cfg.k_shot");
  if (pool.n_classes() != dataset.n_classes())
    throw DimensionError("sample_episode_from_pool: pool class count mismatch");
  if (cfg.k_shot + cfg.q_query > dataset.per_class())
    throw DimensionError("sample_episode_from_pool: query budget exceeded");

  auto engine = make_engine(seed);
  Episode ep;
  ep.classes = detail::sample_index_subset(dataset.n_classes(), cfg.n_way, engine);
  for (int local = 0; local < cfg.n_way; ++local) {
    const int cls = ep.classes[local];
    const auto& pool_idx = pool.class_indices(cls);
    for (int idx : pool_idx) ep.support.emplace_back(dataset.example(cls, idx), local);

    std::vector<int> complement;
    complement.reserve(dataset.per_class() - pool.shots());
    std::size_t p = 0;
    for (int i = 0; i < dataset.per_class(); ++i) {
      if (p < pool_idx.size() && pool_idx[p] == i) {
        ++p;
        continue;
      }
      complement.push_back(i);
    }
    auto q = detail::sample_from_candidates(complement, cfg.q_query, engine);
    for (int idx : q) ep.query.emplace_back(dataset.example(cls, idx), local);
  }
  return ep;
}

}  // namespace fixpool
