#pragma once

#include "fixpool/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fixpool {

// A structured subset of a dataset: exactly `shots` example indices per class,
// distinct and sorted within each class.
class SupportPool {
 public:
  SupportPool(int shots, std::vector<std::vector<int>> indices)
      : shots_(shots), indices_(std::move(indices)) {
    if (shots_ <= 0) throw DimensionError("SupportPool: shots must be positive");
    for (auto& cls : indices_) {
      if (static_cast<int>(cls.size()) != shots_)
        throw DimensionError("SupportPool: class entry must hold exactly k indices");
      std::sort(cls.begin(), cls.end());
      for (std::size_t i = 0; i + 1 < cls.size(); ++i)
        if (cls[i] == cls[i + 1])
          throw DimensionError("SupportPool: duplicate index within class");
      if (!cls.empty() && cls.front() < 0)
        throw DimensionError("SupportPool: negative index");
    }
  }

  int shots() const { return shots_; }
  int n_classes() const { return static_cast<int>(indices_.size()); }
  const std::vector<int>& class_indices(int cls) const { return indices_[cls]; }

  bool operator==(const SupportPool& other) const {
    return shots_ == other.shots_ && indices_ == other.indices_;
  }

 private:
  int shots_;
  std::vector<std::vector<int>> indices_;
};

// Uniform k-subset per class, independent across classes.
inline SupportPool sample_support_pool(const Dataset& dataset, int k,
                                       std::uint64_t seed) {
  if (k <= 0) throw DimensionError("sample_support_pool: k must be positive");
  if (k > dataset.per_class())
    throw DimensionError("sample_support_pool: k exceeds per-class budget");

  auto engine = make_engine(seed);
  std::vector<int> all(dataset.per_class());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::vector<int>> indices(dataset.n_classes());
  for (int c = 0; c < dataset.n_classes(); ++c) {
    std::vector<int> picked;
    picked.reserve(k);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), k, engine);
    indices[c] = std::move(picked);
  }
  return SupportPool(k, std::move(indices));
}

// n_classes * log10 C(per_class, k), evaluated through log-gamma so huge pool
// collections never overflow.
inline double count_support_pools_log10(int n_classes, int per_class, int k) {
  if (n_classes <= 0 || per_class <= 0 || k <= 0)
    throw DimensionError("count_support_pools_log10: counts must be positive");
  if (k > per_class)
    throw DimensionError("count_support_pools_log10: k exceeds per_class");
  const double log_choose = std::lgamma(per_class + 1.0) - std::lgamma(k + 1.0) -
                            std::lgamma(per_class - k + 1.0);
  return n_classes * log_choose / std::log(10.0);
}

// n_way * log10 C(per_class, k): the shrinkage in distinct support sets an
// n_way-class task can see once the pool is frozen.
inline double count_reduction_factor_log10(int per_class, int k, int n_way) {
  return count_support_pools_log10(n_way, per_class, k);
}

}  // namespace fixpool
