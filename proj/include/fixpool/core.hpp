#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fixpool {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error taxonomy shared across the library. The CLI maps these onto its
// exit codes (config=2, io=3, degeneracy=4).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegeneracyError : std::runtime_error {
  explicit DegeneracyError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// splitmix64 finalizer; the basis of the seed-splitting rule below.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed-splitting rule: stream k of a root seed is splitmix64 applied to the
// root advanced k+1 times. Independent streams let parallel and serial
// evaluation orders produce identical results.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(root + (stream + 1) * 0x9e3779b97f4a7c15ULL);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

// Fixed-topology pairwise summation. The reduction tree depends only on the
// element count, so sums are bit-identical no matter how many workers filled
// the buffer.
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = xs[0];
    for (std::size_t i = 1; i < n; ++i) s += xs[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_mean(std::span<const double> xs) {
  if (xs.empty()) throw DimensionError("pairwise_mean: empty input");
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

// Pairwise reduction of equal-length vectors, same fixed topology.
inline Vector pairwise_sum_vectors(std::span<const Vector> xs) {
  const std::size_t n = xs.size();
  if (n == 0) throw DimensionError("pairwise_sum_vectors: empty input");
  if (n <= 4) {
    Vector s = xs[0];
    for (std::size_t i = 1; i < n; ++i) s += xs[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_vectors(xs.subspan(0, half)) +
         pairwise_sum_vectors(xs.subspan(half));
}

// Shortest round-trippable decimal rendering used by every CSV writer.
inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

// Order-sensitive hash mixing for fingerprinting operation inputs.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline std::uint64_t hash_combine(std::uint64_t h, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  return hash_combine(h, bits);
}

inline int default_workers() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) across `workers` threads with static chunking.
// fn must write only to per-index slots; the caller owns reduction order.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers < 1) workers = 1;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  const std::size_t chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace fixpool
