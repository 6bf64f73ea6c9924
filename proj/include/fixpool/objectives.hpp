#pragma once

#include "fixpool/core.hpp"
#include "fixpool/dataset.hpp"
#include "fixpool/embedding.hpp"
#include "fixpool/episode.hpp"
#include "fixpool/heads.hpp"
#include "fixpool/pool.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace fixpool {

inline Matrix one_hot(const std::vector<int>& labels, int n_way) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), n_way);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_way)
      throw DimensionError("one_hot: label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

struct EpisodeResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

namespace detail {

inline Matrix stack_examples(const std::vector<std::pair<Vector, int>>& items) {
  if (items.empty()) throw DimensionError("stack_examples: empty episode side");
  Matrix x(static_cast<Eigen::Index>(items.size()), items.front().first.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = items[i].first.transpose();
  return x;
}

inline std::vector<int> stack_labels(const std::vector<std::pair<Vector, int>>& items) {
  std::vector<int> y(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) y[i] = items[i].second;
  return y;
}

// Mean cross-entropy over rows plus accuracy with ties broken toward the
// lowest class index. d_logits, when requested, is (softmax - onehot) / n_q.
inline EpisodeResult softmax_xent(const Matrix& logits, const std::vector<int>& labels,
                                  Matrix* d_logits) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DimensionError("softmax_xent: label count mismatch");
  if (d_logits) d_logits->resize(n, k);

  double loss = 0.0;
  int correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd shifted = logits.row(i).array() - mx;
    Eigen::RowVectorXd ex = shifted.array().exp();
    const double denom = ex.sum();
    loss += std::log(denom) - shifted(labels[i]);

    int arg = 0;
    for (Eigen::Index c = 1; c < k; ++c)
      if (logits(i, c) > logits(i, arg)) arg = static_cast<int>(c);
    if (arg == labels[i]) ++correct;

    if (d_logits) {
      d_logits->row(i) = ex / denom;
      (*d_logits)(i, labels[i]) -= 1.0;
    }
  }
  if (d_logits) *d_logits /= static_cast<double>(n);
  return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

inline Matrix head_logits(const AlgorithmParams& params, const Episode& episode,
                          const HeadKind& head, EmbeddingForward* fwd_s,
                          EmbeddingForward* fwd_q, RidgeSolution* ridge,
                          Matrix* support_x, std::vector<int>* support_y) {
  Matrix xs = stack_examples(episode.support);
  Matrix xq = stack_examples(episode.query);
  std::vector<int> ys = stack_labels(episode.support);
  const int n_way = static_cast<int>(episode.classes.size());

  EmbeddingForward local_s, local_q;
  EmbeddingForward& fs = fwd_s ? *fwd_s : local_s;
  EmbeddingForward& fq = fwd_q ? *fwd_q : local_q;
  fs = embed_batch(params, xs);
  fq = embed_batch(params, xq);

  Matrix logits;
  if (head.type == HeadKind::Type::protonet) {
    logits = protonet_logits(fs.output(), ys, n_way, fq.output());
  } else {
    logits = ridge_logits(fs.output(), one_hot(ys, n_way), fq.output(),
                          head.ridge_lambda, ridge);
  }
  if (support_x) *support_x = std::move(xs);
  if (support_y) *support_y = std::move(ys);
  return logits;
}

}  // namespace detail

inline EpisodeResult episode_loss(const AlgorithmParams& params, const Episode& episode,
                                  const HeadKind& head) {
  Matrix logits = detail::head_logits(params, episode, head, nullptr, nullptr,
                                      nullptr, nullptr, nullptr);
  return detail::softmax_xent(logits, detail::stack_labels(episode.query), nullptr);
}

// Posterior class probabilities for each query example under the current
// parameters; used by callers that resample labels from the model itself.
inline Matrix episode_query_probs(const AlgorithmParams& params, const Episode& episode,
                                  const HeadKind& head) {
  Matrix logits = detail::head_logits(params, episode, head, nullptr, nullptr,
                                      nullptr, nullptr, nullptr);
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::RowVectorXd ex = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    probs.row(i) = ex / ex.sum();
  }
  return probs;
}

// Analytic gradient of the episode loss w.r.t. the flat parameter vector,
// evaluated against an arbitrary query labeling (normally the episode's own).
inline EpisodeResult episode_grad_with_labels(const AlgorithmParams& params,
                                              const Episode& episode, const HeadKind& head,
                                              const std::vector<int>& query_labels,
                                              Vector& grad) {
  EmbeddingForward fwd_s, fwd_q;
  RidgeSolution ridge;
  std::vector<int> ys;
  Matrix logits =
      detail::head_logits(params, episode, head, &fwd_s, &fwd_q, &ridge, nullptr, &ys);

  Matrix d_logits;
  EpisodeResult res = detail::softmax_xent(logits, query_labels, &d_logits);

  const int n_way = static_cast<int>(episode.classes.size());
  Matrix d_support, d_query;
  if (head.type == HeadKind::Type::protonet) {
    protonet_backward(fwd_s.output(), ys, n_way, fwd_q.output(), d_logits, d_support,
                      d_query);
  } else {
    ridge_backward(ridge, d_logits, d_support, d_query);
  }

  grad = Vector::Zero(params.w.size());
  embed_batch_backward(params, fwd_s, d_support, grad);
  embed_batch_backward(params, fwd_q, d_query, grad);
  return res;
}

inline EpisodeResult episode_grad(const AlgorithmParams& params, const Episode& episode,
                                  const HeadKind& head, Vector& grad) {
  return episode_grad_with_labels(params, episode, head,
                                  detail::stack_labels(episode.query), grad);
}

// Monte-Carlo estimate of an episodic objective. half_width_95 uses the
// normal approximation with the unbiased standard deviation.
struct LossEstimate {
  double mean = 0.0;
  double half_width_95 = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_half_width_95 = 0.0;
  int n_episodes = 0;
};

namespace detail {

template <typename SampleEpisodeFn>
LossEstimate estimate_objective(const AlgorithmParams& params, const HeadKind& head,
                                int n_episodes, std::uint64_t seed, int workers,
                                SampleEpisodeFn&& sample_episode) {
  if (n_episodes <= 0) throw DimensionError("estimate_objective: n_episodes must be > 0");
  std::vector<double> losses(static_cast<std::size_t>(n_episodes));
  std::vector<double> accs(static_cast<std::size_t>(n_episodes));
  parallel_for(static_cast<std::size_t>(n_episodes), workers, [&](std::size_t i) {
    Episode ep = sample_episode(derive_seed(seed, static_cast<std::uint64_t>(i)));
    EpisodeResult r = episode_loss(params, ep, head);
    losses[i] = r.loss;
    accs[i] = r.accuracy;
  });

  LossEstimate est;
  est.n_episodes = n_episodes;
  est.mean = pairwise_mean(losses);
  est.accuracy_mean = pairwise_mean(accs);
  if (n_episodes > 1) {
    std::vector<double> sq(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
      const double d = losses[i] - est.mean;
      sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(n_episodes - 1);
    est.half_width_95 = 1.96 * std::sqrt(var / static_cast<double>(n_episodes));
    for (std::size_t i = 0; i < accs.size(); ++i) {
      const double d = accs[i] - est.accuracy_mean;
      sq[i] = d * d;
    }
    const double acc_var = pairwise_sum(sq) / static_cast<double>(n_episodes - 1);
    est.accuracy_half_width_95 = 1.96 * std::sqrt(acc_var / static_cast<double>(n_episodes));
  }
  return est;
}

}  // namespace detail

// Fresh support and query per episode.
inline LossEstimate ml_loss_estimate(const AlgorithmParams& params, const Dataset& dataset,
                                     const TaskConfig& cfg, const HeadKind& head,
                                     int n_episodes, std::uint64_t seed,
                                     int workers = default_workers()) {
  return detail::estimate_objective(params, head, n_episodes, seed, workers,
                                    [&](std::uint64_t s) {
                                      return sample_episode_ml(dataset, cfg, s);
                                    });
}

// Supports pinned to one pool; queries drawn from the complement.
inline LossEstimate fixml_loss_estimate(const AlgorithmParams& params,
                                        const Dataset& dataset, const SupportPool& pool,
                                        const TaskConfig& cfg, const HeadKind& head,
                                        int n_episodes, std::uint64_t seed,
                                        int workers = default_workers()) {
  return detail::estimate_objective(params, head, n_episodes, seed, workers,
                                    [&](std::uint64_t s) {
                                      return sample_episode_from_pool(dataset, pool, cfg, s);
                                    });
}

}  // namespace fixpool
