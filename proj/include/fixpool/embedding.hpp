#pragma once

#include "fixpool/core.hpp"

#include <utility>
#include <vector>

namespace fixpool {

// Feature extractor shapes. identity passes inputs through, linear is a
// single affine map, mlp stacks tanh hidden layers under a linear output.
struct EmbeddingSpec {
  enum class Kind { identity, linear, mlp };

  Kind kind = Kind::identity;
  int input_dim = 0;
  std::vector<int> hidden_dims;  // mlp only
  int output_dim = 0;

  bool operator==(const EmbeddingSpec&) const = default;

  void validate() const {
    if (input_dim <= 0 || output_dim <= 0)
      throw DimensionError("EmbeddingSpec: dims must be positive");
    if (kind == Kind::identity && output_dim != input_dim)
      throw DimensionError("EmbeddingSpec: identity requires output_dim == input_dim");
    if (kind == Kind::mlp) {
      for (int h : hidden_dims)
        if (h <= 0) throw DimensionError("EmbeddingSpec: hidden dims must be positive");
    }
    if (kind != Kind::mlp && !hidden_dims.empty())
      throw DimensionError("EmbeddingSpec: hidden dims only valid for mlp");
  }

  // Affine layers as (fan_in, fan_out), in application order.
  std::vector<std::pair<int, int>> layers() const {
    std::vector<std::pair<int, int>> out;
    switch (kind) {
      case Kind::identity:
        break;
      case Kind::linear:
        out.emplace_back(input_dim, output_dim);
        break;
      case Kind::mlp: {
        int prev = input_dim;
        for (int h : hidden_dims) {
          out.emplace_back(prev, h);
          prev = h;
        }
        out.emplace_back(prev, output_dim);
        break;
      }
    }
    return out;
  }

  Eigen::Index param_count() const {
    Eigen::Index d = 0;
    for (auto [in, out] : layers()) d += static_cast<Eigen::Index>(out) * in + out;
    return d;
  }
};

// Flat parameter vector plus the layer-shape descriptor that gives it meaning.
// Layout per layer: weight matrix (out x in, column-major), then bias.
struct AlgorithmParams {
  Vector w;
  EmbeddingSpec spec;

  void validate() const {
    spec.validate();
    if (w.size() != spec.param_count())
      throw DimensionError("AlgorithmParams: parameter vector length mismatch");
  }
};

namespace detail {

struct LayerView {
  Eigen::Map<const Matrix> weight;
  Eigen::Map<const Vector> bias;
};

struct MutableLayerView {
  Eigen::Map<Matrix> weight;
  Eigen::Map<Vector> bias;
};

inline LayerView layer_view(const Vector& w, Eigen::Index offset, int in, int out) {
  return {Eigen::Map<const Matrix>(w.data() + offset, out, in),
          Eigen::Map<const Vector>(w.data() + offset + static_cast<Eigen::Index>(out) * in,
                                   out)};
}

inline MutableLayerView layer_view(Vector& w, Eigen::Index offset, int in, int out) {
  return {Eigen::Map<Matrix>(w.data() + offset, out, in),
          Eigen::Map<Vector>(w.data() + offset + static_cast<Eigen::Index>(out) * in,
                             out)};
}

}  // namespace detail

// Cached forward pass over a batch (rows are examples). acts[0] is the input,
// acts[l+1] the output of layer l after its activation.
struct EmbeddingForward {
  std::vector<Matrix> acts;

  const Matrix& output() const { return acts.back(); }
};

inline EmbeddingForward embed_batch(const AlgorithmParams& params, const Matrix& inputs) {
  params.validate();
  if (inputs.cols() != params.spec.input_dim)
    throw DimensionError("embed_batch: input dimension mismatch");

  EmbeddingForward fwd;
  fwd.acts.push_back(inputs);
  const auto layers = params.spec.layers();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto [in, out] = layers[l];
    auto view = detail::layer_view(params.w, offset, in, out);
    Matrix z = fwd.acts.back() * view.weight.transpose();
    z.rowwise() += view.bias.transpose();
    const bool hidden = (params.spec.kind == EmbeddingSpec::Kind::mlp) &&
                        (l + 1 < layers.size());
    if (hidden) z = z.array().tanh();
    fwd.acts.push_back(std::move(z));
    offset += static_cast<Eigen::Index>(out) * in + out;
  }
  return fwd;
}

// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
inline void embed_batch_backward(const AlgorithmParams& params,
                                 const EmbeddingForward& fwd, const Matrix& d_output,
                                 Vector& grad) {
  const auto layers = params.spec.layers();
  if (grad.size() != params.w.size())
    throw DimensionError("embed_batch_backward: grad size mismatch");
  if (layers.empty()) return;  // identity has no parameters

  std::vector<Eigen::Index> offsets(layers.size());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = offset;
    offset += static_cast<Eigen::Index>(layers[l].second) * layers[l].first +
              layers[l].second;
  }

  Matrix dz = d_output;
  for (std::size_t li = layers.size(); li-- > 0;) {
    auto [in, out] = layers[li];
    const bool hidden = (params.spec.kind == EmbeddingSpec::Kind::mlp) &&
                        (li + 1 < layers.size());
    if (hidden) {
      // acts[li+1] holds tanh(z); d tanh = 1 - tanh^2.
      dz = dz.cwiseProduct(
          (1.0 - fwd.acts[li + 1].array().square()).matrix());
    }
    auto view = detail::layer_view(grad, offsets[li], in, out);
    view.weight += dz.transpose() * fwd.acts[li];
    view.bias += dz.colwise().sum().transpose();
    if (li > 0) {
      auto pview = detail::layer_view(params.w, offsets[li], in, out);
      dz = dz * pview.weight;
    }
  }
}

// Single-vector convenience wrapper.
inline Vector embed(const AlgorithmParams& params, const Vector& x) {
  Matrix batch(1, x.size());
  batch.row(0) = x.transpose();
  return embed_batch(params, batch).output().row(0).transpose();
}

}  // namespace fixpool
