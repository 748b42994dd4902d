#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/graph.hpp"

namespace scrnn {

using Rng = std::mt19937_64;

/// Weights are drawn uniformly from [-kInitRange, kInitRange]; biases start at zero.
inline constexpr double kInitRange = 0.08;

inline Tensor uniform_tensor(Shape shape, Rng& rng, double range = kInitRange) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-range, range);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

/// Affine map y = x W^T + b on row-batched input x [B x in].
struct DenseLayer {
  Parameter W;  // [out x in]
  Parameter b;  // [out]

  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : W(name + ".W", uniform_tensor({out, in}, rng)), b(name + ".b", Tensor({out})) {}

  std::size_t in_features() const { return W.value.dim(1); }
  std::size_t out_features() const { return W.value.dim(0); }

  NodeId forward(Graph& g, NodeId x) {
    return g.add(g.matmul(x, g.parameter(W), /*transpose_b=*/true), g.parameter(b));
  }

  std::vector<Parameter*> parameters() { return {&W, &b}; }
};

struct Conv2DLayer {
  Parameter kernels;  // [out-ch x in-ch x kh x kw]
  Parameter b;        // [out-ch]

  Conv2DLayer() = default;
  Conv2DLayer(const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
              Rng& rng)
      : kernels(name + ".kernels", uniform_tensor({out_ch, in_ch, kh, kw}, rng)), b(name + ".b", Tensor({out_ch})) {
    if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv kernel sizes must be odd");
  }

  NodeId forward(Graph& g, NodeId x) { return g.conv2d(x, g.parameter(kernels), g.parameter(b)); }

  std::vector<Parameter*> parameters() { return {&kernels, &b}; }
};

/// Token embedding E [embed-dim x vocab]; lookup selects columns.
struct EmbeddingMatrix {
  Parameter E;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(const std::string& name, std::size_t dim, std::size_t vocab, Rng& rng)
      : E(name + ".E", uniform_tensor({dim, vocab}, rng)) {}

  std::size_t dim() const { return E.value.dim(0); }
  std::size_t vocab() const { return E.value.dim(1); }

  /// Rows of the result are E * onehot(id) for each id.
  NodeId lookup(Graph& g, std::vector<std::size_t> ids) {
    for (auto id : ids) {
      if (id >= vocab()) {
        throw std::out_of_range("token " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab()));
      }
    }
    return g.embed(g.parameter(E), std::move(ids));
  }

  std::vector<Parameter*> parameters() { return {&E}; }
};

inline void check_binary(const Tensor& s) {
  for (double v : s.values()) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("concept targets must be 0 or 1");
  }
}

/// Negated Bernoulli log-likelihood summed over all concepts (and batch rows).
inline NodeId sigmoid_ce_loss(Graph& g, NodeId s_hat, const Tensor& s) {
  check_binary(s);
  return g.sigmoid_cross_entropy(s_hat, s);
}

inline double sigmoid_ce_loss(const Tensor& s, const Tensor& s_hat) {
  if (s.size() != s_hat.size()) {
    throw std::invalid_argument("sigmoid_ce_loss: " + std::to_string(s.size()) + " targets vs " +
                                std::to_string(s_hat.size()) + " predictions");
  }
  Graph g;
  sigmoid_ce_loss(g, g.constant(s_hat.reshaped(s.shape())), s);
  return g.forward().item();
}

/// Sum over rows of -log softmax(logits_t)[targets_t].
inline NodeId softmax_nll_sequence(Graph& g, NodeId logits, std::vector<std::size_t> targets,
                                   std::vector<double> weights = {}) {
  return g.softmax_nll(logits, std::move(targets), std::move(weights));
}

inline double softmax_nll_sequence(const Tensor& logits, const std::vector<std::size_t>& targets) {
  Graph g;
  softmax_nll_sequence(g, g.constant(logits), targets);
  return g.forward().item();
}

struct RMSPropConfig {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
};

struct RMSPropState {
  RMSPropConfig config;
  std::vector<Tensor> mean_square;  // one per parameter, created on the first step
};

/// ms <- decay ms + (1 - decay) g^2;  p <- p - lr g / sqrt(ms + eps).
inline void rmsprop_step(std::span<Parameter* const> params, RMSPropState& state) {
  if (state.mean_square.empty()) {
    for (const Parameter* p : params) state.mean_square.emplace_back(p->value.shape());
  }
  if (state.mean_square.size() != params.size()) {
    throw std::invalid_argument("optimiser state tracks " + std::to_string(state.mean_square.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  const auto& c = state.config;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& ms = state.mean_square[k];
    if (ms.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw std::invalid_argument("optimiser shape mismatch on " + p.name);
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      ms[j] = c.decay * ms[j] + (1.0 - c.decay) * g * g;
      p.value[j] -= c.learning_rate * g / std::sqrt(ms[j] + c.epsilon);
    }
  }
}

inline void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace scrnn
