#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scrnn/graph.hpp"
#include "scrnn/nn.hpp"

namespace scrnn {

/// START and END occupy the two highest ids of every decoder vocabulary.
inline std::size_t start_token(std::size_t vocab) { return vocab - 2; }
inline std::size_t end_token(std::size_t vocab) { return vocab - 1; }

enum class BlockActivation { Tanh, Relu };

struct LSTMConfig {
  std::size_t input_size = 32;
  std::size_t hidden_size = 64;
  bool peepholes = false;
  BlockActivation block_activation = BlockActivation::Tanh;
};

/// Weights of one gate: pre-activation = W_h h + W_c c + W_x x + b.
struct GateParams {
  Parameter W_h;  // [H x H]
  Parameter W_c;  // [H x H], identically zero unless peepholes are enabled
  Parameter W_x;  // [H x D]
  Parameter b;    // [H]
};

enum Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kBlock = 3 };

struct LSTMParams {
  LSTMConfig config;
  std::array<GateParams, 4> gates;

  LSTMParams() = default;
  LSTMParams(const std::string& name, LSTMConfig cfg, Rng& rng) : config(cfg) {
    static constexpr const char* kGateNames[] = {"i", "f", "o", "g"};
    const std::size_t H = cfg.hidden_size, D = cfg.input_size;
    for (std::size_t k = 0; k < 4; ++k) {
      const std::string prefix = name + "." + kGateNames[k];
      gates[k].W_h = Parameter(prefix + ".W_h", uniform_tensor({H, H}, rng));
      gates[k].W_c = Parameter(prefix + ".W_c", cfg.peepholes ? uniform_tensor({H, H}, rng) : Tensor({H, H}));
      gates[k].W_x = Parameter(prefix + ".W_x", uniform_tensor({H, D}, rng));
      gates[k].b = Parameter(prefix + ".b", Tensor({H}));
    }
  }

  std::size_t hidden_size() const { return config.hidden_size; }
  std::size_t input_size() const { return config.input_size; }

  /// Trainable parameters; the peephole matrices are excluded when disabled.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& gp : gates) {
      out.push_back(&gp.W_h);
      if (config.peepholes) out.push_back(&gp.W_c);
      out.push_back(&gp.W_x);
      out.push_back(&gp.b);
    }
    return out;
  }
};

/// Row-batched hidden and cell state, each [B x H].
struct LSTMState {
  Tensor h;
  Tensor c;

  static LSTMState zeros(std::size_t hidden, std::size_t batch = 1) {
    return {Tensor({batch, hidden}), Tensor({batch, hidden})};
  }
};

struct LSTMStateNodes {
  NodeId h;
  NodeId c;
};

inline LSTMStateNodes state_constants(Graph& g, const LSTMState& s) { return {g.constant(s.h), g.constant(s.c)}; }

/// One forward step. x [B x D], prev.h / prev.c [B x H].
inline LSTMStateNodes lstm_cell(Graph& g, NodeId x, LSTMStateNodes prev, LSTMParams& params) {
  auto pre = [&](GateParams& gp) {
    NodeId acc = g.add(g.matmul(prev.h, g.parameter(gp.W_h), true), g.matmul(x, g.parameter(gp.W_x), true));
    if (params.config.peepholes) acc = g.add(acc, g.matmul(prev.c, g.parameter(gp.W_c), true));
    return g.add(acc, g.parameter(gp.b));
  };
  const NodeId i = g.sigmoid(pre(params.gates[kInput]));
  const NodeId f = g.sigmoid(pre(params.gates[kForget]));
  const NodeId o = g.sigmoid(pre(params.gates[kOutput]));
  const NodeId block_pre = pre(params.gates[kBlock]);
  const NodeId block = params.config.block_activation == BlockActivation::Relu ? g.relu(block_pre) : g.tanh(block_pre);
  const NodeId c = g.add(g.mul(f, prev.c), g.mul(i, block));
  const NodeId h = g.mul(o, g.tanh(c));
  return {h, c};
}

inline Tensor as_row_batch(const Tensor& t) { return t.rank() == 1 ? t.reshaped({1, t.dim(0)}) : t; }

/// Eager evaluation of a single step. Accepts x as [D] or [B x D].
inline LSTMState lstm_cell(const Tensor& x, const LSTMState& prev, LSTMParams& params) {
  Graph g;
  const Tensor xb = as_row_batch(x);
  const LSTMState pb{as_row_batch(prev.h), as_row_batch(prev.c)};
  if (xb.dim(1) != params.input_size() || pb.h.dim(1) != params.hidden_size() || pb.c.shape() != pb.h.shape() ||
      pb.h.dim(0) != xb.dim(0)) {
    throw std::invalid_argument("lstm_cell: input " + shape_str(x.shape()) + " / state " + shape_str(prev.h.shape()) +
                                " inconsistent with D=" + std::to_string(params.input_size()) +
                                ", H=" + std::to_string(params.hidden_size()));
  }
  auto next = lstm_cell(g, g.constant(xb), state_constants(g, pb), params);
  g.forward();
  return {g.value(next.h), g.value(next.c)};
}

/// Graph form of one decoder step: x = E onehot(prev), state advanced, logits = W h + b.
/// Returns logits [B x V] and replaces `state`.
inline NodeId decoder_logits_step(Graph& g, const std::vector<std::size_t>& prev_tokens, LSTMStateNodes& state,
                                  EmbeddingMatrix& embed, DenseLayer& out, LSTMParams& params) {
  const NodeId x = embed.lookup(g, prev_tokens);
  state = lstm_cell(g, x, state, params);
  return out.forward(g, state.h);
}

struct DecoderStepResult {
  Tensor y;  // [V] probabilities
  LSTMState state;
};

inline DecoderStepResult decoder_step(std::size_t prev_token, const LSTMState& prev, EmbeddingMatrix& embed,
                                      DenseLayer& out, LSTMParams& params) {
  if (prev_token >= embed.vocab()) {
    throw std::out_of_range("decoder_step: token " + std::to_string(prev_token) + " outside vocabulary of " +
                            std::to_string(embed.vocab()));
  }
  Graph g;
  LSTMStateNodes s = state_constants(g, {as_row_batch(prev.h), as_row_batch(prev.c)});
  const NodeId logits = decoder_logits_step(g, {prev_token}, s, embed, out, params);
  const NodeId y = g.softmax(logits);
  g.forward();
  const Tensor& yv = g.value(y);
  return {yv.reshaped({yv.size()}), {g.value(s.h), g.value(s.c)}};
}

/// Teacher-forced unroll of one sequence: step t consumes START (t = 0) or
/// targets[t-1] and emits the logits row for targets[t]. Returns [T x V].
inline NodeId unroll_teacher_forced(Graph& g, LSTMStateNodes start, const std::vector<std::size_t>& targets,
                                    EmbeddingMatrix& embed, DenseLayer& out, LSTMParams& params) {
  if (targets.empty()) throw std::invalid_argument("unroll_teacher_forced: empty target sequence");
  const std::size_t V = embed.vocab();
  std::vector<NodeId> rows;
  LSTMStateNodes state = start;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const std::size_t prev = t == 0 ? start_token(V) : targets[t - 1];
    rows.push_back(decoder_logits_step(g, {prev}, state, embed, out, params));
  }
  return rows.size() == 1 ? rows.front() : g.concat(rows);
}

inline Tensor unroll_teacher_forced(const LSTMState& start, const std::vector<std::size_t>& targets,
                                    EmbeddingMatrix& embed, DenseLayer& out, LSTMParams& params) {
  Graph g;
  const NodeId logits =
      unroll_teacher_forced(g, state_constants(g, {as_row_batch(start.h), as_row_batch(start.c)}), targets, embed, out,
                            params);
  g.forward();
  return g.value(logits);
}

/// Batched teacher-forced loss: sum over samples and real (unpadded) steps of
/// -log y_t[target_t]. `start` rows align with `targets`.
inline NodeId teacher_forced_nll(Graph& g, LSTMStateNodes start, const std::vector<std::vector<std::size_t>>& targets,
                                 EmbeddingMatrix& embed, DenseLayer& out, LSTMParams& params) {
  if (targets.empty()) throw std::invalid_argument("teacher_forced_nll: empty batch");
  const std::size_t V = embed.vocab();
  std::size_t T = 0;
  for (const auto& seq : targets) {
    if (seq.empty()) throw std::invalid_argument("teacher_forced_nll: empty target sequence");
    T = std::max(T, seq.size());
  }
  const std::size_t B = targets.size();
  LSTMStateNodes state = start;
  std::vector<NodeId> step_losses;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::size_t> prev(B), tgt(B);
    std::vector<double> weight(B);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& seq = targets[b];
      const bool live = t < seq.size();
      prev[b] = t == 0 ? start_token(V) : (t - 1 < seq.size() ? seq[t - 1] : end_token(V));
      tgt[b] = live ? seq[t] : end_token(V);
      weight[b] = live ? 1.0 : 0.0;
    }
    const NodeId logits = decoder_logits_step(g, prev, state, embed, out, params);
    step_losses.push_back(g.softmax_nll(logits, std::move(tgt), std::move(weight)));
  }
  NodeId total = step_losses.front();
  for (std::size_t t = 1; t < step_losses.size(); ++t) total = g.add(total, step_losses[t]);
  return total;
}

}  // namespace scrnn
