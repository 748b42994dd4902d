#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/graph.hpp"
#include "scrnn/lstm.hpp"
#include "scrnn/nn.hpp"
#include "scrnn/training_data.hpp"
#include "scrnn/unary.hpp"

namespace scrnn {

/// What the decoder is conditioned on.
enum class InterfaceVariant {
  SemanticPrediction,       // s_hat, supervised by L_u (the main model)
  FeatureDeeplySupervised,  // penultimate CNN features; L_u still trains a head on them
  FeatureUnsupervised,      // penultimate CNN features; no L_u at all
};

inline std::string variant_name(InterfaceVariant v) {
  switch (v) {
    case InterfaceVariant::SemanticPrediction: return "semantic";
    case InterfaceVariant::FeatureDeeplySupervised: return "feature-deep";
    case InterfaceVariant::FeatureUnsupervised: return "feature-plain";
  }
  return "?";
}

inline InterfaceVariant parse_variant(const std::string& s) {
  if (s == "semantic") return InterfaceVariant::SemanticPrediction;
  if (s == "feature-deep") return InterfaceVariant::FeatureDeeplySupervised;
  if (s == "feature-plain") return InterfaceVariant::FeatureUnsupervised;
  throw std::invalid_argument("unknown interface variant '" + s + "'");
}

struct ModelConfig {
  UnaryConfig unary{};
  std::size_t embed_dim = 32;
  std::size_t hidden = 64;
  bool peepholes = false;
  BlockActivation block_activation = BlockActivation::Tanh;
  std::size_t vocab_size = 14;  // decoder vocabulary including START/END
  std::size_t num_tags = 0;     // > 0 adds the side-information MLP
  InterfaceVariant variant = InterfaceVariant::SemanticPrediction;
};

struct SCRModel {
  ModelConfig config;
  ConceptPredictor unary;
  std::optional<SideInfoMLP> side;
  DenseLayer init_proj;
  LSTMParams lstm;
  EmbeddingMatrix embed;
  DenseLayer out;

  SCRModel() = default;
  SCRModel(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    if (cfg.vocab_size < 3) throw std::invalid_argument("decoder vocabulary needs at least one label plus START/END");
    Rng rng(seed);
    unary = ConceptPredictor("unary", cfg.unary, rng);
    if (cfg.num_tags > 0) side.emplace("side", cfg.num_tags, cfg.unary.num_concepts, rng);
    init_proj = DenseLayer("init_proj", interface_width(), cfg.hidden, rng);
    lstm = LSTMParams("lstm", LSTMConfig{cfg.embed_dim, cfg.hidden, cfg.peepholes, cfg.block_activation}, rng);
    embed = EmbeddingMatrix("embed", cfg.embed_dim, cfg.vocab_size, rng);
    out = DenseLayer("out", cfg.hidden, cfg.vocab_size, rng);
  }

  InterfaceVariant variant() const { return config.variant; }
  bool semantic() const { return config.variant == InterfaceVariant::SemanticPrediction; }
  bool uses_unary_loss() const { return config.variant != InterfaceVariant::FeatureUnsupervised; }
  std::size_t vocab_size() const { return config.vocab_size; }

  std::size_t interface_width() const {
    return semantic() ? config.unary.num_concepts : config.unary.feature_width();
  }

  SideInfoMLP* side_mlp() { return side ? &*side : nullptr; }

  std::vector<Parameter*> unary_parameters() {
    auto ps = unary.parameters();
    if (side) {
      for (auto* p : side->parameters()) ps.push_back(p);
    }
    return ps;
  }

  std::vector<Parameter*> decoder_parameters() {
    std::vector<Parameter*> ps = init_proj.parameters();
    for (auto* p : lstm.parameters()) ps.push_back(p);
    for (auto* p : embed.parameters()) ps.push_back(p);
    for (auto* p : out.parameters()) ps.push_back(p);
    return ps;
  }

  std::vector<Parameter*> parameters() {
    auto ps = unary_parameters();
    for (auto* p : decoder_parameters()) ps.push_back(p);
    return ps;
  }
};

/// h_0 = init_proj(embedding), c_0 = 0. embedding [B x width].
inline LSTMStateNodes init_state_from_embedding(Graph& g, NodeId embedding, std::size_t batch, DenseLayer& init_proj) {
  const NodeId h0 = init_proj.forward(g, embedding);
  const NodeId c0 = g.constant(Tensor({batch, init_proj.out_features()}));
  return {h0, c0};
}

/// Eager form; embedding is [width] or [B x width].
inline LSTMState init_state_from_embedding(const Tensor& embedding, DenseLayer& init_proj) {
  const Tensor e = as_row_batch(embedding);
  if (e.dim(1) != init_proj.in_features()) {
    throw std::invalid_argument("init_state_from_embedding: width " + std::to_string(e.dim(1)) + ", projection expects " +
                                std::to_string(init_proj.in_features()));
  }
  Graph g;
  auto s = init_state_from_embedding(g, g.constant(e), e.dim(0), init_proj);
  g.forward();
  return {g.value(s.h), g.value(s.c)};
}

struct InterfaceNodes {
  NodeId s_hat;      // sigmoid of unary logits
  NodeId embedding;  // what the decoder is conditioned on
};

inline InterfaceNodes interface_forward(Graph& g, SCRModel& m, const Tensor& images, const Tensor& tags) {
  std::optional<NodeId> tag_node;
  if (m.side) tag_node = g.constant(tags);
  auto nodes = unary_logits(g, m.unary, m.side_mlp(), g.constant(images), tag_node);
  const NodeId s_hat = g.sigmoid(nodes.logits);
  return {s_hat, m.semantic() ? s_hat : nodes.features};
}

struct JointLossReport {
  double L_u = 0.0;
  double L_r = 0.0;
  double L = 0.0;
};

struct JointLossNodes {
  std::optional<NodeId> L_u;  // batch mean; absent for the unsupervised-feature variant
  NodeId L_r;                 // batch mean
  NodeId L;
};

/// L = lambda * L_u + L_r, both batch means; the decoder is conditioned on the live interface.
inline JointLossNodes build_joint_loss(Graph& g, SCRModel& m, const Batch& batch, double lambda = 1.0) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  auto iface = interface_forward(g, m, batch.images, batch.tags);
  JointLossNodes out{};
  auto start = init_state_from_embedding(g, iface.embedding, batch.size(), m.init_proj);
  out.L_r = g.scale(teacher_forced_nll(g, start, batch.targets, m.embed, m.out, m.lstm), inv_b);
  if (m.uses_unary_loss()) {
    out.L_u = g.scale(sigmoid_ce_loss(g, iface.s_hat, batch.concepts), inv_b);
    out.L = g.add(g.scale(*out.L_u, lambda), out.L_r);
  } else {
    out.L = out.L_r;
  }
  return out;
}

inline JointLossReport report_of(const Graph& g, const JointLossNodes& n) {
  JointLossReport r;
  r.L_u = n.L_u ? g.value(*n.L_u).item() : 0.0;
  r.L_r = g.value(n.L_r).item();
  r.L = g.value(n.L).item();
  return r;
}

inline JointLossReport joint_loss(SCRModel& m, const Example& example, double lambda = 1.0) {
  if (example.concepts.empty() || example.target.empty()) {
    throw std::invalid_argument("joint_loss: sample lacks ground-truth concepts or target path");
  }
  TrainingSet one;
  one.examples.push_back(example);
  one.num_concepts = example.concepts.size();
  one.num_tags = example.tags.empty() ? 0 : example.tags.size();
  one.vocab_size = m.vocab_size();
  const Batch batch = make_batch(one, 0, 1);
  Graph g;
  auto nodes = build_joint_loss(g, m, batch, lambda);
  g.forward();
  return report_of(g, nodes);
}

struct RnnTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  RMSPropConfig optimiser{};
  std::uint64_t seed = 1;
};

/// Trains init_proj, LSTM, embedding and output layer with ground-truth s as
/// the interface, minimising L_r. Unary parameters are not touched.
/// Returns the mean per-sample L_r of each epoch.
inline std::vector<double> pretrain_rnn(SCRModel& m, const TrainingSet& data, const RnnTrainConfig& cfg) {
  if (!m.semantic()) throw std::logic_error("pretrain_rnn needs the semantic-prediction interface");
  if (data.empty()) throw std::invalid_argument("pretrain_rnn: empty dataset");
  auto params = m.decoder_parameters();
  RMSPropState opt{cfg.optimiser, {}};
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> curve;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    double total = 0.0;
    for (const auto& idx : epoch_batches(data.size(), cfg.batch_size, rng)) {
      const Batch batch = make_batch(data, idx);
      Graph g;
      auto start = init_state_from_embedding(g, g.constant(batch.concepts), batch.size(), m.init_proj);
      const NodeId loss = g.scale(teacher_forced_nll(g, start, batch.targets, m.embed, m.out, m.lstm),
                                  1.0 / static_cast<double>(batch.size()));
      g.forward();
      total += g.value(loss).item() * static_cast<double>(batch.size());
      zero_grads(params);
      g.backward(loss);
      rmsprop_step(params, opt);
    }
    curve.push_back(total / static_cast<double>(data.size()));
  }
  return curve;
}

struct JointTrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 32;
  RMSPropConfig optimiser{};
  double lambda = 1.0;
  std::uint64_t seed = 1;
};

/// Called after every update with (iteration index, pre-update batch losses);
/// returning false stops training.
using JointTrainObserver = std::function<bool(std::size_t, const JointLossReport&)>;

/// RMSProp on L over all parameters, one minibatch per iteration, epochs
/// reshuffled from `seed`. Returns the per-iteration loss history.
inline std::vector<JointLossReport> train_joint(SCRModel& m, const TrainingSet& data, const JointTrainConfig& cfg,
                                                const JointTrainObserver& observer = {}) {
  if (data.empty()) throw std::invalid_argument("train_joint: empty dataset");
  auto params = m.parameters();
  RMSPropState opt{cfg.optimiser, {}};
  std::mt19937_64 rng(cfg.seed);
  std::vector<JointLossReport> history;
  std::vector<std::vector<std::size_t>> batches;
  std::size_t next = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (next == batches.size()) {
      batches = epoch_batches(data.size(), cfg.batch_size, rng);
      next = 0;
    }
    const Batch batch = make_batch(data, batches[next++]);
    Graph g;
    auto nodes = build_joint_loss(g, m, batch, cfg.lambda);
    g.forward();
    history.push_back(report_of(g, nodes));
    zero_grads(params);
    g.backward(nodes.L);
    rmsprop_step(params, opt);
    if (observer && !observer(it, history.back())) break;
  }
  return history;
}

/// Mean per-sample L_r over a dataset with the live interface (no updates).
inline double relational_loss(SCRModel& m, const TrainingSet& data, std::size_t batch_size = 64) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    const Batch batch = make_batch(data, i, std::min(data.size(), i + batch_size));
    Graph g;
    auto nodes = build_joint_loss(g, m, batch);
    g.forward();
    total += g.value(nodes.L_r).item() * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace scrnn
