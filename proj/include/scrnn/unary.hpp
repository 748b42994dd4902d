#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/graph.hpp"
#include "scrnn/nn.hpp"
#include "scrnn/training_data.hpp"

namespace scrnn {

struct UnaryConfig {
  std::size_t grid = 32;
  std::size_t channels = 3;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t kernel = 3;
  std::size_t num_concepts = 12;

  /// Width of the flattened conv stack output (the penultimate feature layer).
  std::size_t feature_width() const {
    const std::size_t a = (grid - kernel + 1) / 2;
    if (a < kernel) throw std::invalid_argument("grid too small for two conv/pool stages");
    const std::size_t b = (a - kernel + 1) / 2;
    if (b == 0) throw std::invalid_argument("grid too small for two conv/pool stages");
    return conv2_channels * b * b;
  }
};

/// conv -> relu -> pool -> conv -> relu -> pool -> flatten -> dense -> k logits.
struct ConceptPredictor {
  UnaryConfig config;
  Conv2DLayer conv1;
  Conv2DLayer conv2;
  DenseLayer head;

  struct Nodes {
    NodeId features;  // [B x feature_width]
    NodeId logits;    // [B x k]
  };

  ConceptPredictor() = default;
  ConceptPredictor(const std::string& name, UnaryConfig cfg, Rng& rng)
      : config(cfg),
        conv1(name + ".conv1", cfg.channels, cfg.conv1_channels, cfg.kernel, cfg.kernel, rng),
        conv2(name + ".conv2", cfg.conv1_channels, cfg.conv2_channels, cfg.kernel, cfg.kernel, rng),
        head(name + ".head", cfg.feature_width(), cfg.num_concepts, rng) {}

  std::size_t num_concepts() const { return config.num_concepts; }
  std::size_t feature_width() const { return config.feature_width(); }

  /// images [B x C x G x G].
  Nodes forward(Graph& g, NodeId images) {
    NodeId h = g.maxpool2(g.relu(conv1.forward(g, images)));
    h = g.maxpool2(g.relu(conv2.forward(g, h)));
    const NodeId features = g.flatten(h);
    return {features, head.forward(g, features)};
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto* p : conv1.parameters()) out.push_back(p);
    for (auto* p : conv2.parameters()) out.push_back(p);
    for (auto* p : head.parameters()) out.push_back(p);
    return out;
  }
};

/// Noisy tags -> 256 relu units -> k logits.
struct SideInfoMLP {
  static constexpr std::size_t kHiddenWidth = 256;

  DenseLayer hidden;
  DenseLayer out;

  SideInfoMLP() = default;
  SideInfoMLP(const std::string& name, std::size_t num_tags, std::size_t num_concepts, Rng& rng)
      : hidden(name + ".hidden", num_tags, kHiddenWidth, rng), out(name + ".out", kHiddenWidth, num_concepts, rng) {}

  std::size_t num_tags() const { return hidden.in_features(); }

  NodeId forward(Graph& g, NodeId tags) { return out.forward(g, g.relu(hidden.forward(g, tags))); }

  std::vector<Parameter*> parameters() {
    auto a = hidden.parameters();
    for (auto* p : out.parameters()) a.push_back(p);
    return a;
  }
};

/// Unary logits for a batch: image logits, plus tag logits when an MLP is given.
inline ConceptPredictor::Nodes unary_logits(Graph& g, ConceptPredictor& cnn, SideInfoMLP* mlp, NodeId images,
                                            std::optional<NodeId> tags) {
  auto nodes = cnn.forward(g, images);
  if (mlp && tags) nodes.logits = g.add(nodes.logits, mlp->forward(g, *tags));
  return nodes;
}

/// s_hat = sigmoid(image logits [+ tag logits]) for one image [C x G x G].
inline Tensor predict_concepts(ConceptPredictor& cnn, SideInfoMLP* mlp, const Tensor& image,
                               const std::optional<Tensor>& tags = std::nullopt) {
  const auto& c = cnn.config;
  if (image.shape() != Shape{c.channels, c.grid, c.grid}) {
    throw std::invalid_argument("predict_concepts: image shape " + shape_str(image.shape()) + " does not match model");
  }
  if (tags && mlp && tags->size() != mlp->num_tags()) {
    throw std::invalid_argument("predict_concepts: " + std::to_string(tags->size()) + " tags, model expects " +
                                std::to_string(mlp->num_tags()));
  }
  Graph g;
  Shape batched = image.shape();
  batched.insert(batched.begin(), 1);
  std::optional<NodeId> tag_node;
  if (tags && mlp) tag_node = g.constant(tags->reshaped({1, tags->size()}));
  auto nodes = unary_logits(g, cnn, mlp, g.constant(image.reshaped(batched)), tag_node);
  const NodeId s_hat = g.sigmoid(nodes.logits);
  g.forward();
  return g.value(s_hat).reshaped({cnn.num_concepts()});
}

struct UnaryTrainConfig {
  std::size_t epochs = 10;
  std::size_t side_epochs = 10;  // tag-MLP pretraining epochs before fusion
  std::size_t batch_size = 32;   // 0 = full batch
  RMSPropConfig optimiser{};
  std::uint64_t seed = 1;
};

struct UnaryTrainReport {
  std::vector<double> side_epoch_losses;  // MLP-only phase
  std::vector<double> epoch_losses;       // mean per-sample L_u during each epoch
};

namespace unary_detail {

inline double run_epochs(const TrainingSet& data, std::size_t epochs, const UnaryTrainConfig& cfg,
                         std::vector<Parameter*> params, std::vector<double>& curve, ConceptPredictor* cnn,
                         SideInfoMLP* mlp, std::mt19937_64& rng) {
  RMSPropState opt{cfg.optimiser, {}};
  double last = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    double total = 0.0;
    for (const auto& idx : epoch_batches(data.size(), cfg.batch_size, rng)) {
      const Batch batch = make_batch(data, idx);
      Graph g;
      NodeId logits;
      if (cnn) {
        std::optional<NodeId> tags;
        if (mlp) tags = g.constant(batch.tags);
        logits = unary_logits(g, *cnn, mlp, g.constant(batch.images), tags).logits;
      } else {
        logits = mlp->forward(g, g.constant(batch.tags));
      }
      const NodeId loss = g.scale(sigmoid_ce_loss(g, g.sigmoid(logits), batch.concepts),
                                  1.0 / static_cast<double>(batch.size()));
      g.forward();
      total += g.value(loss).item() * static_cast<double>(batch.size());
      zero_grads(params);
      g.backward(loss);
      rmsprop_step(params, opt);
    }
    last = total / static_cast<double>(data.size());
    curve.push_back(last);
  }
  return last;
}

}  // namespace unary_detail

/// Minimises mean L_u. With an MLP, the MLP is first fitted to predict s from
/// noisy tags alone, then image and tag logits are summed and trained together.
inline UnaryTrainReport pretrain_unary(ConceptPredictor& cnn, SideInfoMLP* mlp, const TrainingSet& data,
                                       const UnaryTrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("pretrain_unary: empty dataset");
  UnaryTrainReport report;
  std::mt19937_64 rng(cfg.seed);
  if (mlp) {
    unary_detail::run_epochs(data, cfg.side_epochs, cfg, mlp->parameters(), report.side_epoch_losses, nullptr, mlp, rng);
  }
  auto params = cnn.parameters();
  if (mlp) {
    for (auto* p : mlp->parameters()) params.push_back(p);
  }
  unary_detail::run_epochs(data, cfg.epochs, cfg, params, report.epoch_losses, &cnn, mlp, rng);
  return report;
}

/// Mean per-sample L_u of the unary model over a dataset.
inline double unary_loss(ConceptPredictor& cnn, SideInfoMLP* mlp, const TrainingSet& data, std::size_t batch_size = 64) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    const Batch batch = make_batch(data, i, std::min(data.size(), i + batch_size));
    Graph g;
    std::optional<NodeId> tags;
    if (mlp) tags = g.constant(batch.tags);
    auto nodes = unary_logits(g, cnn, mlp, g.constant(batch.images), tags);
    sigmoid_ce_loss(g, g.sigmoid(nodes.logits), batch.concepts);
    total += g.forward().item();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace scrnn
