#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scrnn/grad_check.hpp"
#include "scrnn/lstm.hpp"
#include "scrnn/nn.hpp"
#include "scrnn/seqmodel.hpp"

namespace scrnn {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t)> run;
};

namespace grad_suite_detail {

inline constexpr double kEps = 1e-5;
inline constexpr double kRange = 0.9;

/// Draws a parameter away from relu kinks so finite differences stay on one side.
inline Parameter param(const std::string& name, Shape shape, Rng& rng) {
  Tensor t = uniform_tensor(std::move(shape), rng, kRange);
  for (double& v : t.values()) {
    if (std::abs(v) < 0.05) v += v < 0 ? -0.05 : 0.05;
  }
  return Parameter(name, std::move(t));
}

/// Reduces any tensor to a scalar with fixed random weights, so every output
/// entry influences the loss with a distinct coefficient.
inline NodeId weighted_sum(Graph& g, NodeId x, const Tensor& w) { return g.sum(g.mul(x, g.constant(w))); }

/// Checks one op: `op` is applied to the parameter nodes, the result reduced by a weighted sum.
inline GradCheckResult check_op(std::vector<Parameter>& inputs, const Shape& out_shape,
                                const std::function<NodeId(Graph&, std::vector<NodeId>&)>& op, Rng& rng,
                                std::uint64_t seed) {
  const Tensor w = uniform_tensor(out_shape, rng, 1.0);
  std::vector<Parameter*> ptrs;
  for (auto& p : inputs) ptrs.push_back(&p);
  auto build = [&](Graph& g) {
    std::vector<NodeId> nodes;
    for (auto& p : inputs) nodes.push_back(g.parameter(p));
    return weighted_sum(g, op(g, nodes), w);
  };
  return grad_check(build, ptrs, kEps, 0, seed);
}

inline ModelConfig tiny_model(InterfaceVariant v, bool side, bool peepholes) {
  ModelConfig mc;
  mc.unary.grid = 16;
  mc.unary.conv1_channels = 2;
  mc.unary.conv2_channels = 3;
  mc.unary.num_concepts = 4;
  mc.embed_dim = 3;
  mc.hidden = 4;
  mc.peepholes = peepholes;
  mc.vocab_size = 6;
  mc.num_tags = side ? 5 : 0;
  mc.variant = v;
  return mc;
}

/// Random tiny batch for the joint loss: two samples with different target lengths.
inline Batch tiny_batch(const ModelConfig& mc, Rng& rng) {
  Batch b;
  b.images = uniform_tensor({2, 3, mc.unary.grid, mc.unary.grid}, rng, 1.0);
  for (double& v : b.images.values()) v = 0.5 + 0.5 * v;
  b.concepts = Tensor({2, mc.unary.num_concepts}, std::vector<double>{1, 0, 1, 0, 0, 1, 1, 1});
  b.tags = Tensor({2, mc.num_tags > 0 ? mc.num_tags : 1});
  if (mc.num_tags > 0) {
    b.tags[0] = 1;
    b.tags[mc.num_tags + 2] = 1;
  }
  b.targets = {{0, 2, 5}, {3, 5}};
  return b;
}

inline GradCheckResult joint_case(std::uint64_t seed, InterfaceVariant v, bool side, bool peepholes) {
  const ModelConfig mc = tiny_model(v, side, peepholes);
  SCRModel m(mc, seed);
  Rng rng(seed ^ 0x5EEDULL);
  // Larger weights than the training init so every gradient is well above round-off.
  for (Parameter* p : m.parameters()) p->value = uniform_tensor(p->value.shape(), rng, 0.5);
  const Batch batch = tiny_batch(mc, rng);
  auto build = [&](Graph& g) { return build_joint_loss(g, m, batch).L; };
  return grad_check(build, m.parameters(), kEps, 12, seed);
}

}  // namespace grad_suite_detail

/// Every differentiable op, the LSTM cell, the decoder unroll, and the joint loss of each interface variant.
inline std::vector<GradCase> gradient_suite() {
  using namespace grad_suite_detail;
  using Nodes = std::vector<NodeId>;
  std::vector<GradCase> cases;
  auto unary_op = [&](const std::string& name, Shape shape, std::function<NodeId(Graph&, NodeId)> f) {
    cases.push_back({name, [shape, f](std::uint64_t seed) {
                       Rng rng(seed);
                       std::vector<Parameter> in{param("x", shape, rng)};
                       return check_op(in, shape, [&](Graph& g, Nodes& n) { return f(g, n[0]); }, rng, seed);
                     }});
  };
  cases.push_back({"matmul", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("a", {3, 4}, rng), param("b", {4, 2}, rng)};
                     return check_op(in, {3, 2}, [](Graph& g, Nodes& n) { return g.matmul(n[0], n[1]); }, rng, seed);
                   }});
  cases.push_back({"matmul_transposed", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("a", {3, 4}, rng), param("b", {5, 4}, rng)};
                     return check_op(in, {3, 5}, [](Graph& g, Nodes& n) { return g.matmul(n[0], n[1], true); }, rng,
                                     seed);
                   }});
  cases.push_back({"add_broadcast", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("a", {3, 4}, rng), param("b", {4}, rng)};
                     return check_op(in, {3, 4}, [](Graph& g, Nodes& n) { return g.add(n[0], n[1]); }, rng, seed);
                   }});
  cases.push_back({"mul", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("a", {2, 3}, rng), param("b", {2, 3}, rng)};
                     return check_op(in, {2, 3}, [](Graph& g, Nodes& n) { return g.mul(n[0], n[1]); }, rng, seed);
                   }});
  unary_op("scale", {2, 3}, [](Graph& g, NodeId x) { return g.scale(x, -1.7); });
  unary_op("sigmoid", {2, 3}, [](Graph& g, NodeId x) { return g.sigmoid(x); });
  unary_op("tanh", {2, 3}, [](Graph& g, NodeId x) { return g.tanh(x); });
  unary_op("relu", {2, 3}, [](Graph& g, NodeId x) { return g.relu(x); });
  unary_op("softmax", {2, 4}, [](Graph& g, NodeId x) { return g.softmax(x); });
  cases.push_back({"concat", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("a", {2, 3}, rng), param("b", {1, 3}, rng)};
                     return check_op(in, {3, 3}, [](Graph& g, Nodes& n) { return g.concat({n[0], n[1]}); }, rng, seed);
                   }});
  cases.push_back({"slice", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {4, 3}, rng)};
                     return check_op(in, {2, 3}, [](Graph& g, Nodes& n) { return g.slice(n[0], 1, 3); }, rng, seed);
                   }});
  cases.push_back({"sum", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {2, 3}, rng)};
                     return check_op(in, {1}, [](Graph& g, Nodes& n) { return g.sum(g.mul(n[0], n[0])); }, rng, seed);
                   }});
  cases.push_back({"mean", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {2, 3}, rng)};
                     return check_op(in, {1}, [](Graph& g, Nodes& n) { return g.mean(g.mul(n[0], n[0])); }, rng, seed);
                   }});
  cases.push_back({"conv2d", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {2, 2, 6, 5}, rng), param("k", {3, 2, 3, 3}, rng),
                                               param("b", {3}, rng)};
                     return check_op(in, {2, 3, 4, 3}, [](Graph& g, Nodes& n) { return g.conv2d(n[0], n[1], n[2]); },
                                     rng, seed);
                   }});
  cases.push_back({"maxpool2", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {1, 2, 4, 5}, rng)};
                     return check_op(in, {1, 2, 2, 2}, [](Graph& g, Nodes& n) { return g.maxpool2(n[0]); }, rng, seed);
                   }});
  cases.push_back({"reshape", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {2, 3, 2}, rng)};
                     return check_op(in, {3, 4}, [](Graph& g, Nodes& n) { return g.reshape(n[0], {3, 4}); }, rng, seed);
                   }});
  cases.push_back({"embed", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("E", {3, 5}, rng)};
                     return check_op(in, {4, 3}, [](Graph& g, Nodes& n) { return g.embed(n[0], {4, 0, 4, 2}); }, rng,
                                     seed);
                   }});
  cases.push_back({"sigmoid_cross_entropy", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {2, 3}, rng)};
                     const Tensor t({2, 3}, std::vector<double>{1, 0, 1, 0, 0, 1});
                     return check_op(in, {1}, [t](Graph& g, Nodes& n) { return g.sigmoid_cross_entropy(g.sigmoid(n[0]), t); },
                                     rng, seed);
                   }});
  cases.push_back({"softmax_nll", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::vector<Parameter> in{param("x", {3, 4}, rng)};
                     return check_op(in, {1}, [](Graph& g, Nodes& n) { return g.softmax_nll(n[0], {1, 3, 0}, {1.0, 0.5, 1.0}); },
                                     rng, seed);
                   }});
  for (bool peep : {false, true}) {
    cases.push_back({peep ? "lstm_cell_peephole" : "lstm_cell", [peep](std::uint64_t seed) {
                       Rng rng(seed);
                       LSTMParams p("lstm", LSTMConfig{3, 4, peep, BlockActivation::Tanh}, rng);
                       for (Parameter* q : p.parameters()) q->value = uniform_tensor(q->value.shape(), rng, 0.5);
                       Parameter x = param("x", {2, 3}, rng), h = param("h", {2, 4}, rng), c = param("c", {2, 4}, rng);
                       const Tensor wh = uniform_tensor({2, 4}, rng, 1.0), wc = uniform_tensor({2, 4}, rng, 1.0);
                       auto ps = p.parameters();
                       ps.push_back(&x);
                       ps.push_back(&h);
                       ps.push_back(&c);
                       auto build = [&](Graph& g) {
                         auto next = lstm_cell(g, g.parameter(x), {g.parameter(h), g.parameter(c)}, p);
                         return g.add(weighted_sum(g, next.h, wh), weighted_sum(g, next.c, wc));
                       };
                       return grad_check(build, ps, kEps, 0, seed);
                     }});
  }
  cases.push_back({"decoder_unroll", [](std::uint64_t seed) {
                     Rng rng(seed);
                     LSTMParams p("lstm", LSTMConfig{3, 4, false, BlockActivation::Tanh}, rng);
                     EmbeddingMatrix E("embed", 3, 6, rng);
                     DenseLayer out("out", 4, 6, rng);
                     Parameter h0 = param("h0", {1, 4}, rng);
                     std::vector<Parameter*> ps = p.parameters();
                     for (auto* q : E.parameters()) ps.push_back(q);
                     for (auto* q : out.parameters()) ps.push_back(q);
                     for (Parameter* q : ps) q->value = uniform_tensor(q->value.shape(), rng, 0.5);
                     ps.push_back(&h0);
                     auto build = [&](Graph& g) {
                       LSTMStateNodes s{g.parameter(h0), g.constant(Tensor({1, 4}))};
                       return softmax_nll_sequence(g, unroll_teacher_forced(g, s, {1, 0, 5}, E, out, p), {1, 0, 5});
                     };
                     return grad_check(build, ps, kEps, 0, seed);
                   }});
  cases.push_back({"joint_loss_semantic", [](std::uint64_t seed) {
                     return joint_case(seed, InterfaceVariant::SemanticPrediction, false, false);
                   }});
  cases.push_back({"joint_loss_semantic_side_info_peephole", [](std::uint64_t seed) {
                     return joint_case(seed, InterfaceVariant::SemanticPrediction, true, true);
                   }});
  cases.push_back({"joint_loss_feature_deep", [](std::uint64_t seed) {
                     return joint_case(seed, InterfaceVariant::FeatureDeeplySupervised, false, false);
                   }});
  cases.push_back({"joint_loss_feature_plain", [](std::uint64_t seed) {
                     return joint_case(seed, InterfaceVariant::FeatureUnsupervised, false, false);
                   }});
  return cases;
}

inline constexpr double kGradTolerance = 1e-4;

struct GradCaseSummary {
  std::string name;
  double worst = 0.0;  // max relative error over seeds
  std::uint64_t worst_seed = 0;
  GradCheckResult detail;  // at the worst seed
  bool passed() const { return worst < kGradTolerance; }
};

/// Runs every case for seeds first_seed .. first_seed + n_seeds - 1.
inline std::vector<GradCaseSummary> run_gradient_suite(std::uint64_t first_seed, std::size_t n_seeds) {
  std::vector<GradCaseSummary> out;
  for (const auto& c : gradient_suite()) {
    GradCaseSummary s{c.name, -1.0, first_seed, {}};
    for (std::uint64_t seed = first_seed; seed < first_seed + n_seeds; ++seed) {
      auto r = c.run(seed);
      if (r.max_relative_error > s.worst) {
        s.worst = r.max_relative_error;
        s.worst_seed = seed;
        s.detail = r;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace scrnn
