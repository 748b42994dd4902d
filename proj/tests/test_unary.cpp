#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "scrnn.hpp"

using namespace scrnn;

namespace {

UnaryConfig small_config() {
  UnaryConfig c;
  c.grid = 16;
  c.num_concepts = 5;
  return c;
}

TrainingSet synthetic_set(std::size_t n, std::uint64_t seed, double pixel_noise = 0.05) {
  DatasetSpec spec;
  spec.n_samples = n;
  spec.seed = seed;
  spec.pixel_noise = pixel_noise;
  spec.train_fraction = 1.0;
  const Dataset ds = gen_dataset(spec);
  return make_multilabel_set(ds.train, ds.concepts);
}

void zero_all(std::vector<Parameter*> ps) {
  for (auto* p : ps) p->value = Tensor(p->value.shape());
}

}  // namespace

TEST(ConceptPredictor, FeatureWidthFollowsConvStack) {
  EXPECT_EQ(UnaryConfig{}.feature_width(), 16u * 6 * 6);
  EXPECT_EQ(small_config().feature_width(), 16u * 2 * 2);
  UnaryConfig tiny;
  tiny.grid = 6;
  EXPECT_THROW(tiny.feature_width(), std::invalid_argument);
}

TEST(SideInfoMLP, HiddenWidthIs256) {
  Rng rng(1);
  SideInfoMLP mlp("mlp", 30, 12, rng);
  EXPECT_EQ(mlp.hidden.W.value.shape(), (Shape{256, 30}));
  EXPECT_EQ(mlp.num_tags(), 30u);
}

TEST(PredictConcepts, ZeroWeightsGiveOneHalf) {
  Rng rng(2);
  ConceptPredictor cnn("cnn", small_config(), rng);
  SideInfoMLP mlp("mlp", 7, 5, rng);
  zero_all(cnn.parameters());
  zero_all(mlp.parameters());
  const Tensor img = uniform_tensor({3, 16, 16}, rng, 1.0);
  Tensor tags({7});
  tags[2] = 1.0;
  for (const Tensor& s : {predict_concepts(cnn, nullptr, img), predict_concepts(cnn, &mlp, img, tags)}) {
    EXPECT_EQ(s.values(), std::vector<double>(5, 0.5));
  }
}

TEST(PredictConcepts, OutputIsInOpenUnitInterval) {
  Rng rng(3);
  ConceptPredictor cnn("cnn", small_config(), rng);
  for (auto* p : cnn.parameters()) p->value = uniform_tensor(p->value.shape(), rng, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor s = predict_concepts(cnn, nullptr, uniform_tensor({3, 16, 16}, rng, 1.0));
    for (double v : s.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(PredictConcepts, ZeroTagLogitsEqualImageOnlyBitwise) {
  Rng rng(4);
  ConceptPredictor cnn("cnn", small_config(), rng);
  SideInfoMLP mlp("mlp", 9, 5, rng);
  for (auto* p : cnn.parameters()) p->value = uniform_tensor(p->value.shape(), rng, 0.5);
  for (auto* p : mlp.hidden.parameters()) p->value = uniform_tensor(p->value.shape(), rng, 0.5);
  zero_all(mlp.out.parameters());
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor img = uniform_tensor({3, 16, 16}, rng, 1.0);
    Tensor tags({9});
    for (std::size_t t = 0; t < 9; ++t) tags[t] = (t + static_cast<std::size_t>(trial)) % 3 == 0;
    EXPECT_EQ(predict_concepts(cnn, &mlp, img, tags), predict_concepts(cnn, nullptr, img));
  }
}

TEST(PredictConcepts, ShapeViolationsThrow) {
  Rng rng(5);
  ConceptPredictor cnn("cnn", small_config(), rng);
  SideInfoMLP mlp("mlp", 9, 5, rng);
  EXPECT_THROW(predict_concepts(cnn, nullptr, Tensor({3, 32, 32})), std::invalid_argument);
  EXPECT_THROW(predict_concepts(cnn, &mlp, Tensor({3, 16, 16}), Tensor({8})), std::invalid_argument);
}

TEST(UnaryLoss, GradientReachesEveryEncoderParameter) {
  Rng rng(6);
  ConceptPredictor cnn("cnn", small_config(), rng);
  for (auto* p : cnn.parameters()) p->value = uniform_tensor(p->value.shape(), rng, 0.3);
  const Tensor images = uniform_tensor({2, 3, 16, 16}, rng, 1.0);
  Tensor s({2, 5});
  for (std::size_t i = 0; i < s.size(); i += 2) s[i] = 1.0;
  auto build = [&](Graph& g) {
    return sigmoid_ce_loss(g, g.sigmoid(cnn.forward(g, g.constant(images)).logits), s);
  };
  const auto params = cnn.parameters();
  {
    Graph g;
    const NodeId l = build(g);
    g.forward();
    zero_grads(params);
    g.backward(l);
    for (auto* p : params) {
      const auto& v = p->grad.values();
      EXPECT_TRUE(std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; })) << p->name;
    }
  }
  EXPECT_LT(grad_check(build, params, 1e-5, 12, 3).max_relative_error, 1e-4);
}

TEST(PretrainUnary, EmptyDatasetThrows) {
  Rng rng(7);
  ConceptPredictor cnn("cnn", small_config(), rng);
  EXPECT_THROW(pretrain_unary(cnn, nullptr, TrainingSet{}, UnaryTrainConfig{}), std::invalid_argument);
}

TEST(PretrainUnary, MemorisesOneSample) {
  TrainingSet one = synthetic_set(1, 8);
  Rng rng(8);
  UnaryConfig cfg;
  cfg.num_concepts = one.num_concepts;
  ConceptPredictor cnn("cnn", cfg, rng);
  UnaryTrainConfig tc;
  tc.epochs = 300;
  tc.optimiser.learning_rate = 3e-3;
  const auto report = pretrain_unary(cnn, nullptr, one, tc);
  EXPECT_LT(report.epoch_losses.back(), 1e-3);
  EXPECT_NEAR(unary_loss(cnn, nullptr, one), report.epoch_losses.back(), 1e-3);
}

TEST(PretrainUnary, FullBatchCurveIsNonIncreasing) {
  const TrainingSet set = synthetic_set(16, 9);
  Rng rng(9);
  UnaryConfig cfg;
  cfg.num_concepts = set.num_concepts;
  ConceptPredictor cnn("cnn", cfg, rng);
  UnaryTrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 0;
  tc.optimiser.learning_rate = 2e-4;
  const auto curve = pretrain_unary(cnn, nullptr, set, tc).epoch_losses;
  ASSERT_EQ(curve.size(), 40u);
  for (std::size_t e = 1; e < curve.size(); ++e) EXPECT_LE(curve[e], curve[e - 1]) << "epoch " << e;
  EXPECT_LT(curve.back(), curve.front());
}

TEST(PretrainUnary, SideInformationPhaseRunsFirst) {
  const TrainingSet set = synthetic_set(20, 10);
  Rng rng(10);
  UnaryConfig cfg;
  cfg.num_concepts = set.num_concepts;
  ConceptPredictor cnn("cnn", cfg, rng);
  SideInfoMLP mlp("mlp", set.num_tags, set.num_concepts, rng);
  UnaryTrainConfig tc;
  tc.epochs = 2;
  tc.side_epochs = 3;
  const auto report = pretrain_unary(cnn, &mlp, set, tc);
  EXPECT_EQ(report.side_epoch_losses.size(), 3u);
  EXPECT_EQ(report.epoch_losses.size(), 2u);
}

// Separable data reaches 0.1 k per sample within 2,000 steps; the same
// images with labels shuffled across samples do not.
TEST(PretrainUnary, SeparableDataBeatsShuffledLabelControl) {
  const TrainingSet real = synthetic_set(200, 11);
  TrainingSet shuffled = real;
  std::mt19937_64 perm(11);
  std::vector<Tensor> labels;
  for (const auto& e : real.examples) labels.push_back(e.concepts);
  std::shuffle(labels.begin(), labels.end(), perm);
  for (std::size_t i = 0; i < labels.size(); ++i) shuffled.examples[i].concepts = labels[i];

  const double threshold = 0.1 * static_cast<double>(real.num_concepts);
  UnaryTrainConfig tc;
  tc.batch_size = 32;
  tc.epochs = 2000 / 7;  // 7 batches per epoch
  auto train = [&](const TrainingSet& set) {
    Rng rng(12);
    UnaryConfig cfg;
    cfg.num_concepts = set.num_concepts;
    ConceptPredictor cnn("cnn", cfg, rng);
    pretrain_unary(cnn, nullptr, set, tc);
    return unary_loss(cnn, nullptr, set);
  };
  const double real_loss = train(real);
  const double control_loss = train(shuffled);
  EXPECT_LT(real_loss, threshold);
  EXPECT_GT(control_loss, threshold);
}
