#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"

using namespace scrnn;

namespace {

using Sets = std::vector<std::set<std::size_t>>;

std::set<std::size_t> random_set(std::mt19937_64& rng, std::size_t classes, double p) {
  std::bernoulli_distribution coin(p);
  std::set<std::size_t> s;
  for (std::size_t c = 0; c < classes; ++c) {
    if (coin(rng)) s.insert(c);
  }
  return s;
}

std::vector<std::string> random_sentence(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<std::string> words = {"a", "red", "square", "above", "and", "blue", "circle"};
  std::vector<std::string> s(1 + rng() % max_len);
  for (auto& w : s) w = words[rng() % words.size()];
  return s;
}

}  // namespace

TEST(MultiLabel, HalfOverlapGivesHalfEverywhere) {
  const LabelVocabulary v({"a", "b", "c"});
  const auto r = multilabel_report(std::vector<std::set<std::string>>{{"b", "c"}},
                                   std::vector<std::set<std::string>>{{"a", "b"}}, v);
  EXPECT_EQ(r.o_p, 0.5);
  EXPECT_EQ(r.o_r, 0.5);
  EXPECT_EQ(r.o_f1, 0.5);
}

TEST(MultiLabel, PerfectPredictionsScoreOne) {
  const Sets s = {{0, 2}, {1}, {0, 1, 2}};
  const auto r = multilabel_report(s, s, 3);
  for (double m : {r.c_p, r.c_r, r.c_f1, r.o_p, r.o_r, r.o_f1}) EXPECT_EQ(m, 1.0);
}

TEST(MultiLabel, DegenerateCasesAreCounted) {
  // Sample 0 predicts nothing; sample 1 has no truth; class 3 never occurs; class 2 is never predicted.
  const auto r = multilabel_report(Sets{{}, {0}}, Sets{{0, 2}, {}}, 4);
  EXPECT_EQ(r.empty_predictions, 1u);
  EXPECT_EQ(r.empty_truths, 1u);
  EXPECT_EQ(r.classes_without_truth, 2u);  // classes 1 and 3
  EXPECT_EQ(r.classes_evaluated, 2u);
  EXPECT_EQ(r.classes_never_predicted, 1u);
  EXPECT_EQ(r.o_p, 0.0);  // sample 0: p = 0; sample 1: predicted 0, not true
  EXPECT_EQ(r.o_r, 0.0);
  EXPECT_EQ(r.c_p, 0.0);
  EXPECT_EQ(r.c_r, 0.0);
}

TEST(MultiLabel, MatchesCountingOracleOnRandomCases) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + rng() % 10, n = 1 + rng() % 30;
    Sets pred, truth;
    for (std::size_t i = 0; i < n; ++i) {
      pred.push_back(random_set(rng, classes, 0.3));
      truth.push_back(random_set(rng, classes, 0.3));
    }
    const auto r = multilabel_report(pred, truth, classes);
    const auto o = oracle::multilabel(pred, truth, classes);
    EXPECT_NEAR(r.c_p, o.cp, 1e-12);
    EXPECT_NEAR(r.c_r, o.cr, 1e-12);
    EXPECT_NEAR(r.c_f1, o.cf1, 1e-12);
    EXPECT_NEAR(r.o_p, o.op, 1e-12);
    EXPECT_NEAR(r.o_r, o.orr, 1e-12);
    EXPECT_NEAR(r.o_f1, o.of1, 1e-12);
    for (double m : {r.c_p, r.c_r, r.c_f1, r.o_p, r.o_r, r.o_f1}) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
    EXPECT_EQ(r.o_f1, f1_score(r.o_p, r.o_r));
  }
}

TEST(MultiLabel, SampleOrderDoesNotMatter) {
  std::mt19937_64 rng(32);
  Sets pred, truth;
  for (int i = 0; i < 25; ++i) {
    pred.push_back(random_set(rng, 6, 0.4));
    truth.push_back(random_set(rng, 6, 0.4));
  }
  const auto a = multilabel_report(pred, truth, 6);
  std::vector<std::size_t> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Sets p2, t2;
  for (auto i : perm) {
    p2.push_back(pred[i]);
    t2.push_back(truth[i]);
  }
  const auto b = multilabel_report(p2, t2, 6);
  EXPECT_NEAR(a.c_f1, b.c_f1, 1e-15);
  EXPECT_NEAR(a.o_f1, b.o_f1, 1e-15);
  EXPECT_NEAR(a.o_p, b.o_p, 1e-15);
  EXPECT_NEAR(a.c_r, b.c_r, 1e-15);
}

TEST(MultiLabel, LengthMismatchThrows) { EXPECT_THROW(multilabel_report(Sets{{}}, Sets{}, 2), std::invalid_argument); }

using Words = std::vector<std::string>;

TEST(Bleu, IdenticalCandidateScoresOne) {
  const Words s = {"a", "red", "square", "above", "a", "blue", "circle"};
  for (std::size_t n = 1; n <= 4; ++n) EXPECT_EQ(bleu(s, {s}, n), 1.0);
}

TEST(Bleu, NoUnigramOverlapScoresZero) { EXPECT_EQ(bleu(Words{"x", "y"}, {Words{"a", "b"}}, 1), 0.0); }

TEST(Bleu, RepeatedWordIsClipped) {
  const Words cand(7, "the");
  const Words ref = {"the", "cat", "is", "on", "the", "mat"};
  EXPECT_NEAR(bleu(cand, {ref}, 1), 2.0 / 7.0, 1e-15);
}

TEST(Bleu, ShortCandidateIsPenalised) {
  // c = 2, r = 4, both unigrams and the bigram match: BP = exp(1 - 4/2).
  EXPECT_NEAR(bleu(Words{"a", "b"}, {Words{"a", "b", "c", "d"}}, 2), std::exp(-1.0), 1e-15);
}

TEST(Bleu, EmptyCandidateScoresZero) { EXPECT_EQ(bleu(Words{}, {Words{"a"}}, 1), 0.0); }

TEST(Bleu, RejectsBadOrder) {
  EXPECT_THROW(bleu(Words{"a"}, {Words{"a"}}, 0), std::invalid_argument);
  EXPECT_THROW(bleu(Words{"a"}, {Words{"a"}}, 5), std::invalid_argument);
}

TEST(Bleu, MatchesCountingOracleOnRandomCases) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cand = random_sentence(rng, 9);
    std::vector<Words> refs;
    for (std::size_t k = 0; k < 1 + rng() % 3; ++k) refs.push_back(random_sentence(rng, 9));
    for (std::size_t n = 1; n <= 4; ++n) EXPECT_NEAR(bleu(cand, refs, n), oracle::bleu(cand, refs, n), 1e-12);
  }
}

TEST(Bleu, CorpusMatchesCountingOracle) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Words> cands;
    std::vector<std::vector<Words>> refs;
    for (int i = 0; i < 8; ++i) {
      cands.push_back(random_sentence(rng, 8));
      refs.push_back({random_sentence(rng, 8), random_sentence(rng, 8)});
    }
    for (std::size_t n = 1; n <= 4; ++n) {
      EXPECT_NEAR(corpus_bleu(cands, refs, n), oracle::corpus_bleu(cands, refs, n), 1e-12);
    }
  }
}

TEST(Bleu, ReferenceOrderDoesNotMatter) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cand = random_sentence(rng, 8);
    std::vector<Words> refs = {random_sentence(rng, 8), random_sentence(rng, 8), random_sentence(rng, 8)};
    const double a = bleu(cand, refs, 2);
    std::reverse(refs.begin(), refs.end());
    EXPECT_EQ(a, bleu(cand, refs, 2));
  }
}
