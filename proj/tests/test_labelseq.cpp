#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "scrnn.hpp"

using namespace scrnn;

namespace {

std::vector<std::string> names(const LabelSequence& s, const LabelVocabulary& v) { return sequence_names(s.tokens, v); }

}  // namespace

TEST(RareFirst, RarerLabelComesFirst) {
  const LabelVocabulary v({"sky", "map"}, {{"sky", 74190}, {"map", 60}});
  EXPECT_EQ(names(rare_first_order({"map", "sky"}, v), v), (std::vector<std::string>{"map", "sky", kEndName}));
}

TEST(RareFirst, EmptySetIsEndOnly) {
  const LabelVocabulary v({"a"});
  EXPECT_EQ(rare_first_order({}, v).tokens, (std::vector<std::size_t>{v.end_id()}));
}

TEST(RareFirst, EqualFrequenciesBreakTiesByName) {
  const LabelVocabulary v({"b", "a"}, {{"a", 5}, {"b", 5}});
  EXPECT_EQ(names(rare_first_order({"b", "a"}, v), v), (std::vector<std::string>{"a", "b", kEndName}));
}

TEST(RareFirst, FrequentFirstReverses) {
  const LabelVocabulary v({"sky", "map"}, {{"sky", 74190}, {"map", 60}});
  EXPECT_EQ(names(rare_first_order({"map", "sky"}, v, LabelOrder::FrequentFirst), v),
            (std::vector<std::string>{"sky", "map", kEndName}));
}

TEST(RareFirst, UnknownLabelThrows) {
  const LabelVocabulary v({"a"});
  EXPECT_THROW(rare_first_order({"zzz"}, v), std::invalid_argument);
}

TEST(SequenceToSet, DropsEnd) {
  const LabelVocabulary v({"sky", "map"});
  const LabelSequence s{{v.id("map"), v.id("sky"), v.end_id()}};
  EXPECT_EQ(sequence_to_set(s, v), (std::set<std::string>{"map", "sky"}));
  EXPECT_TRUE(sequence_to_set(LabelSequence{{v.end_id()}}, v).empty());
}

TEST(SequenceToSet, StopsAtFirstEndAndSkipsStart) {
  const LabelVocabulary v({"a", "b", "c"});
  const LabelSequence s{{v.start_id(), v.id("a"), v.id("a"), v.end_id(), v.id("c")}};
  EXPECT_EQ(sequence_to_set(s, v), (std::set<std::string>{"a"}));
}

TEST(RareFirst, RoundTripAndOrderSoundnessOnRandomSets) {
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> freq;
  std::mt19937_64 rng(21);
  for (int i = 0; i < 12; ++i) {
    labels.push_back("l" + std::to_string(i));
    freq[labels.back()] = rng() % 6;  // many ties
  }
  const LabelVocabulary v(labels, freq);
  for (int trial = 0; trial < 1000; ++trial) {
    std::set<std::string> s;
    for (const auto& l : labels) {
      if (rng() % 3 == 0) s.insert(l);
    }
    const auto seq = rare_first_order(s, v);
    EXPECT_EQ(sequence_to_set(seq, v), s);
    ASSERT_EQ(seq.tokens.back(), v.end_id());
    for (std::size_t i = 0; i + 2 < seq.tokens.size(); ++i) {
      EXPECT_LE(v.frequency(v.name(seq.tokens[i])), v.frequency(v.name(seq.tokens[i + 1])));
    }
  }
}

TEST(Vocabulary, SpecialTokensAreLastTwo) {
  const LabelVocabulary v({"x", "y", "z"});
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.start_id(), 3u);
  EXPECT_EQ(v.end_id(), 4u);
  EXPECT_EQ(v.name(3), kStartName);
  EXPECT_EQ(v.name(4), kEndName);
}

TEST(Vocabulary, RejectsReservedAndDuplicateNames) {
  EXPECT_THROW(LabelVocabulary({kEndName}), std::invalid_argument);
  EXPECT_THROW(LabelVocabulary({"a", "a"}), std::invalid_argument);
}

TEST(Vocabulary, FileRoundTrip) {
  const LabelVocabulary v({"red", "square"}, {{"red", 9}, {"square", 4}});
  std::stringstream ss;
  write_vocabulary(ss, v);
  EXPECT_EQ(ss.str(), "0\tred\t9\n1\tsquare\t4\n2\t<START>\t0\n3\t<END>\t0\n");
  EXPECT_EQ(read_vocabulary(ss), v);
}

TEST(Vocabulary, MalformedFilesAreRejected) {
  std::stringstream missing_end("0\ta\t1\n1\t<START>\t0\n");
  EXPECT_THROW(read_vocabulary(missing_end), std::runtime_error);
  std::stringstream gap("0\ta\t1\n2\t<START>\t0\n3\t<END>\t0\n");
  EXPECT_THROW(read_vocabulary(gap), std::runtime_error);
}
