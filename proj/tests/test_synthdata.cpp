#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "scrnn.hpp"

using namespace scrnn;

namespace {

DatasetSpec small_spec(std::uint64_t seed, std::size_t n = 200) {
  DatasetSpec s;
  s.n_samples = n;
  s.seed = seed;
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("scrnn_synth_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(SynthData, VocabularySizes) {
  EXPECT_EQ(concept_names().size(), 12u);
  EXPECT_EQ(tag_names().size(), 30u);
  EXPECT_EQ(caption_words().size() + 2, 14u);
}

TEST(SynthData, SameSeedGivesIdenticalDataset) {
  const auto a = gen_dataset(small_spec(4));
  const auto b = gen_dataset(small_spec(4));
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].image, b.train[i].image);
    EXPECT_EQ(a.train[i].concepts, b.train[i].concepts);
    EXPECT_EQ(a.train[i].tags, b.train[i].tags);
  }
  EXPECT_EQ(a.concepts, b.concepts);
}

TEST(SynthData, DifferentSeedsDiffer) {
  EXPECT_NE(gen_dataset(small_spec(4)).train[0].image, gen_dataset(small_spec(5)).train[0].image);
}

TEST(SynthData, SplitIsEightyTwenty) {
  const auto ds = gen_dataset(small_spec(3, 250));
  EXPECT_EQ(ds.train.size(), 200u);
  EXPECT_EQ(ds.test.size(), 50u);
}

TEST(SynthData, VocabularyFrequenciesComeFromTrainingSplit) {
  const auto ds = gen_dataset(small_spec(6));
  std::map<std::string, std::size_t> counts;
  for (const auto& s : ds.train)
    for (const auto& c : s.concepts) ++counts[c];
  for (const auto& c : concept_names()) EXPECT_EQ(ds.concepts.frequency(c), counts[c]) << c;
}

TEST(SynthData, RareShapeIsRarest) {
  const auto ds = gen_dataset(small_spec(7, 1000));
  for (const char* shape : {"square", "circle", "triangle"}) {
    EXPECT_LT(ds.concepts.frequency("bar"), ds.concepts.frequency(shape));
  }
}

TEST(SynthData, FullCorrelationTiesColoursToShapes) {
  auto spec = small_spec(8, 300);
  spec.correlation = 1.0;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    for (const auto& o : generate_sample(spec, i).objects) {
      for (const auto& [colour, shape] : kCorrelatedPairs) {
        if (o.colour == colour) {
          EXPECT_EQ(o.shape, shape);
        }
      }
    }
  }
}

TEST(SynthData, ZeroCorrelationMakesShapeIndependentOfColour) {
  auto spec = small_spec(9, 6000);
  spec.correlation = 0.0;
  std::map<Colour, std::array<double, 4>> counts;
  std::map<Colour, double> totals;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    for (const auto& o : generate_sample(spec, i).objects) {
      counts[o.colour][static_cast<int>(o.shape)] += 1;
      totals[o.colour] += 1;
    }
  }
  // Each colour has about 3,000 objects; 0.035 is over four standard errors of a proportion near 1/3.
  for (int shape = 0; shape < 4; ++shape) {
    std::vector<double> freq;
    for (auto& [c, n] : totals) freq.push_back(counts[c][shape] / n);
    const auto [lo, hi] = std::minmax_element(freq.begin(), freq.end());
    EXPECT_LT(*hi - *lo, 0.035) << "shape " << shape;
  }
}

TEST(SynthData, HighCorrelationLiftsDesignatedPairs) {
  auto spec = small_spec(10, 2000);
  spec.correlation = 0.8;
  double red = 0, red_square = 0, other = 0, other_square = 0;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    for (const auto& o : generate_sample(spec, i).objects) {
      const bool sq = o.shape == ObjectShape::Square;
      if (o.colour == Colour::Red) {
        red += 1;
        red_square += sq;
      } else if (o.colour == Colour::Yellow) {
        other += 1;
        other_square += sq;
      }
    }
  }
  EXPECT_GT(red_square / red, 0.8);
  EXPECT_LT(other_square / other, 0.4);
}

TEST(SynthData, ConceptsAgreeWithRenderedColours) {
  auto spec = small_spec(11, 100);
  spec.pixel_noise = 0.0;
  const double G = static_cast<double>(spec.grid);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const Sample s = generate_sample(spec, i);
    // Colours by pixel: every painted pixel is within 0.08 of a base colour per channel.
    const std::map<std::string, std::array<double, 3>> base = {
        {"red", {0.9, 0.1, 0.1}}, {"green", {0.1, 0.8, 0.1}}, {"blue", {0.15, 0.2, 0.95}}, {"yellow", {0.9, 0.85, 0.1}}};
    std::set<std::string> seen;
    for (std::size_t y = 0; y < spec.grid; ++y) {
      for (std::size_t x = 0; x < spec.grid; ++x) {
        for (const auto& [name, rgb] : base) {
          bool close = true;
          for (std::size_t c = 0; c < 3; ++c) {
            close = close && std::abs(s.image[(c * spec.grid + y) * spec.grid + x] - rgb[c]) <= 0.0801;
          }
          if (close) seen.insert(name);
        }
      }
    }
    std::set<std::string> stored_colours;
    for (const auto& c : s.concepts) {
      if (base.contains(c)) stored_colours.insert(c);
    }
    EXPECT_EQ(seen, stored_colours) << "sample " << i;

    // Counting and layout concepts from the object list.
    const std::set<std::string> stored(s.concepts.begin(), s.concepts.end());
    EXPECT_EQ(stored.contains("single"), s.objects.size() == 1);
    EXPECT_EQ(stored.contains("crowded"), s.objects.size() >= 3);
    bool stacked = false;
    for (std::size_t a = 0; a < s.objects.size(); ++a)
      for (std::size_t b = a + 1; b < s.objects.size(); ++b)
        stacked = stacked || std::abs(s.objects[a].cx - s.objects[b].cx) < s.objects[a].radius + s.objects[b].radius;
    EXPECT_EQ(stored.contains("stacked"), stacked);
    EXPECT_EQ(stored.contains("monochrome"), s.objects.size() >= 2 && stored_colours.size() == 1);
    for (const auto& o : s.objects) {
      EXPECT_GE(o.cx - o.radius, 0.0);
      EXPECT_LE(o.cx + o.radius, G);
      EXPECT_GE(o.cy - o.radius, 0.0);
      EXPECT_LE(o.cy + o.radius, G);
    }
  }
}

TEST(SynthData, CaptionsParseAndMentionExactlyTheObjects) {
  const auto spec = small_spec(12, 300);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const Sample s = generate_sample(spec, i);
    auto parsed = parse_caption(s.caption);
    std::vector<std::pair<std::string, std::string>> objects;
    for (const auto& o : s.objects) {
      objects.emplace_back(kColourNames[static_cast<int>(o.colour)], kShapeNames[static_cast<int>(o.shape)]);
    }
    std::sort(parsed.begin(), parsed.end());
    std::sort(objects.begin(), objects.end());
    EXPECT_EQ(parsed, objects) << "sample " << i;
    for (const auto& w : s.caption) {
      EXPECT_NE(std::find(caption_words().begin(), caption_words().end(), w), caption_words().end());
    }
  }
}

TEST(SynthData, CaptionRelationFollowsLayout) {
  SceneObject top{ObjectShape::Square, Colour::Red, 10.0, 5.0, 3.0};
  SceneObject below{ObjectShape::Circle, Colour::Blue, 11.0, 20.0, 3.0};
  SceneObject far{ObjectShape::Bar, Colour::Green, 27.0, 20.0, 3.0};
  EXPECT_EQ(caption_of({below, top}),
            (std::vector<std::string>{"a", "red", "square", "above", "a", "blue", "circle"}));
  EXPECT_EQ(caption_of({far, top}), (std::vector<std::string>{"a", "red", "square", "beside", "a", "green", "bar"}));
  EXPECT_EQ(caption_of({far, below, top}),
            (std::vector<std::string>{"a", "red", "square", "above", "a", "blue", "circle", "and", "a", "green", "bar"}));
}

TEST(SynthData, MalformedCaptionsAreRejected) {
  EXPECT_THROW(parse_caption({"a", "red"}), std::invalid_argument);
  EXPECT_THROW(parse_caption({"a", "red", "square", "near", "a", "blue", "bar"}), std::invalid_argument);
}

TEST(SynthData, TagsAreCleanWithoutNoiseOrDrop) {
  auto spec = small_spec(13, 50);
  spec.tag_noise = 0.0;
  spec.tag_drop = 0.0;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const Sample s = generate_sample(spec, i);
    EXPECT_EQ(s.tags, s.concepts);
  }
}

TEST(SynthData, InvalidSpecsAreRejected) {
  auto bad = small_spec(1);
  bad.correlation = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = small_spec(1);
  bad.max_radius = 6.0;  // no longer fits a cell of a 32 grid
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = small_spec(1);
  bad.n_samples = 0;
  EXPECT_THROW(gen_dataset(bad), std::invalid_argument);
}

TEST(SynthData, JsonlRoundTripIsExactAndFilesAreReproducible) {
  const auto dir = temp_dir("jsonl");
  const auto ds = gen_dataset(small_spec(14, 40));
  write_jsonl((dir / "a.jsonl").string(), ds.train);
  write_jsonl((dir / "b.jsonl").string(), gen_dataset(small_spec(14, 40)).train);
  EXPECT_EQ(read_text_file((dir / "a.jsonl").string()), read_text_file((dir / "b.jsonl").string()));
  const auto back = read_jsonl((dir / "a.jsonl").string());
  ASSERT_EQ(back.size(), ds.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, ds.train[i].id);
    EXPECT_EQ(back[i].image, ds.train[i].image);
    EXPECT_EQ(back[i].concepts, ds.train[i].concepts);
    EXPECT_EQ(back[i].tags, ds.train[i].tags);
    EXPECT_EQ(back[i].caption, ds.train[i].caption);
  }
}

TEST(SynthData, ImageEncodingIsRowMajorInterleaved) {
  Tensor chw({3, 1, 2});
  for (std::size_t i = 0; i < 6; ++i) chw[i] = static_cast<double>(i) * 0.125;
  // (y=0,x=0): channels 0, 2, 4; (y=0,x=1): 1, 3, 5 in units of 0.125
  const auto bytes = base64_decode(encode_image(chw));
  ASSERT_EQ(bytes.size(), 24u);
  auto at = [&](std::size_t k) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * k + b]) << (8 * b);
    return static_cast<double>(std::bit_cast<float>(bits));
  };
  const std::vector<double> expect = {0, 0.25, 0.5, 0.125, 0.375, 0.625};
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(at(k), expect[k]);
}

TEST(SynthData, CaptionConceptsAreMostFrequentWords) {
  const auto ds = gen_dataset(small_spec(15, 300));
  const auto cc = concept_vocab_from_captions(ds.train, 12);
  EXPECT_EQ(cc.vocab.num_labels(), 12u);
  EXPECT_DOUBLE_EQ(cc.coverage, 1.0);
  const auto top3 = concept_vocab_from_captions(ds.train, 3);
  EXPECT_TRUE(top3.vocab.contains("a"));
  EXPECT_LT(top3.coverage, 1.0);
  EXPECT_THROW(concept_vocab_from_captions(ds.train, 13), std::invalid_argument);
}
