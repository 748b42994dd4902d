#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scrnn/base64.hpp"
#include "scrnn/labelseq.hpp"
#include "scrnn/tensor.hpp"

namespace scrnn {

enum class ObjectShape { Square, Circle, Triangle, Bar };
enum class Colour { Red, Green, Blue, Yellow };

inline constexpr std::array<const char*, 4> kShapeNames = {"square", "circle", "triangle", "bar"};
inline constexpr std::array<const char*, 4> kColourNames = {"red", "green", "blue", "yellow"};

/// The twelve multi-label concepts, in id order.
inline const std::vector<std::string>& concept_names() {
  static const std::vector<std::string> names = {"square", "circle", "triangle", "bar",    "red",     "green",
                                                 "blue",   "yellow", "single",   "crowded", "stacked", "monochrome"};
  return names;
}

/// Thirty noisy-tag words: the concept names plus photo-sharing chatter.
inline const std::vector<std::string>& tag_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = concept_names();
    for (const char* extra : {"photo", "nikon", "canon", "art", "nature", "macro", "bw", "flickr", "explore",
                              "abstract", "light", "night", "travel", "summer", "city", "color", "texture",
                              "pattern"}) {
      v.emplace_back(extra);
    }
    return v;
  }();
  return names;
}

/// Closed caption word list; every caption is built from these.
inline const std::vector<std::string>& caption_words() {
  static const std::vector<std::string> words = {"a",    "red",    "green",    "blue",  "yellow", "square",
                                                 "circle", "triangle", "bar", "above", "beside", "and"};
  return words;
}

struct SceneObject {
  ObjectShape shape;
  Colour colour;
  double cx;
  double cy;
  double radius;
};

struct Sample {
  std::size_t id = 0;
  Tensor image;  // [3 x G x G], channel-major, values in [0, 1]
  std::vector<std::string> concepts;
  std::vector<std::string> tags;
  std::vector<std::string> caption;
  std::vector<SceneObject> objects;  // generation-time only; not serialised
};

/// Scenes are laid out on this many rows and columns of equal cells.
inline constexpr std::size_t kLayoutCells = 3;

struct DatasetSpec {
  std::size_t n_samples = 1000;
  std::uint64_t seed = 1;
  std::size_t grid = 32;
  double correlation = 0.5;  // lift of designated colour/shape pairs over independence
  double tag_noise = 0.1;
  double tag_drop = 0.2;
  double rare_shape_prob = 0.05;
  double pixel_noise = 0.1;
  double min_radius = 3.0;
  double max_radius = 4.0;
  double position_jitter = 0.75;  // max offset of an object centre from its layout cell centre
  double train_fraction = 0.8;

  void validate() const {
    auto unit = [](double v, const char* what) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
    };
    if (n_samples < 1) throw std::invalid_argument("n_samples must be at least 1");
    if (grid < 16) throw std::invalid_argument("grid must be at least 16");
    unit(correlation, "correlation");
    unit(tag_noise, "tag_noise");
    unit(tag_drop, "tag_drop");
    unit(rare_shape_prob, "rare_shape_prob");
    unit(train_fraction, "train_fraction");
    if (!(pixel_noise >= 0.0)) throw std::invalid_argument("pixel_noise must be non-negative");
    const double pitch = static_cast<double>(grid) / static_cast<double>(kLayoutCells);
    if (!(min_radius >= 1.0 && max_radius >= min_radius && position_jitter >= 0.0 &&
          max_radius + position_jitter < pitch / 2.0)) {
      throw std::invalid_argument("objects must fit their layout cell: need 1 <= min_radius <= max_radius and "
                                  "max_radius + position_jitter < grid / " + std::to_string(2 * kLayoutCells));
    }
  }
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> test;
  LabelVocabulary concepts;  // frequencies over the training split
  LabelVocabulary words;     // caption words, frequencies over the training split
};

/// Colour/shape pairs whose co-occurrence is lifted by the correlation knob.
inline constexpr std::array<std::pair<Colour, ObjectShape>, 3> kCorrelatedPairs = {
    std::pair{Colour::Red, ObjectShape::Square}, std::pair{Colour::Green, ObjectShape::Circle},
    std::pair{Colour::Blue, ObjectShape::Triangle}};

namespace synth_detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline bool inside(const SceneObject& o, double x, double y) {
  const double dx = x - o.cx, dy = y - o.cy, r = o.radius;
  switch (o.shape) {
    case ObjectShape::Square: return std::abs(dx) <= r && std::abs(dy) <= r;
    case ObjectShape::Circle: return dx * dx + dy * dy <= r * r;
    case ObjectShape::Triangle: return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0;
    case ObjectShape::Bar: return std::abs(dx) <= r && std::abs(dy) <= r / 3.0;
  }
  return false;
}

inline std::array<double, 3> rgb(Colour c) {
  switch (c) {
    case Colour::Red: return {0.9, 0.1, 0.1};
    case Colour::Green: return {0.1, 0.8, 0.1};
    case Colour::Blue: return {0.15, 0.2, 0.95};
    case Colour::Yellow: return {0.9, 0.85, 0.1};
  }
  return {0, 0, 0};
}

/// One object is above the other when their horizontal extents overlap.
inline bool vertical(const SceneObject& a, const SceneObject& b) {
  return std::abs(a.cx - b.cx) < a.radius + b.radius;
}

inline std::string caption_phrase_colour(const SceneObject& o) { return kColourNames[static_cast<int>(o.colour)]; }
inline std::string caption_phrase_shape(const SceneObject& o) { return kShapeNames[static_cast<int>(o.shape)]; }

}  // namespace synth_detail

/// Concepts implied by a scene's objects, in concept id order.
inline std::vector<std::string> concepts_of(const std::vector<SceneObject>& objects) {
  std::set<std::string> on;
  for (const auto& o : objects) {
    on.insert(kShapeNames[static_cast<int>(o.shape)]);
    on.insert(kColourNames[static_cast<int>(o.colour)]);
  }
  if (objects.size() == 1) on.insert("single");
  if (objects.size() >= 3) on.insert("crowded");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if (synth_detail::vertical(objects[i], objects[j])) on.insert("stacked");
    }
  }
  if (objects.size() >= 2 && std::all_of(objects.begin(), objects.end(),
                                         [&](const SceneObject& o) { return o.colour == objects[0].colour; })) {
    on.insert("monochrome");
  }
  std::vector<std::string> out;
  for (const auto& c : concept_names()) {
    if (on.contains(c)) out.push_back(c);
  }
  return out;
}

/// Caption grammar: "a C S", "a C S (above|beside) a C S", optionally followed
/// by "and a C S". If some pair of objects is vertically arranged, the caption
/// opens with the first such pair (top first, "above"); otherwise with the two
/// leftmost objects ("beside"). Remaining objects follow left to right.
inline std::vector<std::string> caption_of(std::vector<SceneObject> objects) {
  using namespace synth_detail;
  std::stable_sort(objects.begin(), objects.end(), [](const SceneObject& a, const SceneObject& b) { return a.cx < b.cx; });
  std::vector<std::string> words;
  auto phrase = [&](const SceneObject& o) {
    words.push_back("a");
    words.push_back(caption_phrase_colour(o));
    words.push_back(caption_phrase_shape(o));
  };
  if (objects.empty()) return words;
  if (objects.size() == 1) {
    phrase(objects[0]);
    return words;
  }
  std::size_t lead_a = 0, lead_b = 1;
  bool above = false;
  for (std::size_t i = 0; i < objects.size() && !above; ++i) {
    for (std::size_t j = i + 1; j < objects.size() && !above; ++j) {
      if (vertical(objects[i], objects[j])) {
        above = true;
        lead_a = i;
        lead_b = j;
      }
    }
  }
  if (above && objects[lead_b].cy < objects[lead_a].cy) std::swap(lead_a, lead_b);
  phrase(objects[lead_a]);
  words.push_back(above ? "above" : "beside");
  phrase(objects[lead_b]);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i == lead_a || i == lead_b) continue;
    words.push_back("and");
    phrase(objects[i]);
  }
  return words;
}

/// Parses a caption back into (colour, shape) pairs; throws if it is not a sentence of the grammar.
inline std::vector<std::pair<std::string, std::string>> parse_caption(const std::vector<std::string>& words) {
  auto is_in = [](const std::string& w, const auto& list) {
    return std::find(list.begin(), list.end(), w) != list.end();
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t i = 0;
  auto phrase = [&] {
    if (i + 3 > words.size() || words[i] != "a" || !is_in(words[i + 1], kColourNames) ||
        !is_in(words[i + 2], kShapeNames)) {
      throw std::invalid_argument("caption does not match grammar at word " + std::to_string(i));
    }
    out.emplace_back(words[i + 1], words[i + 2]);
    i += 3;
  };
  phrase();
  if (i == words.size()) return out;
  if (words[i] != "above" && words[i] != "beside") throw std::invalid_argument("expected relation word");
  ++i;
  phrase();
  while (i < words.size()) {
    if (words[i] != "and") throw std::invalid_argument("expected 'and'");
    ++i;
    phrase();
  }
  return out;
}

/// Generates sample `index` from (spec.seed, index) alone.
inline Sample generate_sample(const DatasetSpec& spec, std::size_t index) {
  using namespace synth_detail;
  std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(index) + 0x51ED2701ULL)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double G = static_cast<double>(spec.grid);

  const double u = unit(rng);
  const std::size_t want = u < 0.3 ? 1 : (u < 0.7 ? 2 : 3);

  // Objects occupy distinct cells of a kLayoutCells x kLayoutCells layout.
  std::array<std::size_t, kLayoutCells * kLayoutCells> cells{};
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  std::shuffle(cells.begin(), cells.end(), rng);
  const double pitch = G / static_cast<double>(kLayoutCells);

  Sample s;
  s.id = index;
  for (std::size_t k = 0; k < want; ++k) {
    SceneObject o{};
    o.colour = static_cast<Colour>(std::uniform_int_distribution<int>(0, 3)(rng));
    const auto* pair = std::find_if(kCorrelatedPairs.begin(), kCorrelatedPairs.end(),
                                    [&](const auto& p) { return p.first == o.colour; });
    const double lift = unit(rng);
    const double base = unit(rng);
    if (pair != kCorrelatedPairs.end() && lift < spec.correlation) {
      o.shape = pair->second;
    } else if (base < spec.rare_shape_prob) {
      o.shape = ObjectShape::Bar;
    } else {
      o.shape = static_cast<ObjectShape>(std::uniform_int_distribution<int>(0, 2)(rng));
    }
    o.radius = spec.min_radius + (spec.max_radius - spec.min_radius) * unit(rng);
    const std::size_t cell = cells[k];
    const double cx = (static_cast<double>(cell % kLayoutCells) + 0.5) * pitch;
    const double cy = (static_cast<double>(cell / kLayoutCells) + 0.5) * pitch;
    o.cx = cx + spec.position_jitter * (2.0 * unit(rng) - 1.0);
    o.cy = cy + spec.position_jitter * (2.0 * unit(rng) - 1.0);
    s.objects.push_back(o);
  }

  const std::size_t g = spec.grid;
  s.image = Tensor({3, g, g});
  std::normal_distribution<double> noise(0.0, 1.0);
  std::array<std::array<double, 3>, 3> tint{};
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    auto c = rgb(s.objects[k].colour);
    for (auto& ch : c) ch = std::clamp(ch + 0.16 * (unit(rng) - 0.5), 0.0, 1.0);
    tint[k] = c;
  }
  for (std::size_t y = 0; y < g; ++y) {
    for (std::size_t x = 0; x < g; ++x) {
      std::array<double, 3> px = {0.1, 0.1, 0.1};
      for (std::size_t k = 0; k < s.objects.size(); ++k) {
        if (inside(s.objects[k], static_cast<double>(x), static_cast<double>(y))) px = tint[k];
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(px[c] + spec.pixel_noise * noise(rng), 0.0, 1.0);
        s.image[(c * g + y) * g + x] = static_cast<double>(static_cast<float>(v));
      }
    }
  }

  s.concepts = concepts_of(s.objects);
  s.caption = caption_of(s.objects);

  std::set<std::string> tags;
  const auto& tag_vocab = tag_names();
  std::uniform_int_distribution<std::size_t> any_tag(0, tag_vocab.size() - 1);
  for (const auto& c : s.concepts) {
    const double drop = unit(rng);
    const double corrupt = unit(rng);
    const std::size_t replacement = any_tag(rng);
    if (drop < spec.tag_drop) continue;
    tags.insert(corrupt < spec.tag_noise ? tag_vocab[replacement] : c);
  }
  for (const auto& t : tag_vocab) {
    if (tags.contains(t)) s.tags.push_back(t);
  }
  return s;
}

inline LabelVocabulary counted_vocabulary(const std::vector<std::string>& names, const std::vector<Sample>& samples,
                                          bool from_captions) {
  std::map<std::string, std::size_t> freq;
  for (const auto& n : names) freq[n] = 0;
  for (const auto& s : samples) {
    for (const auto& w : from_captions ? s.caption : s.concepts) ++freq.at(w);
  }
  return LabelVocabulary(names, freq);
}

/// Deterministic dataset with a seeded 80/20 split; vocabulary frequencies
/// come from the training split only.
inline Dataset gen_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  std::vector<std::size_t> order(spec.n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 split_rng(synth_detail::splitmix64(spec.seed ^ 0xA5A5A5A5ULL));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(spec.n_samples)));
  std::vector<bool> is_train(spec.n_samples, false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    (is_train[i] ? ds.train : ds.test).push_back(generate_sample(spec, i));
  }
  ds.concepts = counted_vocabulary(concept_names(), ds.train, false);
  ds.words = counted_vocabulary(caption_words(), ds.train, true);
  return ds;
}

struct CaptionConcepts {
  LabelVocabulary vocab;   // top_k words by occurrence count
  double coverage = 0.0;   // fraction of word occurrences covered
};

/// The top_k most frequent caption words (ties by word) become the caption concept set.
inline CaptionConcepts concept_vocab_from_captions(const std::vector<Sample>& samples, std::size_t top_k) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& s : samples) {
    for (const auto& w : s.caption) {
      ++counts[w];
      ++total;
    }
  }
  if (top_k > counts.size()) {
    throw std::invalid_argument("top_k " + std::to_string(top_k) + " exceeds " + std::to_string(counts.size()) +
                                " distinct caption words");
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  ranked.resize(top_k);
  std::vector<std::string> names;
  std::map<std::string, std::size_t> freq;
  std::size_t covered = 0;
  for (const auto& [w, c] : ranked) {
    names.push_back(w);
    freq[w] = c;
    covered += c;
  }
  CaptionConcepts out{LabelVocabulary(names, freq), total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0};
  return out;
}

/// Binary indicator over `vocab` labels of the given names (unknown names are ignored).
inline Tensor indicator(const std::vector<std::string>& names, const LabelVocabulary& vocab) {
  Tensor v({vocab.num_labels()});
  for (const auto& n : names) {
    if (vocab.contains(n)) v[vocab.id(n)] = 1.0;
  }
  return v;
}

// ---------------------------------------------------------------------------
// JSONL records: {id, image, concepts, tags, caption}. `image` is base-64 of
// little-endian float32 values in row-major (y, x, channel) order, G*G*3 of them.

inline std::string encode_image(const Tensor& chw) {
  const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  std::vector<unsigned char> bytes(H * W * C * 4);
  std::size_t o = 0;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < C; ++c) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(chw[(c * H + y) * W + x]));
        for (int b = 0; b < 4; ++b) bytes[o++] = static_cast<unsigned char>(bits >> (8 * b));
      }
    }
  }
  return base64_encode(bytes);
}

inline Tensor decode_image(const std::string& b64, std::size_t grid) {
  const auto bytes = base64_decode(b64);
  if (bytes.size() != grid * grid * 3 * 4) {
    throw std::runtime_error("image payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(grid * grid * 12));
  }
  Tensor chw({3, grid, grid});
  std::size_t o = 0;
  for (std::size_t y = 0; y < grid; ++y) {
    for (std::size_t x = 0; x < grid; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[o++]) << (8 * b);
        chw[(c * grid + y) * grid + x] = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
  }
  return chw;
}

inline nlohmann::json sample_to_json(const Sample& s) {
  return nlohmann::json{{"id", s.id},
                        {"image", encode_image(s.image)},
                        {"concepts", s.concepts},
                        {"tags", s.tags},
                        {"caption", s.caption}};
}

inline Sample sample_from_json(const nlohmann::json& j) {
  Sample s;
  s.id = j.at("id").get<std::size_t>();
  const auto b64 = j.at("image").get<std::string>();
  const std::size_t floats = base64_decode(b64).size() / 4;
  const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(floats) / 3.0)));
  s.image = decode_image(b64, grid);
  s.concepts = j.at("concepts").get<std::vector<std::string>>();
  s.tags = j.at("tags").get<std::vector<std::string>>();
  s.caption = j.at("caption").get<std::vector<std::string>>();
  return s;
}

inline void write_jsonl(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (const auto& s : samples) os << sample_to_json(s).dump() << '\n';
}

inline std::vector<Sample> read_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace scrnn
