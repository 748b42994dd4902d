#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/labelseq.hpp"
#include "scrnn/synthdata.hpp"
#include "scrnn/tensor.hpp"

namespace scrnn {

/// One model-ready example: image, concept targets s, tag indicator, and the
/// decoder target path (ending with END).
struct Example {
  Tensor image;     // [3 x G x G]
  Tensor concepts;  // [k], binary
  Tensor tags;      // [T], binary
  std::vector<std::size_t> target;
};

struct TrainingSet {
  std::vector<Example> examples;
  std::size_t num_concepts = 0;
  std::size_t num_tags = 0;
  std::size_t vocab_size = 0;  // decoder vocabulary including START/END

  bool empty() const { return examples.empty(); }
  std::size_t size() const { return examples.size(); }
  const Shape& image_shape() const { return examples.at(0).image.shape(); }
};

struct Batch {
  Tensor images;    // [B x 3 x G x G]
  Tensor concepts;  // [B x k]
  Tensor tags;      // [B x T]
  std::vector<std::vector<std::size_t>> targets;

  std::size_t size() const { return targets.size(); }
};

inline Batch make_batch(const TrainingSet& set, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const std::size_t B = indices.size();
  Shape img = set.image_shape();
  img.insert(img.begin(), B);
  Batch b{Tensor(img), Tensor({B, set.num_concepts}), Tensor({B, std::max<std::size_t>(set.num_tags, 1)}), {}};
  const std::size_t img_size = shape_size(set.image_shape());
  for (std::size_t r = 0; r < B; ++r) {
    const Example& e = set.examples.at(indices[r]);
    std::copy(e.image.values().begin(), e.image.values().end(), b.images.values().begin() + static_cast<std::ptrdiff_t>(r * img_size));
    std::copy(e.concepts.values().begin(), e.concepts.values().end(),
              b.concepts.values().begin() + static_cast<std::ptrdiff_t>(r * set.num_concepts));
    if (set.num_tags > 0) {
      std::copy(e.tags.values().begin(), e.tags.values().end(),
                b.tags.values().begin() + static_cast<std::ptrdiff_t>(r * set.num_tags));
    }
    b.targets.push_back(e.target);
  }
  return b;
}

inline Batch make_batch(const TrainingSet& set, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return make_batch(set, idx);
}

/// Multi-label task: targets are the concept sets in rare-first order.
inline TrainingSet make_multilabel_set(const std::vector<Sample>& samples, const LabelVocabulary& concepts,
                                       LabelOrder order = LabelOrder::RareFirst) {
  TrainingSet set;
  set.num_concepts = concepts.num_labels();
  const LabelVocabulary tag_vocab(tag_names());
  set.num_tags = tag_vocab.num_labels();
  set.vocab_size = concepts.size();
  for (const auto& s : samples) {
    Example e{s.image, indicator(s.concepts, concepts), indicator(s.tags, tag_vocab), {}};
    e.target = rare_first_order(std::set<std::string>(s.concepts.begin(), s.concepts.end()), concepts, order).tokens;
    set.examples.push_back(std::move(e));
  }
  return set;
}

/// Captioning task: s marks caption concept words present in the caption,
/// targets are the caption word ids followed by END.
inline TrainingSet make_caption_set(const std::vector<Sample>& samples, const LabelVocabulary& caption_concepts,
                                    const LabelVocabulary& words) {
  TrainingSet set;
  set.num_concepts = caption_concepts.num_labels();
  const LabelVocabulary tag_vocab(tag_names());
  set.num_tags = tag_vocab.num_labels();
  set.vocab_size = words.size();
  for (const auto& s : samples) {
    Example e{s.image, indicator(s.caption, caption_concepts), indicator(s.tags, tag_vocab), {}};
    for (const auto& w : s.caption) e.target.push_back(words.id(w));
    e.target.push_back(words.end_id());
    set.examples.push_back(std::move(e));
  }
  return set;
}

/// Shuffled minibatch index lists for one epoch. batch_size 0 means full batch.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng,
                                                           bool shuffle = true) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);
  const std::size_t bs = batch_size == 0 ? n : batch_size;
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += bs) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + bs)));
  }
  return out;
}

}  // namespace scrnn
