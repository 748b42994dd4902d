#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "scrnn/labelseq.hpp"
#include "scrnn/lstm.hpp"
#include "scrnn/seqmodel.hpp"
#include "scrnn/training_data.hpp"

namespace scrnn {

using StepFunction = std::function<DecoderStepResult(std::size_t, const LSTMState&)>;

/// Everything a decoder needs: the initial state, the vocabulary size, and a step.
struct DecodeSource {
  LSTMState start;
  std::size_t vocab = 0;
  StepFunction step;
};

inline DecodeSource decode_source(SCRModel& m, const Tensor& embedding) {
  return {init_state_from_embedding(embedding, m.init_proj), m.vocab_size(),
          [&m](std::size_t prev, const LSTMState& s) { return decoder_step(prev, s, m.embed, m.out, m.lstm); }};
}

/// Interface embeddings for every example of a set, one row each.
inline std::vector<Tensor> interface_embeddings(SCRModel& m, const TrainingSet& data, std::size_t batch_size = 64) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    const Batch batch = make_batch(data, i, std::min(data.size(), i + batch_size));
    Graph g;
    const NodeId e = interface_forward(g, m, batch.images, batch.tags).embedding;
    g.forward();
    const Tensor& v = g.value(e);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto row = v.row(r);
      out.emplace_back(Shape{row.size()}, std::vector<double>(row.begin(), row.end()));
    }
  }
  return out;
}

/// Argmax over y, skipping START and masked ids; first index wins ties.
inline std::size_t decode_argmax(const Tensor& y, const std::vector<bool>& masked) {
  const std::size_t start = start_token(y.size());
  std::size_t best = y.size();
  for (std::size_t v = 0; v < y.size(); ++v) {
    if (v == start || masked[v]) continue;
    if (best == y.size() || y[v] > y[best]) best = v;
  }
  return best;
}

/// Feeds START then its own argmax until END or max_len + 1 tokens have been
/// emitted. With `mask_duplicates`, labels already emitted are not emitted again.
inline LabelSequence greedy_decode(const DecodeSource& src, std::size_t max_len, bool mask_duplicates = true) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  const std::size_t end = end_token(src.vocab);
  std::vector<bool> masked(src.vocab, false);
  LabelSequence seq;
  LSTMState state = src.start;
  std::size_t prev = start_token(src.vocab);
  for (std::size_t t = 0; t <= max_len; ++t) {
    auto step = src.step(prev, state);
    const std::size_t tok = decode_argmax(step.y, masked);
    seq.tokens.push_back(tok);
    if (tok == end) break;
    if (mask_duplicates) masked[tok] = true;
    state = std::move(step.state);
    prev = tok;
  }
  return seq;
}

inline LabelSequence greedy_decode(SCRModel& m, const Tensor& embedding, std::size_t max_len,
                                   bool mask_duplicates = true) {
  return greedy_decode(decode_source(m, embedding), max_len, mask_duplicates);
}

struct Hypothesis {
  std::vector<std::size_t> tokens;
  double log_prob = 0.0;
  LSTMState state;
  bool completed = false;
};

struct BeamResult {
  std::vector<std::size_t> tokens;
  double log_prob = 0.0;
  bool completed = false;
};

/// Length-bounded beam over summed log y_t with at most max_len + 1 steps.
/// Hypotheses that emit END stay in the beam and compete on total score.
/// Returns the best completed hypothesis, or the best partial one if none completed.
inline BeamResult beam_search(const DecodeSource& src, std::size_t width, std::size_t max_len) {
  if (width < 1) throw std::invalid_argument("beam_search: width must be at least 1");
  if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be at least 1");
  const std::size_t end = end_token(src.vocab);
  const std::size_t start = start_token(src.vocab);
  std::vector<Hypothesis> beam{Hypothesis{{}, 0.0, src.start, false}};
  auto by_score = [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; };
  for (std::size_t t = 0; t <= max_len; ++t) {
    std::vector<Hypothesis> candidates;
    for (auto& h : beam) {
      if (h.completed) {
        candidates.push_back(h);
        continue;
      }
      auto step = src.step(h.tokens.empty() ? start : h.tokens.back(), h.state);
      for (std::size_t v = 0; v < src.vocab; ++v) {
        if (v == start) continue;
        Hypothesis next{h.tokens, h.log_prob + std::log(step.y[v]), {}, v == end};
        next.tokens.push_back(v);
        if (!next.completed) next.state = step.state;
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), by_score);
    if (candidates.size() > width) candidates.resize(width);
    beam = std::move(candidates);
    // Scores only fall as hypotheses grow, so a finished leader cannot be overtaken.
    if (beam.front().completed) break;
  }
  const Hypothesis* best = nullptr;
  for (const auto& h : beam) {
    if (h.completed) {
      best = &h;
      break;
    }
  }
  if (!best) best = &beam.front();
  return {best->tokens, best->log_prob, best->completed};
}

inline BeamResult beam_search(SCRModel& m, const Tensor& embedding, std::size_t width, std::size_t max_len) {
  return beam_search(decode_source(m, embedding), width, max_len);
}

/// Sum of log y_t[token_t] obtained by feeding `tokens` back through the step function.
inline double replay_log_prob(const DecodeSource& src, const std::vector<std::size_t>& tokens) {
  double total = 0.0;
  LSTMState state = src.start;
  std::size_t prev = start_token(src.vocab);
  for (std::size_t tok : tokens) {
    auto step = src.step(prev, state);
    total += std::log(step.y[tok]);
    state = std::move(step.state);
    prev = tok;
  }
  return total;
}

}  // namespace scrnn
