#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/labelseq.hpp"

namespace scrnn {

struct MultiLabelReport {
  double c_p = 0.0, c_r = 0.0, c_f1 = 0.0;
  double o_p = 0.0, o_r = 0.0, o_f1 = 0.0;
  // Degenerate cases: these contribute 0 (samples) or are left out (classes).
  std::size_t empty_predictions = 0;      // samples with nothing predicted, p = 0
  std::size_t empty_truths = 0;           // samples with no true label, r = 0
  std::size_t classes_without_truth = 0;  // excluded from C-P and C-R
  std::size_t classes_never_predicted = 0;  // among evaluated classes, p_c = 0
  std::size_t classes_evaluated = 0;
};

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// O-P/O-R average per-sample precision and recall; C-P/C-R average per-class
/// ones over classes that occur in the truths. F1s come from the averaged P and R.
inline MultiLabelReport multilabel_report(const std::vector<std::set<std::size_t>>& predictions,
                                          const std::vector<std::set<std::size_t>>& truths, std::size_t num_classes) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("multilabel_report: " + std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(truths.size()) + " truths");
  }
  MultiLabelReport rep;
  std::vector<std::size_t> hit(num_classes, 0), predicted(num_classes, 0), actual(num_classes, 0);
  double sum_p = 0.0, sum_r = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& pred = predictions[i];
    const auto& truth = truths[i];
    std::size_t inter = 0;
    for (std::size_t c : pred) {
      if (c >= num_classes) throw std::out_of_range("multilabel_report: label id " + std::to_string(c) + " out of range");
      ++predicted[c];
      if (truth.count(c)) {
        ++inter;
        ++hit[c];
      }
    }
    for (std::size_t c : truth) {
      if (c >= num_classes) throw std::out_of_range("multilabel_report: label id " + std::to_string(c) + " out of range");
      ++actual[c];
    }
    if (pred.empty()) {
      ++rep.empty_predictions;
    } else {
      sum_p += static_cast<double>(inter) / static_cast<double>(pred.size());
    }
    if (truth.empty()) {
      ++rep.empty_truths;
    } else {
      sum_r += static_cast<double>(inter) / static_cast<double>(truth.size());
    }
  }
  if (!predictions.empty()) {
    rep.o_p = sum_p / static_cast<double>(predictions.size());
    rep.o_r = sum_r / static_cast<double>(predictions.size());
  }
  double cp = 0.0, cr = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (actual[c] == 0) {
      ++rep.classes_without_truth;
      continue;
    }
    ++rep.classes_evaluated;
    if (predicted[c] == 0) {
      ++rep.classes_never_predicted;
    } else {
      cp += static_cast<double>(hit[c]) / static_cast<double>(predicted[c]);
    }
    cr += static_cast<double>(hit[c]) / static_cast<double>(actual[c]);
  }
  if (rep.classes_evaluated > 0) {
    rep.c_p = cp / static_cast<double>(rep.classes_evaluated);
    rep.c_r = cr / static_cast<double>(rep.classes_evaluated);
  }
  rep.o_f1 = f1_score(rep.o_p, rep.o_r);
  rep.c_f1 = f1_score(rep.c_p, rep.c_r);
  return rep;
}

inline MultiLabelReport multilabel_report(const std::vector<std::set<std::string>>& predictions,
                                          const std::vector<std::set<std::string>>& truths,
                                          const LabelVocabulary& vocab) {
  auto to_ids = [&](const std::vector<std::set<std::string>>& sets) {
    std::vector<std::set<std::size_t>> out;
    for (const auto& s : sets) {
      std::set<std::size_t> ids;
      for (const auto& name : s) ids.insert(vocab.id(name));
      out.push_back(std::move(ids));
    }
    return out;
  };
  return multilabel_report(to_ids(predictions), to_ids(truths), vocab.num_labels());
}

namespace bleu_detail {

template <typename Token>
std::map<std::vector<Token>, std::size_t> ngram_counts(const std::vector<Token>& seq, std::size_t n) {
  std::map<std::vector<Token>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[std::vector<Token>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

/// Clipped matches and total candidate n-grams of order n.
template <typename Token>
std::pair<std::size_t, std::size_t> clipped(const std::vector<Token>& cand, const std::vector<std::vector<Token>>& refs,
                                            std::size_t n) {
  const auto cc = ngram_counts(cand, n);
  std::map<std::vector<Token>, std::size_t> max_ref;
  for (const auto& r : refs) {
    for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
  }
  std::size_t matched = 0, total = 0;
  for (const auto& [g, c] : cc) {
    total += c;
    auto it = max_ref.find(g);
    if (it != max_ref.end()) matched += std::min(c, it->second);
  }
  return {matched, total};
}

/// Reference length closest to c; the shorter one on ties.
template <typename Token>
std::size_t closest_ref_length(std::size_t c, const std::vector<std::vector<Token>>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

inline double combine(const std::vector<std::size_t>& matched, const std::vector<std::size_t>& total, double c,
                      double r) {
  double log_sum = 0.0;
  for (std::size_t i = 0; i < matched.size(); ++i) {
    if (matched[i] == 0 || total[i] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[i]) / static_cast<double>(total[i]));
  }
  const double bp = std::exp(std::min(0.0, 1.0 - r / c));
  return bp * std::exp(log_sum / static_cast<double>(matched.size()));
}

inline void check_order(std::size_t n) {
  if (n < 1 || n > 4) throw std::invalid_argument("bleu: order must be in 1..4, got " + std::to_string(n));
}

}  // namespace bleu_detail

/// Sentence BLEU-n: geometric mean of clipped precisions of orders 1..n times
/// exp(min(0, 1 - r/c)). Any zero precision gives 0.
template <typename Token>
double bleu(const std::vector<Token>& candidate, const std::vector<std::vector<Token>>& references, std::size_t n = 4) {
  bleu_detail::check_order(n);
  if (references.empty()) throw std::invalid_argument("bleu: no references");
  if (candidate.empty()) {
    std::cerr << "warning: bleu of an empty candidate is 0\n";
    return 0.0;
  }
  std::vector<std::size_t> matched, total;
  for (std::size_t k = 1; k <= n; ++k) {
    auto [m, t] = bleu_detail::clipped(candidate, references, k);
    matched.push_back(m);
    total.push_back(t);
  }
  const double c = static_cast<double>(candidate.size());
  return bleu_detail::combine(matched, total, c,
                              static_cast<double>(bleu_detail::closest_ref_length(candidate.size(), references)));
}

/// Corpus BLEU-n: clipped counts and lengths summed over the corpus before combining.
template <typename Token>
double corpus_bleu(const std::vector<std::vector<Token>>& candidates,
                   const std::vector<std::vector<std::vector<Token>>>& references, std::size_t n = 4) {
  bleu_detail::check_order(n);
  if (candidates.size() != references.size()) throw std::invalid_argument("corpus_bleu: length mismatch");
  std::vector<std::size_t> matched(n, 0), total(n, 0);
  std::size_t c = 0, r = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw std::invalid_argument("corpus_bleu: sample without references");
    for (std::size_t k = 1; k <= n; ++k) {
      auto [m, t] = bleu_detail::clipped(candidates[i], references[i], k);
      matched[k - 1] += m;
      total[k - 1] += t;
    }
    c += candidates[i].size();
    r += bleu_detail::closest_ref_length(candidates[i].size(), references[i]);
  }
  if (c == 0) return 0.0;
  return bleu_detail::combine(matched, total, static_cast<double>(c), static_cast<double>(r));
}

}  // namespace scrnn
