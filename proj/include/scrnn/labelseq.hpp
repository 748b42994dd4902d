#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/lstm.hpp"

namespace scrnn {

inline const std::string kStartName = "<START>";
inline const std::string kEndName = "<END>";

/// Labels with dense ids 0..k-1 followed by START (k) and END (k+1), so START
/// is always V-2 and END is V-1 for V = k + 2.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;

  LabelVocabulary(std::vector<std::string> labels, std::map<std::string, std::size_t> frequencies = {})
      : labels_(std::move(labels)), frequencies_(std::move(frequencies)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == kStartName || labels_[i] == kEndName) {
        throw std::invalid_argument("label name " + labels_[i] + " is reserved");
      }
      if (!index_.emplace(labels_[i], i).second) throw std::invalid_argument("duplicate label " + labels_[i]);
      frequencies_.try_emplace(labels_[i], 0);
    }
    for (const auto& [name, count] : frequencies_) {
      if (!index_.contains(name)) throw std::invalid_argument("frequency given for unknown label " + name);
    }
  }

  std::size_t num_labels() const noexcept { return labels_.size(); }
  /// Decoder vocabulary size including START and END.
  std::size_t size() const noexcept { return labels_.size() + 2; }
  std::size_t start_id() const noexcept { return start_token(size()); }
  std::size_t end_id() const noexcept { return end_token(size()); }

  bool contains(const std::string& label) const { return index_.contains(label); }

  std::size_t id(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw std::invalid_argument("unknown label '" + label + "'");
    return it->second;
  }

  const std::string& name(std::size_t id) const {
    if (id < labels_.size()) return labels_[id];
    if (id == start_id()) return kStartName;
    if (id == end_id()) return kEndName;
    throw std::out_of_range("label id " + std::to_string(id) + " outside vocabulary");
  }

  std::size_t frequency(const std::string& label) const {
    auto it = frequencies_.find(label);
    if (it == frequencies_.end()) throw std::invalid_argument("unknown label '" + label + "'");
    return it->second;
  }

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::map<std::string, std::size_t>& frequencies() const noexcept { return frequencies_; }

  friend bool operator==(const LabelVocabulary& a, const LabelVocabulary& b) {
    return a.labels_ == b.labels_ && a.frequencies_ == b.frequencies_;
  }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t> frequencies_;
  std::map<std::string, std::size_t> index_;
};

/// Ordered prediction path: label ids terminated by END.
struct LabelSequence {
  std::vector<std::size_t> tokens;

  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

enum class LabelOrder { RareFirst, FrequentFirst };

/// Sorts labels by ascending training frequency (ties by label string) and appends END.
inline LabelSequence rare_first_order(const std::set<std::string>& labels, const LabelVocabulary& vocab,
                                      LabelOrder order = LabelOrder::RareFirst) {
  std::vector<std::string> sorted(labels.begin(), labels.end());
  for (const auto& l : sorted) vocab.id(l);  // throws on unknown labels
  std::stable_sort(sorted.begin(), sorted.end(), [&](const std::string& a, const std::string& b) {
    const auto fa = vocab.frequency(a), fb = vocab.frequency(b);
    if (fa != fb) return order == LabelOrder::RareFirst ? fa < fb : fa > fb;
    return a < b;
  });
  LabelSequence seq;
  for (const auto& l : sorted) seq.tokens.push_back(vocab.id(l));
  seq.tokens.push_back(vocab.end_id());
  return seq;
}

/// Label ids before the first END, special tokens and duplicates dropped.
inline std::set<std::size_t> sequence_to_id_set(const std::vector<std::size_t>& tokens, std::size_t vocab_size) {
  std::set<std::size_t> out;
  for (auto t : tokens) {
    if (t == end_token(vocab_size)) break;
    if (t == start_token(vocab_size)) continue;
    out.insert(t);
  }
  return out;
}

inline std::set<std::string> sequence_to_set(const LabelSequence& seq, const LabelVocabulary& vocab) {
  std::set<std::string> out;
  for (auto id : sequence_to_id_set(seq.tokens, vocab.size())) out.insert(vocab.name(id));
  return out;
}

inline std::vector<std::string> sequence_names(const std::vector<std::size_t>& tokens, const LabelVocabulary& vocab) {
  std::vector<std::string> out;
  for (auto t : tokens) out.push_back(vocab.name(t));
  return out;
}

// Vocabulary files are tab-separated lines "id<TAB>name<TAB>frequency", labels
// first, then <START> at V-2 and <END> at V-1 with frequency 0.

inline void write_vocabulary(std::ostream& os, const LabelVocabulary& vocab) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto& name = vocab.name(i);
    const std::size_t freq = i < vocab.num_labels() ? vocab.frequency(name) : 0;
    os << i << '\t' << name << '\t' << freq << '\n';
  }
}

inline LabelVocabulary read_vocabulary(std::istream& is) {
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> freqs;
  std::string line;
  std::vector<std::string> specials;
  std::size_t expected = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t id = 0, freq = 0;
    std::string name;
    if (!(ls >> id) || ls.get() != '\t' || !std::getline(ls, name, '\t') || !(ls >> freq)) {
      throw std::runtime_error("malformed vocabulary line: " + line);
    }
    if (id != expected++) throw std::runtime_error("vocabulary ids must be dense and ordered: " + line);
    if (name == kStartName || name == kEndName) {
      specials.push_back(name);
    } else {
      if (!specials.empty()) throw std::runtime_error("label after special tokens: " + line);
      labels.push_back(name);
      freqs[name] = freq;
    }
  }
  if (specials != std::vector<std::string>{kStartName, kEndName}) {
    throw std::runtime_error("vocabulary must end with <START> then <END>");
  }
  return LabelVocabulary(std::move(labels), std::move(freqs));
}

inline void save_vocabulary(const std::string& path, const LabelVocabulary& vocab) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_vocabulary(os, vocab);
}

inline LabelVocabulary load_vocabulary(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_vocabulary(is);
}

}  // namespace scrnn
