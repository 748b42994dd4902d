#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance gate. They share no code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "scrnn.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// LSTM step with explicit loops.

struct ScalarGate {
  std::vector<std::vector<double>> Wh, Wc, Wx;
  std::vector<double> b;
};

inline ScalarGate copy_gate(const scrnn::GateParams& gp) {
  auto mat = [](const scrnn::Tensor& t) {
    std::vector<std::vector<double>> m(t.dim(0), std::vector<double>(t.dim(1)));
    for (std::size_t r = 0; r < t.dim(0); ++r)
      for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t[r * t.dim(1) + c];
    return m;
  };
  return {mat(gp.W_h.value), mat(gp.W_c.value), mat(gp.W_x.value), gp.b.value.values()};
}

struct ScalarState {
  std::vector<double> h, c;
};

/// One step for one row. Peephole terms read c_{t-1} for all three gates and the block input.
inline ScalarState lstm_step(const std::vector<double>& x, const ScalarState& prev, const std::vector<ScalarGate>& gates,
                             bool peepholes, bool relu_block = false) {
  const std::size_t H = prev.h.size();
  auto pre = [&](const ScalarGate& g, std::size_t r) {
    double a = g.b[r];
    for (std::size_t k = 0; k < H; ++k) a += g.Wh[r][k] * prev.h[k];
    if (peepholes)
      for (std::size_t k = 0; k < H; ++k) a += g.Wc[r][k] * prev.c[k];
    for (std::size_t k = 0; k < x.size(); ++k) a += g.Wx[r][k] * x[k];
    return a;
  };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  ScalarState next{std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t r = 0; r < H; ++r) {
    const double i = sig(pre(gates[0], r));
    const double f = sig(pre(gates[1], r));
    const double o = sig(pre(gates[2], r));
    const double gpre = pre(gates[3], r);
    const double g = relu_block ? std::max(0.0, gpre) : std::tanh(gpre);
    next.c[r] = f * prev.c[r] + i * g;
    next.h[r] = o * std::tanh(next.c[r]);
  }
  return next;
}

// ---------------------------------------------------------------------------
// Multi-label metrics by direct counting.

struct Metrics {
  double cp, cr, cf1, op, orr, of1;
};

inline Metrics multilabel(const std::vector<std::set<std::size_t>>& pred,
                          const std::vector<std::set<std::size_t>>& truth, std::size_t classes) {
  auto f1 = [](double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); };
  double sp = 0, sr = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double tp = 0;
    for (auto l : pred[i]) tp += truth[i].count(l);
    sp += pred[i].empty() ? 0.0 : tp / pred[i].size();
    sr += truth[i].empty() ? 0.0 : tp / truth[i].size();
  }
  const double n = static_cast<double>(pred.size());
  double cp = 0, cr = 0, counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    double tp = 0, npred = 0, ntrue = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i].count(c), t = truth[i].count(c);
      tp += p && t;
      npred += p;
      ntrue += t;
    }
    if (ntrue == 0) continue;
    counted += 1;
    cp += npred == 0 ? 0.0 : tp / npred;
    cr += tp / ntrue;
  }
  Metrics m{};
  m.op = sp / n;
  m.orr = sr / n;
  m.of1 = f1(m.op, m.orr);
  m.cp = counted ? cp / counted : 0.0;
  m.cr = counted ? cr / counted : 0.0;
  m.cf1 = f1(m.cp, m.cr);
  return m;
}

// ---------------------------------------------------------------------------
// BLEU with n-grams keyed as strings.

inline std::map<std::string, int> grams(const std::vector<std::string>& s, std::size_t n) {
  std::map<std::string, int> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) key += s[i + k] + "\x1f";
    ++out[key];
  }
  return out;
}

struct BleuStats {
  std::vector<double> matched, total;
  double c = 0, r = 0;
};

inline void accumulate(BleuStats& st, const std::vector<std::string>& cand,
                       const std::vector<std::vector<std::string>>& refs, std::size_t N) {
  st.matched.resize(N);
  st.total.resize(N);
  for (std::size_t n = 1; n <= N; ++n) {
    const auto cg = grams(cand, n);
    for (const auto& [g, cnt] : cg) {
      int best = 0;
      for (const auto& ref : refs) {
        const auto rg = grams(ref, n);
        auto it = rg.find(g);
        if (it != rg.end()) best = std::max(best, it->second);
      }
      st.matched[n - 1] += std::min(cnt, best);
      st.total[n - 1] += cnt;
    }
  }
  st.c += static_cast<double>(cand.size());
  // Closest reference length, the shorter one on ties.
  double best_len = -1;
  for (const auto& ref : refs) {
    const double d = std::abs(static_cast<double>(ref.size()) - static_cast<double>(cand.size()));
    const double bd = std::abs(best_len - static_cast<double>(cand.size()));
    if (best_len < 0 || d < bd || (d == bd && static_cast<double>(ref.size()) < best_len)) {
      best_len = static_cast<double>(ref.size());
    }
  }
  st.r += best_len;
}

inline double score(const BleuStats& st) {
  if (st.c == 0) return 0.0;
  double logsum = 0;
  for (std::size_t n = 0; n < st.matched.size(); ++n) {
    if (st.matched[n] == 0) return 0.0;
    logsum += std::log(st.matched[n] / st.total[n]);
  }
  const double bp = st.c > st.r ? 1.0 : std::exp(1.0 - st.r / st.c);
  return bp * std::exp(logsum / static_cast<double>(st.matched.size()));
}

inline double bleu(const std::vector<std::string>& cand, const std::vector<std::vector<std::string>>& refs,
                   std::size_t N) {
  BleuStats st;
  accumulate(st, cand, refs, N);
  return score(st);
}

inline double corpus_bleu(const std::vector<std::vector<std::string>>& cands,
                          const std::vector<std::vector<std::vector<std::string>>>& refs, std::size_t N) {
  BleuStats st;
  for (std::size_t i = 0; i < cands.size(); ++i) accumulate(st, cands[i], refs[i], N);
  return score(st);
}

// ---------------------------------------------------------------------------
// Decoding by exhaustive enumeration.

struct Best {
  std::vector<std::size_t> tokens;
  double log_prob = -INFINITY;
};

/// Highest-scoring sequence that ends with END within max_len + 1 tokens.
/// Ties keep the first sequence in depth-first token order.
inline Best exhaustive(const scrnn::DecodeSource& src, std::size_t max_len) {
  const std::size_t V = src.vocab, start = V - 2, end = V - 1;
  Best best;
  std::vector<std::size_t> prefix;
  std::function<void(std::size_t, const scrnn::LSTMState&, double)> rec = [&](std::size_t prev,
                                                                             const scrnn::LSTMState& s, double lp) {
    const auto step = src.step(prev, s);
    for (std::size_t v = 0; v < V; ++v) {
      if (v == start) continue;
      const double score = lp + std::log(step.y[v]);
      prefix.push_back(v);
      if (v == end) {
        if (score > best.log_prob) best = {prefix, score};
      } else if (prefix.size() <= max_len) {
        rec(v, step.state, score);
      }
      prefix.pop_back();
    }
  };
  rec(start, src.start, 0.0);
  return best;
}

/// A small random decoder (vocabulary V including START/END) with a random start state.
struct ToyDecoder {
  scrnn::LSTMParams lstm;
  scrnn::EmbeddingMatrix embed;
  scrnn::DenseLayer out;
  scrnn::LSTMState start;

  ToyDecoder(std::size_t V, std::uint64_t seed, double spread = 2.0) {
    scrnn::Rng rng(seed);
    lstm = scrnn::LSTMParams("lstm", scrnn::LSTMConfig{3, 4, false, scrnn::BlockActivation::Tanh}, rng);
    embed = scrnn::EmbeddingMatrix("embed", 3, V, rng);
    out = scrnn::DenseLayer("out", 4, V, rng);
    for (auto* p : lstm.parameters()) p->value = scrnn::uniform_tensor(p->value.shape(), rng, spread);
    embed.E.value = scrnn::uniform_tensor(embed.E.value.shape(), rng, spread);
    out.W.value = scrnn::uniform_tensor(out.W.value.shape(), rng, spread);
    out.b.value = scrnn::uniform_tensor(out.b.value.shape(), rng, spread);
    start = {scrnn::uniform_tensor({1, 4}, rng, 1.0), scrnn::uniform_tensor({1, 4}, rng, 1.0)};
  }

  scrnn::DecodeSource source() {
    return {start, embed.vocab(), [this](std::size_t prev, const scrnn::LSTMState& s) {
              return scrnn::decoder_step(prev, s, embed, out, lstm);
            }};
  }
};

inline std::size_t saturating_width(std::size_t V, std::size_t max_len) {
  std::size_t w = 1;
  for (std::size_t t = 0; t <= max_len; ++t) w *= V - 1;
  return w;
}

}  // namespace oracle
