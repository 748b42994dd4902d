#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scrnn/decode.hpp"
#include "scrnn/metrics.hpp"
#include "scrnn/seqmodel.hpp"
#include "scrnn/synthdata.hpp"
#include "scrnn/training_data.hpp"
#include "scrnn/unary.hpp"

namespace scrnn {

/// Staged training schedule shared by the CLI and the experiment drivers.
struct Schedule {
  UnaryTrainConfig unary{};
  RnnTrainConfig rnn{};
  JointTrainConfig joint{};
  std::size_t max_len = 8;
};

/// Stage 1a, 1b and 2 on one model. Stages with zero epochs/iterations are skipped.
struct StagedHistory {
  UnaryTrainReport unary;
  std::vector<double> rnn;
  std::vector<JointLossReport> joint;
};

inline StagedHistory train_staged(SCRModel& m, const TrainingSet& train, const Schedule& s) {
  StagedHistory h;
  if (s.unary.epochs > 0 || (m.side && s.unary.side_epochs > 0)) {
    h.unary = pretrain_unary(m.unary, m.side_mlp(), train, s.unary);
  }
  if (m.semantic() && s.rnn.epochs > 0) h.rnn = pretrain_rnn(m, train, s.rnn);
  if (s.joint.iterations > 0) h.joint = train_joint(m, train, s.joint);
  return h;
}

/// Concept predictions s_hat [k] for every example.
inline std::vector<Tensor> concept_predictions(SCRModel& m, const TrainingSet& data, std::size_t batch_size = 64) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    const Batch batch = make_batch(data, i, std::min(data.size(), i + batch_size));
    Graph g;
    const NodeId s_hat = interface_forward(g, m, batch.images, batch.tags).s_hat;
    g.forward();
    const Tensor& v = g.value(s_hat);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto row = v.row(r);
      out.emplace_back(Shape{row.size()}, std::vector<double>(row.begin(), row.end()));
    }
  }
  return out;
}

inline std::set<std::size_t> threshold_set(const Tensor& s_hat, double threshold = 0.5) {
  std::set<std::size_t> out;
  for (std::size_t c = 0; c < s_hat.size(); ++c) {
    if (s_hat[c] >= threshold) out.insert(c);
  }
  return out;
}

inline std::vector<std::set<std::size_t>> truth_sets(const TrainingSet& data) {
  std::vector<std::set<std::size_t>> out;
  for (const auto& e : data.examples) out.push_back(threshold_set(e.concepts));
  return out;
}

/// Greedy, duplicate-masked label sets decoded from the model's interface.
inline std::vector<std::set<std::size_t>> decoded_sets(SCRModel& m, const TrainingSet& data, std::size_t max_len) {
  std::vector<std::set<std::size_t>> out;
  for (const auto& e : interface_embeddings(m, data)) {
    out.push_back(sequence_to_id_set(greedy_decode(m, e, max_len).tokens, m.vocab_size()));
  }
  return out;
}

struct MultilabelComparison {
  MultiLabelReport model;     // decoded label sets
  MultiLabelReport baseline;  // s_hat >= 0.5 from the same unary net
  double seconds = 0.0;
};

inline MultilabelComparison evaluate_multilabel(SCRModel& m, const TrainingSet& test, std::size_t max_len) {
  MultilabelComparison r;
  const auto truth = truth_sets(test);
  r.model = multilabel_report(decoded_sets(m, test, max_len), truth, test.num_concepts);
  std::vector<std::set<std::size_t>> base;
  for (const auto& s : concept_predictions(m, test)) base.push_back(threshold_set(s));
  r.baseline = multilabel_report(base, truth, test.num_concepts);
  return r;
}

struct MultilabelRun {
  DatasetSpec data{};
  ModelConfig model{};
  Schedule schedule{};
  bool side_info = false;
  std::uint64_t model_seed = 1;
};

inline MultilabelComparison run_multilabel(const MultilabelRun& run, SCRModel* keep = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = gen_dataset(run.data);
  const TrainingSet train = make_multilabel_set(ds.train, ds.concepts);
  const TrainingSet test = make_multilabel_set(ds.test, ds.concepts);
  ModelConfig mc = run.model;
  mc.unary.grid = run.data.grid;
  mc.unary.num_concepts = train.num_concepts;
  mc.vocab_size = train.vocab_size;
  mc.num_tags = run.side_info ? train.num_tags : 0;
  SCRModel m(mc, run.model_seed);
  train_staged(m, train, run.schedule);
  MultilabelComparison r = evaluate_multilabel(m, test, run.schedule.max_len);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (keep) *keep = std::move(m);
  return r;
}

// ---------------------------------------------------------------------------
// Structured-prediction and side-information comparisons.

/// Settings of the correlated multi-label experiment: 2,000 train / 500 test scenes.
inline MultilabelRun structured_gain_run(std::uint64_t seed, bool side_info) {
  MultilabelRun run;
  run.data.n_samples = 2500;
  run.data.correlation = 0.8;
  run.data.tag_noise = 0.3;
  run.data.seed = seed;
  run.schedule.unary.epochs = 15;
  run.schedule.unary.side_epochs = 10;
  run.schedule.unary.seed = seed;
  run.schedule.rnn.epochs = 15;
  run.schedule.rnn.seed = seed;
  run.schedule.joint.iterations = 1000;
  run.schedule.joint.seed = seed;
  run.schedule.max_len = 8;
  run.side_info = side_info;
  run.model_seed = seed;
  return run;
}

// ---------------------------------------------------------------------------
// Convergence of joint training per interface variant.

struct ConvergenceSettings {
  DatasetSpec data{};
  ModelConfig model{};  // grid, concept count and vocabulary come from the data
  UnaryTrainConfig unary{};
  RnnTrainConfig rnn{};
  JointTrainConfig joint{};  // iterations is the cap
  double threshold = 3.0;    // per-sample L_r on the probe set
  std::size_t probe_size = 200;
  std::size_t eval_every = 25;
};

inline ConvergenceSettings convergence_settings(std::uint64_t seed) {
  ConvergenceSettings s;
  s.data.n_samples = 1250;
  s.data.correlation = 0.8;
  s.data.seed = seed;
  s.unary.epochs = 8;
  s.unary.seed = seed;
  s.rnn.epochs = 8;
  s.rnn.seed = seed;
  s.joint.iterations = 1500;
  s.joint.seed = seed;
  return s;
}

struct ConvergenceResult {
  InterfaceVariant variant;
  std::size_t iterations = 0;  // cap + 1 when the threshold was never reached
  bool reached = false;
  double final_probe_loss = 0.0;
};

/// All variants start from the same pretrained unary net and share a decoder
/// initialisation seed; the semantic variant additionally runs decoder pretraining on s,
/// which the feature interfaces cannot. Joint training then runs until the probe
/// L_r (first `probe_size` training samples, checked every `eval_every`
/// iterations) falls below the threshold.
inline std::vector<ConvergenceResult> run_convergence(const ConvergenceSettings& s, std::uint64_t model_seed) {
  const Dataset ds = gen_dataset(s.data);
  const TrainingSet train = make_multilabel_set(ds.train, ds.concepts);
  TrainingSet probe = train;
  probe.examples.resize(std::min(s.probe_size, train.size()));

  ModelConfig base_cfg = s.model;
  base_cfg.num_tags = 0;
  base_cfg.unary.grid = s.data.grid;
  base_cfg.unary.num_concepts = train.num_concepts;
  base_cfg.vocab_size = train.vocab_size;
  SCRModel base(base_cfg, model_seed);
  pretrain_unary(base.unary, nullptr, train, s.unary);

  std::vector<ConvergenceResult> out;
  for (auto v : {InterfaceVariant::SemanticPrediction, InterfaceVariant::FeatureDeeplySupervised,
                 InterfaceVariant::FeatureUnsupervised}) {
    ModelConfig cfg = base_cfg;
    cfg.variant = v;
    SCRModel m(cfg, model_seed + 100);
    m.unary = base.unary;
    if (m.semantic()) pretrain_rnn(m, train, s.rnn);
    ConvergenceResult r{v, s.joint.iterations + 1, false, 0.0};
    train_joint(m, train, s.joint, [&](std::size_t it, const JointLossReport&) {
      if ((it + 1) % s.eval_every != 0) return true;
      r.final_probe_loss = relational_loss(m, probe);
      if (r.final_probe_loss < s.threshold) {
        r.iterations = it + 1;
        r.reached = true;
        return false;
      }
      return true;
    });
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Captioning on the scene grammar.

struct CaptionRun {
  DatasetSpec data{};
  std::size_t top_k = 12;
  ModelConfig model{};
  Schedule schedule{};
  std::uint64_t model_seed = 1;
};

/// 500 training scenes; the caption concept set is every caption word.
inline CaptionRun caption_run(std::uint64_t seed) {
  CaptionRun run;
  run.data.n_samples = 625;
  run.data.correlation = 0.8;
  run.data.seed = seed;
  run.schedule.unary.epochs = 30;
  run.schedule.unary.optimiser.learning_rate = 3e-3;
  run.schedule.unary.seed = seed;
  run.schedule.rnn.epochs = 100;
  run.schedule.rnn.optimiser.learning_rate = 3e-3;
  run.schedule.rnn.seed = seed;
  run.schedule.joint.iterations = 1000;
  run.schedule.joint.seed = seed;
  run.schedule.max_len = 16;
  run.model_seed = seed;
  return run;
}

struct CaptionOutcome {
  double bleu4 = 0.0;  // corpus BLEU-4 of greedy captions, END stripped
  std::array<double, 4> bleu{};  // BLEU-1..4 of greedy captions
  std::size_t ended = 0;         // captions terminated by END within max_len
  std::size_t total = 0;
  std::vector<std::vector<std::string>> captions;
  std::vector<std::vector<std::string>> references;
};

/// Strips a trailing END; reports whether it was there.
inline bool strip_end(std::vector<std::size_t>& tokens, std::size_t vocab) {
  if (!tokens.empty() && tokens.back() == end_token(vocab)) {
    tokens.pop_back();
    return true;
  }
  return false;
}

/// Greedy (unmasked) captions for every test example, scored against the generating captions.
inline CaptionOutcome evaluate_captions(SCRModel& m, const TrainingSet& test, const LabelVocabulary& words,
                                        std::size_t max_len, std::size_t beam_width = 0) {
  CaptionOutcome out;
  std::vector<std::vector<std::size_t>> cands;
  std::vector<std::vector<std::vector<std::size_t>>> refs;
  const auto embs = interface_embeddings(m, test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto tokens = beam_width == 0 ? greedy_decode(m, embs[i], max_len, false).tokens
                                  : beam_search(m, embs[i], beam_width, max_len).tokens;
    if (strip_end(tokens, m.vocab_size()) && tokens.size() <= max_len) ++out.ended;
    auto ref = test.examples[i].target;
    strip_end(ref, m.vocab_size());
    out.captions.push_back(sequence_names(tokens, words));
    out.references.push_back(sequence_names(ref, words));
    cands.push_back(std::move(tokens));
    refs.push_back({std::move(ref)});
  }
  out.total = test.size();
  for (std::size_t n = 1; n <= 4; ++n) out.bleu[n - 1] = corpus_bleu(cands, refs, n);
  out.bleu4 = out.bleu[3];
  return out;
}

inline CaptionOutcome run_captioning(const CaptionRun& run) {
  const Dataset ds = gen_dataset(run.data);
  const auto concepts = concept_vocab_from_captions(ds.train, run.top_k);
  const TrainingSet train = make_caption_set(ds.train, concepts.vocab, ds.words);
  const TrainingSet test = make_caption_set(ds.test, concepts.vocab, ds.words);
  ModelConfig mc = run.model;
  mc.unary.grid = run.data.grid;
  mc.unary.num_concepts = train.num_concepts;
  mc.vocab_size = train.vocab_size;
  SCRModel m(mc, run.model_seed);
  train_staged(m, train, run.schedule);
  return evaluate_captions(m, test, ds.words, run.schedule.max_len);
}

}  // namespace scrnn
