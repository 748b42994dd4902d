#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scrnn/checkpoint.hpp"
#include "scrnn/config.hpp"
#include "scrnn/decode.hpp"
#include "scrnn/experiments.hpp"
#include "scrnn/grad_suite.hpp"
#include "scrnn/metrics.hpp"
#include "scrnn/synthdata.hpp"
#include "scrnn/training_data.hpp"

namespace scrnn {

/// A command could not run because an earlier stage's artifact is missing or unusable.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::string kTrainFile = "train.jsonl";
inline const std::string kTestFile = "test.jsonl";
inline const std::string kConceptsFile = "concepts.tsv";
inline const std::string kWordsFile = "words.tsv";
inline const std::string kUnaryCheckpoint = "unary.ckpt.json";
inline const std::string kRnnCheckpoint = "rnn.ckpt.json";
inline const std::string kJointCheckpoint = "joint.ckpt.json";

struct RunPaths {
  std::filesystem::path out;   // artifacts of this run
  std::filesystem::path data;  // dataset files

  std::filesystem::path file(const std::string& name) const { return out / name; }
  std::filesystem::path data_file(const std::string& name) const { return data / name; }
};

inline RunPaths run_paths(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  return {out_dir, cfg.data_dir.empty() ? out_dir : std::filesystem::path(cfg.data_dir)};
}

namespace pipeline_detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void require_file(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::is_regular_file(p)) throw StageError("missing " + p.string() + "; " + hint);
}

inline void write_json(const std::filesystem::path& p, const nlohmann::ordered_json& j) {
  write_text_file(p.string(), j.dump(2) + "\n");
}

struct LossRow {
  std::size_t iteration;
  std::optional<double> L_u, L_r, L;
};

inline void write_loss_csv(const std::filesystem::path& p, const std::vector<LossRow>& rows) {
  std::string text = "iteration,L_u,L_r,L\n";
  auto cell = [](const std::optional<double>& v) { return v ? g17(*v) : std::string(); };
  for (const auto& r : rows) {
    text += std::to_string(r.iteration) + "," + cell(r.L_u) + "," + cell(r.L_r) + "," + cell(r.L) + "\n";
  }
  write_text_file(p.string(), text);
}

inline nlohmann::ordered_json report_json(const MultiLabelReport& r) {
  nlohmann::ordered_json j;
  j["C-P"] = r.c_p;
  j["C-R"] = r.c_r;
  j["C-F1"] = r.c_f1;
  j["O-P"] = r.o_p;
  j["O-R"] = r.o_r;
  j["O-F1"] = r.o_f1;
  j["empty_predictions"] = r.empty_predictions;
  j["empty_truths"] = r.empty_truths;
  j["classes_evaluated"] = r.classes_evaluated;
  j["classes_without_truth"] = r.classes_without_truth;
  j["classes_never_predicted"] = r.classes_never_predicted;
  return j;
}

}  // namespace pipeline_detail

/// Stores the resolved config of one command in the run directory.
inline void write_resolved_config(const RunConfig& cfg, const RunPaths& paths, const std::string& command) {
  write_text_file(paths.file(command + ".config.txt").string(), config_text(cfg));
}

// ---------------------------------------------------------------------------
// Data.

inline Dataset gen_data(const RunConfig& cfg, const RunPaths& paths) {
  const Dataset ds = gen_dataset(dataset_spec(cfg));
  std::filesystem::create_directories(paths.data);
  write_jsonl(paths.data_file(kTrainFile).string(), ds.train);
  write_jsonl(paths.data_file(kTestFile).string(), ds.test);
  save_vocabulary(paths.data_file(kConceptsFile).string(), ds.concepts);
  save_vocabulary(paths.data_file(kWordsFile).string(), ds.words);
  write_text_file(paths.data_file("config.txt").string(), config_text(cfg));
  return ds;
}

struct StoredData {
  std::vector<Sample> train;
  std::vector<Sample> test;
  LabelVocabulary concepts;
  LabelVocabulary words;
};

inline StoredData load_data(const RunPaths& paths) {
  for (const auto& f : {kTrainFile, kTestFile, kConceptsFile, kWordsFile}) {
    pipeline_detail::require_file(paths.data_file(f), "run gen-data first");
  }
  return {read_jsonl(paths.data_file(kTrainFile).string()), read_jsonl(paths.data_file(kTestFile).string()),
          load_vocabulary(paths.data_file(kConceptsFile).string()), load_vocabulary(paths.data_file(kWordsFile).string())};
}

/// Model-ready sets for the configured task. `targets` names decoder tokens.
struct TaskData {
  TrainingSet train;
  TrainingSet test;
  LabelVocabulary targets;
  std::vector<std::size_t> test_ids;
};

inline TaskData task_data(const RunConfig& cfg, const StoredData& d) {
  TaskData td;
  if (cfg.task == Task::Multilabel) {
    td.train = make_multilabel_set(d.train, d.concepts);
    td.test = make_multilabel_set(d.test, d.concepts);
    td.targets = d.concepts;
  } else {
    const auto concepts = concept_vocab_from_captions(d.train, cfg.caption_top_k).vocab;
    td.train = make_caption_set(d.train, concepts, d.words);
    td.test = make_caption_set(d.test, concepts, d.words);
    td.targets = d.words;
  }
  if (td.train.empty() || td.test.empty()) throw StageError("dataset has an empty split");
  for (const auto& s : d.test) td.test_ids.push_back(s.id);
  return td;
}

inline ModelConfig model_config(const RunConfig& cfg, const TrainingSet& train) {
  ModelConfig mc;
  mc.unary.grid = train.image_shape().at(1);
  mc.unary.conv1_channels = cfg.conv1_channels;
  mc.unary.conv2_channels = cfg.conv2_channels;
  mc.unary.num_concepts = train.num_concepts;
  mc.embed_dim = cfg.embed_dim;
  mc.hidden = cfg.hidden;
  mc.peepholes = cfg.peepholes;
  mc.vocab_size = train.vocab_size;
  mc.num_tags = cfg.side_info ? train.num_tags : 0;
  mc.variant = cfg.variant;
  return mc;
}

inline Schedule schedule(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  Schedule s;
  s.unary = {cfg.unary_epochs, cfg.unary_side_epochs, cfg.unary_batch, optimiser(cfg, cfg.unary_lr), seed};
  s.rnn = {cfg.rnn_epochs, cfg.rnn_batch, optimiser(cfg, cfg.rnn_lr), seed};
  s.joint = {cfg.joint_iterations, cfg.joint_batch, optimiser(cfg, cfg.joint_lr), cfg.joint_lambda, seed};
  s.max_len = cfg.max_len;
  return s;
}

// ---------------------------------------------------------------------------
// Training stages. Every stage starts from the same seeded initialisation, so
// parameter names and shapes agree across checkpoints of one config.

inline std::vector<double> train_unary_stage(const RunConfig& cfg, const RunPaths& paths) {
  const TaskData td = task_data(cfg, load_data(paths));
  SCRModel m(model_config(cfg, td.train), cfg.require_seed());
  const auto report = pretrain_unary(m.unary, m.side_mlp(), td.train, schedule(cfg).unary);
  save_checkpoint(paths.file(kUnaryCheckpoint).string(), m, cfg);
  // Tag-MLP epochs (if any) come first, then the fused epochs.
  std::vector<pipeline_detail::LossRow> rows;
  std::vector<double> curve = report.side_epoch_losses;
  curve.insert(curve.end(), report.epoch_losses.begin(), report.epoch_losses.end());
  for (std::size_t e = 0; e < curve.size(); ++e) rows.push_back({e + 1, curve[e], std::nullopt, curve[e]});
  pipeline_detail::write_loss_csv(paths.file("unary_loss.csv"), rows);
  return curve;
}

inline std::vector<double> train_rnn_stage(const RunConfig& cfg, const RunPaths& paths) {
  if (cfg.variant != InterfaceVariant::SemanticPrediction) {
    throw StageError("train-rnn needs the semantic variant; feature interfaces have no concept targets to pretrain on");
  }
  const TaskData td = task_data(cfg, load_data(paths));
  SCRModel m(model_config(cfg, td.train), cfg.require_seed());
  const auto curve = pretrain_rnn(m, td.train, schedule(cfg).rnn);
  save_checkpoint(paths.file(kRnnCheckpoint).string(), m, cfg);
  std::vector<pipeline_detail::LossRow> rows;
  for (std::size_t e = 0; e < curve.size(); ++e) rows.push_back({e + 1, std::nullopt, curve[e], curve[e]});
  pipeline_detail::write_loss_csv(paths.file("rnn_loss.csv"), rows);
  return curve;
}

/// Loads the pretrained pieces the variant needs: the unary net always, and
/// for the semantic variant also the pretrained decoder.
inline void load_pretrained(SCRModel& m, const RunPaths& paths) {
  const auto unary_path = paths.file(kUnaryCheckpoint);
  pipeline_detail::require_file(unary_path, "run train-unary first");
  assign_parameters(read_checkpoint(unary_path.string()), m.unary_parameters(), unary_path.string());
  if (m.semantic()) {
    const auto rnn_path = paths.file(kRnnCheckpoint);
    pipeline_detail::require_file(rnn_path, "run train-rnn first");
    assign_parameters(read_checkpoint(rnn_path.string()), m.decoder_parameters(), rnn_path.string());
  }
}

inline std::vector<JointLossReport> train_joint_stage(const RunConfig& cfg, const RunPaths& paths) {
  const TaskData td = task_data(cfg, load_data(paths));
  SCRModel m(model_config(cfg, td.train), cfg.require_seed());
  load_pretrained(m, paths);
  const auto history = train_joint(m, td.train, schedule(cfg).joint);
  save_checkpoint(paths.file(kJointCheckpoint).string(), m, cfg);
  std::vector<pipeline_detail::LossRow> rows;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    rows.push_back({i + 1, m.uses_unary_loss() ? std::optional<double>(h.L_u) : std::nullopt, h.L_r, h.L});
  }
  pipeline_detail::write_loss_csv(paths.file("joint_loss.csv"), rows);
  return history;
}

inline SCRModel load_joint_model(const RunConfig& cfg, const RunPaths& paths, const TaskData& td) {
  const auto path = paths.file(kJointCheckpoint);
  pipeline_detail::require_file(path, "run train-joint first");
  SCRModel m(model_config(cfg, td.train), cfg.require_seed());
  load_checkpoint(read_checkpoint(path.string()), m, path.string());
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation and inference.

inline MultilabelComparison eval_multilabel_stage(const RunConfig& cfg, const RunPaths& paths) {
  if (cfg.task != Task::Multilabel) throw StageError("eval-multilabel needs task = multilabel");
  const TaskData td = task_data(cfg, load_data(paths));
  SCRModel m = load_joint_model(cfg, paths, td);
  const auto r = evaluate_multilabel(m, td.test, cfg.max_len);
  nlohmann::ordered_json j;
  j["task"] = task_name(cfg.task);
  j["variant"] = variant_name(cfg.variant);
  j["test_samples"] = td.test.size();
  j["max_len"] = cfg.max_len;
  j["model"] = pipeline_detail::report_json(r.model);
  j["baseline"] = pipeline_detail::report_json(r.baseline);
  pipeline_detail::write_json(paths.file("metrics_multilabel.json"), j);
  return r;
}

struct CaptionEval {
  CaptionOutcome greedy;
  CaptionOutcome beam;
};

inline CaptionEval eval_caption_stage(const RunConfig& cfg, const RunPaths& paths) {
  if (cfg.task != Task::Caption) throw StageError("eval-caption needs task = caption");
  const TaskData td = task_data(cfg, load_data(paths));
  SCRModel m = load_joint_model(cfg, paths, td);
  CaptionEval r{evaluate_captions(m, td.test, td.targets, cfg.max_len),
                evaluate_captions(m, td.test, td.targets, cfg.max_len, cfg.beam_width)};
  auto block = [](const CaptionOutcome& o) {
    nlohmann::ordered_json j;
    for (std::size_t n = 1; n <= 4; ++n) j["BLEU-" + std::to_string(n)] = o.bleu[n - 1];
    j["ended"] = o.ended;
    j["total"] = o.total;
    return j;
  };
  nlohmann::ordered_json j;
  j["task"] = task_name(cfg.task);
  j["variant"] = variant_name(cfg.variant);
  j["test_samples"] = td.test.size();
  j["max_len"] = cfg.max_len;
  j["greedy"] = block(r.greedy);
  j["beam_width"] = cfg.beam_width;
  j["beam"] = block(r.beam);
  pipeline_detail::write_json(paths.file("metrics_caption.json"), j);

  std::string lines;
  for (std::size_t i = 0; i < r.greedy.total; ++i) {
    lines += nlohmann::ordered_json{{"id", td.test_ids[i]},
                                    {"greedy", r.greedy.captions[i]},
                                    {"beam", r.beam.captions[i]},
                                    {"reference", r.greedy.references[i]}}
                 .dump() +
             "\n";
  }
  write_text_file(paths.file("captions.jsonl").string(), lines);
  return r;
}

/// Decodes every record of `input` (default: the test split) with greedy and
/// beam search and writes predictions.jsonl. Returns the number of records.
inline std::size_t infer_stage(const RunConfig& cfg, const RunPaths& paths, const std::string& input = "") {
  const StoredData stored = load_data(paths);
  const TaskData td = task_data(cfg, stored);
  SCRModel m = load_joint_model(cfg, paths, td);
  StoredData query = stored;
  if (!input.empty()) {
    pipeline_detail::require_file(input, "expected a dataset JSONL file");
    query.test = read_jsonl(input);
  }
  const TaskData qd = task_data(cfg, query);
  const bool mask = cfg.task == Task::Multilabel;
  const auto embs = interface_embeddings(m, qd.test);
  const auto s_hat = concept_predictions(m, qd.test);
  std::string lines;
  for (std::size_t i = 0; i < embs.size(); ++i) {
    const auto greedy = greedy_decode(m, embs[i], cfg.max_len, mask).tokens;
    const auto beam = beam_search(m, embs[i], cfg.beam_width, cfg.max_len);
    nlohmann::ordered_json j;
    j["id"] = qd.test_ids[i];
    j["greedy"] = sequence_names(greedy, td.targets);
    j["beam"] = sequence_names(beam.tokens, td.targets);
    j["beam_log_prob"] = beam.log_prob;
    j["concept_scores"] = s_hat[i].values();
    lines += j.dump() + "\n";
  }
  write_text_file(paths.file("predictions.jsonl").string(), lines);
  return embs.size();
}

// ---------------------------------------------------------------------------
// Diagnostics.

/// Gradient suite over ten consecutive seeds from the config seed.
inline std::vector<GradCaseSummary> grad_check_stage(const RunConfig& cfg, const RunPaths& paths) {
  const auto results = run_gradient_suite(cfg.require_seed(), 10);
  nlohmann::ordered_json j;
  j["tolerance"] = kGradTolerance;
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    j["cases"].push_back({{"name", r.name},
                          {"max_relative_error", r.worst},
                          {"seed", r.worst_seed},
                          {"parameter", r.detail.worst_parameter},
                          {"index", r.detail.worst_index},
                          {"passed", r.passed()}});
  }
  pipeline_detail::write_json(paths.file("grad_check.json"), j);
  return results;
}

struct AblationRow {
  std::uint64_t seed;
  ConvergenceResult result;
};

inline ConvergenceSettings convergence_settings(const RunConfig& cfg, std::uint64_t seed) {
  ConvergenceSettings s;
  s.data = cfg.data;
  s.data.seed = seed;
  s.data.validate();
  s.model.embed_dim = cfg.embed_dim;
  s.model.hidden = cfg.hidden;
  s.model.peepholes = cfg.peepholes;
  s.model.unary.conv1_channels = cfg.conv1_channels;
  s.model.unary.conv2_channels = cfg.conv2_channels;
  s.unary = {cfg.unary_epochs, cfg.unary_side_epochs, cfg.unary_batch, optimiser(cfg, cfg.unary_lr), seed};
  s.rnn = {cfg.rnn_epochs, cfg.rnn_batch, optimiser(cfg, cfg.rnn_lr), seed};
  s.joint = {cfg.joint_iterations, cfg.joint_batch, optimiser(cfg, cfg.joint_lr), cfg.joint_lambda, seed};
  s.threshold = cfg.ablation_threshold;
  s.probe_size = cfg.ablation_probe_size;
  s.eval_every = cfg.ablation_eval_every;
  return s;
}

/// Iterations-to-threshold for the three interface variants over seed replicas.
/// Replicas run one after another.
inline std::vector<AblationRow> ablation_stage(const RunConfig& cfg, const RunPaths& paths) {
  if (cfg.task != Task::Multilabel) throw StageError("ablation runs on the multilabel task");
  const std::uint64_t first = cfg.require_seed();
  std::vector<AblationRow> rows;
  for (std::uint64_t seed = first; seed < first + cfg.ablation_seeds; ++seed) {
    for (const auto& r : run_convergence(convergence_settings(cfg, seed), seed)) rows.push_back({seed, r});
  }
  std::string csv = "seed,variant,iterations,reached,final_probe_L_r\n";
  nlohmann::ordered_json j;
  j["threshold"] = cfg.ablation_threshold;
  j["cap"] = cfg.joint_iterations;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& [seed, r] : rows) {
    csv += std::to_string(seed) + "," + variant_name(r.variant) + "," + std::to_string(r.iterations) + "," +
           (r.reached ? "true" : "false") + "," + pipeline_detail::g17(r.final_probe_loss) + "\n";
    j["rows"].push_back({{"seed", seed},
                         {"variant", variant_name(r.variant)},
                         {"iterations", r.iterations},
                         {"reached", r.reached},
                         {"final_probe_L_r", r.final_probe_loss}});
  }
  write_text_file(paths.file("ablation.csv").string(), csv);
  pipeline_detail::write_json(paths.file("ablation.json"), j);
  return rows;
}

/// gen-data, pretraining, joint training and the task's evaluation in one go.
inline void run_pipeline(const RunConfig& cfg, const RunPaths& paths) {
  gen_data(cfg, paths);
  train_unary_stage(cfg, paths);
  if (cfg.variant == InterfaceVariant::SemanticPrediction) train_rnn_stage(cfg, paths);
  train_joint_stage(cfg, paths);
  if (cfg.task == Task::Multilabel) {
    eval_multilabel_stage(cfg, paths);
  } else {
    eval_caption_stage(cfg, paths);
  }
}

}  // namespace scrnn
