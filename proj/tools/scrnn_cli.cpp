// scrnn: data generation, staged training, evaluation and inference.
//
//   scrnn gen-data --seed 7 --out-dir runs/a
//   scrnn train-unary --seed 7 --out-dir runs/a
//   scrnn train-rnn --seed 7 --out-dir runs/a
//   scrnn train-joint --seed 7 --out-dir runs/a
//   scrnn eval-multilabel --seed 7 --out-dir runs/a
//
// Settings resolve as: defaults, then --config, then --set key=value, then the
// dedicated flags.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scrnn.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string variant;
  std::string task;
  std::optional<std::size_t> beam_width;
  std::optional<std::size_t> max_len;
  std::vector<std::string> overrides;
  std::string input;
};

scrnn::RunConfig resolve(const Options& o) {
  scrnn::RunConfig cfg = o.config.empty() ? scrnn::RunConfig{} : scrnn::load_config(o.config);
  for (const auto& kv : o.overrides) scrnn::apply_override(cfg, kv);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.variant.empty()) cfg.variant = scrnn::parse_variant(o.variant);
  if (!o.task.empty()) cfg.task = scrnn::parse_task(o.task);
  if (o.beam_width) cfg.beam_width = *o.beam_width;
  if (o.max_len) cfg.max_len = *o.max_len;
  cfg.require_seed();
  if (cfg.beam_width < 1) throw std::invalid_argument("beam width must be at least 1");
  if (cfg.max_len < 1) throw std::invalid_argument("max-len must be at least 1");
  return cfg;
}

void print_report(const char* label, const scrnn::MultiLabelReport& r) {
  std::printf("%-9s C-P %.4f C-R %.4f C-F1 %.4f | O-P %.4f O-R %.4f O-F1 %.4f\n", label, r.c_p, r.c_r, r.c_f1, r.o_p,
              r.o_r, r.o_f1);
}

int run(const std::string& command, const Options& o) {
  using namespace scrnn;
  const RunConfig cfg = resolve(o);
  const RunPaths paths = run_paths(cfg, o.out_dir);
  write_resolved_config(cfg, paths, command);

  if (command == "gen-data") {
    const Dataset ds = gen_data(cfg, paths);
    std::printf("wrote %zu train / %zu test samples to %s\n", ds.train.size(), ds.test.size(),
                paths.data.string().c_str());
  } else if (command == "train-unary") {
    const auto curve = train_unary_stage(cfg, paths);
    std::printf("unary: %zu epochs, final L_u %.6f\n", curve.size(), curve.empty() ? 0.0 : curve.back());
  } else if (command == "train-rnn") {
    const auto curve = train_rnn_stage(cfg, paths);
    std::printf("rnn: %zu epochs, final L_r %.6f\n", curve.size(), curve.empty() ? 0.0 : curve.back());
  } else if (command == "train-joint") {
    const auto h = train_joint_stage(cfg, paths);
    if (!h.empty()) std::printf("joint: %zu iterations, last batch L %.6f (L_r %.6f)\n", h.size(), h.back().L, h.back().L_r);
  } else if (command == "eval-multilabel") {
    const auto r = eval_multilabel_stage(cfg, paths);
    print_report("model", r.model);
    print_report("baseline", r.baseline);
  } else if (command == "eval-caption") {
    const auto r = eval_caption_stage(cfg, paths);
    std::printf("greedy BLEU-4 %.4f (%zu/%zu ended), beam(%zu) BLEU-4 %.4f\n", r.greedy.bleu4, r.greedy.ended,
                r.greedy.total, cfg.beam_width, r.beam.bleu4);
  } else if (command == "infer") {
    const auto n = infer_stage(cfg, paths, o.input);
    std::printf("wrote %zu predictions to %s\n", n, paths.file("predictions.jsonl").string().c_str());
  } else if (command == "grad-check") {
    bool ok = true;
    for (const auto& r : grad_check_stage(cfg, paths)) {
      std::printf("%-42s %.3e %s\n", r.name.c_str(), r.worst, r.passed() ? "ok" : "FAIL");
      ok = ok && r.passed();
    }
    return ok ? 0 : 1;
  } else if (command == "ablation") {
    std::printf("%-6s %-14s %10s\n", "seed", "variant", "iterations");
    for (const auto& [seed, r] : ablation_stage(cfg, paths)) {
      std::printf("%-6llu %-14s %10zu%s\n", static_cast<unsigned long long>(seed), variant_name(r.variant).c_str(),
                  r.iterations, r.reached ? "" : " (cap)");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantically regularised CNN-RNN toolkit"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "random seed (mandatory here or in the config)");
  app.add_option("--out-dir", o.out_dir, "run directory");
  app.add_option("--variant", o.variant, "semantic | feature-deep | feature-plain");
  app.add_option("--task", o.task, "multilabel | caption");
  app.add_option("--beam-width", o.beam_width, "beam width (default 3)");
  app.add_option("--max-len", o.max_len, "maximum decoded labels before END");
  app.add_option("--set", o.overrides, "config override key=value (repeatable)");
  app.fallthrough();

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"gen-data", "generate the synthetic dataset"},
      {"train-unary", "pretrain the concept predictor"},
      {"train-rnn", "pretrain the decoder on ground-truth concepts (semantic variant)"},
      {"train-joint", "train everything jointly from the pretrained stages"},
      {"eval-multilabel", "multi-label metrics of the joint model and the thresholded baseline"},
      {"eval-caption", "BLEU of greedy and beam captions"},
      {"infer", "decode a dataset file with the joint model"},
      {"grad-check", "finite-difference gradient suite"},
      {"ablation", "iterations to a loss threshold per interface variant and seed"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (std::string(name) == "infer") sub->add_option("--input", o.input, "dataset JSONL (default: test split)");
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const scrnn::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
