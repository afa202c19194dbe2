// Copyright 2026 The gridattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// gridattn command-line tool: generate, train, eval, compare.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "gridattn/pipeline.hpp"

namespace {

using namespace gridattn;

int run_generate(const std::string& spec_path, std::optional<std::uint64_t> seed, const std::string& out) {
  CorpusSpec spec;
  if (!spec_path.empty()) {
    Settings s = Settings::load(spec_path);
    spec = CorpusSpec::from_settings(s);
  }
  if (seed) spec.seed = *seed;
  const auto records = generate(spec, out);
  std::cout << "wrote " << records.size() << " images to " << out << "\n" << format_split_summary(records);
  return 0;
}

RunConfig load_run_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid attention classifier for tissue images"};
  app.require_subcommand(1);

  std::string spec_path, out, config_path, corpus, model = "attention", resume, checkpoint, split = "test",
                                                   heuristic, run_a, run_b, name_a = "attention",
                                                   name_b = "baseline";
  std::uint64_t seed_value = 0;
  bool dump_attention = false;

  auto* gen = app.add_subcommand("generate", "Write a synthetic corpus");
  gen->add_option("--spec", spec_path, "Corpus spec file (defaults apply when omitted)")->check(CLI::ExistingFile);
  auto* seed_opt = gen->add_option("--seed", seed_value, "Override the spec seed");
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  train->add_option("--config", config_path, "Run config file (defaults apply when omitted)")->check(CLI::ExistingFile);
  train->add_option("--corpus", corpus, "Corpus directory")->required();
  train->add_option("--model", model, "attention or baseline")->check(CLI::IsMember({"attention", "baseline"}));
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--corpus", corpus, "Corpus directory")->required();
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", out, "Output directory")->required();
  eval->add_option("--heuristic", heuristic, "Baseline heuristic file (default: beside the checkpoint)")
      ->check(CLI::ExistingFile);
  eval->add_flag("--dump-attention", dump_attention, "Write per-head attention maps and localization scores");

  auto* compare = app.add_subcommand("compare", "Paired per-class table of two eval runs");
  compare->add_option("--a", run_a, "First eval directory")->required();
  compare->add_option("--b", run_b, "Second eval directory")->required();
  compare->add_option("--name-a", name_a, "Label of the first run");
  compare->add_option("--name-b", name_b, "Label of the second run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*gen) {
      std::optional<std::uint64_t> seed;
      if (*seed_opt) seed = seed_value;
      return run_generate(spec_path, seed, out);
    }
    if (*train) {
      TrainRequest req;
      req.config = load_run_config(config_path);
      req.kind = parse_model_kind(model);
      req.corpus = corpus;
      req.out = out;
      if (!resume.empty()) req.resume = resume;
      train_run(req, &std::cout);
      return 0;
    }
    if (*eval) {
      EvalRequest req;
      req.checkpoint = checkpoint;
      req.corpus = corpus;
      req.split = parse_split(split);
      req.out = out;
      req.dump_attention = dump_attention;
      if (!heuristic.empty()) req.heuristic = heuristic;
      eval_run(req, &std::cout);
      return 0;
    }
    if (*compare) {
      std::cout << compare_runs(run_a, name_a, run_b, name_b);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e));
  }
  return 0;
}
